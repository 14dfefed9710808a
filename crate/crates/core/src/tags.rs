//! The fixed set of index language tags.
//!
//! One BM25 index exists per tag. Chinese variants (`zh`, `zhs`, `zht`)
//! share the `zh` index, and language-group identifiers such as `indic-mr`
//! or `nigercongo-sw` collapse onto their group tag.

/// Index tags in registry order. Grouped responses and stats follow this order.
pub const INDEX_TAGS: [&str; 13] = [
    "zh",
    "indic",
    "en",
    "es",
    "fr",
    "vi",
    "pt",
    "code",
    "ar",
    "id",
    "ca",
    "eu",
    "nigercongo",
];

const GROUP_TAGS: [&str; 2] = ["indic", "nigercongo"];

/// Maps a dataset-level language identifier to the index tag that houses it.
pub fn index_tag_for(tag: &str) -> Option<&'static str> {
    match tag {
        "zh" | "zhs" | "zht" => return Some("zh"),
        _ => {}
    }
    if let Some(t) = INDEX_TAGS.iter().find(|t| **t == tag) {
        return Some(t);
    }
    for group in GROUP_TAGS {
        if let Some(rest) = tag.strip_prefix(group) {
            if rest.starts_with('-') && rest.len() > 1 {
                return INDEX_TAGS.iter().copied().find(|t| *t == group);
            }
        }
    }
    None
}

/// Position of an index tag in registry order.
pub fn registry_position(tag: &str) -> Option<usize> {
    INDEX_TAGS.iter().position(|t| *t == tag)
}
