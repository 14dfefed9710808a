//! Strings with planted personal data, plus clean controls.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::{random_text, rng};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedItem {
    /// One of EMAIL, PHONE, IP_ADDRESS, ID_NUMBER.
    pub category: &'static str,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Planted {
    pub text: String,
    pub items: Vec<PlantedItem>,
}

const CARRIER_TAGS: [&str; 5] = ["en", "fr", "es", "pt", "id"];
const NAMES: [&str; 16] = [
    "john", "maria", "li", "ahmed", "sofia", "ravi", "anna", "kofi", "lucas", "mei", "olga", "tomas", "aisha",
    "pierre", "yuki", "nina",
];
const DOMAINS: [&str; 8] = [
    "gmail.com",
    "example.org",
    "mail.co.uk",
    "uni-bonn.de",
    "outlook.fr",
    "yahoo.es",
    "startup.io",
    "correo.gob.mx",
];
const PHONE_SHAPES: [&str; 10] = [
    "+1 (###) ###-####",
    "###-###-####",
    "(###) ###-####",
    "+44 20 #### ####",
    "0# ## ## ## ##",
    "+33 # ## ## ## ##",
    "###.###.####",
    "+91 ##### #####",
    "+49 30 #######",
    "###-####",
];
const TAILS: [&str; 5] = ["", ".", ",", ";", " !"];

fn digits<R: Rng>(rng: &mut R, shape: &str) -> String {
    shape
        .chars()
        .map(|c| {
            if c == '#' {
                char::from(b'0' + rng.gen_range(0..10u8))
            } else {
                c
            }
        })
        .collect()
}

fn email<R: Rng>(rng: &mut R) -> String {
    let a = NAMES.choose(rng).unwrap();
    let b = NAMES.choose(rng).unwrap();
    let sep = [".", "_", "", "+"].choose(rng).unwrap();
    let num = if rng.gen_bool(0.4) {
        rng.gen_range(1..999).to_string()
    } else {
        String::new()
    };
    format!("{a}{sep}{b}{num}@{}", DOMAINS.choose(rng).unwrap())
}

fn phone<R: Rng>(rng: &mut R) -> String {
    let shape = *PHONE_SHAPES.choose(rng).unwrap();
    digits(rng, shape)
}

fn ip<R: Rng>(rng: &mut R) -> String {
    let o: Vec<String> = (0..4).map(|_| rng.gen_range(0..=255u16).to_string()).collect();
    o.join(".")
}

fn id_number<R: Rng>(rng: &mut R) -> String {
    let n = rng.gen_range(9..=16);
    let mut s = rng.gen_range(1..10u8).to_string();
    for _ in 1..n {
        s.push(char::from(b'0' + rng.gen_range(0..10u8)));
    }
    s
}

fn item<R: Rng>(rng: &mut R, category: &'static str) -> PlantedItem {
    let value = match category {
        "EMAIL" => email(rng),
        "PHONE" => phone(rng),
        "IP_ADDRESS" => ip(rng),
        _ => id_number(rng),
    };
    PlantedItem { category, value }
}

/// `per_category` strings for each category; a quarter carry a second item
/// of another category.
pub fn planted(seed: u64, per_category: usize) -> Vec<Planted> {
    let mut rng = rng(seed);
    let categories = ["EMAIL", "PHONE", "IP_ADDRESS", "ID_NUMBER"];
    let mut out = Vec::new();
    for (ci, &cat) in categories.iter().enumerate() {
        for i in 0..per_category {
            let tag = CARRIER_TAGS[rng.gen_range(0..CARRIER_TAGS.len())];
            let mut items = vec![item(&mut rng, cat)];
            if i % 4 == 3 {
                items.push(item(&mut rng, categories[(ci + 1 + i % 3) % 4]));
            }
            let lead = rng.gen_range(2..10);
            let mut text = random_text(&mut rng, tag, lead);
            for it in &items {
                text.push(' ');
                text.push_str(&it.value);
                text.push_str(TAILS.choose(&mut rng).unwrap());
                text.push(' ');
                let n = rng.gen_range(1..8);
                text.push_str(&random_text(&mut rng, tag, n));
            }
            out.push(Planted { text, items });
        }
    }
    out
}

const CLEAN_SHAPES: [&str; 12] = [
    "in # years",
    "version #.#.#",
    "costs ##.## euros",
    "at ##:## today",
    "on ####-##-## we met",
    "## % of them",
    "page # of ##",
    "room ###",
    "about #,###,### people",
    "pi is #.#####",
    "chapter ## verse ##",
    "since ####",
];

/// Ordinary sentences with numbers that are not personal data.
pub fn clean_controls(seed: u64, n: usize) -> Vec<String> {
    let mut rng = rng(seed);
    (0..n)
        .map(|i| {
            let tag = CARRIER_TAGS[rng.gen_range(0..CARRIER_TAGS.len())];
            let k = rng.gen_range(3..12);
            let mut text = random_text(&mut rng, tag, k);
            if i % 5 != 4 {
                text.push(' ');
                text.push_str(&digits(&mut rng, CLEAN_SHAPES[i % CLEAN_SHAPES.len()]));
                text.push(' ');
                let k = rng.gen_range(1..6);
                text.push_str(&random_text(&mut rng, tag, k));
            }
            text
        })
        .collect()
}
