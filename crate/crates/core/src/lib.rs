//! Snippet search over multi-dataset text corpora.
//!
//! Two query modes share one index directory: fuzzy BM25 ranking over
//! per-language snippet indices, and exact substring matching over a
//! suffix array of the whole corpus. Everything returned passes through
//! PII redaction and carries a [`corpus::ResultId`] that traces back to its
//! source document.

pub mod analysis;
pub mod bm25;
pub mod corpus;
pub mod exact;
pub mod http;
pub mod langdetect;
pub mod persist;
pub mod pii;
pub mod sais;
pub mod segment;
pub mod service;
pub mod store;
pub mod tags;

pub use corpus::{Document, ResultId, Snippet};
pub use service::{SearchRequest, SearchResponse, SearchService, ServiceConfig};
