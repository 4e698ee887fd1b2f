//! Artificial training instances built from label-texts, mixed with real
//! documents to fine-tune a three-headed multi-label text classifier.

pub mod augment;
pub mod checkpoint;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod report;
pub mod trainer;

pub use error::{Error, Result};
