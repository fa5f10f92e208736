//! Knowledge-graph construction from legal case opinions, with type-aware
//! coreference, structured extraction prompts, and graph-quality metrics.

pub mod coref;
pub mod entity;
pub mod error;
pub mod extraction;
pub mod gateway;
pub mod graph;
pub mod ingest;
pub mod lexicon;
pub mod metrics;
pub mod runner;
pub mod sections;
pub mod util;

pub use entity::{EntityType, NodeType};
pub use error::{Error, Result};
