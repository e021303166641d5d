//! Discovery of phenotype-topic clusters that share clinical workflow topics.
//!
//! The pipeline turns EMR access logs and diagnosis records into two topic
//! models (workflow topics over frequent action subsequences, phenotype topics
//! over grouped diagnosis codes), links them through the patients they jointly
//! explain, and clusters the resulting bipartite topic graph by modularity.

pub mod assoc;
pub mod cluster;
pub mod error;
pub mod evalkit;
pub mod ingest;
pub mod matrix;
pub mod numfmt;
pub mod report;
pub mod seqmine;
pub mod synth;
pub mod topics;

pub use error::{Error, Result};
pub use matrix::DocTermMatrix;
