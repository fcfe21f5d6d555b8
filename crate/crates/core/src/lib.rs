//! Feature-feature logistic models of directed reply networks.
//!
//! The crate turns comment dumps into a reply graph ([`ingest`]), projects
//! subreddit scores into binary quartile features ([`features`]), builds a
//! balanced dataset against an activity × attractiveness null model
//! ([`sampler`]), fits the outer-product-kernel logistic model with Wald
//! inference ([`inference`]) and aggregates per-slice fits ([`study`]).
//! [`synth`] runs the model forward to produce data with known parameters.

pub mod error;
pub mod features;
pub mod inference;
pub mod ingest;
pub mod sampler;
pub mod study;
pub mod synth;
pub mod topic;

pub use error::{Error, Result};
