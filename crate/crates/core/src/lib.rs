//! A skeleton-level semantic cache for natural-language-to-DSL translation.
//!
//! Historical (query, DSL) pairs are reduced to query skeletons, grouped and
//! distilled into a compact cache. An incoming query is embedded, matched
//! against the cache and, when a close enough skeleton exists, answered by
//! adapting the cached DSL in a single generation step instead of running
//! the multi-call long-chain pipeline.

pub mod cache;
pub mod config;
pub mod dsl;
pub mod embed;
pub mod error;
pub mod generator;
pub mod knowledge;
pub mod retrieval;
pub mod rewrite;
pub mod service;
pub mod skeleton;

pub use config::Config;
pub use dsl::{dsl_equal, Aggregation, ComponentMatch, DslSpec, Filter, FilterOp, FilterValue, Measure, Query, Scalar, Stage};
pub use error::{Error, Result};
