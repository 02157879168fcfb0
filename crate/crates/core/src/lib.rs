//! Online event management for multivariate sensor streams.
//!
//! Numeric readings are turned into binary event vectors by per-stream
//! change detectors ([`detection`]). A variable-order pattern forest
//! ([`correlation`]) counts event-subset sequences, from which
//! [`prediction`] derives multi-step forecasts expressed as probabilistic
//! temporal rules ([`ptl`]). Integrity constraints prune impossible
//! forecasts, and [`aging`] merges repeated extractions of a rule with
//! recency weights. [`evaluation`] scores forecasts and runs sweeps over
//! synthetic data with planted dependencies.

pub mod aging;
pub mod correlation;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod ingest;
pub mod pipeline;
pub mod prediction;
pub mod ptl;
pub mod symbol;

pub use aging::{AgingKind, AgingPolicy, RulePool};
pub use correlation::{node_budget, symbols_for_step, PatternForest};
pub use detection::{CusumState, DetectorBank, EventVector, ShewhartState};
pub use error::{Error, Result};
pub use ingest::ContextVector;
pub use pipeline::{Pipeline, PipelineConfig};
pub use prediction::{emit_rules, match_suffixes, predict, Prediction};
pub use ptl::{format_rule, parse_rule, ProbTemporalRule};
pub use symbol::{EventSymbol, Vocabulary};
