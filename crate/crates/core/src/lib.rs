//! Procedural nodule images with controllable visual attributes.
//!
//! The crate covers the full pipeline: an attribute [`schema`], a declarative
//! [`rule`] engine mapping attributes to a target class, a deterministic
//! [`render`]er emitting images and per-attribute ROI masks, [`dataset`]
//! orchestration (random sets, sweeps, grids, manifests, histograms) and
//! [`eval`] metrics over externally produced predictions.

pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod par;
pub mod render;
pub mod rng;
pub mod rule;
pub mod schema;

pub use config::{parse_config, serialize_config, DatasetConfig};
pub use dataset::{GenerateOptions, GridSpec, Manifest, SampleRecord};
pub use error::{Error, Result};
pub use eval::{MetricReport, PredictionSet};
pub use par::Jobs;
pub use render::{Mask, RenderParams, RenderedSample, Renderer};
pub use rule::{default_rule, parse_rule, serialize_rule, RuleTrace, TargetRule};
pub use schema::{default_schema, validate_vector, AttributeSchema, AttributeVector, Scale};
