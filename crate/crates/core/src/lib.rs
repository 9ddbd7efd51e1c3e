//! Evidence-based claim verification with graph encoders.
//!
//! Claims and evidences become word co-occurrence graphs
//! ([`textgraph`]); gated graph layers encode them ([`encoder`]); evidence
//! graphs are pruned of their most redundant nodes ([`refiner`]); a
//! claim-aware attentive readout and a small classifier produce P(true)
//! ([`readout`], [`model`]). Everything differentiable runs on the tape in
//! [`numcore`].

pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod model;
pub mod numcore;
pub mod pipeline;
pub mod readout;
pub mod refiner;
pub mod textgraph;
pub mod training;

pub use config::HyperParams;
pub use error::{Error, Result};
pub use model::{Example, GetModel, Prediction};
