//! Time-budgeted AutoML for tabular data: schema inference, two-stage
//! preprocessing, a fixed learner roster, repeated k-fold bagging, multi-layer
//! stacking and greedy ensemble selection.

pub mod ensemble;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod net;
pub mod orchestrator;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod schema;
pub mod task;

pub use error::{Error, Result};
