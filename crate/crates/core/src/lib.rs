//! Origin-aware next-destination recommendation.
//!
//! The model encodes each user's origin and destination sequences with
//! spatio-temporal LSTMs (separate spatial and temporal cell states fed by
//! geohash/timeslot embeddings and global interval vectors), and decodes
//! with a per-dimension attention whose query combines the user, the
//! current origin and the previous destination.

pub mod error;
pub mod geo;
pub mod dataset;
pub mod nn;
pub mod stlstm;
pub mod model;
pub mod baselines;
pub mod eval;
pub mod synth;
pub mod cli;

pub use error::{Error, Result};
