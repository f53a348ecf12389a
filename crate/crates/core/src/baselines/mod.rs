//! Reference rankers: global and per-user frequency counts, their linear
//! mix, and a recurrent model over concatenated origin/previous-destination
//! inputs.

mod freq;
mod od_lstm;

pub use freq::{FrequencyModel, FrequencyRanker, FrequencyRule};
pub use od_lstm::{OdLstm, OdLstmReport};
