use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{evaluate, EvalReport, ModelRanker};
use crate::dataset::{IntervalTables, Split, Vocab};
use crate::error::{Error, Result};
use crate::model::{train, Model, ModelConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Hidden,
    Epochs,
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepAxis::Hidden => "hidden",
            SweepAxis::Epochs => "epochs",
        })
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hidden" | "hdim" => Ok(SweepAxis::Hidden),
            "epochs" => Ok(SweepAxis::Epochs),
            _ => Err(Error::InvalidInput(format!("unknown sweep axis `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: usize,
    pub report: EvalReport,
}

/// Trains and evaluates one model per value, all with the base seed.
pub fn sensitivity_sweep(
    axis: SweepAxis,
    values: &[usize],
    base: &ModelConfig,
    split: &Split,
    vocab: &Vocab,
    tables: &IntervalTables,
) -> Result<Vec<SweepRow>> {
    values
        .iter()
        .map(|&value| {
            let mut cfg = base.clone();
            match axis {
                SweepAxis::Hidden => {
                    cfg.hidden = value;
                    if cfg.variant == crate::model::Variant::UserAdd {
                        cfg.dim = value;
                    }
                }
                SweepAxis::Epochs => cfg.epochs = value,
            }
            let mut model = Model::new(cfg, vocab.clone(), tables.clone())?;
            train(&mut model, &split.train)?;
            let cache = model.build_cache(&split.train)?;
            let mut report = evaluate(
                &ModelRanker {
                    model: &model,
                    cache: &cache,
                },
                split,
            )?;
            report.seed = Some(base.seed);
            Ok(SweepRow { axis, value, report })
        })
        .collect()
}
