use crate::dataset::{
    build_interval_tables, chronological_split, preprocess, Corpus, IntervalTables, Preprocessed, Split, Vocab,
};
use crate::error::{Error, Result};
use crate::model::{train, EncodedCache, Model, ModelConfig, TrainReport};

use super::{Checkpoint, DataConfig};

/// A corpus taken from raw trips to a train/test split with its
/// vocabulary and interval tables.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub raw: Corpus,
    pub pre: Preprocessed,
    pub split: Split,
    pub vocab: Vocab,
    pub tables: IntervalTables,
}

pub fn prepare(raw: Corpus, data: &DataConfig, geohash_precision: usize) -> Result<Prepared> {
    let pre = preprocess(&raw, data.min_trips, data.min_users);
    if pre.corpus.is_empty() {
        return Err(Error::InvalidInput("no users survive preprocessing".into()));
    }
    let split = chronological_split(&pre.corpus, data.train_ratio)?;
    let vocab = Vocab::build(&pre.corpus, geohash_precision, data.utc_offset_secs)?;
    let tables = build_interval_tables(&split.train)?;
    Ok(Prepared {
        raw,
        pre,
        split,
        vocab,
        tables,
    })
}

pub struct Trained {
    pub model: Model,
    pub report: TrainReport,
    pub cache: EncodedCache,
}

pub fn train_model(p: &Prepared, cfg: &ModelConfig) -> Result<Trained> {
    let mut model = Model::new(cfg.clone(), p.vocab.clone(), p.tables.clone())?;
    let report = train(&mut model, &p.split.train)?;
    let cache = model.build_cache(&p.split.train)?;
    Ok(Trained { model, report, cache })
}

impl Trained {
    pub fn checkpoint(&self, p: &Prepared, config_hash: String) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            user_ids: p.split.train.users.clone(),
            locations: p.split.train.locations.clone(),
            train_histories: p.split.train.trips.clone(),
            cache: Some(self.cache.clone()),
            config_hash,
        }
    }
}
