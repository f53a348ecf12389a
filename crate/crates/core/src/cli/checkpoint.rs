//! Single-file checkpoint: a magic line, the header length, a JSON header,
//! then every tensor and cached state as little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{IntervalTables, LocationRecord, Role, Trip, Vocab};
use crate::error::{Error, Result};
use crate::model::{CachedState, EncodedCache, Model, ModelConfig};

const MAGIC: &str = "ODRECKPT";
pub const FORMAT_VERSION: u32 = 1;

/// A trained model with everything needed to query and evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub user_ids: Vec<String>,
    pub locations: Vec<LocationRecord>,
    /// Each user's training trips, oldest first.
    pub train_histories: Vec<Vec<Trip>>,
    pub cache: Option<EncodedCache>,
    pub config_hash: String,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct StateEntry {
    role: Role,
    step: usize,
    loc: usize,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    config: ModelConfig,
    vocab: Vocab,
    d_max_km: f64,
    t_max_hours: f64,
    /// Offsets of the two `n x n` interval tables.
    tables: [usize; 2],
    user_ids: Vec<String>,
    locations: Vec<LocationRecord>,
    train_histories: Vec<Vec<Trip>>,
    config_hash: String,
    tensors: Vec<TensorEntry>,
    cache: Option<Vec<Option<Vec<StateEntry>>>>,
    payload_len: usize,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload: Vec<f64> = Vec::new();
        let mut put = |v: &[f64]| {
            let off = payload.len();
            payload.extend_from_slice(v);
            off
        };
        let tables = [put(&self.model.tables.spatial), put(&self.model.tables.temporal)];
        let tensors = self
            .model
            .store
            .iter()
            .map(|(_, name, t)| TensorEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset: put(t.data()),
            })
            .collect();
        let cache = self.cache.as_ref().map(|c| {
            c.users
                .iter()
                .map(|states| {
                    states.as_ref().map(|s| {
                        s.iter()
                            .map(|st| StateEntry {
                                role: st.role,
                                step: st.step,
                                loc: st.loc,
                                offset: put(&st.h),
                                len: st.h.len(),
                            })
                            .collect()
                    })
                })
                .collect()
        });
        let header = Header {
            config: self.model.config.clone(),
            vocab: self.model.vocab.clone(),
            d_max_km: self.model.tables.d_max_km,
            t_max_hours: self.model.tables.t_max_hours,
            tables,
            user_ids: self.user_ids.clone(),
            locations: self.locations.clone(),
            train_histories: self.train_histories.clone(),
            config_hash: self.config_hash.clone(),
            tensors,
            cache,
            payload_len: payload.len(),
        };
        let json = serde_json::to_vec_pretty(&header).map_err(|e| bad(e.to_string()))?;
        let mut out = format!("{MAGIC} {FORMAT_VERSION}\n{}\n", json.len()).into_bytes();
        out.extend_from_slice(&json);
        out.push(b'\n');
        out.reserve(payload.len() * 8);
        for x in payload {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (magic, rest) = split_line(bytes).ok_or_else(|| bad("missing magic line"))?;
        let magic = std::str::from_utf8(magic).map_err(|_| bad("magic line is not text"))?;
        let version = magic
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| bad("not a checkpoint file"))?;
        if version != FORMAT_VERSION.to_string() {
            return Err(bad(format!("format version {version}, expected {FORMAT_VERSION}")));
        }
        let (len_line, rest) = split_line(rest).ok_or_else(|| bad("missing header length"))?;
        let len: usize = std::str::from_utf8(len_line)
            .ok()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("bad header length"))?;
        if rest.len() < len + 1 {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&rest[..len]).map_err(|e| bad(e.to_string()))?;
        let data = &rest[len + 1..];
        if data.len() != header.payload_len * 8 {
            return Err(bad(format!(
                "payload holds {} bytes, header expects {}",
                data.len(),
                header.payload_len * 8
            )));
        }
        let payload: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let slice = |off: usize, len: usize| {
            payload
                .get(off..off + len)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| bad("tensor extends past the payload"))
        };

        let n = header.vocab.n_locations;
        let tables = IntervalTables {
            n,
            spatial: slice(header.tables[0], n * n)?,
            temporal: slice(header.tables[1], n * n)?,
            d_max_km: header.d_max_km,
            t_max_hours: header.t_max_hours,
        };
        let mut model = Model::new(header.config, header.vocab, tables)?;
        let expected: Vec<String> = model.store.iter().map(|(_, name, _)| name.to_string()).collect();
        let stored: Vec<&str> = header.tensors.iter().map(|t| t.name.as_str()).collect();
        if expected != stored {
            return Err(bad("parameter set does not match the configured variant"));
        }
        for entry in &header.tensors {
            let id = model.store.find(&entry.name).unwrap();
            let t = model.store.value_mut(id);
            if t.shape() != entry.shape.as_slice() {
                return Err(bad(format!("shape mismatch for {}", entry.name)));
            }
            let len = t.len();
            t.data_mut().copy_from_slice(&slice(entry.offset, len)?);
        }
        let cache = header
            .cache
            .map(|users| -> Result<EncodedCache> {
                let users = users
                    .into_iter()
                    .map(|states| {
                        states
                            .map(|s| {
                                s.into_iter()
                                    .map(|e| {
                                        Ok(CachedState {
                                            h: slice(e.offset, e.len)?,
                                            role: e.role,
                                            step: e.step,
                                            loc: e.loc,
                                        })
                                    })
                                    .collect::<Result<Vec<_>>>()
                            })
                            .transpose()
                    })
                    .collect::<Result<_>>()?;
                Ok(EncodedCache { users })
            })
            .transpose()?;
        Ok(Checkpoint {
            model,
            user_ids: header.user_ids,
            locations: header.locations,
            train_histories: header.train_histories,
            cache,
            config_hash: header.config_hash,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::dataset::io::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_ids.iter().position(|u| u == id)
    }

    pub fn location_index(&self, id: &str) -> Option<usize> {
        self.locations.iter().position(|l| l.loc_id == id)
    }
}

fn split_line(b: &[u8]) -> Option<(&[u8], &[u8])> {
    let i = b.iter().position(|&c| c == b'\n')?;
    Some((&b[..i], &b[i + 1..]))
}
