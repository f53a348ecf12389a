use std::fmt::Display;
use std::path::Path;

use crate::dataset::CorpusStats;
use crate::error::{Error, Result};
use crate::eval::EvalReport;

/// Ordered `key=value` lines.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl Display) -> &mut Self {
        self.entries.push((key.into(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn eval(&mut self, prefix: &str, r: &EvalReport) -> &mut Self {
        let key = |k: &str| if prefix.is_empty() { k.to_string() } else { format!("{prefix}.{k}") };
        self.push(key("acc1"), r.acc1)
            .push(key("acc5"), r.acc5)
            .push(key("acc10"), r.acc10)
            .push(key("map"), r.map)
            .push(key("n_queries"), r.n_queries)
            .push(key("n_skipped"), r.n_skipped);
        if let Some(seed) = r.seed {
            self.push(key("seed"), seed);
        }
        if let Some(std) = r.std {
            for (name, v) in ["acc1", "acc5", "acc10", "map"].iter().zip(std) {
                self.push(key(&format!("std.{name}")), v);
            }
        }
        self
    }

    pub fn stats(&mut self, s: &CorpusStats) -> &mut Self {
        self.push("users", s.users)
            .push("locations", s.locations)
            .push("origins", s.origins)
            .push("destinations", s.destinations)
            .push("trips", s.trips)
    }

    pub fn to_text(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| Error::InvalidInput(format!("report line without `=`: {l}")))
            })
            .collect::<Result<_>>()?;
        Ok(Report { entries })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::dataset::io::write_file(path, self.to_text().as_bytes())
    }
}
