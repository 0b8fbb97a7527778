//! Run reports: a machine-readable JSON document plus a flat CSV of
//! per-replication records. Infinite values are tagged explicitly so every
//! numeric field is either finite or marked.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::{ExpError, ExpResult};

/// A numeric metric that is finite or tagged infinite (NaN is rejected at
/// construction). Serialized as a plain number when finite and as the
/// strings "inf"/"-inf" otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metric(f64);

impl Metric {
    pub fn new(v: f64) -> ExpResult<Self> {
        if v.is_nan() {
            return Err(ExpError::Invariant("metric is NaN".into()));
        }
        Ok(Metric(v))
    }

    pub fn get(&self) -> f64 {
        self.0
    }
}

impl Serialize for Metric {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Tag(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Metric(v)),
            Raw::Tag(t) if t == "inf" => Ok(Metric(f64::INFINITY)),
            Raw::Tag(t) if t == "-inf" => Ok(Metric(f64::NEG_INFINITY)),
            Raw::Tag(t) => Err(serde::de::Error::custom(format!("bad metric tag `{t}`"))),
        }
    }
}

/// One replication: its substream seed, named metrics and the wall-clock
/// runtime (the only field excluded from determinism comparisons).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub seed: u64,
    pub metrics: BTreeMap<String, Metric>,
    pub runtime_ms: f64,
}

/// A full run: config echo, artifact version, environment echo, records and
/// aggregate summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub artifact_version: String,
    pub config: ExperimentConfig,
    /// Value of the output-directory override variable, when it was set.
    pub out_dir_env: Option<String>,
    pub records: Vec<RepRecord>,
    pub summary: BTreeMap<String, Metric>,
}

impl RunReport {
    pub fn new(config: ExperimentConfig, out_dir_env: Option<String>) -> Self {
        RunReport {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            out_dir_env,
            records: Vec::new(),
            summary: BTreeMap::new(),
        }
    }

    pub fn to_json(&self) -> ExpResult<String> {
        serde_json::to_string_pretty(self).map_err(|e| ExpError::Io(e.to_string()))
    }

    pub fn from_json(text: &str) -> ExpResult<Self> {
        serde_json::from_str(text).map_err(|e| ExpError::Io(e.to_string()))
    }

    /// CSV of the per-replication records: `rep,seed,<metrics...>,runtime_ms`
    /// with metric columns sorted by name.
    pub fn to_csv(&self) -> ExpResult<String> {
        let mut keys: Vec<&String> = self
            .records
            .iter()
            .flat_map(|r| r.metrics.keys())
            .collect();
        keys.sort();
        keys.dedup();
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["rep".to_string(), "seed".to_string()];
        header.extend(keys.iter().map(|k| (*k).clone()));
        header.push("runtime_ms".into());
        w.write_record(&header).map_err(|e| ExpError::Io(e.to_string()))?;
        for r in &self.records {
            let mut row = vec![r.rep.to_string(), r.seed.to_string()];
            for k in &keys {
                row.push(match r.metrics.get(*k) {
                    Some(m) if m.get().is_finite() => m.get().to_string(),
                    Some(m) if m.get() > 0.0 => "inf".into(),
                    Some(_) => "-inf".into(),
                    None => String::new(),
                });
            }
            row.push(r.runtime_ms.to_string());
            w.write_record(&row).map_err(|e| ExpError::Io(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| ExpError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| ExpError::Io(e.to_string()))
    }

    /// Writes `<stem>.json` and `<stem>.csv`, creating parent directories.
    pub fn write(&self, stem: &Path) -> ExpResult<(PathBuf, PathBuf)> {
        if let Some(parent) = stem.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let json_path = stem.with_extension("json");
        let csv_path = stem.with_extension("csv");
        std::fs::write(&json_path, self.to_json()?)?;
        std::fs::write(&csv_path, self.to_csv()?)?;
        Ok((json_path, csv_path))
    }

    pub fn read(path: &Path) -> ExpResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExpError::Io(format!("cannot read report {path:?}: {e}")))?;
        Self::from_json(&text)
    }

    /// Copy with runtime fields zeroed, for determinism comparisons.
    pub fn without_runtimes(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.runtime_ms = 0.0;
        }
        out
    }
}
