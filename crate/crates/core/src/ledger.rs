//! Flat JSON ledger of fitted constants, keyed by where they were fitted.

use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LedgerKey {
    pub module: String,
    pub invariant: String,
    pub n: usize,
    pub points: usize,
    pub a_kind: String,
}

impl LedgerKey {
    pub fn new(module: &str, invariant: &str, n: usize, points: usize, a_kind: &str) -> Self {
        Self { module: module.into(), invariant: invariant.into(), n, points, a_kind: a_kind.into() }
    }

    /// `module/invariant/n=../N=../A=..`.
    pub fn label(&self) -> String {
        format!("{}/{}/n={}/N={}/A={}", self.module, self.invariant, self.n, self.points, self.a_kind)
    }

    /// Substring match on the label.
    pub fn matches(&self, filters: &[String]) -> bool {
        let l = self.label();
        filters.iter().all(|f| l.contains(f.as_str()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub key: LedgerKey,
    pub value: f64,
    /// Allowed relative drift.
    pub tolerance: f64,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    /// Experiment configuration that produced the value, for refits.
    #[serde(default)]
    pub config: serde_json::Value,
}

impl LedgerEntry {
    pub fn drift(&self, value: f64) -> f64 {
        (value - self.value).abs() / self.value.abs().max(1e-300)
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ConstantsLedger {
    pub schema: String,
    pub entries: Vec<LedgerEntry>,
    #[serde(skip)]
    pub path: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Recorded {
    New,
    Unchanged,
    Replaced,
    /// An entry exists with a different value and refitting was not requested.
    Refused,
}

pub fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl ConstantsLedger {
    pub fn empty(path: &Path) -> Self {
        Self { schema: "1".into(), entries: Vec::new(), path: path.to_path_buf() }
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(LabError::LedgerMissing(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        let mut ledger: Self = serde_json::from_str(&text).map_err(|e| LabError::InvalidParams(format!("{}: {e}", path.display())))?;
        ledger.path = path.to_path_buf();
        Ok(ledger)
    }

    /// The ledger at `path`, or an empty one when the file does not exist yet.
    pub fn open(path: &Path) -> Result<Self> {
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::empty(path))
        }
    }

    pub fn save(&self) -> Result<()> {
        let mut sorted = self.clone();
        sorted.entries.sort_by(|a, b| a.key.cmp(&b.key));
        let text = serde_json::to_string_pretty(&sorted).map_err(|e| LabError::InvalidParams(e.to_string()))?;
        std::fs::write(&self.path, text + "\n")?;
        Ok(())
    }

    pub fn get(&self, key: &LedgerKey) -> Option<&LedgerEntry> {
        self.entries.iter().find(|e| &e.key == key)
    }

    pub fn record(&mut self, entry: LedgerEntry, refit: bool) -> Recorded {
        match self.entries.iter_mut().find(|e| e.key == entry.key) {
            None => {
                self.entries.push(entry);
                Recorded::New
            }
            Some(old) if old.value == entry.value => Recorded::Unchanged,
            Some(old) if refit => {
                *old = entry;
                Recorded::Replaced
            }
            Some(_) => Recorded::Refused,
        }
    }

    /// Entries whose label contains every filter.
    pub fn select(&self, filters: &[String]) -> Vec<&LedgerEntry> {
        let mut out: Vec<&LedgerEntry> = self.entries.iter().filter(|e| e.key.matches(filters)).collect();
        out.sort_by(|a, b| a.key.cmp(&b.key));
        out
    }

    pub fn table(&self, filters: &[String]) -> String {
        let mut s = String::from("key,value,tolerance,timestamp\n");
        for e in self.select(filters) {
            s.push_str(&format!("{},{:.10e},{},{}\n", e.key.label(), e.value, e.tolerance, e.timestamp));
        }
        s
    }
}

/// BTreeMap from label to value, for compact comparisons.
pub fn values_by_label(entries: &[LedgerEntry]) -> BTreeMap<String, f64> {
    entries.iter().map(|e| (e.key.label(), e.value)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(v: f64) -> LedgerEntry {
        LedgerEntry { key: LedgerKey::new("riesz", "kato_max", 2, 16, "identity"), value: v, tolerance: 1e-6, timestamp: 0, config: serde_json::Value::Null }
    }

    #[test]
    fn refuses_overwrite_without_refit() {
        let mut l = ConstantsLedger::empty(Path::new("unused.json"));
        assert_eq!(l.record(entry(1.0), false), Recorded::New);
        assert_eq!(l.record(entry(1.0), false), Recorded::Unchanged);
        assert_eq!(l.record(entry(2.0), false), Recorded::Refused);
        assert_eq!(l.get(&entry(0.0).key).unwrap().value, 1.0);
        assert_eq!(l.record(entry(2.0), true), Recorded::Replaced);
        assert_eq!(l.get(&entry(0.0).key).unwrap().value, 2.0);
        assert!(l.table(&["kato".into()]).contains("riesz/kato_max/n=2/N=16/A=identity"));
        assert_eq!(l.table(&["bmo".into()]).lines().count(), 1);
    }

    #[test]
    fn missing_file() {
        assert!(matches!(ConstantsLedger::load(Path::new("/nonexistent/ledger.json")), Err(LabError::LedgerMissing(_))));
    }
}
