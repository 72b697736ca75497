//! Experiment outcomes and the files they are written to.

use serde_json::{json, Map, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Fixed-width scientific notation so that reruns are byte-identical.
pub fn fmt(x: f64) -> String {
    if x == x.trunc() && x.abs() < 1e15 {
        format!("{x}")
    } else {
        format!("{x:.10e}")
    }
}

pub struct Csv {
    text: String,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self { text: header.join(",") + "\n" }
    }

    pub fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }

    pub fn finish(self) -> String {
        self.text
    }
}

/// Axis labels and points of a two-column plot.
pub type Plot = (String, String, Vec<(f64, f64)>);

pub struct Outcome {
    pub module: String,
    pub csv: String,
    pub checks: Vec<(String, bool)>,
    /// Empty means pass/fail from the checks.
    pub verdict: String,
    pub metrics: BTreeMap<String, f64>,
    /// `(invariant, value, relative tolerance)` for the ledger.
    pub constants: Vec<(String, f64, f64)>,
    pub meta: Map<String, Value>,
    pub plot: Option<Plot>,
}

impl Outcome {
    pub fn new(module: &str) -> Self {
        Self {
            module: module.into(),
            csv: String::new(),
            checks: Vec::new(),
            verdict: String::new(),
            metrics: BTreeMap::new(),
            constants: Vec::new(),
            meta: Map::new(),
            plot: None,
        }
    }

    pub fn metric(&mut self, name: &str, v: f64) -> &mut Self {
        self.metrics.insert(name.into(), v);
        self
    }

    pub fn check(&mut self, name: &str, ok: bool) -> &mut Self {
        self.checks.push((name.into(), ok));
        self
    }

    pub fn constant(&mut self, name: &str, v: f64, tolerance: f64) -> &mut Self {
        self.constants.push((name.into(), v, tolerance));
        self
    }

    pub fn meta(&mut self, key: &str, v: Value) -> &mut Self {
        self.meta.insert(key.into(), v);
        self
    }

    pub fn metrics_csv(&self) -> String {
        let mut csv = Csv::new(&["metric", "value"]);
        for (k, v) in &self.metrics {
            csv.row(&[k.clone(), fmt(*v)]);
        }
        csv.finish()
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.1)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect()
    }

    pub fn verdict(&self) -> &str {
        if !self.verdict.is_empty() {
            &self.verdict
        } else if self.passed() {
            "pass"
        } else {
            "fail"
        }
    }

    /// The verdict document; `context` carries the reproducibility metadata.
    pub fn verdict_json(&self, experiment: &str, context: Map<String, Value>) -> Value {
        let mut doc = Map::new();
        doc.insert("schema".into(), json!("1"));
        doc.insert("experiment".into(), json!(experiment));
        doc.insert("module".into(), json!(self.module));
        doc.insert("verdict".into(), json!(self.verdict()));
        doc.insert("pass".into(), json!(self.passed()));
        doc.insert("failed".into(), json!(self.failed()));
        doc.insert("checks".into(), Value::Object(self.checks.iter().map(|(k, v)| (k.clone(), json!(v))).collect()));
        doc.insert("metrics".into(), json!(self.metrics));
        doc.insert(
            "constants".into(),
            Value::Array(self.constants.iter().map(|(k, v, t)| json!({"invariant": k, "value": v, "tolerance": t})).collect()),
        );
        for (k, v) in context.into_iter().chain(self.meta.clone()) {
            doc.insert(k, v);
        }
        Value::Object(doc)
    }

    /// Writes `<stem>.csv`, `<stem>.json` and, with plot data, `<stem>.dat`
    /// plus its `<stem>.dat.txt` description. Returns the paths written.
    pub fn write(&self, dir: &Path, stem: &str, verdict: &Value) -> std::io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let csv = dir.join(format!("{stem}.csv"));
        std::fs::write(&csv, &self.csv)?;
        written.push(csv);
        let js = dir.join(format!("{stem}.json"));
        std::fs::write(&js, serde_json::to_string_pretty(verdict).expect("json") + "\n")?;
        written.push(js);
        if let Some((x, y, pts)) = &self.plot {
            let mut dat = String::new();
            for (a, b) in pts {
                let _ = writeln!(dat, "{} {}", fmt(*a), fmt(*b));
            }
            let path = dir.join(format!("{stem}.dat"));
            std::fs::write(&path, dat)?;
            written.push(path);
            let side = dir.join(format!("{stem}.dat.txt"));
            std::fs::write(&side, format!("experiment: {stem}\ncolumn 1: {x}\ncolumn 2: {y}\nrows: {}\n", pts.len()))?;
            written.push(side);
        }
        Ok(written)
    }
}
