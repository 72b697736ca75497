//! Experiment configuration, TOML or JSON.

use hardy_lab::coeffs::CoefficientDescriptor;
use hardy_lab::grid::{build_grid, Grid};
use hardy_lab::squarefun::ScaleLadder;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const EXPERIMENTS: [&str; 23] = [
    "assemble-check",
    "gaffney",
    "offdiag-pq",
    "opnorm-sweep",
    "funcalc-accuracy",
    "square-function",
    "tent-decompose",
    "molecular-decompose",
    "molecule-verify",
    "bmo-norm",
    "duality-pairing",
    "sharp-maximal",
    "theorem61",
    "kato",
    "riesz-isometry",
    "s1-compare",
    "cz-decompose",
    "tl-norm",
    "region",
    "frehse-solve-beta",
    "frehse-verify",
    "blowup",
    "null-space",
];

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_side")]
    pub side: f64,
}

fn default_dim() -> usize {
    2
}
fn default_points() -> usize {
    16
}
fn default_side() -> f64 {
    1.0
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { dim: 2, points: 16, side: 1.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderConfig {
    pub t_min: f64,
    pub t_max: f64,
    pub levels: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default = "identity")]
    pub operator: CoefficientDescriptor,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ladder: Option<LadderConfig>,
    #[serde(default)]
    pub seed: u64,
    /// Contour nodes per decade; the library default when absent.
    #[serde(default)]
    pub quadrature_density: Option<usize>,
    /// Report directory; `out` when absent.
    #[serde(default)]
    pub output: Option<String>,
    /// Experiment-specific settings.
    #[serde(default = "empty_table")]
    pub params: serde_json::Value,
}

fn identity() -> CoefficientDescriptor {
    CoefficientDescriptor::Identity
}

fn empty_table() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn parse(text: &str, json: bool) -> Result<Self, String> {
        let cfg: Self = if json {
            serde_json::from_str(text).map_err(|e| e.to_string())?
        } else {
            toml::from_str(text).map_err(|e| e.to_string())?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let json = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => true,
            Some("toml") => false,
            _ => text.trim_start().starts_with('{'),
        };
        Self::parse(&text, json).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(format!("field `experiment`: unknown experiment `{}` (expected one of {})", self.experiment, EXPERIMENTS.join(", ")));
        }
        self.grid().map_err(|e| format!("field `grid`: {e}"))?;
        if let Some(l) = &self.ladder {
            ScaleLadder::new(l.t_min, l.t_max, l.levels).map_err(|e| format!("field `ladder`: {e}"))?;
        }
        if self.quadrature_density == Some(0) {
            return Err("field `quadrature_density`: must be positive".into());
        }
        if !self.params.is_object() {
            return Err("field `params`: expected a table".into());
        }
        Ok(())
    }

    pub fn grid(&self) -> hardy_lab::Result<Grid> {
        build_grid(self.grid.dim, self.grid.points, self.grid.side)
    }

    pub fn ladder_for(&self, grid: &Grid) -> ScaleLadder {
        match &self.ladder {
            Some(l) => ScaleLadder::new(l.t_min, l.t_max, l.levels).expect("validated ladder"),
            None => ScaleLadder::default_for(grid),
        }
    }

    /// Typed view of `params`; unknown keys are rejected.
    pub fn params<P: DeserializeOwned>(&self) -> Result<P, String> {
        serde_json::from_value(self.params.clone()).map_err(|e| format!("field `params`: {e}"))
    }

    pub fn output_dir(&self) -> String {
        self.output.clone().unwrap_or_else(|| "out".into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let t = ExperimentConfig::parse("experiment = \"kato\"\nseed = 3\n[grid]\npoints = 8\n[params]\nbattery = 4\n", false).unwrap();
        let j = ExperimentConfig::parse(r#"{"experiment": "kato", "seed": 3, "grid": {"points": 8}, "params": {"battery": 4}}"#, true).unwrap();
        assert_eq!(serde_json::to_string(&t).unwrap(), serde_json::to_string(&j).unwrap());
    }

    #[test]
    fn diagnostics_name_the_problem() {
        let e = ExperimentConfig::parse("experiment = \"kato\"\n[grid]\npoints = 12\n", false).unwrap_err();
        assert!(e.contains("grid"), "{e}");
        let e = ExperimentConfig::parse("experiment = \"kato\"\nbogus = 1\n", false).unwrap_err();
        assert!(e.contains("bogus") && e.contains("line 2"), "{e}");
        let e = ExperimentConfig::parse("{\"experiment\": \"nope\"}", true).unwrap_err();
        assert!(e.contains("nope"), "{e}");
    }
}
