//! Complex coefficient fields `A(x)` sampled at dual points (cell corners).

use crate::counterexamples::{frehse_matrix, FrehseConfig};
use crate::error::{LabError, Result};
use crate::grid::Grid;
use crate::smallmat;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

/// An `n x n` complex matrix per dual point, row-major.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    pub grid: Grid,
    pub entries: Vec<C64>,
    /// Set when every entry is `c * I` for one scalar `c`.
    pub scalar: Option<C64>,
}

/// JSON descriptor for coefficient fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientDescriptor {
    Identity,
    Scalar {
        re: f64,
        #[serde(default)]
        im: f64,
    },
    /// Smooth variable complex field used as a generic non-trivial test case.
    Smooth {
        #[serde(default = "one")]
        strength: f64,
    },
    Frehse(FrehseConfig),
    File { path: String },
}

fn one() -> f64 {
    1.0
}

impl CoefficientDescriptor {
    pub fn build(&self, grid: Grid) -> Result<CoefficientField> {
        match self {
            Self::Identity => Ok(CoefficientField::identity(grid)),
            Self::Scalar { re, im } => Ok(CoefficientField::scalar(grid, C64::new(*re, *im))),
            Self::Smooth { strength } => Ok(CoefficientField::smooth(grid, *strength)),
            Self::Frehse(cfg) => crate::counterexamples::frehse_field(cfg, grid),
            Self::File { path } => CoefficientField::from_file(grid, Path::new(path)),
        }
    }

    /// Short tag used in ledger keys.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Identity => "identity",
            Self::Scalar { .. } => "scalar",
            Self::Smooth { .. } => "smooth",
            Self::Frehse(_) => "frehse",
            Self::File { .. } => "file",
        }
    }
}

impl CoefficientField {
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> Vec<C64>) -> Self {
        let n2 = grid.dim * grid.dim;
        let mut entries = Vec::with_capacity(grid.len() * n2);
        for c in 0..grid.len() {
            let m = f(grid.dual_position(c));
            assert_eq!(m.len(), n2);
            entries.extend_from_slice(&m);
        }
        Self { grid, entries, scalar: None }
    }

    pub fn identity(grid: Grid) -> Self {
        Self::scalar(grid, C64::new(1.0, 0.0))
    }

    pub fn scalar(grid: Grid, c: C64) -> Self {
        let n = grid.dim;
        let mut m = vec![C64::new(0.0, 0.0); n * n];
        for k in 0..n {
            m[k * n + k] = c;
        }
        let mut f = Self::from_fn(grid, |_| m.clone());
        f.scalar = Some(c);
        f
    }

    /// `A = a(x) I + b(x) R` with `R` the all-ones off-diagonal pattern, smooth and periodic.
    pub fn smooth(grid: Grid, strength: f64) -> Self {
        let n = grid.dim;
        let s = grid.side;
        Self::from_fn(grid, move |x| {
            let mut prod = 1.0;
            for k in 0..n {
                prod *= (2.0 * PI * x[k] / s).sin();
            }
            let a = C64::new(1.0 + 0.3 * strength * prod, 0.2 * strength * (2.0 * PI * x[0] / s).cos());
            let b = C64::new(0.25, 0.25) * strength * (2.0 * PI * x[n - 1] / s).cos();
            let mut m = vec![C64::new(0.0, 0.0); n * n];
            for i in 0..n {
                for j in 0..n {
                    m[i * n + j] = if i == j { a } else { b };
                }
            }
            m
        })
    }

    /// Reads interleaved little-endian `(re, im)` doubles, dual point major then entry.
    pub fn from_file(grid: Grid, path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let n2 = grid.dim * grid.dim;
        let expected = grid.len() * n2 * 16;
        if bytes.len() != expected {
            return Err(LabError::Config(format!(
                "coefficient file {} has {} bytes, expected {expected}",
                path.display(),
                bytes.len()
            )));
        }
        let entries = bytes
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        Ok(Self { grid, entries, scalar: None })
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(self.entries.len() * 16);
        for v in &self.entries {
            out.extend_from_slice(&v.re.to_le_bytes());
            out.extend_from_slice(&v.im.to_le_bytes());
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn frehse(grid: Grid, cfg: &FrehseConfig, beta: C64) -> Self {
        Self::from_fn(grid, |x| frehse_matrix(cfg.alpha, beta, &x[..grid.dim]))
    }

    pub fn dim(&self) -> usize {
        self.grid.dim
    }

    /// Matrix at dual point `c`.
    pub fn at(&self, c: usize) -> &[C64] {
        let n2 = self.grid.dim * self.grid.dim;
        &self.entries[c * n2..(c + 1) * n2]
    }

    /// Pointwise conjugate transpose.
    pub fn adjoint(&self) -> Self {
        let n = self.grid.dim;
        let mut entries = self.entries.clone();
        for c in 0..self.grid.len() {
            let a = self.at(c);
            for i in 0..n {
                for j in 0..n {
                    entries[c * n * n + i * n + j] = a[j * n + i].conj();
                }
            }
        }
        Self { grid: self.grid, entries, scalar: self.scalar.map(|c| c.conj()) }
    }

    /// True when every matrix equals its conjugate transpose.
    pub fn is_hermitian(&self, tol: f64) -> bool {
        let n = self.grid.dim;
        (0..self.grid.len()).all(|c| {
            let a = self.at(c);
            (0..n).all(|i| (0..n).all(|j| (a[i * n + j] - a[j * n + i].conj()).norm() <= tol))
        })
    }

    /// Exact per-point constants: minimum over points of the least eigenvalue of
    /// the Hermitian part, maximum of the spectral norm, and the worst point.
    pub fn exact_bounds(&self) -> (f64, f64, usize) {
        let n = self.grid.dim;
        let mut lam = f64::INFINITY;
        let mut big = 0.0f64;
        let mut worst = 0;
        for c in 0..self.grid.len() {
            let a = self.at(c);
            let l = smallmat::min_hermitian_part(n, a);
            if l < lam {
                lam = l;
                worst = c;
            }
            big = big.max(smallmat::spectral_norm(n, a));
        }
        (lam, big, worst)
    }
}

/// Deterministic unit probe directions: the coordinate basis followed by
/// seeded random complex unit vectors.
pub fn probe_directions(n: usize, probe_count: usize) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e11f);
    let mut out = Vec::new();
    for k in 0..n {
        let mut v = vec![C64::new(0.0, 0.0); n];
        v[k] = C64::new(1.0, 0.0);
        out.push(v);
    }
    for _ in 0..probe_count {
        let mut v: Vec<C64> = (0..n)
            .map(|_| C64::new(crate::grid::normal(&mut rng), crate::grid::normal(&mut rng)))
            .collect();
        let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for z in &mut v {
            *z /= norm;
        }
        out.push(v);
    }
    out
}

/// Probes `Re<A xi, xi>` and `|A xi|` over the fixed probe set at every dual point.
pub fn check_ellipticity(coeffs: &CoefficientField, probe_count: usize) -> Result<(f64, f64)> {
    if probe_count == 0 {
        return Err(LabError::InvalidParams("probe_count must be at least 1".into()));
    }
    let n = coeffs.grid.dim;
    let probes = probe_directions(n, probe_count);
    let mut lam = f64::INFINITY;
    let mut big = 0.0f64;
    let mut worst = 0;
    for c in 0..coeffs.grid.len() {
        let a = coeffs.at(c);
        for xi in &probes {
            let mut form = C64::new(0.0, 0.0);
            let mut img = 0.0;
            for i in 0..n {
                let mut row = C64::new(0.0, 0.0);
                for j in 0..n {
                    row += a[i * n + j] * xi[j];
                }
                form += row * xi[i].conj();
                img += row.norm_sqr();
            }
            if form.re < lam {
                lam = form.re;
                worst = c;
            }
            big = big.max(img.sqrt());
        }
    }
    if lam <= 0.0 {
        return Err(LabError::EllipticityViolation { lambda: lam, index: worst });
    }
    Ok((lam, big))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn identity_and_scalar_constants() {
        let g = build_grid(2, 8, 1.0).unwrap();
        let (l, u) = check_ellipticity(&CoefficientField::identity(g), 16).unwrap();
        assert!((l - 1.0).abs() < 1e-14 && (u - 1.0).abs() < 1e-14);
        let (l, u) = check_ellipticity(&CoefficientField::scalar(g, C64::new(0.5, 1.0)), 16).unwrap();
        assert!((l - 0.5).abs() < 1e-14);
        assert!((u - 1.118033988749895).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_elliptic() {
        let g = build_grid(2, 8, 1.0).unwrap();
        let f = CoefficientField::scalar(g, C64::new(-0.1, 1.0));
        assert!(matches!(check_ellipticity(&f, 4), Err(LabError::EllipticityViolation { .. })));
    }

    #[test]
    fn probes_never_beat_exact_bounds() {
        let g = build_grid(3, 8, 1.0).unwrap();
        let f = CoefficientField::smooth(g, 1.0);
        let (l, u) = check_ellipticity(&f, 32).unwrap();
        let (le, ue, _) = f.exact_bounds();
        assert!(le <= l + 1e-14 && u <= ue + 1e-14);
        assert!(le > 0.0);
    }

    #[test]
    fn descriptor_json() {
        let d: CoefficientDescriptor = serde_json::from_str(r#"{"kind":"scalar","re":1.0,"im":0.5}"#).unwrap();
        assert_eq!(d, CoefficientDescriptor::Scalar { re: 1.0, im: 0.5 });
        let d: CoefficientDescriptor = serde_json::from_str(r#"{"kind":"identity"}"#).unwrap();
        assert_eq!(d.kind(), "identity");
    }

    #[test]
    fn file_roundtrip() {
        let g = build_grid(2, 4, 1.0).unwrap();
        let f = CoefficientField::smooth(g, 0.5);
        let path = std::env::temp_dir().join(format!("coeffs-{}.bin", std::process::id()));
        f.write_file(&path).unwrap();
        let d = CoefficientDescriptor::File { path: path.to_string_lossy().into() };
        let h = d.build(g).unwrap();
        assert_eq!(h.entries, f.entries);
        std::fs::remove_file(path).ok();
    }
}
