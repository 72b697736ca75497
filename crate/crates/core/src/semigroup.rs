//! The heat semigroup `e^{-zL}` and off-diagonal probes.
//!
//! Three backends share one interface. Small operators are diagonalised once
//! (unitarily when `L` is a rotated Hermitian matrix), which makes every
//! semigroup action a diagonal scaling; the dense Pade exponential is kept as
//! an oracle; larger operators use Krylov `expv`.

use crate::dense::expm;
use crate::error::{LabError, Result};
use crate::grid::{lp_norm_values, Grid, GridFunction};
use crate::krylov::expv;
use crate::operator::DiscreteOperator;
use crate::stats::linear_fit;
use faer::prelude::*;
use faer::{Mat, Side};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Spectral up to 1024 unknowns, Krylov beyond.
    Auto,
    Spectral,
    DenseExpm,
    Krylov,
}

/// Eigendecomposition `L = V diag(values) V^{-1}`.
#[derive(Clone, Debug)]
pub struct Spectral {
    pub values: Vec<C64>,
    pub vecs: Mat<C64>,
    pub inv: Mat<C64>,
    pub unitary: bool,
}

impl Spectral {
    pub fn new(op: &DiscreteOperator) -> Result<Self> {
        let l = op.to_dense();
        let n = l.nrows();
        let trace: C64 = (0..n).map(|i| l[(i, i)]).sum();
        let phase = C64::from_polar(1.0, -trace.arg());
        let rot = Mat::from_fn(n, n, |i, j| l[(i, j)] * phase);
        let mut skew = 0.0;
        let mut total = 0.0;
        for j in 0..n {
            for i in 0..n {
                skew += (rot[(i, j)] - rot[(j, i)].conj()).norm_sqr();
                total += rot[(i, j)].norm_sqr();
            }
        }
        if skew <= 1e-24 * total {
            let herm = Mat::from_fn(n, n, |i, j| 0.5 * (rot[(i, j)] + rot[(j, i)].conj()));
            let evd = herm
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| LabError::SpectralFailure(format!("{e:?}")))?;
            let s = evd.S().column_vector();
            let values = (0..n).map(|k| C64::new(s[k].re, 0.0) / phase).collect();
            let vecs = evd.U().to_owned();
            let inv = vecs.adjoint().to_owned();
            return Ok(Self { values, vecs, inv, unitary: true });
        }
        let evd = l.eigen().map_err(|e| LabError::SpectralFailure(format!("{e:?}")))?;
        let s = evd.S().column_vector();
        let values: Vec<C64> = (0..n).map(|k| s[k]).collect();
        let vecs = evd.U().to_owned();
        let inv = vecs.partial_piv_lu().solve(Mat::<C64>::identity(n, n));
        // Reject ill-conditioned bases: the reconstruction must reproduce L.
        let vd = Mat::from_fn(n, n, |i, k| vecs[(i, k)] * values[k]);
        let rec = &vd * &inv;
        let mut err = 0.0;
        for j in 0..n {
            for i in 0..n {
                err += (rec[(i, j)] - l[(i, j)]).norm_sqr();
            }
        }
        if err.sqrt() > 1e-9 * total.sqrt() {
            return Err(LabError::SpectralFailure(format!(
                "eigenbasis reconstruction error {:.2e}",
                err.sqrt() / total.sqrt()
            )));
        }
        Ok(Self { values, vecs, inv, unitary: false })
    }

    pub fn adjoint(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| v.conj()).collect(),
            vecs: self.inv.adjoint().to_owned(),
            inv: self.vecs.adjoint().to_owned(),
            unitary: self.unitary,
        }
    }

    /// Coordinates `V^{-1} f`.
    pub fn analyse(&self, f: &[C64]) -> Vec<C64> {
        matvec(&self.inv, f)
    }

    /// Coordinates `V^{-1} f` of a vector given by its nonzero entries.
    pub fn analyse_sparse(&self, entries: &[(usize, C64)]) -> Vec<C64> {
        let mut c = vec![ZERO; self.values.len()];
        for &(y, v) in entries {
            let col = self.inv.col(y);
            for (ck, r) in c.iter_mut().zip(col.iter()) {
                *ck += r * v;
            }
        }
        c
    }

    /// Synthesis `V c`.
    pub fn synthesise(&self, c: &[C64]) -> Vec<C64> {
        matvec(&self.vecs, c)
    }

    /// `g(L) f` for a scalar function applied to the eigenvalues.
    pub fn apply_fn(&self, f: &[C64], g: impl Fn(C64) -> C64) -> Vec<C64> {
        let mut c = self.analyse(f);
        for (ck, lk) in c.iter_mut().zip(&self.values) {
            *ck *= g(*lk);
        }
        self.synthesise(&c)
    }
}

fn matvec(m: &Mat<C64>, x: &[C64]) -> Vec<C64> {
    let col = faer::ColRef::from_slice(x);
    let y = m * col;
    (0..m.nrows()).map(|i| y[i]).collect()
}

/// Heat-semigroup engine wrapping one discrete operator.
#[derive(Clone, Debug)]
pub struct SemigroupEngine {
    pub operator: Arc<DiscreteOperator>,
    pub method: Method,
    pub krylov_dim: usize,
    pub tol: f64,
    spectral: Option<Arc<Spectral>>,
    dense: Option<Arc<Mat<C64>>>,
    anorm: f64,
}

impl SemigroupEngine {
    /// Engine with automatic backend choice.
    pub fn new(op: DiscreteOperator) -> Result<Self> {
        Self::with_method(op, Method::Auto)
    }

    pub fn with_method(op: DiscreteOperator, method: Method) -> Result<Self> {
        let anorm = op.norm_inf();
        let mut engine = Self {
            operator: Arc::new(op),
            method,
            krylov_dim: 40,
            tol: 1e-10,
            spectral: None,
            dense: None,
            anorm,
        };
        match method {
            Method::Auto => {
                if engine.operator.len() <= 1024 {
                    match Spectral::new(&engine.operator) {
                        Ok(s) => {
                            engine.spectral = Some(Arc::new(s));
                            engine.method = Method::Spectral;
                        }
                        Err(_) => engine.method = Method::Krylov,
                    }
                } else {
                    engine.method = Method::Krylov;
                }
            }
            Method::Spectral => engine.spectral = Some(Arc::new(Spectral::new(&engine.operator)?)),
            Method::DenseExpm => engine.dense = Some(Arc::new(engine.operator.to_dense())),
            Method::Krylov => {}
        }
        Ok(engine)
    }

    pub fn grid(&self) -> Grid {
        self.operator.grid
    }

    pub fn spectral(&self) -> Option<&Spectral> {
        self.spectral.as_deref()
    }

    pub fn anorm(&self) -> f64 {
        self.anorm
    }

    /// Engine for `L^*`, reusing the factorisation where there is one.
    pub fn adjoint(&self) -> Self {
        let op = self.operator.adjoint();
        let anorm = op.norm_inf();
        Self {
            operator: Arc::new(op),
            method: self.method,
            krylov_dim: self.krylov_dim,
            tol: self.tol,
            spectral: self.spectral.as_ref().map(|s| Arc::new(s.adjoint())),
            dense: None,
            anorm,
        }
        .with_dense_refreshed()
    }

    fn with_dense_refreshed(mut self) -> Self {
        if self.method == Method::DenseExpm {
            self.dense = Some(Arc::new(self.operator.to_dense()));
        }
        self
    }

    /// Half-angle of the sector where `e^{-zL}` is analytic.
    pub fn sector_limit(&self) -> f64 {
        std::f64::consts::FRAC_PI_2 - self.operator.sector_angle
    }

    fn check_time(&self, z: C64) -> Result<()> {
        if z == ZERO {
            return Ok(());
        }
        let arg = z.arg().abs();
        let limit = self.sector_limit();
        if z.im == 0.0 && z.re > 0.0 {
            return Ok(());
        }
        if arg >= limit {
            return Err(LabError::SectorViolation { arg, limit });
        }
        Ok(())
    }

    fn check_len(&self, f: &[C64]) -> Result<()> {
        if f.len() != self.operator.len() {
            return Err(LabError::GridMismatch(format!("vector of length {} for {} nodes", f.len(), self.operator.len())));
        }
        Ok(())
    }

    fn krylov(&self, z: C64, f: &[C64]) -> Result<Vec<C64>> {
        let op = &self.operator;
        let (w, _) = expv(|x, y| op.apply_into(x, y), self.anorm, z, f, self.krylov_dim, self.tol)?;
        Ok(w)
    }

    /// `e^{-zL} f` as a raw vector.
    pub fn heat_vec(&self, z: C64, f: &[C64]) -> Result<Vec<C64>> {
        self.check_time(z)?;
        self.check_len(f)?;
        if z == ZERO {
            return Ok(f.to_vec());
        }
        match self.method {
            Method::Spectral | Method::Auto => {
                let s = self.spectral.as_ref().expect("spectral backend");
                Ok(s.apply_fn(f, |l| (-z * l).exp()))
            }
            Method::DenseExpm => {
                let a = self.dense.as_ref().expect("dense backend");
                let n = a.nrows();
                let e = expm(&Mat::from_fn(n, n, |i, j| a[(i, j)] * (-z)));
                Ok(matvec(&e, f))
            }
            Method::Krylov => self.krylov(z, f),
        }
    }

    /// `sum_k w_k e^{-z_k L} f`.
    pub fn heat_combination(&self, terms: &[(C64, C64)], f: &[C64]) -> Result<Vec<C64>> {
        self.check_len(f)?;
        for (z, _) in terms {
            self.check_time(*z)?;
        }
        if let Some(s) = self.spectral.as_ref().filter(|_| self.method == Method::Spectral) {
            return Ok(s.apply_fn(f, |l| terms.iter().map(|(z, w)| w * (-z * l).exp()).sum()));
        }
        if self.method == Method::Krylov {
            // Chain along rays: sort by argument then modulus.
            let mut order: Vec<usize> = (0..terms.len()).collect();
            let key = |z: C64| ((z.arg() * 1e9).round() as i64, z.norm());
            order.sort_by(|&a, &b| {
                let (ka, ma) = key(terms[a].0);
                let (kb, mb) = key(terms[b].0);
                ka.cmp(&kb).then(ma.partial_cmp(&mb).unwrap())
            });
            let mut out = vec![ZERO; f.len()];
            let mut cur_key = i64::MIN;
            let mut cur_z = ZERO;
            let mut cur = f.to_vec();
            for &i in &order {
                let (z, w) = terms[i];
                let k = key(z).0;
                if k != cur_key {
                    cur_key = k;
                    cur_z = ZERO;
                    cur = f.to_vec();
                }
                let dz = z - cur_z;
                if dz != ZERO {
                    cur = self.krylov(dz, &cur)?;
                    cur_z = z;
                }
                for (o, c) in out.iter_mut().zip(&cur) {
                    *o += w * c;
                }
            }
            return Ok(out);
        }
        let mut out = vec![ZERO; f.len()];
        for (z, w) in terms {
            let e = self.heat_vec(*z, f)?;
            for (o, c) in out.iter_mut().zip(&e) {
                *o += w * c;
            }
        }
        Ok(out)
    }

    /// `e^{-tL} f` at an increasing ladder of real times, sharing work.
    pub fn heat_ladder(&self, ts: &[f64], f: &[C64]) -> Result<Vec<Vec<C64>>> {
        self.check_len(f)?;
        if let Some(s) = self.spectral.as_ref().filter(|_| self.method == Method::Spectral) {
            let c = s.analyse(f);
            return Ok(ts
                .iter()
                .map(|&t| {
                    let d: Vec<C64> = c.iter().zip(&s.values).map(|(ck, l)| ck * (-t * l).exp()).collect();
                    s.synthesise(&d)
                })
                .collect());
        }
        let mut out = Vec::with_capacity(ts.len());
        let mut prev_t = 0.0;
        let mut cur = f.to_vec();
        for &t in ts {
            if t < prev_t {
                return Err(LabError::InvalidParams("heat ladder times must increase".into()));
            }
            if t > prev_t {
                cur = self.heat_vec(C64::new(t - prev_t, 0.0), &cur)?;
            }
            prev_t = t;
            out.push(cur.clone());
        }
        Ok(out)
    }

    /// `e^{-tL} f` for real or complex `t` in the analyticity sector.
    pub fn heat_apply(&self, t: C64, f: &GridFunction) -> Result<GridFunction> {
        Ok(GridFunction { grid: f.grid, values: self.heat_vec(t, &f.values)? })
    }

    /// `(tL)^k e^{-tL} f`.
    pub fn heat_derivative_apply(&self, t: f64, k: u32, f: &GridFunction) -> Result<GridFunction> {
        if t <= 0.0 {
            return Err(LabError::InvalidParams(format!("t must be positive, got {t}")));
        }
        let mut v = self.heat_vec(C64::new(t, 0.0), &f.values)?;
        for _ in 0..k {
            v = self.operator.apply_vec(&v);
            for x in &mut v {
                *x *= t;
            }
        }
        Ok(GridFunction { grid: f.grid, values: v })
    }

    /// `L f`.
    pub fn apply_operator(&self, f: &[C64]) -> Vec<C64> {
        self.operator.apply_vec(f)
    }
}

/// Fitted off-diagonal decay `ratio ~ C exp(-d^2 / (c t))`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OffDiagonalReport {
    /// `(dist, t, ratio)`.
    pub pairs: Vec<(f64, f64, f64)>,
    pub fitted_c: f64,
    pub fitted_big_c: f64,
    /// Slope of `log(ratio)` against `dist^2/t`.
    pub slope: f64,
    pub exponent_r2: f64,
    pub p: f64,
    pub q: f64,
}

impl OffDiagonalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,dist,ratio,p,q\n");
        for (d, t, r) in &self.pairs {
            s.push_str(&format!("{t:.6e},{d:.6e},{r:.6e},{},{}\n", self.p, self.q));
        }
        s
    }
}

/// Torus distance between two node sets given as masks.
pub fn set_distance(grid: &Grid, e: &[f64], f: &[f64]) -> Result<f64> {
    let ei: Vec<usize> = (0..grid.len()).filter(|&i| e[i] != 0.0).collect();
    let fi: Vec<usize> = (0..grid.len()).filter(|&i| f[i] != 0.0).collect();
    if ei.is_empty() || fi.is_empty() {
        return Err(LabError::DegenerateSets("empty mask".into()));
    }
    let fp: Vec<[f64; 3]> = fi.iter().map(|&i| grid.position(i)).collect();
    let mut d = f64::INFINITY;
    for &i in &ei {
        let x = grid.position(i);
        for y in &fp {
            d = d.min(grid.torus_dist(x, *y));
        }
    }
    if d <= 0.0 {
        return Err(LabError::DegenerateSets("sets overlap".into()));
    }
    if d > 0.5 * grid.side {
        return Err(LabError::DegenerateSets(format!("distance {d} exceeds half the side")));
    }
    Ok(d)
}

fn fit_offdiag(pairs: Vec<(f64, f64, f64)>, p: f64, q: f64) -> OffDiagonalReport {
    let kept: Vec<(f64, f64)> =
        pairs.iter().filter(|(_, _, r)| *r > 1e-14).map(|(d, t, r)| (d * d / t, r.ln())).collect();
    let (slope, intercept, r2) = if kept.len() >= 2 {
        let xs: Vec<f64> = kept.iter().map(|k| k.0).collect();
        let ys: Vec<f64> = kept.iter().map(|k| k.1).collect();
        linear_fit(&xs, &ys)
    } else {
        (f64::NAN, f64::NAN, f64::NAN)
    };
    OffDiagonalReport { pairs, fitted_c: -1.0 / slope, fitted_big_c: intercept.exp(), slope, exponent_r2: r2, p, q }
}

fn lp_on(grid: &Grid, v: &[C64], mask: &[f64], p: f64) -> f64 {
    lp_norm_values(grid, v.iter().zip(mask).map(|(x, m)| x.norm() * m.abs().min(1.0)), p)
}

/// `L^2(E) -> L^2(F)` decay of the semigroup along a ladder of times.
pub fn gaffney_probe(engine: &SemigroupEngine, e_mask: &[f64], f_mask: &[f64], ts: &[f64]) -> Result<OffDiagonalReport> {
    lp_lq_offdiag_probe(engine, 2.0, 2.0, e_mask, f_mask, ts)
}

/// `L^p(E) -> L^q(F)` decay, normalised by `t^{(n/q - n/p)/2}`.
pub fn lp_lq_offdiag_probe(
    engine: &SemigroupEngine,
    p: f64,
    q: f64,
    e_mask: &[f64],
    f_mask: &[f64],
    ts: &[f64],
) -> Result<OffDiagonalReport> {
    if !(p >= 1.0 && q >= p && q.is_finite()) {
        return Err(LabError::InvalidParams(format!("need 1 <= p <= q < inf, got p={p}, q={q}")));
    }
    let grid = engine.grid();
    let d = set_distance(&grid, e_mask, f_mask)?;
    let bump: Vec<C64> = e_mask.iter().map(|&m| C64::new(if m != 0.0 { 1.0 } else { 0.0 }, 0.0)).collect();
    let norm_e = lp_on(&grid, &bump, e_mask, p);
    let mut sorted: Vec<f64> = ts.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let outs = engine.heat_ladder(&sorted, &bump)?;
    let n = grid.dim as f64;
    let pairs = sorted
        .iter()
        .zip(&outs)
        .map(|(&t, v)| {
            let num = lp_on(&grid, v, f_mask, q);
            let scale = t.powf(0.5 * (n / q - n / p));
            (d, t, num / (scale * norm_e))
        })
        .collect();
    Ok(fit_offdiag(pairs, p, q))
}

/// Duality map sending `y` to the unit vector of `L^{p'}` norming it.
fn dual_vector(grid: &Grid, y: &[C64], p: f64) -> Vec<C64> {
    let norm = lp_norm_values(grid, y.iter().map(|v| v.norm()), p);
    if norm == 0.0 {
        return y.to_vec();
    }
    y.iter()
        .map(|v| {
            let a = v.norm();
            if a == 0.0 {
                ZERO
            } else {
                v * ((a / norm).powf(p - 2.0) / norm)
            }
        })
        .collect()
}

/// Default adversarial trials: a point mass and a dipole Gaussian at the origin.
pub fn adversarial_trials(grid: &Grid) -> Vec<Vec<C64>> {
    let h = grid.spacing;
    let origin_node = grid.index([grid.points / 2; 3]);
    let mut point = vec![ZERO; grid.len()];
    point[origin_node] = C64::new(1.0, 0.0);
    let dipole = GridFunction::from_fn(*grid, |x| {
        let r2: f64 = x.iter().take(grid.dim).map(|v| v * v).sum();
        C64::new(x[0] * (-r2 / (8.0 * h * h)).exp(), 0.0)
    });
    vec![point, dipole.values]
}

/// Lower bound on `|T|_{p -> p}` by Boyd's power iteration from the given starts.
pub fn lp_opnorm_power(
    grid: &Grid,
    p: f64,
    starts: &[Vec<C64>],
    iterations: usize,
    mut forward: impl FnMut(&[C64]) -> Result<Vec<C64>>,
    mut backward: impl FnMut(&[C64]) -> Result<Vec<C64>>,
) -> Result<f64> {
    let q = p / (p - 1.0);
    let mut best: f64 = 0.0;
    for s in starts {
        let mut x = s.clone();
        for it in 0..=iterations {
            let nx = lp_norm_values(grid, x.iter().map(|v| v.norm()), p);
            if nx == 0.0 {
                break;
            }
            let y = forward(&x)?;
            let ny = lp_norm_values(grid, y.iter().map(|v| v.norm()), p);
            best = best.max(ny / nx);
            if it == iterations || p <= 1.0 || ny == 0.0 {
                break;
            }
            let g = dual_vector(grid, &y, p);
            let z = backward(&g)?;
            x = dual_vector(grid, &z, q);
        }
    }
    Ok(best)
}

/// Lower bound on `|e^{-tL}|_{p -> p}` from random and adversarial trials.
pub fn semigroup_lp_opnorm(engine: &SemigroupEngine, p: f64, trial_count: usize, t: f64) -> Result<f64> {
    if !(p > 0.0 && p.is_finite()) || trial_count == 0 {
        return Err(LabError::InvalidParams(format!("p={p}, trials={trial_count}")));
    }
    let grid = engine.grid();
    let adj = engine.adjoint();
    let mut starts = adversarial_trials(&grid);
    for s in 0..trial_count {
        starts.push(GridFunction::random(grid, 1000 + s as u64).values);
    }
    let z = C64::new(t, 0.0);
    lp_opnorm_power(&grid, p, &starts, 4, |x| engine.heat_vec(z, x), |x| adj.heat_vec(z, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeffs::CoefficientField;
    use crate::grid::build_grid;
    use crate::operator::assemble_operator;

    #[test]
    fn mode_decay_1d() {
        let g = build_grid(1, 8, 1.0).unwrap();
        let e = SemigroupEngine::new(DiscreteOperator::identity_laplacian(g)).unwrap();
        let f = GridFunction::fourier_mode(g, [1, 0, 0]);
        let u = e.heat_apply(C64::new(0.01, 0.0), &f).unwrap();
        let mu = g.laplacian_symbol([1, 0, 0]);
        assert!((mu - 37.49).abs() < 1e-2);
        let factor = (-0.01 * mu).exp();
        assert!((factor - 0.6874).abs() < 1e-4);
        for (a, b) in u.values.iter().zip(&f.values) {
            assert!((a - b * factor).norm() < 1e-9);
        }
    }

    #[test]
    fn backends_agree() {
        let g = build_grid(2, 8, 1.0).unwrap();
        let op = assemble_operator(CoefficientField::smooth(g, 1.0)).unwrap();
        let spec = SemigroupEngine::with_method(op.clone(), Method::Spectral).unwrap();
        let dense = SemigroupEngine::with_method(op.clone(), Method::DenseExpm).unwrap();
        let kry = SemigroupEngine::with_method(op, Method::Krylov).unwrap();
        let f = GridFunction::random(g, 7);
        for z in [C64::new(1e-3, 0.0), C64::new(0.02, 0.0), C64::new(0.01, 0.003)] {
            let a = dense.heat_vec(z, &f.values).unwrap();
            for other in [&spec, &kry] {
                let b = other.heat_vec(z, &f.values).unwrap();
                let err: f64 = a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
                assert!(err < 1e-8 * f.l2_norm() / g.cell_volume().sqrt(), "{err}");
            }
        }
    }

    #[test]
    fn sector_violation() {
        let g = build_grid(2, 8, 1.0).unwrap();
        let e = SemigroupEngine::new(DiscreteOperator::identity_laplacian(g)).unwrap();
        let f = GridFunction::random(g, 1);
        assert!(matches!(e.heat_apply(C64::new(0.0, 1.0), &f), Err(LabError::SectorViolation { .. })));
    }
}
