//! Assembly of `L_h = G^H A_h G` on the periodic grid.
//!
//! Each dual point `c` carries one matrix `A(c)`. The form averages the two
//! corner gradients of the cube centred at `c`: the forward difference at the
//! bottom node `c - 1` and the backward difference at the top node `c`. Both
//! are exact for affine data, so mixed terms are second-order, the form is
//! accretive, and `A = I` gives the usual `(2n+1)`-point Laplacian.

use crate::coeffs::{check_ellipticity, CoefficientField};
use crate::error::Result;
use crate::grid::{Grid, GridFunction};
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Stencil offsets `{0, +-e_k, e_j - e_k}`.
pub fn stencil_offsets(dim: usize) -> Vec<[i64; 3]> {
    let mut out = vec![[0i64; 3]];
    for k in 0..dim {
        let mut p = [0i64; 3];
        p[k] = 1;
        out.push(p);
        p[k] = -1;
        out.push(p);
    }
    for j in 0..dim {
        for k in 0..dim {
            if j != k {
                let mut p = [0i64; 3];
                p[j] = 1;
                p[k] = -1;
                out.push(p);
            }
        }
    }
    out
}

fn slot_key(o: [i64; 3]) -> usize {
    ((o[0] + 1) + 3 * (o[1] + 1) + 9 * (o[2] + 1)) as usize
}

/// Sparse stencil operator with its ellipticity data.
#[derive(Clone, Debug)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub offsets: Vec<[i64; 3]>,
    /// `stencil[node * offsets.len() + slot]`.
    pub stencil: Vec<C64>,
    /// Exact ellipticity constants of the sampled field.
    pub lambda: f64,
    pub big_lambda: f64,
    /// A-priori sector half-angle `arccos(lambda / Lambda)`.
    pub sector_angle: f64,
    pub field: Arc<CoefficientField>,
}

/// Calls `emit(row, col_offset, value)` for every entry of `G^H A G`.
fn for_each_entry(field: &CoefficientField, mut emit: impl FnMut(usize, [i64; 3], C64)) {
    let grid = field.grid;
    let n = grid.dim;
    let w = 0.5 / (grid.spacing * grid.spacing);
    let mut ek = [[0i64; 3]; 3];
    for k in 0..n {
        ek[k][k] = 1;
    }
    let sub = |a: [i64; 3], b: [i64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let neg = |a: [i64; 3]| [-a[0], -a[1], -a[2]];
    let mut down = [0i64; 3];
    for d in down.iter_mut().take(n) {
        *d = -1;
    }
    for c in 0..grid.len() {
        let a = field.at(c);
        let cc = grid.coords(c);
        let b = grid.shifted(cc, down);
        let bc = grid.coords(b);
        for k in 0..n {
            let rk = grid.shifted(bc, ek[k]);
            let rk_top = grid.shifted(cc, neg(ek[k]));
            for l in 0..n {
                let v = w * a[k * n + l];
                if v == ZERO {
                    continue;
                }
                // Forward corner at the bottom node.
                emit(rk, sub(ek[l], ek[k]), v);
                emit(rk, neg(ek[k]), -v);
                emit(b, ek[l], -v);
                emit(b, [0; 3], v);
                // Backward corner at the top node.
                emit(c, [0; 3], v);
                emit(c, neg(ek[l]), -v);
                emit(rk_top, ek[k], -v);
                emit(rk_top, sub(ek[k], ek[l]), v);
            }
        }
    }
}

/// Matrix-free `y = L_h x` for a coefficient given pointwise, used when storing
/// the stencil would be too large.
pub fn apply_form(grid: &Grid, coeff: impl Fn(usize) -> [C64; 9], x: &[C64]) -> Vec<C64> {
    let n = grid.dim;
    let h = grid.spacing;
    let s = 0.5 / h;
    let mut y = vec![ZERO; grid.len()];
    let mut down = [0i64; 3];
    for d in down.iter_mut().take(n) {
        *d = -1;
    }
    for c in 0..grid.len() {
        let a = coeff(c);
        let cc = grid.coords(c);
        let b = grid.shifted(cc, down);
        let bc = grid.coords(b);
        let mut up = [0usize; 3];
        let mut dn = [0usize; 3];
        let mut gf = [ZERO; 3];
        let mut gb = [ZERO; 3];
        for k in 0..n {
            let mut e = [0i64; 3];
            e[k] = 1;
            up[k] = grid.shifted(bc, e);
            e[k] = -1;
            dn[k] = grid.shifted(cc, e);
            gf[k] = (x[up[k]] - x[b]) / h;
            gb[k] = (x[c] - x[dn[k]]) / h;
        }
        for k in 0..n {
            let mut vf = ZERO;
            let mut vb = ZERO;
            for l in 0..n {
                vf += a[k * n + l] * gf[l];
                vb += a[k * n + l] * gb[l];
            }
            y[up[k]] += s * vf;
            y[b] -= s * vf;
            y[c] += s * vb;
            y[dn[k]] -= s * vb;
        }
    }
    y
}

/// Assembles `L_h` after certifying ellipticity by probing.
pub fn assemble_operator(coeffs: CoefficientField) -> Result<DiscreteOperator> {
    check_ellipticity(&coeffs, 16)?;
    let grid = coeffs.grid;
    let offsets = stencil_offsets(grid.dim);
    let mut lookup = [usize::MAX; 27];
    for (s, o) in offsets.iter().enumerate() {
        lookup[slot_key(*o)] = s;
    }
    let ns = offsets.len();
    let mut stencil = vec![ZERO; grid.len() * ns];
    for_each_entry(&coeffs, |row, off, v| {
        stencil[row * ns + lookup[slot_key(off)]] += v;
    });
    let (lam, big, worst) = coeffs.exact_bounds();
    if lam <= 0.0 {
        return Err(crate::error::LabError::EllipticityViolation { lambda: lam, index: worst });
    }
    let ratio = (lam / big).clamp(0.0, 1.0);
    Ok(DiscreteOperator {
        grid,
        offsets,
        stencil,
        lambda: lam,
        big_lambda: big,
        sector_angle: ratio.acos(),
        field: Arc::new(coeffs),
    })
}

impl DiscreteOperator {
    pub fn identity_laplacian(grid: Grid) -> Self {
        assemble_operator(CoefficientField::identity(grid)).expect("identity is elliptic")
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `c` when the coefficient field is `c I`.
    pub fn scalar(&self) -> Option<C64> {
        self.field.scalar
    }

    /// The operator built from the pointwise adjoint field; equals `L_h^H`.
    pub fn adjoint(&self) -> DiscreteOperator {
        assemble_operator(self.field.adjoint()).expect("adjoint field is elliptic")
    }

    /// `y = L_h x`.
    pub fn apply_into(&self, x: &[C64], y: &mut [C64]) {
        let g = &self.grid;
        let n = g.points;
        let ns = self.offsets.len();
        let lin: Vec<i64> = self
            .offsets
            .iter()
            .map(|o| o[0] + o[1] * n as i64 + o[2] * (n * n) as i64)
            .collect();
        let interior = |c: &[usize; 3]| (0..g.dim).all(|k| c[k] >= 1 && c[k] + 1 < n);
        for (i, yi) in y.iter_mut().enumerate() {
            let row = &self.stencil[i * ns..(i + 1) * ns];
            let c = g.coords(i);
            let mut acc = ZERO;
            if interior(&c) {
                for s in 0..ns {
                    acc += row[s] * x[(i as i64 + lin[s]) as usize];
                }
            } else {
                for s in 0..ns {
                    acc += row[s] * x[g.shifted(c, self.offsets[s])];
                }
            }
            *yi = acc;
        }
    }

    pub fn apply_vec(&self, x: &[C64]) -> Vec<C64> {
        let mut y = vec![ZERO; x.len()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn apply(&self, f: &GridFunction) -> GridFunction {
        GridFunction { grid: f.grid, values: self.apply_vec(&f.values) }
    }

    /// Triplets `(row, col, value)` with duplicates merged per stencil slot.
    pub fn triplets(&self) -> Vec<(usize, usize, C64)> {
        let ns = self.offsets.len();
        let mut out = Vec::with_capacity(self.stencil.len());
        for i in 0..self.len() {
            let c = self.grid.coords(i);
            for s in 0..ns {
                let v = self.stencil[i * ns + s];
                if v != ZERO {
                    out.push((i, self.grid.shifted(c, self.offsets[s]), v));
                }
            }
        }
        out
    }

    pub fn to_sparse(&self) -> SparseColMat<usize, C64> {
        let t: Vec<_> = self.triplets().into_iter().map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        SparseColMat::try_new_from_triplets(self.len(), self.len(), &t).expect("valid triplets")
    }

    pub fn to_dense(&self) -> Mat<C64> {
        let n = self.len();
        let mut m = Mat::<C64>::zeros(n, n);
        for (r, c, v) in self.triplets() {
            m[(r, c)] += v;
        }
        m
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let ns = self.offsets.len();
        self.stencil.chunks(ns).map(|r| r.iter().map(|v| v.norm()).sum::<f64>()).fold(0.0, f64::max)
    }

    /// Rigorous lower bound on `Re<L f, f>/|f|^2` over mean-zero `f`: `lambda * (4/h^2) sin^2(pi/N)`.
    pub fn spectral_floor(&self) -> f64 {
        self.lambda * self.grid.laplacian_gap()
    }

    /// Discrete gradient form `<A_h G f, G g>`, i.e. `<L_h f, g>`.
    pub fn form(&self, f: &GridFunction, g: &GridFunction) -> C64 {
        self.apply(f).inner(g)
    }

    /// Largest `|arg<L v, v>|` over seeded random unit probes.
    pub fn numerical_range_angle(&self, probes: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let v: Vec<C64> =
                (0..self.len()).map(|_| C64::new(crate::grid::normal(&mut rng), crate::grid::normal(&mut rng))).collect();
            let lv = self.apply_vec(&v);
            let q: C64 = lv.iter().zip(&v).map(|(a, b)| a * b.conj()).sum();
            worst = worst.max(q.arg().abs());
        }
        worst
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn laplacian_1d() {
        let g = build_grid(1, 8, 1.0).unwrap();
        let op = DiscreteOperator::identity_laplacian(g);
        let d = op.to_dense();
        for i in 0..8 {
            assert!((d[(i, i)] - C64::new(128.0, 0.0)).norm() < 1e-12);
            assert!((d[(i, (i + 1) % 8)] - C64::new(-64.0, 0.0)).norm() < 1e-12);
            assert!((d[(i, (i + 7) % 8)] - C64::new(-64.0, 0.0)).norm() < 1e-12);
        }
        let total: f64 = (0..8).flat_map(|i| (0..8).map(move |j| (i, j))).map(|(i, j)| d[(i, j)].norm()).sum();
        assert!((total - 8.0 * 256.0).abs() < 1e-9);
    }

    #[test]
    fn laplacian_stencil_2d_3d() {
        for dim in [2, 3] {
            let g = build_grid(dim, 8, 1.0).unwrap();
            let op = DiscreteOperator::identity_laplacian(g);
            let ns = op.offsets.len();
            let h2 = g.spacing * g.spacing;
            for i in 0..g.len() {
                let row = &op.stencil[i * ns..(i + 1) * ns];
                assert!((row[0].re - 2.0 * dim as f64 / h2).abs() < 1e-9);
                for s in 1..=2 * dim {
                    assert!((row[s].re + 1.0 / h2).abs() < 1e-9);
                }
                for s in 2 * dim + 1..ns {
                    assert!(row[s].norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn matrix_free_matches_stencil() {
        let g = build_grid(3, 8, 1.0).unwrap();
        let field = CoefficientField::smooth(g, 1.0);
        let op = assemble_operator(field.clone()).unwrap();
        let x = GridFunction::random(g, 3);
        let y1 = op.apply_vec(&x.values);
        let y2 = apply_form(
            &g,
            |c| {
                let mut m = [ZERO; 9];
                m[..9].copy_from_slice(field.at(c));
                m
            },
            &x.values,
        );
        let err: f64 = y1.iter().zip(&y2).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let scale: f64 = y1.iter().map(|a| a.norm()).fold(0.0, f64::max);
        assert!(err < 1e-12 * scale);
    }

    #[test]
    fn adjoint_is_conjugate_transpose() {
        let g = build_grid(2, 8, 1.0).unwrap();
        let op = assemble_operator(CoefficientField::smooth(g, 1.0)).unwrap();
        let a = op.to_dense();
        let b = op.adjoint().to_dense();
        let mut err: f64 = 0.0;
        for i in 0..g.len() {
            for j in 0..g.len() {
                err = err.max((a[(i, j)].conj() - b[(j, i)]).norm());
            }
        }
        assert!(err < 1e-9);
    }

    #[test]
    fn sector_angle_tighter_than_arctan() {
        let g = build_grid(2, 8, 1.0).unwrap();
        let op = assemble_operator(CoefficientField::smooth(g, 1.0)).unwrap();
        assert!(op.sector_angle <= (op.big_lambda / op.lambda).atan());
        assert!(op.numerical_range_angle(200, 1) <= op.sector_angle + 1e-9);
    }
}
