//! Krylov approximation of `exp(-z L) v` with adaptive substeps (Sidje's expv scheme).

use crate::dense::expm;
use crate::error::{LabError, Result};
use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, Par};
use num_complex::Complex64 as C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug, Default)]
pub struct KrylovStats {
    pub steps: usize,
    pub rejections: usize,
    pub matvecs: usize,
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn round_step(t: f64) -> f64 {
    let s = 10f64.powf(t.log10().floor() - 1.0);
    (t / s).ceil() * s
}

/// Computes `exp(-z L) v`, where `apply(x, y)` sets `y = L x` and `anorm`
/// bounds `|L|`. The local error per unit of the step fraction is kept below
/// `tol * |v|`.
pub fn expv(
    mut apply: impl FnMut(&[C64], &mut [C64]),
    anorm: f64,
    z: C64,
    v: &[C64],
    m: usize,
    tol: f64,
) -> Result<(Vec<C64>, KrylovStats)> {
    let n = v.len();
    let mut stats = KrylovStats::default();
    let beta0 = norm(v);
    if beta0 == 0.0 || z == ZERO {
        return Ok((v.to_vec(), stats));
    }
    let m = m.min(n).max(1);
    let cnorm = (anorm * z.norm()).max(1e-300);
    let abs_tol = tol * beta0;
    let gamma = 0.9;
    let delta = 1.2;
    let btol = 1e-14 * cnorm;
    let mf = m as f64;
    let fact = ((mf + 1.0) / std::f64::consts::E).powf(mf + 1.0) * (2.0 * std::f64::consts::PI * (mf + 1.0)).sqrt();
    let mut w = v.to_vec();
    let mut beta = beta0;
    let mut t_now = 0.0f64;
    let mut xm = 1.0 / mf;
    let mut t_new = round_step((1.0 / cnorm) * ((fact * tol) / (4.0 * cnorm)).powf(xm)).min(1.0);
    // Column-major basis so that the Gram-Schmidt projections run as two
    // matrix-vector products.
    let mut basis = Mat::<C64>::zeros(n, m + 1);
    let mut p = Mat::<C64>::zeros(n, 1);
    let mut coef = Mat::<C64>::zeros(m + 1, 1);
    let one = C64::new(1.0, 0.0);
    while t_now < 1.0 {
        stats.steps += 1;
        if stats.steps > 200_000 {
            return Err(LabError::KrylovStagnation(format!("too many substeps at fraction {t_now:.3e}")));
        }
        let mut t_step = (1.0 - t_now).min(t_new);
        let mut h = Mat::<C64>::zeros(m + 2, m + 2);
        for (dst, src) in basis.col_as_slice_mut(0).iter_mut().zip(&w) {
            *dst = src / beta;
        }
        let mut mb = m;
        let mut k1 = 2usize;
        for j in 0..m {
            apply(basis.col_as_slice(j), p.col_as_slice_mut(0));
            stats.matvecs += 1;
            for x in p.col_as_slice_mut(0).iter_mut() {
                *x *= -z;
            }
            // Classical Gram-Schmidt with one reorthogonalisation pass.
            for _ in 0..2 {
                let v = basis.as_ref().subcols(0, j + 1);
                let mut c = coef.as_mut().subrows_mut(0, j + 1);
                matmul(c.as_mut(), Accum::Replace, v.adjoint(), p.as_ref(), one, Par::Seq);
                matmul(p.as_mut(), Accum::Add, v, c.as_ref(), -one, Par::Seq);
                for i in 0..=j {
                    h[(i, j)] += coef[(i, 0)];
                }
            }
            let s = norm(p.col_as_slice(0));
            if s < btol {
                k1 = 0;
                mb = j + 1;
                t_step = 1.0 - t_now;
                break;
            }
            h[(j + 1, j)] = C64::new(s, 0.0);
            let (src, dst) = (p.col_as_slice(0), basis.col_as_slice_mut(j + 1));
            for (d, x) in dst.iter_mut().zip(src) {
                *d = x / s;
            }
        }
        let mut avnorm = 0.0;
        if k1 != 0 {
            h[(m + 1, m)] = C64::new(1.0, 0.0);
            apply(basis.col_as_slice(m), p.col_as_slice_mut(0));
            stats.matvecs += 1;
            avnorm = norm(p.col_as_slice(0)) * z.norm();
        }
        let mut err_loc;
        let mut f;
        loop {
            let mx = mb + k1;
            let sub = Mat::from_fn(mx, mx, |i, j| h[(i, j)] * t_step);
            f = expm(&sub);
            if k1 == 0 {
                err_loc = btol;
                break;
            }
            let phi1 = (beta * f[(m, 0)]).norm();
            let phi2 = (beta * f[(m + 1, 0)]).norm() * avnorm;
            if phi1 > 10.0 * phi2 {
                err_loc = phi2;
                xm = 1.0 / mf;
            } else if phi1 > phi2 {
                err_loc = phi1 * phi2 / (phi1 - phi2);
                xm = 1.0 / mf;
            } else {
                err_loc = phi1;
                xm = 1.0 / (mf - 1.0).max(1.0);
            }
            if err_loc <= delta * t_step * abs_tol {
                break;
            }
            stats.rejections += 1;
            if stats.rejections > 10_000 {
                return Err(LabError::KrylovStagnation(format!("local error {err_loc:.3e} not reducible")));
            }
            t_step = round_step(gamma * t_step * (t_step * abs_tol / err_loc).powf(xm));
        }
        let mx = mb + k1.saturating_sub(1);
        let mut next = vec![ZERO; n];
        for k in 0..mx {
            let c = f[(k, 0)] * beta;
            for (x, b) in next.iter_mut().zip(basis.col_as_slice(k)) {
                *x += c * b;
            }
        }
        w = next;
        beta = norm(&w);
        t_now += t_step;
        if beta == 0.0 {
            break;
        }
        let ratio = (t_step * abs_tol / err_loc.max(1e-300)).powf(xm);
        t_new = round_step(gamma * t_step * ratio);
        if !t_new.is_finite() || t_new <= 0.0 {
            t_new = 1.0;
        }
        if !beta.is_finite() {
            return Err(LabError::KrylovStagnation("non-finite iterate".into()));
        }
    }
    Ok((w, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::expm_action;

    #[test]
    fn matches_dense_on_random_sectorial_matrix() {
        let n = 60;
        let a = Mat::from_fn(n, n, |i, j| {
            if i == j {
                C64::new(2.0 + i as f64, 0.3 * i as f64)
            } else if (i as i64 - j as i64).abs() == 1 {
                C64::new(-0.7, 0.2)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        let v: Vec<C64> = (0..n).map(|i| C64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
        let anorm = 100.0;
        for z in [C64::new(0.05, 0.0), C64::new(1.0, 0.0), C64::new(0.3, 0.1)] {
            let want = expm_action(&a, -z, &v);
            let (got, _) = expv(
                |x, y| {
                    for i in 0..n {
                        y[i] = (0..n).map(|j| a[(i, j)] * x[j]).sum();
                    }
                },
                anorm,
                z,
                &v,
                20,
                1e-12,
            )
            .unwrap();
            let err = norm(&got.iter().zip(&want).map(|(a, b)| a - b).collect::<Vec<_>>());
            assert!(err < 1e-9 * norm(&v), "z={z} err={err}");
        }
    }
}
