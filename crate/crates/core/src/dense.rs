//! Dense matrix exponential by scaling and squaring with the degree-13 Pade approximant.

use faer::prelude::*;
use faer::Mat;
use num_complex::Complex64 as C64;

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn norm1(a: &Mat<C64>) -> f64 {
    (0..a.ncols()).map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

fn combo(terms: &[(f64, &Mat<C64>)], identity: f64, n: usize) -> Mat<C64> {
    Mat::from_fn(n, n, |i, j| {
        let mut s = if i == j { C64::new(identity, 0.0) } else { C64::new(0.0, 0.0) };
        for (c, m) in terms {
            s += m[(i, j)] * *c;
        }
        s
    })
}

/// `exp(A)` for a square complex matrix.
pub fn expm(a: &Mat<C64>) -> Mat<C64> {
    let n = a.nrows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let nrm = norm1(a);
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = 0.5f64.powi(s);
    let a = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = combo(&[(b[13], &a6), (b[11], &a4), (b[9], &a2)], 0.0, n);
    let outer_u = combo(&[(b[7], &a6), (b[5], &a4), (b[3], &a2)], b[1], n);
    let u = &a * (&a6 * &inner_u + &outer_u);
    let inner_v = combo(&[(b[12], &a6), (b[10], &a4), (b[8], &a2)], 0.0, n);
    let outer_v = combo(&[(b[6], &a6), (b[4], &a4), (b[2], &a2)], b[0], n);
    let v = &a6 * &inner_v + &outer_v;
    let p = &v + &u;
    let q = &v - &u;
    let mut x = q.partial_piv_lu().solve(&p);
    for _ in 0..s {
        x = &x * &x;
    }
    x
}

/// `exp(z A) x` by forming the dense exponential.
pub fn expm_action(a: &Mat<C64>, z: C64, x: &[C64]) -> Vec<C64> {
    let n = a.nrows();
    let za = Mat::from_fn(n, n, |i, j| a[(i, j)] * z);
    let e = expm(&za);
    (0..n).map(|i| (0..n).map(|j| e[(i, j)] * x[j]).sum()).collect()
}
