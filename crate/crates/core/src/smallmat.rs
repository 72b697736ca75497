//! Closed-form eigenvalues of Hermitian matrices of order at most 3.

use num_complex::Complex64 as C64;

/// Eigenvalues (ascending) of a Hermitian `n x n` matrix stored row-major.
pub fn hermitian_eigenvalues(n: usize, a: &[C64]) -> [f64; 3] {
    match n {
        1 => [a[0].re, 0.0, 0.0],
        2 => {
            let (p, q) = (a[0].re, a[3].re);
            let off = a[1].norm();
            let m = 0.5 * (p + q);
            let r = (0.25 * (p - q) * (p - q) + off * off).sqrt();
            [m - r, m + r, 0.0]
        }
        3 => {
            let d = [a[0].re, a[4].re, a[8].re];
            let p1 = a[1].norm_sqr() + a[2].norm_sqr() + a[5].norm_sqr();
            let q = (d[0] + d[1] + d[2]) / 3.0;
            let p2 = (d[0] - q).powi(2) + (d[1] - q).powi(2) + (d[2] - q).powi(2) + 2.0 * p1;
            if p2 <= 1e-300 {
                return [q, q, q];
            }
            let p = (p2 / 6.0).sqrt();
            let b = |i: usize, j: usize| {
                let v = if i == j { a[3 * i + j] - q } else { a[3 * i + j] };
                v / p
            };
            // Determinant of a Hermitian matrix is real.
            let det = b(0, 0) * (b(1, 1) * b(2, 2) - b(1, 2) * b(2, 1))
                - b(0, 1) * (b(1, 0) * b(2, 2) - b(1, 2) * b(2, 0))
                + b(0, 2) * (b(1, 0) * b(2, 1) - b(1, 1) * b(2, 0));
            let r = (0.5 * det.re).clamp(-1.0, 1.0);
            let phi = r.acos() / 3.0;
            let e1 = q + 2.0 * p * phi.cos();
            let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
            let e2 = 3.0 * q - e1 - e3;
            let mut e = [e1, e2, e3];
            e.sort_by(|x, y| x.partial_cmp(y).unwrap());
            e
        }
        _ => panic!("order {n} not supported"),
    }
}

/// Smallest eigenvalue of the Hermitian part `(A + A^H)/2`.
pub fn min_hermitian_part(n: usize, a: &[C64]) -> f64 {
    let mut h = [C64::new(0.0, 0.0); 9];
    for i in 0..n {
        for j in 0..n {
            h[n * i + j] = 0.5 * (a[n * i + j] + a[n * j + i].conj());
        }
    }
    hermitian_eigenvalues(n, &h[..n * n])[0]
}

/// Spectral norm `|A|_2`.
pub fn spectral_norm(n: usize, a: &[C64]) -> f64 {
    let mut g = [C64::new(0.0, 0.0); 9];
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..n {
                s += a[n * k + i].conj() * a[n * k + j];
            }
            g[n * i + j] = s;
        }
    }
    hermitian_eigenvalues(n, &g[..n * n])[n - 1].max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_and_rotated() {
        let c = |r: f64| C64::new(r, 0.0);
        let a = [c(3.0), c(0.0), c(0.0), c(0.0), c(1.0), c(0.0), c(0.0), c(0.0), c(2.0)];
        let e = hermitian_eigenvalues(3, &a);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 2.0).abs() < 1e-14 && (e[2] - 3.0).abs() < 1e-14);
        // [[2, i],[-i, 2]] has eigenvalues 1 and 3.
        let b = [c(2.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), c(2.0)];
        let e = hermitian_eigenvalues(2, &b);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn hermitian_three_by_three_trace_and_det() {
        let a = [
            C64::new(2.0, 0.0),
            C64::new(0.3, 0.4),
            C64::new(-0.1, 0.2),
            C64::new(0.3, -0.4),
            C64::new(1.0, 0.0),
            C64::new(0.5, 0.0),
            C64::new(-0.1, -0.2),
            C64::new(0.5, 0.0),
            C64::new(-1.0, 0.0),
        ];
        let e = hermitian_eigenvalues(3, &a);
        assert!((e.iter().sum::<f64>() - 2.0).abs() < 1e-12);
        // Each eigenvalue makes A - eI singular.
        for &l in &e {
            let m = |i: usize, j: usize| if i == j { a[3 * i + j] - l } else { a[3 * i + j] };
            let det = m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1))
                - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0))
                + m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
            assert!(det.norm() < 1e-10, "{det}");
        }
    }

    #[test]
    fn norm_of_scalar_matrix() {
        let z = C64::new(0.5, 1.0);
        let o = C64::new(0.0, 0.0);
        let a = [z, o, o, z];
        assert!((spectral_norm(2, &a) - z.norm()).abs() < 1e-14);
        assert!((min_hermitian_part(2, &a) - 0.5).abs() < 1e-14);
    }
}
