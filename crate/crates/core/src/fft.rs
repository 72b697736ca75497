//! Multidimensional FFTs on the grid and Fourier multipliers.

use crate::grid::{Grid, GridFunction};
use num_complex::Complex64 as C64;
use rustfft::FftPlanner;

/// In-place n-dimensional DFT (unnormalised forward, normalised inverse).
pub fn fftn(grid: &Grid, data: &mut [C64], inverse: bool) {
    let n = grid.points;
    let mut planner = FftPlanner::<f64>::new();
    let plan = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
    let mut line = vec![C64::new(0.0, 0.0); n];
    for axis in 0..grid.dim {
        let stride = grid.stride(axis);
        let total = grid.len();
        for start in 0..total {
            // Visit each line once, from its axis-coordinate-zero node.
            if (start / stride) % n != 0 {
                continue;
            }
            for k in 0..n {
                line[k] = data[start + k * stride];
            }
            plan.process(&mut line);
            for k in 0..n {
                data[start + k * stride] = line[k];
            }
        }
    }
    if inverse {
        let s = 1.0 / grid.len() as f64;
        for v in data.iter_mut() {
            *v *= s;
        }
    }
}

/// Integer frequency of a node index along each axis, as `0..N`.
pub fn frequency(grid: &Grid, index: usize) -> [usize; 3] {
    grid.coords(index)
}

/// Signed frequency in `[-N/2, N/2)`.
pub fn signed_frequency(grid: &Grid, index: usize) -> [i64; 3] {
    let c = grid.coords(index);
    let n = grid.points as i64;
    let mut k = [0i64; 3];
    for a in 0..grid.dim {
        let v = c[a] as i64;
        k[a] = if v >= n / 2 { v - n } else { v };
    }
    k
}

/// Applies `m(k)` to every Fourier coefficient of `f`.
pub fn fourier_multiplier(f: &GridFunction, m: impl Fn(usize) -> C64) -> GridFunction {
    let mut data = f.values.clone();
    fftn(&f.grid, &mut data, false);
    for (i, v) in data.iter_mut().enumerate() {
        *v *= m(i);
    }
    fftn(&f.grid, &mut data, true);
    GridFunction { grid: f.grid, values: data }
}

/// Exact symbol of `-Delta_h` at the frequency stored at `index`.
pub fn laplacian_symbol_at(grid: &Grid, index: usize) -> f64 {
    grid.laplacian_symbol(frequency(grid, index))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn roundtrip_and_mode() {
        let g = build_grid(3, 8, 1.0).unwrap();
        let f = GridFunction::random(g, 2);
        let mut d = f.values.clone();
        fftn(&g, &mut d, false);
        fftn(&g, &mut d, true);
        let err: f64 = d.iter().zip(&f.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        assert!(err < 1e-12);
        let m = GridFunction::fourier_mode(g, [1, 2, 3]);
        let mut d = m.values.clone();
        fftn(&g, &mut d, false);
        let peak = g.index([1, 2, 3]);
        for (i, v) in d.iter().enumerate() {
            if i != peak {
                assert!(v.norm() < 1e-9);
            }
        }
    }
}
