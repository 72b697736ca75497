//! Periodic grids, grid functions, cubes and dyadic annuli.
//!
//! Nodes sit at `(i + 1/2) h - side/2` along each axis, so the origin is a
//! cell corner and the grid is symmetric under `x -> -x`. Linear indices run
//! with axis 0 fastest.

use crate::error::{LabError, Result};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A periodic grid of `points^dim` nodes on the torus of the given side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dim: usize,
    pub points: usize,
    pub side: f64,
    pub spacing: f64,
}

/// Validates and builds a grid.
pub fn build_grid(dim: usize, points: usize, side: f64) -> Result<Grid> {
    if !(1..=3).contains(&dim) {
        return Err(LabError::InvalidDimension(dim));
    }
    if points < 4 || !points.is_power_of_two() {
        return Err(LabError::InvalidResolution(points));
    }
    if !(side > 0.0 && side.is_finite()) {
        return Err(LabError::InvalidGrid(format!("side must be positive, got {side}")));
    }
    Ok(Grid { dim, points, side, spacing: side / points as f64 })
}

impl Grid {
    pub fn new(dim: usize, points: usize, side: f64) -> Result<Self> {
        build_grid(dim, points, side)
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim as i32)
    }

    /// `log2(points)`.
    pub fn levels(&self) -> usize {
        self.points.trailing_zeros() as usize
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let mut c = [0usize; 3];
        let mut r = index;
        for k in 0..self.dim {
            c[k] = r % self.points;
            r /= self.points;
        }
        c
    }

    pub fn index(&self, coords: [usize; 3]) -> usize {
        let mut idx = 0;
        for k in (0..self.dim).rev() {
            idx = idx * self.points + coords[k] % self.points;
        }
        idx
    }

    /// Index of `coords + offset` with periodic wrap.
    pub fn shifted(&self, coords: [usize; 3], offset: [i64; 3]) -> usize {
        let n = self.points as i64;
        let mut c = [0usize; 3];
        for k in 0..self.dim {
            c[k] = (coords[k] as i64 + offset[k]).rem_euclid(n) as usize;
        }
        self.index(c)
    }

    /// Linear stride of axis `k`.
    pub fn stride(&self, k: usize) -> usize {
        self.points.pow(k as u32)
    }

    /// Physical position of a node.
    pub fn position(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = (c[k] as f64 + 0.5) * self.spacing - 0.5 * self.side;
        }
        x
    }

    /// Physical position of the dual point (cell corner) with the given index.
    /// Dual point `c` is the centre of the cube spanned by nodes `c - 1 + {0,1}^n`.
    pub fn dual_position(&self, index: usize) -> [f64; 3] {
        let c = self.coords(index);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = c[k] as f64 * self.spacing - 0.5 * self.side;
        }
        x
    }

    /// Signed periodic displacement reduced to `[-side/2, side/2)`.
    pub fn wrap(&self, d: f64) -> f64 {
        let s = self.side;
        let r = (d + 0.5 * s).rem_euclid(s) - 0.5 * s;
        if r < -0.5 * s { r + s } else { r }
    }

    /// Euclidean torus distance between two points.
    pub fn torus_dist(&self, a: [f64; 3], b: [f64; 3]) -> f64 {
        let mut s = 0.0;
        for k in 0..self.dim {
            let d = self.wrap(a[k] - b[k]);
            s += d * d;
        }
        s.sqrt()
    }

    /// Chebyshev (sup-norm) torus distance.
    pub fn torus_dist_inf(&self, a: [f64; 3], b: [f64; 3]) -> f64 {
        let mut m: f64 = 0.0;
        for k in 0..self.dim {
            m = m.max(self.wrap(a[k] - b[k]).abs());
        }
        m
    }

    /// Smallest nonzero eigenvalue of the discrete Laplacian, `(4/h^2) sin^2(pi/N)`.
    pub fn laplacian_gap(&self) -> f64 {
        let s = (std::f64::consts::PI / self.points as f64).sin();
        4.0 * s * s / (self.spacing * self.spacing)
    }

    /// Largest eigenvalue of the discrete Laplacian, `4n/h^2`.
    pub fn laplacian_top(&self) -> f64 {
        4.0 * self.dim as f64 / (self.spacing * self.spacing)
    }

    /// Exact symbol of `-Delta_h` at integer frequency `k`.
    pub fn laplacian_symbol(&self, k: [usize; 3]) -> f64 {
        let mut mu = 0.0;
        for &ki in k.iter().take(self.dim) {
            let s = (std::f64::consts::PI * ki as f64 / self.points as f64).sin();
            mu += 4.0 * s * s / (self.spacing * self.spacing);
        }
        mu
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(LabError::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }
}

/// Complex scalar field on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: Grid,
    pub values: Vec<C64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(LabError::GridMismatch(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![C64::new(0.0, 0.0); grid.len()] }
    }

    pub fn constant(grid: Grid, c: C64) -> Self {
        Self { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> C64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.position(i))).collect();
        Self { grid, values }
    }

    /// Indicator of a single node.
    pub fn delta(grid: Grid, index: usize) -> Self {
        let mut g = Self::zeros(grid);
        g.values[index] = C64::new(1.0, 0.0);
        g
    }

    /// Unit-L2 Fourier mode `exp(2 pi i k.x / side) / side^{n/2}`, evaluated on node indices.
    pub fn fourier_mode(grid: Grid, k: [i64; 3]) -> Self {
        let amp = grid.volume().powf(-0.5);
        let n = grid.points as f64;
        let values = (0..grid.len())
            .map(|i| {
                let c = grid.coords(i);
                let mut phase = 0.0;
                for a in 0..grid.dim {
                    phase += k[a] as f64 * c[a] as f64 / n;
                }
                C64::from_polar(amp, 2.0 * std::f64::consts::PI * phase)
            })
            .collect();
        Self { grid, values }
    }

    /// Complex Gaussian noise with independent standard normal parts.
    pub fn random(grid: Grid, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..grid.len()).map(|_| C64::new(normal(&mut rng), normal(&mut rng))).collect();
        Self { grid, values }
    }

    /// Sum of `count` Gaussian bumps (torus distance) with seeded centres,
    /// widths in `[0.06, 0.2]` of the side and complex amplitudes. The field
    /// lives in the continuum, so grids of any resolution sample one function.
    pub fn random_bumps(grid: Grid, seed: u64, count: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = grid.side;
        let bumps: Vec<([f64; 3], f64, C64)> = (0..count)
            .map(|_| {
                let mut c = [0.0; 3];
                for v in c.iter_mut().take(grid.dim) {
                    *v = rng.random_range(-0.5 * s..0.5 * s);
                }
                let w = rng.random_range(0.06..0.2) * s;
                (c, w, C64::new(normal(&mut rng), normal(&mut rng)))
            })
            .collect();
        Self::from_fn(grid, |x| {
            bumps.iter().map(|(c, w, a)| a * (-0.5 * (grid.torus_dist(x, *c) / w).powi(2)).exp()).sum()
        })
    }

    /// Random field projected onto mean zero.
    pub fn random_mean_zero(grid: Grid, seed: u64) -> Self {
        Self::random(grid, seed).mean_zero()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(h^n sum |f|^p)^{1/p}`, or the max for infinite `p`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm(self, p)
    }

    pub fn l2_norm(&self) -> f64 {
        lp_norm(self, 2.0)
    }

    /// `<f, g> = h^n sum f conj(g)`.
    pub fn inner(&self, other: &GridFunction) -> C64 {
        let s: C64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        s * self.grid.cell_volume()
    }

    /// Average value `|T|^{-1} int f`.
    pub fn mean(&self) -> C64 {
        self.values.iter().sum::<C64>() / self.values.len() as f64
    }

    /// The mean-zero part `f - mean(f)`.
    pub fn mean_zero(mut self) -> Self {
        let m = self.mean();
        for v in &mut self.values {
            *v -= m;
        }
        self
    }

    /// Relative size of the mean, `|<f,1>| / (|T|^{1/2} ||f||_2)`.
    pub fn relative_mean(&self) -> f64 {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return 0.0;
        }
        self.mean().norm() * self.grid.volume().sqrt() / norm
    }

    pub fn scale(mut self, c: C64) -> Self {
        for v in &mut self.values {
            *v *= c;
        }
        self
    }

    pub fn add(&self, other: &GridFunction) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        Self { grid: self.grid, values }
    }

    pub fn sub(&self, other: &GridFunction) -> Self {
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self { grid: self.grid, values }
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: C64, other: &GridFunction) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    /// Pointwise product with a real mask.
    pub fn masked(&self, mask: &[f64]) -> Self {
        let values = self.values.iter().zip(mask).map(|(a, m)| a * m).collect();
        Self { grid: self.grid, values }
    }

    pub fn abs(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.norm()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// `(h^n sum |f|^p)^{1/p}`; `p = inf` gives the max.
pub fn lp_norm(f: &GridFunction, p: f64) -> f64 {
    lp_norm_values(&f.grid, f.values.iter().map(|v| v.norm()), p)
}

/// Discrete `L^p` norm of nonnegative samples.
pub fn lp_norm_values(grid: &Grid, values: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p.is_infinite() {
        return values.fold(0.0, f64::max);
    }
    let vals: Vec<f64> = values.collect();
    let scale = vals.iter().cloned().fold(0.0, f64::max);
    if scale == 0.0 {
        return 0.0;
    }
    let s: f64 = vals.iter().map(|v| (v / scale).powf(p)).sum();
    scale * (grid.cell_volume() * s).powf(1.0 / p)
}

pub(crate) fn normal(rng: &mut impl Rng) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// An axis-aligned grid cube: nodes `corner + [0, cells)^n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cube {
    pub corner: [usize; 3],
    pub cells: usize,
}

impl Cube {
    pub fn new(corner: [usize; 3], cells: usize) -> Self {
        Self { corner, cells }
    }

    /// The dyadic cube of `2^level` cells containing a node.
    pub fn dyadic_containing(grid: &Grid, index: usize, level: usize) -> Self {
        let c = grid.coords(index);
        let mut corner = [0; 3];
        for k in 0..grid.dim {
            corner[k] = (c[k] >> level) << level;
        }
        Self { corner, cells: 1 << level }
    }

    /// Physical side length.
    pub fn side(&self, grid: &Grid) -> f64 {
        self.cells as f64 * grid.spacing
    }

    /// Measure `|Q|`.
    pub fn measure(&self, grid: &Grid) -> f64 {
        self.side(grid).powi(grid.dim as i32)
    }

    /// Physical centre (mean of the node positions).
    pub fn center(&self, grid: &Grid) -> [f64; 3] {
        let mut x = [0.0; 3];
        for k in 0..grid.dim {
            x[k] = (self.corner[k] as f64 + 0.5 * self.cells as f64) * grid.spacing - 0.5 * grid.side;
        }
        x
    }

    pub fn contains(&self, grid: &Grid, index: usize) -> bool {
        let c = grid.coords(index);
        (0..grid.dim).all(|k| {
            let d = (c[k] + grid.points - self.corner[k] % grid.points) % grid.points;
            d < self.cells
        })
    }

    /// Linear indices of the nodes of the cube (with wrap).
    pub fn nodes(&self, grid: &Grid) -> Vec<usize> {
        let s = self.cells;
        let count = s.pow(grid.dim as u32);
        (0..count)
            .map(|m| {
                let mut c = [0usize; 3];
                let mut r = m;
                for k in 0..grid.dim {
                    c[k] = self.corner[k] + r % s;
                    r /= s;
                }
                grid.index(c)
            })
            .collect()
    }

    /// Largest ring index `j` with `2^j * cells <= points`.
    pub fn max_ring(&self, grid: &Grid) -> usize {
        let mut j = 0;
        while (self.cells << (j + 1)) <= grid.points {
            j += 1;
        }
        j
    }

    /// Ring index of a node: 0 inside `Q`, `j` inside `2^j Q \ 2^{j-1} Q`.
    /// Dilates are concentric closed cubes measured in the torus sup-distance;
    /// the last admissible ring absorbs the rest of the torus.
    pub fn ring_of(&self, grid: &Grid, index: usize) -> usize {
        let c = self.center(grid);
        let d = grid.torus_dist_inf(grid.position(index), c);
        let half = 0.5 * self.side(grid);
        let jmax = self.max_ring(grid);
        let tol = 1e-9 * grid.spacing;
        for j in 0..jmax {
            if d <= half * (1u64 << j) as f64 + tol {
                return j;
            }
        }
        jmax
    }

    /// Indicator of the dyadic annulus `S_j(Q)`.
    pub fn ring_mask(&self, grid: &Grid, ring: usize) -> Result<Vec<f64>> {
        let max = self.max_ring(grid);
        if ring > max {
            return Err(LabError::RingOutOfRange { ring, max });
        }
        Ok((0..grid.len()).map(|i| if self.ring_of(grid, i) == ring { 1.0 } else { 0.0 }).collect())
    }
}

/// Restriction of `f` to the annulus `S_j(Q)`.
pub fn annular_restriction(f: &GridFunction, cube: &Cube, ring: usize) -> Result<GridFunction> {
    let mask = cube.ring_mask(&f.grid, ring)?;
    Ok(f.masked(&mask))
}

/// Sums of `values` over all dyadic cubes, level by level.
/// Level `m` holds `(N / 2^m)^n` entries indexed like a coarse grid.
pub fn dyadic_sums(grid: &Grid, values: &[f64]) -> Vec<Vec<f64>> {
    let mut levels = vec![values.to_vec()];
    let mut n = grid.points;
    while n > 1 {
        let prev = levels.last().unwrap();
        let m = n / 2;
        let len = m.pow(grid.dim as u32);
        let mut next = vec![0.0; len];
        for (i, v) in prev.iter().enumerate() {
            let mut r = i;
            let mut idx = 0;
            let mut stride = 1;
            for _ in 0..grid.dim {
                idx += ((r % n) / 2) * stride;
                r /= n;
                stride *= m;
            }
            next[idx] += v;
        }
        levels.push(next);
        n = m;
    }
    levels
}

/// Index of the level-`m` dyadic cube containing a node, in the layout of [`dyadic_sums`].
pub fn dyadic_slot(grid: &Grid, index: usize, level: usize) -> usize {
    let c = grid.coords(index);
    let m = grid.points >> level;
    let mut idx = 0;
    for k in (0..grid.dim).rev() {
        idx = idx * m + (c[k] >> level);
    }
    idx
}
