//! Tent-space norms, `T^p` atoms, the stopping-time atomic decomposition and
//! the synthesis operator `pi_{M,L}`.
//!
//! The decomposition follows the constructive argument of Coifman, Meyer and
//! Stein on the grid: level sets `O_k = {A F > b^k}` are enlarged to
//! `O*_k = {M_dyadic 1_{O_k} > gamma}`, every occupied cell `(y, t_j)` is
//! assigned to the largest `k` whose tent `{dist(y, (O*_k)^c) >= t}` holds it,
//! and the cells of each level are split along Whitney cubes of `O*_k`.
//! Atoms are `F 1_S / lambda` with `lambda` the smallest normaliser.

use crate::error::{LabError, Result};
use crate::funcalc::{ContourQuadrature, SymbolFunction};
use crate::grid::{dyadic_slot, dyadic_sums, lp_norm, Cube, Grid, GridFunction};
use crate::semigroup::SemigroupEngine;
use crate::squarefun::{area_functional, in_box, pi_psi, reproducing_constant, Cone, ScaleLadder, SpaceTimeField};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

/// `|F|_{T^p} = |A F|_{L^p}`.
pub fn tent_norm(f: &SpaceTimeField, p: f64, cone: &Cone) -> f64 {
    lp_norm(&area_functional(f, cone, 0.0), p)
}

/// Energy `iint_{R_Q} |F|^2 dy dt/t` over the Carleson box of `cube`.
pub fn box_energy(f: &SpaceTimeField, cube: &Cube) -> f64 {
    let side = cube.side(&f.grid);
    let hn = f.grid.cell_volume();
    let nodes = cube.nodes(&f.grid);
    (0..f.ladder.levels)
        .filter(|&j| in_box(f.ladder.ts[j], side))
        .map(|j| {
            let lvl = f.level(j);
            f.ladder.weights[j] * hn * nodes.iter().map(|&y| lvl[y].norm_sqr()).sum::<f64>()
        })
        .sum()
}

/// An atom stored sparsely: the space-time cells it occupies (level-major
/// indices) and its values there.
#[derive(Clone, Debug)]
pub struct TentAtom {
    pub cube: Cube,
    pub p: f64,
    pub grid: Grid,
    pub ladder: ScaleLadder,
    pub cells: Vec<usize>,
    pub values: Vec<C64>,
}

impl TentAtom {
    /// `|Q|^{1/2 - 1/p}`.
    pub fn bound(&self) -> f64 {
        self.cube.measure(&self.grid).powf(0.5 - 1.0 / self.p)
    }

    /// `iint |A|^2 dy dt/t`.
    pub fn energy(&self) -> f64 {
        let n = self.grid.len();
        let hn = self.grid.cell_volume();
        self.cells.iter().zip(&self.values).map(|(&i, v)| v.norm_sqr() * hn * self.ladder.weights[i / n]).sum()
    }

    /// Whether every nonzero cell lies in `R_Q`.
    pub fn support_ok(&self) -> bool {
        let n = self.grid.len();
        let side = self.cube.side(&self.grid);
        self.cells.iter().zip(&self.values).all(|(&i, v)| {
            *v == C64::new(0.0, 0.0) || (in_box(self.ladder.ts[i / n], side) && self.cube.contains(&self.grid, i % n))
        })
    }

    /// `energy^{1/2} / bound`; at most `1 + 1e-12` for a valid atom.
    pub fn slack(&self) -> f64 {
        self.energy().sqrt() / self.bound()
    }

    pub fn is_valid(&self) -> bool {
        self.support_ok() && self.slack() <= 1.0 + 1e-12
    }

    /// The atom as a dense space-time field.
    pub fn field(&self) -> SpaceTimeField {
        let mut out = SpaceTimeField::zeros(self.grid, self.ladder.clone());
        for (&i, v) in self.cells.iter().zip(&self.values) {
            out.values[i] = *v;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TentConfig {
    /// Base of the level thresholds `b^k`.
    pub threshold_base: f64,
    /// Density threshold `gamma` of the enlarged sets.
    pub density: f64,
    /// A dyadic cube is a Whitney cube of `O` when its concentric dilate by
    /// this factor lies in `O`.
    pub whitney: f64,
    /// Also try one atom on the smallest cube enclosing the support, and keep
    /// it when its coefficient is smaller than the stopping-time sum.
    pub enclosing_atom: bool,
}

impl Default for TentConfig {
    fn default() -> Self {
        Self { threshold_base: 2.0, density: 0.5, whitney: 2.0, enclosing_atom: false }
    }
}

/// Per-atom record for reports.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AtomRecord {
    pub corner: [usize; 3],
    pub cells: usize,
    pub level: i32,
    pub lambda: f64,
    pub slack: f64,
}

#[derive(Clone, Debug)]
pub struct TentDecomposition {
    pub atoms: Vec<TentAtom>,
    pub coefficients: Vec<f64>,
    /// Atom index per space-time cell (level-major); `None` for empty cells.
    pub labels: Vec<Option<usize>>,
    /// Stopping level of each atom.
    pub levels: Vec<i32>,
    pub p: f64,
}

impl TentDecomposition {
    pub fn coefficient_sum(&self) -> f64 {
        self.coefficients.iter().map(|l| l.powf(self.p)).sum()
    }

    /// `sum_j lambda_j A_j`.
    pub fn reconstruct(&self, grid: Grid, ladder: &ScaleLadder) -> SpaceTimeField {
        let mut out = SpaceTimeField::zeros(grid, ladder.clone());
        for (a, l) in self.atoms.iter().zip(&self.coefficients) {
            for (&i, v) in a.cells.iter().zip(&a.values) {
                out.values[i] += v * *l;
            }
        }
        out
    }

    /// Max relative cellwise reconstruction error.
    pub fn reconstruction_error(&self, f: &SpaceTimeField) -> f64 {
        let r = self.reconstruct(f.grid, &f.ladder);
        let scale = f.values.iter().map(|v| v.norm()).fold(0.0, f64::max).max(1e-300);
        r.values.iter().zip(&f.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max) / scale
    }

    /// Checks that the support sets are disjoint and cover the occupied cells.
    pub fn partition_ok(&self, f: &SpaceTimeField) -> bool {
        let mut owners = vec![0usize; f.values.len()];
        for a in &self.atoms {
            for (&i, v) in a.cells.iter().zip(&a.values) {
                if *v != C64::new(0.0, 0.0) {
                    owners[i] += 1;
                }
            }
        }
        f.values.iter().zip(&owners).zip(&self.labels).all(|((v, &o), lab)| {
            if *v == C64::new(0.0, 0.0) {
                o == 0
            } else {
                o == 1 && lab.is_some()
            }
        })
    }

    pub fn records(&self) -> Vec<AtomRecord> {
        self.atoms
            .iter()
            .zip(&self.coefficients)
            .zip(&self.levels)
            .map(|((a, l), k)| AtomRecord { corner: a.cube.corner, cells: a.cube.cells, level: *k, lambda: *l, slack: a.slack() })
            .collect()
    }
}

/// Torus distance from each node to the complement of `set` (infinite when
/// the complement is empty).
fn distance_to_complement(grid: &Grid, set: &[bool]) -> Vec<f64> {
    let outside: Vec<usize> = (0..grid.len()).filter(|&i| !set[i]).collect();
    if outside.is_empty() {
        return vec![f64::INFINITY; grid.len()];
    }
    (0..grid.len())
        .map(|y| {
            if !set[y] {
                return 0.0;
            }
            let py = grid.position(y);
            outside.iter().map(|&z| grid.torus_dist(py, grid.position(z))).fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Dyadic maximal enlargement `{x: max_{Q ∋ x} |Q ∩ O| / |Q| > gamma}`.
fn enlarge(grid: &Grid, set: &[bool], gamma: f64) -> Vec<bool> {
    let ind: Vec<f64> = set.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let sums = dyadic_sums(grid, &ind);
    (0..grid.len())
        .map(|x| {
            set[x]
                || (0..=grid.levels()).any(|l| {
                    let count = (1usize << l).pow(grid.dim as u32) as f64;
                    sums[l][dyadic_slot(grid, x, l)] / count > gamma
                })
        })
        .collect()
}

/// Concentric dilate of a cube by `factor`, as a node list (capped at the torus).
fn dilate_nodes(grid: &Grid, cube: &Cube, factor: f64) -> Vec<usize> {
    let c = cube.center(grid);
    let half = 0.5 * factor * cube.side(grid);
    if 2.0 * half >= grid.side {
        return (0..grid.len()).collect();
    }
    (0..grid.len()).filter(|&i| grid.torus_dist_inf(grid.position(i), c) <= half - 0.5 * grid.spacing + 1e-12).collect()
}

/// Maximal dyadic cubes whose dilate lies in `set`; single nodes of `set`
/// are always admissible, so the family partitions `set`.
pub(crate) fn whitney_cubes(grid: &Grid, set: &[bool], factor: f64) -> Vec<Cube> {
    let mut owner = vec![false; grid.len()];
    let mut out = Vec::new();
    for level in (0..=grid.levels()).rev() {
        let cells = 1usize << level;
        let per_axis = grid.points / cells;
        let count = per_axis.pow(grid.dim as u32);
        for m in 0..count {
            let mut corner = [0usize; 3];
            let mut r = m;
            for c in corner.iter_mut().take(grid.dim) {
                *c = (r % per_axis) * cells;
                r /= per_axis;
            }
            let cube = Cube::new(corner, cells);
            let nodes = cube.nodes(grid);
            if nodes.iter().any(|&y| owner[y] || !set[y]) {
                continue;
            }
            if level > 0 && !dilate_nodes(grid, &cube, factor).iter().all(|&y| set[y]) {
                continue;
            }
            for &y in &nodes {
                owner[y] = true;
            }
            out.push(cube);
        }
    }
    out
}

/// Smallest cube concentric-ish with `base` (grown symmetrically, capped at
/// the torus) whose side is at least `side`.
fn grow_cube(grid: &Grid, base: &Cube, side: f64) -> Cube {
    let need = ((side / grid.spacing) - 1e-9).ceil().max(base.cells as f64) as usize;
    if need >= grid.points {
        return Cube::new([0; 3], grid.points);
    }
    let extra = need - base.cells;
    let left = extra / 2;
    let mut corner = [0usize; 3];
    for k in 0..grid.dim {
        corner[k] = (base.corner[k] + grid.points - left % grid.points) % grid.points;
    }
    Cube::new(corner, need)
}

/// Smallest cube holding the spatial support of `f` whose side covers its
/// largest occupied scale.
fn enclosing_cube(f: &SpaceTimeField) -> Option<Cube> {
    let g = f.grid;
    let mut occupied = vec![false; g.len()];
    let mut t_top: f64 = 0.0;
    for j in 0..f.ladder.levels {
        for (y, v) in f.level(j).iter().enumerate() {
            if *v != C64::new(0.0, 0.0) {
                occupied[y] = true;
                t_top = t_top.max(f.ladder.ts[j]);
            }
        }
    }
    if !occupied.iter().any(|&b| b) {
        return None;
    }
    // Per axis: the shortest circular arc covering the occupied coordinates.
    let n = g.points;
    let mut corner = [0usize; 3];
    let mut cells = 1;
    for k in 0..g.dim {
        let mut hit = vec![false; n];
        for y in 0..g.len() {
            if occupied[y] {
                hit[g.coords(y)[k]] = true;
            }
        }
        // Largest circular gap of unoccupied coordinates.
        let mut best_gap = 0;
        let mut best_start = 0;
        for s in 0..n {
            if hit[s] && !hit[(s + 1) % n] {
                let mut len = 0;
                while len < n && !hit[(s + 1 + len) % n] {
                    len += 1;
                }
                if len > best_gap {
                    best_gap = len;
                    best_start = (s + 1 + len) % n;
                }
            }
        }
        corner[k] = best_start;
        cells = cells.max(n - best_gap);
    }
    let base = Cube::new(corner, cells);
    Some(grow_cube(&g, &base, t_top))
}

fn make_atom(f: &SpaceTimeField, cube: Cube, cells: &[usize], p: f64) -> (TentAtom, f64) {
    let g = f.grid;
    let hn = g.cell_volume();
    let n = g.len();
    let mut energy = 0.0;
    for &i in cells {
        let j = i / n;
        energy += f.values[i].norm_sqr() * hn * f.ladder.weights[j];
    }
    let lambda = energy.sqrt() / cube.measure(&g).powf(0.5 - 1.0 / p);
    let values = cells.iter().map(|&i| f.values[i] / lambda).collect();
    (TentAtom { cube, p, grid: g, ladder: f.ladder.clone(), cells: cells.to_vec(), values }, lambda)
}

/// Stopping-time atomic decomposition of `F` for `0 < p <= 1`.
pub fn atomic_decompose(f: &SpaceTimeField, p: f64) -> Result<TentDecomposition> {
    atomic_decompose_with(f, p, &TentConfig::default(), &Cone::default())
}

pub fn atomic_decompose_with(f: &SpaceTimeField, p: f64, config: &TentConfig, cone: &Cone) -> Result<TentDecomposition> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(LabError::UnsupportedExponent(p));
    }
    let g = f.grid;
    let n = g.len();
    let empty = TentDecomposition { atoms: vec![], coefficients: vec![], labels: vec![None; f.values.len()], levels: vec![], p };
    let occupied: Vec<usize> = (0..f.values.len()).filter(|&i| f.values[i] != C64::new(0.0, 0.0)).collect();
    if occupied.is_empty() {
        return Ok(empty);
    }
    let area: Vec<f64> = area_functional(f, cone, 0.0).values.iter().map(|v| v.re).collect();
    let b = config.threshold_base;
    let a_max = area.iter().cloned().fold(0.0, f64::max);
    // Smallest area value seen by any occupied cell bounds the lowest level needed.
    let a_min = area.iter().cloned().filter(|&a| a > 0.0).fold(f64::INFINITY, f64::min);
    let k_hi = (a_max.ln() / b.ln()).ceil() as i32;
    let k_lo = (a_min.ln() / b.ln()).floor() as i32 - 1;

    // Tents and Whitney cubes per level.
    let mut level_k: Vec<Option<i32>> = vec![None; f.values.len()];
    let mut whitney_of: Vec<(i32, Vec<Cube>, Vec<usize>)> = Vec::new();
    for k in k_lo..=k_hi {
        let thr = b.powi(k);
        let o: Vec<bool> = area.iter().map(|&a| a > thr).collect();
        if !o.iter().any(|&x| x) {
            break;
        }
        let star = enlarge(&g, &o, config.density);
        let dist = distance_to_complement(&g, &star);
        for &i in &occupied {
            let (y, j) = (i % n, i / n);
            if dist[y] >= f.ladder.ts[j] * (1.0 - 1e-12) {
                level_k[i] = Some(k);
            }
        }
        let cubes = whitney_cubes(&g, &star, config.whitney);
        let mut owner = vec![usize::MAX; n];
        for (c, cube) in cubes.iter().enumerate() {
            for y in cube.nodes(&g) {
                owner[y] = c;
            }
        }
        whitney_of.push((k, cubes, owner));
    }
    if occupied.iter().any(|&i| level_k[i].is_none()) {
        return Err(LabError::InvalidParams("stopping-time construction left cells unassigned".into()));
    }

    let mut atoms = Vec::new();
    let mut coefficients = Vec::new();
    let mut levels = Vec::new();
    let mut labels = vec![None; f.values.len()];
    for (k, cubes, owner) in &whitney_of {
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); cubes.len()];
        for &i in &occupied {
            if level_k[i] == Some(*k) {
                let y = i % n;
                groups[owner[y]].push(i);
            }
        }
        for (c, cells) in groups.iter().enumerate() {
            if cells.is_empty() {
                continue;
            }
            let t_top = cells.iter().map(|&i| f.ladder.ts[i / n]).fold(0.0, f64::max);
            let cube = grow_cube(&g, &cubes[c], t_top);
            let (atom, lambda) = make_atom(f, cube, cells, p);
            for &i in cells {
                labels[i] = Some(atoms.len());
            }
            atoms.push(atom);
            coefficients.push(lambda);
            levels.push(*k);
        }
    }
    let mut dec = TentDecomposition { atoms, coefficients, labels, levels, p };

    if let Some(cube) = enclosing_cube(f).filter(|_| config.enclosing_atom) {
        let (atom, lambda) = make_atom(f, cube, &occupied, p);
        if lambda.powf(p) < dec.coefficient_sum() {
            let mut labels = vec![None; f.values.len()];
            for &i in &occupied {
                labels[i] = Some(0);
            }
            dec = TentDecomposition { atoms: vec![atom], coefficients: vec![lambda], labels, levels: vec![k_lo], p };
        }
    }
    Ok(dec)
}

/// `pi_{M,L} F = sum_j (t_j^2 L)^{M+1} e^{-t_j^2 L} F(., t_j) w_j`.
pub fn pi_ml(engine: &SemigroupEngine, m: u32, f: &SpaceTimeField) -> Result<GridFunction> {
    if m < 1 {
        return Err(LabError::InvalidParams("M must be at least 1".into()));
    }
    let quad = ContourQuadrature::for_engine(engine);
    pi_psi(engine, &SymbolFunction::psi0_m(m + 1), &quad, f)
}

/// `c_M` with `c_M pi_{M,L}(t^2 L e^{-t^2 L} f) = f` on mean-zero `f`.
pub fn calderon_constant(m: u32) -> f64 {
    reproducing_constant(&SymbolFunction::psi0(), &SymbolFunction::psi0_m(m + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    #[test]
    fn calderon_constant_closed_form() {
        // int s^{M+1} e^{-s} s e^{-s} ds/(2s) = Gamma(M+2) / 2^{M+3}.
        for m in 1..4u32 {
            let want = 2f64.powi(m as i32 + 3) / statrs::function::gamma::gamma(m as f64 + 2.0);
            assert!((calderon_constant(m) / want - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn whitney_cubes_partition() {
        let g = build_grid(2, 16, 1.0).unwrap();
        let set: Vec<bool> = (0..g.len()).map(|i| g.torus_dist(g.position(i), [0.1, -0.05, 0.0]) < 0.3).collect();
        let cubes = whitney_cubes(&g, &set, 2.0);
        let mut count = vec![0; g.len()];
        for c in &cubes {
            for y in c.nodes(&g) {
                count[y] += 1;
            }
        }
        for i in 0..g.len() {
            assert_eq!(count[i], if set[i] { 1 } else { 0 });
        }
        assert!(cubes.iter().any(|c| c.cells >= 2));
    }

    #[test]
    fn enclosing_cube_wraps() {
        let g = build_grid(1, 16, 1.0).unwrap();
        let ladder = ScaleLadder::new(g.spacing / 2.0, 1.0, 16).unwrap();
        let mut f = SpaceTimeField::zeros(g, ladder);
        f.level_mut(0)[15] = C64::new(1.0, 0.0);
        f.level_mut(0)[1] = C64::new(1.0, 0.0);
        let c = enclosing_cube(&f).unwrap();
        assert_eq!(c.cells, 3);
        assert_eq!(c.corner[0], 15);
    }
}
