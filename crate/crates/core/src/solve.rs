//! Sparse direct solves on the mean-zero subspace.
//!
//! `L_h` annihilates constants and so does `L_h^*`, so the range is exactly
//! the mean-zero vectors. Row 0 is implied by the others on that range and is
//! replaced by the pin `x_0 = 0`; the mean is projected out afterwards.

use crate::error::{LabError, Result};
use crate::grid::GridFunction;
use crate::operator::DiscreteOperator;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;
use num_complex::Complex64 as C64;

pub struct MeanZeroSolver {
    lu: Lu<usize, C64>,
    grid: crate::grid::Grid,
}

impl MeanZeroSolver {
    pub fn new(op: &DiscreteOperator) -> Result<Self> {
        let n = op.len();
        let mut trips: Vec<Triplet<usize, usize, C64>> =
            op.triplets().into_iter().filter(|&(r, _, _)| r != 0).map(|(r, c, v)| Triplet::new(r, c, v)).collect();
        trips.push(Triplet::new(0, 0, C64::new(1.0, 0.0)));
        let m = SparseColMat::<usize, C64>::try_new_from_triplets(n, n, &trips)
            .map_err(|e| LabError::SolveFailure(format!("assembly: {e:?}")))?;
        let lu = m.sp_lu().map_err(|e| LabError::SolveFailure(format!("factorisation: {e:?}")))?;
        Ok(Self { lu, grid: op.grid })
    }

    /// `x` with `L_h x = f`, `mean(x) = 0`, for mean-zero `f`.
    pub fn solve(&self, f: &GridFunction) -> Result<GridFunction> {
        self.grid.check_same(&f.grid)?;
        let rel = f.relative_mean();
        if rel > 1e-10 {
            return Err(LabError::NullComponent(rel));
        }
        let f = f.clone().mean_zero();
        let mut rhs = Mat::from_fn(f.len(), 1, |i, _| if i == 0 { C64::new(0.0, 0.0) } else { f.values[i] });
        self.lu.solve_in_place(rhs.as_mut());
        let values: Vec<C64> = (0..f.len()).map(|i| rhs[(i, 0)]).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(LabError::SolveFailure("non-finite solution".into()));
        }
        Ok(GridFunction { grid: f.grid, values }.mean_zero())
    }
}

/// One-shot mean-zero solve.
pub fn solve_mean_zero(op: &DiscreteOperator, f: &GridFunction) -> Result<GridFunction> {
    MeanZeroSolver::new(op)?.solve(f)
}
