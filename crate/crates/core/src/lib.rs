//! Discrete divergence-form elliptic operators `L = -div(A grad)` with complex
//! coefficients on periodic grids, and the harmonic-analysis toolkit built on
//! their heat semigroups.

pub mod coeffs;
pub mod counterexamples;
pub mod dense;
pub mod error;
pub mod fft;
pub mod funcalc;
pub mod grid;
pub mod hardy;
pub mod krylov;
pub mod ledger;
pub mod operator;
pub mod riesz;
pub mod semigroup;
pub mod smallmat;
pub mod solve;
pub mod squarefun;
pub mod tentspace;
pub mod stats;

pub use error::{LabError, Result};
pub use num_complex::Complex64 as C64;
