//! Solver for symmetric diagonally dominant systems built on sparse
//! approximate inverse chains.
//!
//! A chain replaces `M = D - A` by a sequence of sparsified squarings
//! `Dᵢ - AᵢDᵢ⁻¹Aᵢ`. A V-cycle over the chain gives a constant-factor
//! approximate inverse of `M`, and preconditioned Richardson iteration
//! refines it to any accuracy.
//!
//! ```
//! use sdd_chain::{graphs::GraphSpec, solve_laplacian, SolveOptions};
//!
//! let l = "grid2d 4x4".parse::<GraphSpec>().unwrap().generate(0).unwrap();
//! let mut b = vec![0.0; 16];
//! b[0] = 1.0;
//! b[15] = -1.0;
//! let (x, report) = solve_laplacian(&l, &b, &SolveOptions::new(1e-8, 0)).unwrap();
//! assert!(report.converged);
//! assert!(x[0] > x[15]);
//! ```

pub mod bench;
pub mod chain;
pub mod error;
pub mod graphs;
pub mod io;
pub mod reductions;
pub mod rng;
pub mod solver;
pub mod sparse;
pub mod sparsify;
pub mod squaring;
pub mod verify;

pub use chain::{build_chain, plan_chain, validate_chain, BuildOptions, ChainPlan, ChainReport, InverseChain};
pub use error::{Error, Result};
pub use reductions::{ground, solve_laplacian, GraphLaplacian, SddmSplitting};
pub use solver::{crude_solve, m_norm, precon_richardson, solve_sddm, RichardsonOptions, SolveOptions, SolveReport};
pub use sparse::{DiagMatrix, SymSparseMatrix};
pub use squaring::{sparse_square, SamplingMode, SquareParams};
pub use sparsify::{sparsify_splitting, OracleKind, SparsifyParams};
