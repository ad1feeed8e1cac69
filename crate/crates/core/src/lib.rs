//! Multigrid solvers for piecewise-linear finite element discretizations of
//! two-dimensional space-fractional diffusion problems
//!
//! ```text
//! -∫ D^{2α}_θ u M(θ) dθ + c u = f   in Ω = [0,Lx]×[0,Ly],   u = 0 outside Ω
//! ```
//!
//! with `1/2 < α ≤ 1` and a π-symmetric directional measure `M`.
//!
//! The crate is organised bottom-up:
//!
//! * [`mesh`]: nested uniform right-triangle meshes and nodal prolongation.
//! * [`kernel`]: directional Riemann–Liouville integrals, the closed-form
//!   triangle-pair interaction and single stiffness entries.
//! * [`assembly`]: Toeplitz generator vectors, dense oracle matrices, mass
//!   entries and load moments.
//! * [`toeplitz`]: `O(N log N)` stiffness application by circulant embedding.
//! * [`multigrid`]: the V-cycle operator, the stationary V-cycle iteration,
//!   V-cycle preconditioned CG and plain CG.
//!
//! Right-hand sides and residuals are [`MomentVector`]s (inner products against
//! the nodal basis); iterates are nodal coefficient vectors.

pub mod assembly;
pub mod error;
pub mod kernel;
pub mod mesh;
pub mod multigrid;
pub mod toeplitz;

pub use assembly::{GeneratorVector, MomentVector};
pub use error::{Error, Result};
pub use kernel::{Atom, DirectionalMeasure, KernelParams, Triangle};
pub use mesh::{Domain, GridOffset, GridPoint, Hierarchy, MeshLevel, Prolongation};
pub use multigrid::{LevelOperator, Multigrid, SolveOptions, SolveReport, SolverKind};
pub use toeplitz::ToeplitzOperator;
