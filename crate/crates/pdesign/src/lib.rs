//! Optimal layout of two diffusion materials under a p-Laplacian model.
//!
//! Two conductivities `alpha < beta` are mixed inside a 2D domain so that the
//! potential energy of the diffusion state is maximal, subject to a volume
//! budget `kappa` on the better material. The classical set-valued problem has
//! no solution in general; this crate solves the relaxed formulation in which
//! the design variable is a local proportion `theta in [0,1]` entering through
//! the lamination (p-harmonic mean) coefficient
//!
//! ```text
//!     (theta * alpha^(1/(1-p)) + (1-theta) * beta^(1/(1-p)))^(1-p)
//! ```
//!
//! The solver works with the normalized form of the energy, eliminates `theta`
//! through a convex integrand `F` controlled by a Kuhn--Tucker multiplier
//! `mu`, and recovers the volume constraint by bisection on `mu`. Around that
//! core sit:
//!
//! - [`duality`]: the flux `sigma`, its dual functional and the primal-dual
//!   gap (the flux is unique even when `theta` is not),
//! - [`lamination`]: explicit fine-scale laminates whose energies converge to
//!   the relaxed (homogenized) energy,
//! - [`diagnostics`]: an exact radial oracle on disks plus numerical probes of
//!   the regularity and nonexistence properties of optimal designs.
//!
//! Everything is deterministic: identical inputs and seeds produce
//! bit-identical outputs.

pub mod config;
pub mod design_opt;
pub mod diagnostics;
pub mod duality;
pub mod expr;
pub mod fields;
pub mod geometry;
pub mod lamination;
pub mod material;
pub mod output;
pub mod runner;
pub mod sparse;
pub mod state_solver;

pub use design_opt::DesignSolution;
pub use fields::{ScalarField, VectorField};
pub use geometry::{DomainSpec, Mesh};
pub use material::{IntegrandF, MaterialModel};
pub use state_solver::SolveConfig;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid material: {0}")]
    InvalidMaterial(String),

    #[error("field storage mismatch: {0}")]
    StorageMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "solver did not converge: residual {residual:.3e} after {iterations} iterations \
         (tolerance {tolerance:.3e})"
    )]
    NonConvergence {
        residual: f64,
        tolerance: f64,
        iterations: usize,
        /// Residual norm after each iteration.
        history: Vec<f64>,
        /// Last iterate (interior nodal values), kept for post-mortems.
        last_iterate: Vec<f64>,
    },

    #[error("no multiplier bracket: volume never crosses kappa={kappa:.6e}; sweep {sweep:?}")]
    BracketNotFound {
        kappa: f64,
        /// (mu, volume) samples recorded while searching.
        sweep: Vec<(f64, f64)>,
    },

    #[error("mesh too coarse for laminate period: h_max={h_max:.3e}, required h <= {required_h:.3e}")]
    MeshTooCoarse { h_max: f64, required_h: f64 },

    #[error("config error: key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
