//! Numerical solver and verification harness for the singular semilinear
//! elliptic system
//!
//! ```text
//!   -Δu + u = sgn(v) |u|^a1 / |v|^b1   in Ω
//!   -Δv + v = sgn(u) |u|^a2 / |v|^b2   in Ω
//!   u = v = 0                          on ∂Ω
//! ```
//!
//! on intervals and rectangles, with exponents a_i in (-1,1), b_i in (0,1)
//! subject to a_i + b_i < 1 and -1 < a_i - b_i < 0. The right-hand side is
//! singular where a component vanishes, which is tamed two ways: constant-sign
//! solutions are trapped between barrier functions built from the boundary
//! distance, and sign-changing solutions are reached through an
//! epsilon-regularized system driven to the singular limit by continuation.
//!
//! The crate computes three solutions (positive, negative, and nodal with
//! synchronous sign-changing components) by resolvent fixed-point iteration,
//! and machine-checks every pointwise bound and sign property along the way:
//! barrier ordering, trapping-box calibration, strict solution bounds, odd
//! mirror symmetry, uniqueness of the constant-sign pair, H1 convergence of
//! the regularized family, and distinctness of the three solutions.
//!
//! Modules follow the pipeline: [`grid`] builds the discrete domain,
//! [`operator`] the Dirichlet stencil of -Δ+I with its resolvent and
//! principal eigenpair, [`barriers`] the comparison functions and the
//! trapping constants, [`nonlinearity`] evaluates the singular and
//! regularized right-hand sides, [`solver`] runs the branch iterations and
//! the epsilon continuation, [`verify`] turns every claimed property into a
//! pass/fail record, and [`cli`] ties it together behind a config file.

pub mod barriers;
pub mod cli;
pub mod grid;
pub mod nonlinearity;
pub mod operator;
pub mod solver;
pub mod verify;

pub use grid::{Domain, Field, Grid, NormKind};
pub use nonlinearity::Exponents;
pub use operator::EllipticOperator;
