//! Structured-grid simulator for a chemotaxis–Navier–Stokes system modelling
//! coral fertilization: sperm density `n`, egg density `m`, egg-released
//! chemical `c` and an incompressible fluid `u`.
//!
//! ```text
//! n_t + u·∇n = Δn − ∇·(n S(x,n,c)∇c) − nm
//! c_t + u·∇c = Δc − c + m
//! m_t + u·∇m = Δm − nm
//! u_t + κ(u·∇)u + ∇P = Δu + (n+m)∇φ,   ∇·u = 0
//! ```
//!
//! with no-flux walls for the scalars and no-slip walls for the fluid. The
//! [`diagnostics`] module tracks the conserved quantities, bounds and
//! dissipation integrals of the system along every run.

pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod fluid;
pub mod io;
mod linalg;
pub mod mms;
pub mod operators;
pub mod oracle;
pub mod sensitivity;
pub mod stepping;

pub use diagnostics::{verdict, DiagnosticsRecord, Verdict, VerdictOptions};
pub use error::{Error, Result};
pub use fields::{Grid, ScalarField, VectorField};
pub use stepping::{run, run_from, SimConfig, SimState, Stepper};
