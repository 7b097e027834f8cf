//! Simulator for a coupled thermoelectric system on an interval or rectangle:
//! a heat balance with temperature-dependent material laws and a power-law
//! radiative boundary, coupled to an electric potential through Seebeck /
//! Peltier terms,
//!
//!   ∂t B(θ) − div( a(x, θ, φ) ∇θ + σ(x,θ) F(x, θ, φ) ∇φ )          in Ω,
//!   −div( σ(x,θ) ( ∇φ + α_S(x,θ) ∇θ ) ) = 0                        in Ω,
//!
//! with flux boundary data g on Γ_N for the potential and a radiation law
//! γ(x,θ)|θ|^{ℓ−2}θ = h on Γ for the temperature. Time is discretized by
//! implicit (backward) steps on a uniform grid; each step is solved by one of
//! two fixed-point strategies:
//!
//!   * scheme A — freeze the coefficient arguments, solve the coupled
//!     (θ, φ) block, and iterate the frozen pair to self-consistency;
//!   * scheme B — solve the potential once from the previous temperature,
//!     then iterate the temperature equation alone.
//!
//! Alongside the solver, the crate carries a quantitative-constants engine
//! (Poincaré and boundary-trace constants, coercivity pairs, smallness
//! margins, invariant-ball radii) and a verifier that recomputes every
//! discrete energy inequality the solver is supposed to satisfy, with
//! machine-precision bookkeeping.
//!
//! Layout:
//! - [`coefficients`] — material laws, bounds, derived composites;
//! - [`constants`]    — analytic/discrete embedding constants, coercivity,
//!                      smallness conditions, ball radii;
//! - [`quadrature`]/[`expr`] — numerical integration and the tiny expression
//!                      language used by configs;
//! - [`mesh`]/[`space`]/[`assemble`] — P1 finite elements on intervals and
//!                      structured triangulations;
//! - [`elliptic`]     — one implicit step: frozen-coefficient solves and the
//!                      two fixed-point drivers;
//! - [`rothe`]        — time marching, interpolants in time, fluxes;
//! - [`verifier`]     — energy ledgers, monotonicity probes, convergence and
//!                      scheme-comparison studies;
//! - [`scenario`]/[`config`]/[`report`]/[`cli`] — presets, TOML configs,
//!                      deterministic CSV/JSON artifacts, command line.

pub mod assemble;
pub mod cli;
pub mod coefficients;
pub mod config;
pub mod constants;
pub mod elliptic;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod mesh;
pub mod quadrature;
pub mod report;
pub mod rothe;
pub mod scenario;
pub mod space;
pub mod verifier;

pub use error::{Result, SimError};
