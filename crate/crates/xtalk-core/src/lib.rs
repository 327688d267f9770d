//! Desk-scale performance analysis of linear crosstalk cancelers for
//! multi-user wireline (DSL/G.fast) channels.
//!
//! The crate covers the full pipeline from stochastic channel generation to
//! link-budget data rates:
//!
//! - [`channel`]: parametric FEXT/direct-path channel models and seeded,
//!   reproducible realization drawing.
//! - [`cancelers`]: exact per-realization ZF and MMSE SINR, SNR-loss
//!   parameters and Jensen rate bounds.
//! - [`asymptotics`]: deterministic equivalents — the cubic SNR-loss
//!   equation, closed forms for ZF and MMSE, regime approximations,
//!   extremal-point analysis and the general variance-profile fixed point.
//! - [`montecarlo`]: trial orchestration, the constant-power matrix sequence
//!   used for convergence studies, and ensemble statistics.
//! - [`linkbudget`]: DMT tone grids, PSD masks, Shannon-gap bit loading and
//!   rate-reach sweeps.
//!
//! All operations are pure functions over immutable inputs and are safe to
//! call concurrently. Every random quantity is derived from an explicit
//! [`channel::RngSpec`], so experiment outputs are reproducible bit-for-bit
//! regardless of thread scheduling.

pub mod asymptotics;
pub mod cancelers;
pub mod channel;
pub mod linkbudget;
pub mod montecarlo;

mod linalg;

pub use num_complex::Complex64;
