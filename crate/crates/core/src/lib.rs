//! Prüfer-variable workbench for Schrödinger operators with decaying oscillatory potentials.

// Range checks are written `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod discrete;
pub mod divisor;
pub mod ode;
pub mod potential;
pub mod prufer;
pub mod quad;
pub mod scanner;
