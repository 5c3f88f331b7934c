//! Deep-unrolling reconstruction for linear tomographic inverse problems.
//!
//! The crate provides the full-batch (LPD), angle-subset (LSPD, LSGD) and
//! operator-sketched (SkLPD, SkLSPD, SkLSPD-LW, SkLSGD) primal-dual unrolled
//! networks over a common engine, hand-written reverse-mode training, self-
//! supervised instance adaptation with a rotation-equivariance regulariser,
//! and a brute-force harness that checks the estimation-error bounds of the
//! light-weight variants on small instances.
//!
//! Data-parallel kernels (projector rows/columns, Monte-Carlo runs, dataset
//! items) run on rayon when the `parallel` feature is on (the default) and
//! sequentially otherwise; both paths give bit-identical results.

pub mod error;
pub mod io;
pub mod nnet;
pub mod operators;
pub mod par;
pub mod proximal;
pub mod rng;
pub mod simulate;
pub mod theory;
pub mod training;
pub mod unrolling;

pub use error::{Error, Result};
