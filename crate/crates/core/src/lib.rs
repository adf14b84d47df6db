//! Distributed stochastic block coordinate descent (DSBCD) for nonsmooth convex
//! optimization over time-varying multi-agent networks.
//!
//! The crate is `no_std` (it needs `alloc`) and holds the numerical pieces:
//!
//! * [`blockgeom`]: block-structured feasible sets, Bregman divergences and the
//!   block Bregman projection.
//! * [`network`]: doubly stochastic mixing schedules, transition products and
//!   ergodicity constants.
//! * [`oracle`]: per-agent objectives with exact and stochastic subgradients.
//! * [`engine`]: synchronous DSBCD and DSGD rounds, running averages, telemetry.
//! * [`bounds`]: closed-form convergence bounds and run compliance checks.
//!
//! IO, configuration and the command line live in the `dsbcd-sim` crate.

#![no_std]

extern crate alloc;

pub mod blockgeom;
pub mod bounds;
pub mod engine;
mod error;
pub mod linalg;
pub mod network;
pub mod oracle;
pub mod rng;

pub use crate::error::{Error, Result};
