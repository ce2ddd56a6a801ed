//! Scattering-matrix design for beyond-diagonal reconfigurable intelligent
//! surfaces (BD-RIS).
//!
//! The crate is organized bottom-up:
//!
//! - [`numlin`]: Takagi factorization, SVD partitioning, least squares, Kronecker helpers.
//! - [`arch`]: the seven circuit architectures, their susceptance masks and the
//!   independent-variable transform.
//! - [`network`]: susceptance ⇄ scattering conversion and contract checks.
//! - [`sosup`]: structure-oriented symmetric unitary projection.
//! - [`chanopt`]: channels, the SVD upper bound and the channel-gain solvers.
//! - [`beamform`]: rates, utilities, the fractional-programming precoder and
//!   the two-stage design.
//! - [`harness`]: sweep configuration, the Monte-Carlo engine and CSV output.

pub mod arch;
pub mod beamform;
pub mod chanopt;
pub mod error;
pub mod exec;
pub mod harness;
pub mod network;
pub mod numlin;
pub mod rng;
pub mod sosup;

pub use error::{Error, Result};
