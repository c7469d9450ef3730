//! Renewal processes in a periodic environment.
//!
//! Arrival times `T_1 < T_2 < ...` are generated from a hazard `λ(t, u)`
//! (rate at time `t` given the previous event at `u`) that is invariant
//! under the joint shift `(t, u) -> (t + T, u + T)`. The crate provides
//!
//! * [`kernel`]: hazard kernels and the derived survival `H` and density `K`,
//! * [`simulate`]: exact (thinning) simulation of arrivals, recurrence times
//!   and the two piecewise-deterministic Markov processes attached to them,
//! * [`phasechain`]: the Markov chain of arrival phases, its stationary
//!   density and the periodic rate `ρ`,
//! * [`volterra`]: the renewal equation for the event rate and the exact
//!   time-`t` laws of the backward and forward recurrence times,
//! * [`asymptotics`]: the periodic limit laws, the one-period transition
//!   operator of the forward recurrence time and the ergodicity constants,
//! * [`metrics`]: total-variation distances and exponential decay fits.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod distribution;
pub mod error;
pub mod kernel;
pub mod metrics;
pub mod phasechain;
pub mod quadrature;
pub mod rng;
pub mod simulate;
pub mod volterra;

pub use distribution::{Atom, DensityPiece, HalfLineDistribution};
pub use error::{RenewalError, Result};
pub use kernel::KernelHandle;
pub use rng::RngStream;
