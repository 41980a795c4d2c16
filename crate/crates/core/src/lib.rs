//! Planning and simulation for DASH segment delivery over a broadcast
//! bearer with application-layer FEC and unicast HTTP recovery.
//!
//! - [`fec`]: segment loss probability of a Raptor-protected source block on
//!   an i.i.d. erasure channel.
//! - [`planner`]: burst length, minimum buffer level, availability start
//!   time, playback deadline and service data rate.
//! - [`flute`]: per-segment FDT instances, symbol packets and their wire
//!   formats.
//! - [`sim`]: deterministic per-user event simulation of broadcast delivery,
//!   unicast recovery and playback.
//! - [`metrics`]: stall statistics and worst-tail percentiles.
//!
//! The analytic modules are generic over the scalar type. The aliases below
//! fix it to `f64`, or to exact rationals for timing arithmetic.

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fec;
pub mod flute;
pub mod metrics;
pub mod planner;
pub mod scalar;
pub mod sim;

pub use error::{Error, Result};
pub use fec::RaptorCode;
pub use scalar::{Quantity, Scalar};

/// Exact rational seconds and rates.
pub type Exact = num_rational::Ratio<i64>;

pub type ErasureChannel64 = fec::ErasureChannel<f64>;
pub type ErasureChannel32 = fec::ErasureChannel<f32>;

pub type DelayBudget64 = planner::DelayBudget<f64>;
pub type ServiceConfig64 = planner::ServiceConfig<f64>;
pub type UnicastLink64 = planner::UnicastLink<f64>;
pub type RecoveryPath64 = planner::RecoveryPath<f64>;
pub type BufferPlan64 = planner::BufferPlan<f64>;
pub type SweepRow64 = planner::SweepRow<f64>;

pub type ExactDelayBudget = planner::DelayBudget<Exact>;
pub type ExactServiceConfig = planner::ServiceConfig<Exact>;
pub type ExactRecoveryPath = planner::RecoveryPath<Exact>;
pub type ExactBufferPlan = planner::BufferPlan<Exact>;
