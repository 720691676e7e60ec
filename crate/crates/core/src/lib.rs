//! Electronic differential with integrated traction and yaw-stability control
//! for a rear-wheel-drive electric vehicle with two independent motors.
//!
//! The crate contains the ground-truth vehicle simulator ([`plant`],
//! [`motor`]), the estimators the controller relies on ([`observers`],
//! [`estimation`]), the fuzzy integration layer ([`fis`]), the control laws
//! ([`control`]), driving scenarios ([`scenarios`]) and the simulation
//! harness ([`config`], [`harness`], [`metrics`]).

// validations are written as `!(x > 0.0)` so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod control;
pub mod error;
pub mod estimation;
pub mod filter;
pub mod fis;
pub mod harness;
pub mod integrate;
pub mod metrics;
pub mod motor;
pub mod observers;
pub mod plant;
pub mod scenarios;
pub mod selftest;
