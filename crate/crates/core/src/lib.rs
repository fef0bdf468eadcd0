//! Simulation and hierarchical control of a building HVAC plant providing
//! secondary frequency regulation through its supply fan.
//!
//! The stack has three control levels running on one simulated clock:
//! a day-ahead reserve [`scheduler`], a 15-minute climate MPC with a Kalman
//! filter ([`climatectl`]), and a 4-second fan-power tracker ([`regtrack`]).
//! [`plantsim`] provides the plant, [`regsignal`] the regulation signal,
//! [`perfmetrics`] the evaluation, and [`harness`] ties everything together.

pub mod climatectl;
mod csvio;
pub mod error;
pub mod harness;
mod linmodel;
mod lp;
pub mod perfmetrics;
pub mod plantsim;
pub mod regsignal;
pub mod regtrack;
pub mod scheduler;

pub use error::{Error, Result};
