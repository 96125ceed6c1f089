//! Schedules of events, Pliss times, induced maps, coherent blocks and
//! measure lifting, evaluated on concrete dynamical systems: finite maps,
//! Bernoulli and Markov shifts, interval maps and matrix cocycles.
//!
//! Every quantity that involves an infinite object (a subset of ℕ, a
//! backward orbit, a limsup) is computed at an explicit finite horizon or
//! depth, and the horizon travels with the result.

pub mod blocks;
pub mod cocycle;
pub mod config;
pub mod error;
pub mod experiments;
pub mod induced;
pub mod lift;
pub mod markov;
pub mod report;
pub mod rng;
pub mod schedule;
pub mod schedules;
pub mod series;
pub mod stats;
pub mod sync;
pub mod systems;

pub use error::{Error, Result};
pub use schedule::{DensityReport, Dyadic, EventSet, SetOp};
