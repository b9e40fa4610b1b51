//! Stealthy false-data-injection attacks on PMU state estimation, and their
//! detection by spatial/temporal median filtering of bus voltages.
//!
//! The crate is `no_std` (it needs `alloc`). Everything here is pure
//! computation over immutable inputs with explicit random sources; file
//! formats, the parallel Monte Carlo driver and the CLI live in the `fdia`
//! companion crate.
//!
//! Pipeline, in module order:
//!
//! - [`grid`]: buses and π-model branches, adjacency, the default 7-bus grid.
//! - [`measurement`]: true states, physically consistent currents, noisy snapshots.
//! - [`estimation`]: linear PMU measurement model, WLS, χ² and largest normalized residual tests.
//! - [`attack`]: `a = Hc` attack construction, application and stealth check.
//! - [`detection`]: voltage reconstruction, median filtering, anomaly criteria.
//! - [`refinement`]: false-alarm clearing from trusted neighbors.
//! - [`experiment`] and [`stats`]: one Monte Carlo trial and confusion statistics.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod attack;
pub mod chi2;
pub mod detection;
pub mod estimation;
pub mod experiment;
pub mod grid;
pub mod measurement;
pub mod phasor;
pub mod refinement;
pub mod stats;

pub use grid::{Branch, Bus, BusId, GridTopology};
pub use measurement::{MeasurementSet, NoiseModel, TrueState};
pub use phasor::Phasor;
