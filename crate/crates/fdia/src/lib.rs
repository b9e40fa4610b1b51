//! File formats, the parallel Monte Carlo driver and the `fdia` command line
//! on top of [`fdia_core`].
//!
//! Every format is line-oriented text; see the README for column layouts.

pub mod attackfile;
pub mod cli;
pub mod gridfile;
pub mod montecarlo;
pub mod report;
pub mod snapshotfile;
pub mod verdictfile;

mod error;

pub use error::{Error, ParseError};
