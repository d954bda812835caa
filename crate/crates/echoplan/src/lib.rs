//! File formats, reports, plots and the command-line harness for the echo
//! planner. The model and its training loop live in `echoplan_core`.

pub mod checkpoint;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiment;
pub mod logs;
pub mod manifest;
pub mod plot;
pub mod report;

pub use error::{FormatError, Result};
