//! Core of the echo planner.
//!
//! A sparse-token bird's-eye-view planner trained with a
//! current → future → current consistency cycle, plus the synthetic driving
//! world it is trained and evaluated in. Everything here is allocation-only
//! and free of IO; file formats and the command line live in the `echoplan`
//! crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod cfc;
pub mod closedloop;
pub mod components;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod graph;
pub mod metrics;
pub mod optim;
pub mod params;
pub mod planner;
pub mod tensor;
pub mod trainer;
pub mod world;

pub use error::{Error, Result};
pub use graph::{Block, Gradients, Graph, Var};
pub use params::{ModelConfig, ModelParams, ParamId};
pub use tensor::Tensor;
pub use world::{Episode, Frame, GridSpec, NavigationCommand, Scenario, Trajectory};
