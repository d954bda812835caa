use alloc::string::String;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum Error {
    EmptyRouteSegment,
    ShapeMismatch {
        what: &'static str,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    HorizonOutOfRange {
        h_steps: usize,
        max: usize,
    },
    InsufficientFuture {
        frame: usize,
        needed: usize,
        available: usize,
    },
    NonFiniteLoss {
        step: usize,
        traj: f64,
        futbev: f64,
        curbev: f64,
    },
    EmptyDataset,
    InvalidConfig(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::EmptyRouteSegment => write!(f, "empty route segment"),
            Error::ShapeMismatch {
                what,
                expected,
                actual,
            } => write!(
                f,
                "{what}: shape mismatch, expected {}x{}, got {}x{}",
                expected.0, expected.1, actual.0, actual.1
            ),
            Error::HorizonOutOfRange { h_steps, max } => {
                write!(f, "horizon {h_steps} out of range 1..={max}")
            }
            Error::InsufficientFuture {
                frame,
                needed,
                available,
            } => write!(
                f,
                "frame {frame} needs {needed} future frames, only {available} available"
            ),
            Error::NonFiniteLoss {
                step,
                traj,
                futbev,
                curbev,
            } => write!(
                f,
                "non-finite loss at step {step} (traj={traj}, futbev={futbev}, curbev={curbev})"
            ),
            Error::EmptyDataset => write!(f, "dataset has no trainable frames"),
            Error::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
