//! Coupled nonlinear aeroelastic and flight-dynamics engine for very flexible
//! high-aspect-ratio wings.

pub mod aero;
pub mod analysis;
pub mod beam;
pub mod config;
pub mod coupled;
pub mod dual;
pub mod error;
pub mod linalg;
pub mod output;
pub mod rigid;
pub mod rotation;

pub use analysis::{FlutterResult, SweepRecord, TimeHistory, TrimResult};
pub use config::{parse_config, FlutterBasis, RunConfig, TrimMode};
pub use coupled::{CoupledModel, CoupledState, SolverSettings};
pub use error::{Error, Result};
