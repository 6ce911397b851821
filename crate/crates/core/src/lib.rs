//! Critical multi-type Galton-Watson processes: exact constants of the limit
//! laws, a streaming tree sampler, the relative-frequency and depth-discounted
//! estimators, and Monte Carlo checks of the limits.

pub mod eigen;
pub mod error;
pub mod estimators;
pub mod limits;
pub mod process;
pub mod sampler;
pub mod verify;

pub use eigen::{frobenius_eigenpair, EigenData};
pub use error::{Error, Result};
pub use process::{
    big_h, h_poly, mean_matrix, q_measure, validate_spec, CriticalProcess, ProcessSpec, QMeasure,
    Rule, RuleId, Tolerances, ValidationReport,
};
