//! Numerical toolkit for doubly-weighted pseudo-almost periodic functions.

pub mod convolution;
pub mod error;
pub mod estimate;
pub mod evolution;
pub mod poly;
pub mod quadrature;
pub mod signals;
pub mod spectral;
pub mod trace;
pub mod weights;

pub use error::*;
pub use estimate::{MeanEstimate, Schedule, TracePoint};
pub use signals::{PAPFunction, TrigPolynomial};
pub use trace::SampledTrace;
pub use weights::{Weight, WeightKind};
