use thiserror::Error;

use crate::estimate::MeanEstimate;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("refinement limit reached on [{a}, {b}] with error {error:e} above tolerance {tol:e}")]
    RefinementLimit { a: f64, b: f64, error: f64, tol: f64 },
    #[error("integrand is not finite on [{a}, {b}]")]
    NonFinite { a: f64, b: f64 },
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum WeightError {
    #[error("truncation half-width must be positive, got {0}")]
    NonPositiveT(f64),
    #[error("invalid weight: {0}")]
    InvalidWeight(String),
    #[error("quadrature failure: {0}")]
    QuadratureFailure(#[from] QuadratureError),
    #[error("limit of {criterion} did not stabilize within the schedule (last values {last:?})")]
    InconclusiveLimit { criterion: String, last: Vec<f64> },
    #[error("ratio diverges: grew monotonically to {last:e}")]
    DivergentRatio { last: f64 },
    #[error("polynomial is constant")]
    ConstantPolynomial,
    #[error("leading coefficient {leading:e} is negligible against max magnitude {max:e}")]
    DegenerateCoefficients { leading: f64, max: f64 },
    #[error("factorization failed: {0}")]
    FactorizationFailed(String),
    #[error("configuration error: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SignalError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("no epsilon-translation number structure found within horizon {horizon}")]
    NoTranslationNumberFound { horizon: f64 },
    #[error("weight condition violated: inf of mass ratio is {inf_ratio:e}")]
    ConditionViolated { inf_ratio: f64 },
    #[error("residual keeps a non-decaying component (weighted mean {residual_mean:e})")]
    MissingFrequencies { residual_mean: f64 },
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpectralError {
    #[error("truncated mean did not converge (last values {:?})", .0.last_values(3))]
    NotConverged(Box<MeanEstimate>),
    #[error("oscillation condition requires a nonzero frequency")]
    ZeroLambda,
    #[error("limit did not settle: {0}")]
    InconclusiveLimit(String),
    #[error("oscillatory weighted integral does not vanish at frequency {lambda}")]
    PreconditionEq31Failed { lambda: f64 },
    #[error("mass ratio limit undefined: {0}")]
    ThetaUndefined(WeightError),
    #[error("{which} weight has an unbounded shifted-mass ratio")]
    NotInU0 { which: &'static str },
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Signal(#[from] SignalError),
}

/// Hypotheses of the convolution stability result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityCondition {
    /// `sup_T nu(Q_T) / mu(Q_T) < inf`
    BoundedMassRatio,
    /// `lim_T mu(Q_{T+|tau|}) / mu(Q_T) < inf`
    FiniteMassGrowth,
    /// `nu` is translation compatible
    TranslationCompatible,
}

impl std::fmt::Display for StabilityCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StabilityCondition::BoundedMassRatio => "sup_T nu(Q_T)/mu(Q_T) < inf",
            StabilityCondition::FiniteMassGrowth => "lim_T mu(Q_{T+|tau|})/mu(Q_T) < inf",
            StabilityCondition::TranslationCompatible => "nu translation compatible",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ConvolutionError {
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("kernel tail needs window {needed}, configured maximum is {available}")]
    TailTruncationFailure { needed: f64, available: f64 },
    #[error("precondition failed: {condition}")]
    PreconditionFailed { condition: StabilityCondition },
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvolutionError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("step size underflow at t = {t}")]
    StepSizeUnderflow { t: f64 },
    #[error("dichotomy violated on the {block} block at (t, s) = ({t}, {s}): norm {norm:e} > bound {bound:e}")]
    DichotomyViolated { block: &'static str, t: f64, s: f64, norm: f64, bound: f64 },
    #[error("quadrature failure: {0}")]
    QuadratureFailure(String),
    #[error("not a contraction: K = {k}, C = {c}, K*C = {}", .k * .c)]
    NotAContraction { k: f64, c: f64 },
    #[error("Picard iteration did not reach tolerance after {iterations} iterations (last change {last_change:e})")]
    MaxIterExceeded { iterations: usize, last_change: f64 },
    #[error("precondition failed: {0}")]
    PreconditionFailed(String),
    #[error("solve failed: {0}")]
    SolveFailed(String),
}
