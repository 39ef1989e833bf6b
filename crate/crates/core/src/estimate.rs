//! Truncation schedules and limit estimates shared by every module.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Geometric truncation schedule `T_j = t0 * 2^j` for `j = 0..=doublings`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub t0: f64,
    pub doublings: u32,
}

impl Schedule {
    pub const fn new(t0: f64, doublings: u32) -> Self {
        Self { t0, doublings }
    }

    /// Schedule for limits of closed-form mass ratios.
    pub const fn limits() -> Self {
        Self::new(1.0, 20)
    }

    /// Schedule for truncated means that need oscillatory quadrature.
    pub const fn means() -> Self {
        Self::new(1.0, 14)
    }

    /// Schedule whose last point is exactly `t_max`.
    pub fn ending_at(t_max: f64, doublings: u32) -> Self {
        Self::new(t_max / f64::powi(2.0, doublings as i32), doublings)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..=self.doublings).map(|j| self.t0 * f64::powi(2.0, j as i32)).collect()
    }

    pub fn last(&self) -> f64 {
        self.t0 * f64::powi(2.0, self.doublings as i32)
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(format!("schedule start must be positive, got {}", self.t0));
        }
        Ok(())
    }
}

/// One entry of a truncation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: f64,
    pub value: Vec<Complex64>,
}

/// A truncated limit together with the trace that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: Vec<Complex64>,
    pub trace: Vec<TracePoint>,
    pub converged: bool,
    pub tol_used: f64,
}

impl MeanEstimate {
    /// Builds an estimate from a trace; convergence means the last three
    /// values are pairwise within `tol` in max norm.
    pub fn from_trace(trace: Vec<TracePoint>, tol: f64) -> Self {
        let converged = last_three_within(&trace, tol);
        let value = trace.last().map(|p| p.value.clone()).unwrap_or_default();
        Self { value, trace, converged, tol_used: tol }
    }

    pub fn scalar(&self) -> Complex64 {
        self.value.first().copied().unwrap_or_default()
    }

    pub fn norm(&self) -> f64 {
        max_norm(&self.value)
    }

    pub fn last_values(&self, n: usize) -> Vec<Vec<Complex64>> {
        let k = self.trace.len().saturating_sub(n);
        self.trace[k..].iter().map(|p| p.value.clone()).collect()
    }
}

pub(crate) fn max_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn last_three_within(trace: &[TracePoint], tol: f64) -> bool {
    if trace.len() < 3 {
        return false;
    }
    let t = &trace[trace.len() - 3..];
    max_diff(&t[0].value, &t[1].value) <= tol
        && max_diff(&t[0].value, &t[2].value) <= tol
        && max_diff(&t[1].value, &t[2].value) <= tol
}

/// Outcome of estimating `lim_{x -> inf} r(x)` along a geometric schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitOutcome {
    Finite(f64),
    Infinite,
    Inconclusive,
}

/// Estimates the limit of a positive sequence sampled along a schedule.
///
/// Divergence is declared when the last three values increase strictly and
/// the last one exceeds `cap` (or is infinite). Otherwise the limit is finite
/// once the last three values are pairwise within `rel_tol * max(1, |a|, |b|)`.
pub fn estimate_limit(values: &[f64], rel_tol: f64, cap: f64) -> LimitOutcome {
    let n = values.len();
    if n == 0 {
        return LimitOutcome::Inconclusive;
    }
    if values[n - 1].is_nan() {
        return LimitOutcome::Inconclusive;
    }
    if values[n - 1] == f64::INFINITY {
        return LimitOutcome::Infinite;
    }
    if n < 3 {
        return LimitOutcome::Inconclusive;
    }
    let w = &values[n - 3..];
    if w[2] > cap && w[0] < w[1] && w[1] < w[2] {
        return LimitOutcome::Infinite;
    }
    let close = |a: f64, b: f64| (a - b).abs() <= rel_tol * 1f64.max(a.abs()).max(b.abs());
    if close(w[0], w[1]) && close(w[0], w[2]) && close(w[1], w[2]) {
        LimitOutcome::Finite(w[2])
    } else {
        LimitOutcome::Inconclusive
    }
}

/// True when the trace ends below `tol` and its last three entries do not
/// increase by more than 1% (the decay test used for ergodic residuals).
pub fn decays(values: &[f64], tol: f64) -> bool {
    let n = values.len();
    if n == 0 || !values[n - 1].is_finite() || values[n - 1] >= tol {
        return false;
    }
    let k = n.saturating_sub(3);
    values[k..].windows(2).all(|w| w[1] <= w[0] * 1.01 + 1e-300)
}
