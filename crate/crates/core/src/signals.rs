//! Trigonometric polynomials, decaying perturbations and their sums.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SignalError;
use crate::quadrature::oscillatory_width;
use crate::trace::SampledTrace;

/// Frequencies closer than this are merged into one term.
pub const MERGE_TOL: f64 = 1e-12;

pub(crate) fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// One term `amp * e^{i freq t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrigTerm {
    pub freq: f64,
    pub amp: Vec<Complex64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrigPolynomialSpec {
    dim: usize,
    #[serde(default)]
    terms: Vec<TrigTerm>,
}

/// `sum_k a_k e^{i lambda_k t}` with complex `dim`-vector amplitudes, terms
/// sorted by frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TrigPolynomialSpec")]
pub struct TrigPolynomial {
    dim: usize,
    terms: Vec<TrigTerm>,
}

impl TryFrom<TrigPolynomialSpec> for TrigPolynomial {
    type Error = SignalError;

    fn try_from(s: TrigPolynomialSpec) -> Result<Self, Self::Error> {
        TrigPolynomial::new(s.dim, s.terms)
    }
}

impl TrigPolynomial {
    pub fn new(dim: usize, terms: Vec<TrigTerm>) -> Result<Self, SignalError> {
        if dim == 0 {
            return Err(SignalError::InvalidSignal("dimension must be at least 1".into()));
        }
        for t in &terms {
            if t.amp.len() != dim {
                return Err(SignalError::DimensionMismatch { expected: dim, got: t.amp.len() });
            }
            if !t.freq.is_finite() || t.amp.iter().any(|z| !z.is_finite()) {
                return Err(SignalError::InvalidSignal("terms must be finite".into()));
            }
        }
        let mut terms = terms;
        terms.sort_by(|a, b| a.freq.total_cmp(&b.freq));
        let mut merged: Vec<TrigTerm> = Vec::with_capacity(terms.len());
        for t in terms {
            match merged.last_mut() {
                Some(last) if (t.freq - last.freq).abs() <= MERGE_TOL => {
                    for (a, b) in last.amp.iter_mut().zip(&t.amp) {
                        *a += b;
                    }
                }
                _ => merged.push(t),
            }
        }
        merged.retain(|t| t.amp.iter().any(|z| *z != Complex64::new(0.0, 0.0)));
        Ok(Self { dim, terms: merged })
    }

    pub fn zero(dim: usize) -> Self {
        Self { dim, terms: Vec::new() }
    }

    /// Scalar polynomial from `(frequency, amplitude)` pairs.
    pub fn scalar(terms: &[(f64, Complex64)]) -> Self {
        Self::new(1, terms.iter().map(|&(freq, a)| TrigTerm { freq, amp: vec![a] }).collect())
            .expect("finite scalar terms")
    }

    /// `amplitude * cos(omega t)`.
    pub fn cosine(omega: f64, amplitude: f64) -> Self {
        let h = Complex64::new(0.5 * amplitude, 0.0);
        Self::scalar(&[(omega, h), (-omega, h)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn terms(&self) -> &[TrigTerm] {
        &self.terms
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.freq).collect()
    }

    pub fn max_frequency(&self) -> f64 {
        self.terms.iter().map(|t| t.freq.abs()).fold(0.0, f64::max)
    }

    /// Amplitude at `freq` (zero if absent).
    pub fn coefficient(&self, freq: f64) -> Vec<Complex64> {
        self.terms
            .iter()
            .find(|t| (t.freq - freq).abs() <= MERGE_TOL)
            .map(|t| t.amp.clone())
            .unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); self.dim])
    }

    /// `sum_k |a_k|`, an upper bound of the sup norm.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| vec_norm(&t.amp)).sum()
    }

    pub fn eval(&self, t: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim];
        self.eval_into(t, &mut out);
        out
    }

    /// Adds the value at `t` to `out`.
    pub fn eval_into(&self, t: f64, out: &mut [Complex64]) {
        for term in &self.terms {
            let e = Complex64::cis(term.freq * t);
            for (o, a) in out.iter_mut().zip(&term.amp) {
                *o += a * e;
            }
        }
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| TrigTerm { freq: t.freq, amp: t.amp.iter().map(|a| a * s).collect() })
            .collect();
        Self::new(self.dim, terms).expect("scaling keeps validity")
    }

    pub fn add(&self, other: &Self) -> Result<Self, SignalError> {
        if self.dim != other.dim {
            return Err(SignalError::DimensionMismatch { expected: self.dim, got: other.dim });
        }
        Self::new(self.dim, self.terms.iter().chain(&other.terms).cloned().collect())
    }

    /// `t -> f(t) e^{i omega t}`.
    pub fn modulate(&self, omega: f64) -> Self {
        let terms = self.terms.iter().map(|t| TrigTerm { freq: t.freq + omega, amp: t.amp.clone() }).collect();
        Self::new(self.dim, terms).expect("modulation keeps validity")
    }

    /// `t -> f(t + a)`.
    pub fn translate(&self, a: f64) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let e = Complex64::cis(t.freq * a);
                TrigTerm { freq: t.freq, amp: t.amp.iter().map(|z| z * e).collect() }
            })
            .collect();
        Self::new(self.dim, terms).expect("translation keeps validity")
    }

    /// Applies a per-frequency multiplier to every amplitude.
    pub fn map_amplitudes<F: Fn(f64) -> Complex64>(&self, m: F) -> Self {
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let k = m(t.freq);
                TrigTerm { freq: t.freq, amp: t.amp.iter().map(|z| z * k).collect() }
            })
            .collect();
        Self::new(self.dim, terms).expect("finite multiplier")
    }
}

fn default_width() -> f64 {
    1.0
}

/// Scalar profile of an ergodic perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DecayProfile {
    /// `height * exp(1 - 1 / (1 - x^2))` with `x = (t - center) / radius`.
    CompactBump { center: f64, radius: f64, height: f64 },
    /// `c / (1 + t^2)^p`
    RationalDecay { c: f64, p: f64 },
    /// `c * exp(-((t - center) / width)^2)`
    GaussianDecay {
        c: f64,
        #[serde(default)]
        center: f64,
        #[serde(default = "default_width")]
        width: f64,
    },
    /// Linear interpolation on `grid`, zero outside it.
    TabulatedDecay { grid: Vec<f64>, values: Vec<f64> },
}

impl DecayProfile {
    pub fn gaussian(c: f64) -> Self {
        DecayProfile::GaussianDecay { c, center: 0.0, width: 1.0 }
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: &str| Err(SignalError::InvalidSignal(m.into()));
        match self {
            DecayProfile::CompactBump { center, radius, height } => {
                if !(radius.is_finite() && *radius > 0.0 && center.is_finite() && height.is_finite()) {
                    return bad("bump needs finite center and height and a positive radius");
                }
            }
            DecayProfile::RationalDecay { c, p } => {
                if !(c.is_finite() && p.is_finite() && *p >= 1.0) {
                    return bad("rational decay needs finite c and p >= 1");
                }
            }
            DecayProfile::GaussianDecay { c, center, width } => {
                if !(c.is_finite() && center.is_finite() && width.is_finite() && *width > 0.0) {
                    return bad("gaussian decay needs finite c and center and a positive width");
                }
            }
            DecayProfile::TabulatedDecay { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return bad("tabulated decay needs at least two (t, value) pairs of equal length");
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) || values.iter().chain(grid).any(|v| !v.is_finite()) {
                    return bad("tabulated decay needs a strictly increasing finite grid and finite values");
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            DecayProfile::CompactBump { center, radius, height } => {
                let x = (t - center) / radius;
                if x.abs() >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - 1.0 / (1.0 - x * x)).exp()
                }
            }
            DecayProfile::RationalDecay { c, p } => c / (1.0 + t * t).powf(*p),
            DecayProfile::GaussianDecay { c, center, width } => {
                let x = (t - center) / width;
                c * (-x * x).exp()
            }
            DecayProfile::TabulatedDecay { grid, values } => {
                let n = grid.len();
                if t < grid[0] || t > grid[n - 1] {
                    return 0.0;
                }
                let i = (grid.partition_point(|g| *g <= t) - 1).min(n - 2);
                let s = (t - grid[i]) / (grid[i + 1] - grid[i]);
                values[i] + s * (values[i + 1] - values[i])
            }
        }
    }

    /// `sup |profile|`.
    pub fn sup(&self) -> f64 {
        match self {
            DecayProfile::CompactBump { height, .. } => height.abs(),
            DecayProfile::RationalDecay { c, .. } => c.abs(),
            DecayProfile::GaussianDecay { c, .. } => c.abs(),
            DecayProfile::TabulatedDecay { values, .. } => values.iter().fold(0.0, |m, v| m.max(v.abs())),
        }
    }

    /// Interval outside which the profile is below `1e-17 * sup`, or `None`
    /// for algebraic tails.
    pub fn support(&self) -> Option<(f64, f64)> {
        match self {
            DecayProfile::CompactBump { center, radius, .. } => Some((center - radius, center + radius)),
            DecayProfile::RationalDecay { .. } => None,
            DecayProfile::GaussianDecay { center, width, .. } => Some((center - 6.3 * width, center + 6.3 * width)),
            DecayProfile::TabulatedDecay { grid, .. } => Some((grid[0], grid[grid.len() - 1])),
        }
    }

    /// Length scale of the profile's features.
    pub fn feature_scale(&self) -> f64 {
        match self {
            // the bump's derivatives peak close to the edges
            DecayProfile::CompactBump { radius, .. } => radius / 4.0,
            DecayProfile::RationalDecay { .. } => 1.0,
            DecayProfile::GaussianDecay { width, .. } => *width,
            DecayProfile::TabulatedDecay { grid, .. } => {
                grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min) * 4.0
            }
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ErgodicSpec {
    profile: DecayProfile,
    #[serde(default)]
    direction: Option<Vec<Complex64>>,
}

/// `profile(t) * direction`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ErgodicSpec")]
pub struct ErgodicPerturbation {
    pub profile: DecayProfile,
    pub direction: Vec<Complex64>,
}

impl TryFrom<ErgodicSpec> for ErgodicPerturbation {
    type Error = SignalError;

    fn try_from(s: ErgodicSpec) -> Result<Self, Self::Error> {
        let direction = s.direction.unwrap_or_else(|| vec![Complex64::new(1.0, 0.0)]);
        ErgodicPerturbation::new(s.profile, direction)
    }
}

impl ErgodicPerturbation {
    pub fn new(profile: DecayProfile, direction: Vec<Complex64>) -> Result<Self, SignalError> {
        profile.validate()?;
        if direction.is_empty() || direction.iter().any(|z| !z.is_finite()) {
            return Err(SignalError::InvalidSignal("direction must be a nonempty finite vector".into()));
        }
        Ok(Self { profile, direction })
    }

    pub fn scalar(profile: DecayProfile) -> Self {
        Self::new(profile, vec![Complex64::new(1.0, 0.0)]).expect("valid profile")
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn eval(&self, t: f64) -> Vec<Complex64> {
        let p = self.profile.eval(t);
        self.direction.iter().map(|d| d * p).collect()
    }

    pub fn eval_into(&self, t: f64, out: &mut [Complex64]) {
        let p = self.profile.eval(t);
        if p != 0.0 {
            for (o, d) in out.iter_mut().zip(&self.direction) {
                *o += d * p;
            }
        }
    }

    pub fn sup(&self) -> f64 {
        self.profile.sup() * vec_norm(&self.direction)
    }
}

fn zero_ap() -> Option<TrigPolynomial> {
    None
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct PapSpec {
    #[serde(default = "zero_ap")]
    ap: Option<TrigPolynomial>,
    #[serde(default)]
    ergodic: Vec<ErgodicPerturbation>,
}

/// Almost periodic part plus a sum of ergodic perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PapSpec")]
pub struct PAPFunction {
    pub ap: TrigPolynomial,
    pub ergodic: Vec<ErgodicPerturbation>,
}

impl TryFrom<PapSpec> for PAPFunction {
    type Error = SignalError;

    fn try_from(s: PapSpec) -> Result<Self, Self::Error> {
        let dim = s.ap.as_ref().map(|a| a.dim()).or_else(|| s.ergodic.first().map(|e| e.dim())).unwrap_or(1);
        PAPFunction::new(s.ap.unwrap_or_else(|| TrigPolynomial::zero(dim)), s.ergodic)
    }
}

impl From<TrigPolynomial> for PAPFunction {
    fn from(ap: TrigPolynomial) -> Self {
        Self { ap, ergodic: Vec::new() }
    }
}

impl PAPFunction {
    pub fn new(ap: TrigPolynomial, ergodic: Vec<ErgodicPerturbation>) -> Result<Self, SignalError> {
        for e in &ergodic {
            if e.dim() != ap.dim() {
                return Err(SignalError::DimensionMismatch { expected: ap.dim(), got: e.dim() });
            }
        }
        Ok(Self { ap, ergodic })
    }

    pub fn ergodic_only(dim: usize, ergodic: Vec<ErgodicPerturbation>) -> Result<Self, SignalError> {
        Self::new(TrigPolynomial::zero(dim), ergodic)
    }

    pub fn zero(dim: usize) -> Self {
        TrigPolynomial::zero(dim).into()
    }

    pub fn dim(&self) -> usize {
        self.ap.dim()
    }

    pub fn eval(&self, t: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// Adds the value at `t` to `out`.
    pub fn eval_into(&self, t: f64, out: &mut [Complex64]) {
        self.ap.eval_into(t, out);
        for e in &self.ergodic {
            e.eval_into(t, out);
        }
    }

    /// Value of the ergodic part alone.
    pub fn ergodic_eval(&self, t: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        for e in &self.ergodic {
            e.eval_into(t, &mut out);
        }
        out
    }

    pub fn without_ergodic(&self) -> Self {
        self.ap.clone().into()
    }

    /// `sum |a_k| + sum sup |phi_j|`.
    pub fn sup_bound(&self) -> f64 {
        self.ap.sup_bound() + self.ergodic.iter().map(|e| e.sup()).sum::<f64>()
    }

    /// Panel width that resolves the oscillations and decay features.
    pub fn resolution(&self, extra_frequency: f64) -> f64 {
        let omega = self
            .ap
            .terms()
            .iter()
            .map(|t| (t.freq - extra_frequency).abs())
            .fold(0.0, f64::max);
        let features = self.ergodic.iter().map(|e| e.profile.feature_scale() / 4.0).fold(1.0, f64::min);
        oscillatory_width(omega, 1.0).min(features)
    }

    /// Samples the function on `n` points `start + i * step`.
    pub fn sample(&self, start: f64, step: f64, n: usize) -> SampledTrace {
        SampledTrace::from_fn(start, step, n, self.dim(), |t, out| self.eval_into(t, out))
    }
}

/// Scalar nonlinearity applied to real and imaginary parts separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Identity,
    Sine,
    Tanh,
}

impl Nonlinearity {
    pub fn apply(&self, z: Complex64) -> Complex64 {
        match self {
            Nonlinearity::Identity => z,
            Nonlinearity::Sine => Complex64::new(z.re.sin(), z.im.sin()),
            Nonlinearity::Tanh => Complex64::new(z.re.tanh(), z.im.tanh()),
        }
    }
}

/// `F(t, u) = alpha(t) * sigma(u) + beta(t)` where `alpha` is scalar and
/// `sigma` is 1-Lipschitz, so `F` is Lipschitz in `u` with constant
/// `sup |alpha|`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzMap {
    pub alpha: PAPFunction,
    #[serde(default)]
    pub sigma: Nonlinearity,
    pub beta: PAPFunction,
}

impl LipschitzMap {
    pub fn new(alpha: PAPFunction, sigma: Nonlinearity, beta: PAPFunction) -> Result<Self, SignalError> {
        if alpha.dim() != 1 {
            return Err(SignalError::DimensionMismatch { expected: 1, got: alpha.dim() });
        }
        Ok(Self { alpha, sigma, beta })
    }

    /// Map that ignores `u`.
    pub fn forcing(beta: PAPFunction) -> Self {
        Self { alpha: PAPFunction::zero(1), sigma: Nonlinearity::Identity, beta }
    }

    pub fn dim(&self) -> usize {
        self.beta.dim()
    }

    pub fn lipschitz_constant(&self) -> f64 {
        self.alpha.sup_bound()
    }

    pub fn is_linear_in_t(&self) -> bool {
        self.alpha.ap.is_empty() && self.alpha.ergodic.is_empty()
    }

    pub fn eval(&self, t: f64, u: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.eval_into(t, u, &mut out);
        out
    }

    /// Writes `F(t, u)` into `out`.
    pub fn eval_into(&self, t: f64, u: &[Complex64], out: &mut [Complex64]) {
        out.iter_mut().for_each(|o| *o = Complex64::new(0.0, 0.0));
        self.beta.eval_into(t, out);
        if self.is_linear_in_t() {
            return;
        }
        let a = self.alpha.eval(t)[0];
        if a != Complex64::new(0.0, 0.0) {
            for (o, x) in out.iter_mut().zip(u) {
                *o += a * self.sigma.apply(*x);
            }
        }
    }
}

/// Samples `t -> F(t, h(t))` on `n` points `start + i * step`.
pub fn compose_lipschitz(f: &LipschitzMap, h: &PAPFunction, start: f64, step: f64, n: usize) -> Result<SampledTrace, SignalError> {
    if f.dim() != h.dim() {
        return Err(SignalError::DimensionMismatch { expected: f.dim(), got: h.dim() });
    }
    let mut u = vec![Complex64::new(0.0, 0.0); h.dim()];
    Ok(SampledTrace::from_fn(start, step, n, f.dim(), |t, out| {
        u.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
        h.eval_into(t, &mut u);
        f.eval_into(t, &u, out);
    }))
}
