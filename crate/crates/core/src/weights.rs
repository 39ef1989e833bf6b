//! Weight functions on the real line, their masses `mu(Q_T)` over `[-T, T]`,
//! and numeric verdicts for the weight classes.
//!
//! Every ratio of masses is formed in log space, so exponential weights can be
//! pushed to truncation half-widths far beyond `f64` overflow.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::WeightError;
use crate::estimate::{estimate_limit, LimitOutcome, MeanEstimate, Schedule, TracePoint};
use crate::poly::{quadratic_factorization, Polynomial, QuadraticFactor};
use crate::quadrature;

fn one() -> f64 {
    1.0
}

/// Serialized form of a weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightKind {
    /// `c`
    Constant { c: f64 },
    /// `scale * (1 + |t|)^N`
    Power {
        #[serde(rename = "N")]
        exponent: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Ascending coefficients.
    Polynomial { coeffs: Vec<f64> },
    /// `c * e^{|t|}`
    ExpAbs {
        #[serde(default = "one")]
        c: f64,
    },
    /// Linear interpolation on `grid`, constant beyond it.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

/// A validated weight. Cheap to clone; the cumulative table of tabulated
/// weights is built once on first use.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "WeightKind", into = "WeightKind")]
pub struct Weight {
    kind: WeightKind,
    poly: Option<Polynomial>,
    cumulative: OnceLock<Vec<f64>>,
}

impl PartialEq for Weight {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl From<Weight> for WeightKind {
    fn from(w: Weight) -> Self {
        w.kind
    }
}

impl TryFrom<WeightKind> for Weight {
    type Error = WeightError;

    fn try_from(kind: WeightKind) -> Result<Self, Self::Error> {
        Weight::new(kind)
    }
}

fn invalid(msg: impl Into<String>) -> WeightError {
    WeightError::InvalidWeight(msg.into())
}

fn positive(name: &str, v: f64) -> Result<(), WeightError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive and finite, got {v}")))
    }
}

impl Weight {
    pub fn new(kind: WeightKind) -> Result<Self, WeightError> {
        let mut poly = None;
        match &kind {
            WeightKind::Constant { c } => positive("c", *c)?,
            WeightKind::Power { exponent, scale } => {
                if !(*exponent >= 0.0 && exponent.is_finite()) {
                    return Err(invalid(format!("N must be finite and >= 0, got {exponent}")));
                }
                positive("scale", *scale)?;
            }
            WeightKind::ExpAbs { c } => positive("c", *c)?,
            WeightKind::Polynomial { coeffs } => {
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(invalid("polynomial needs finite coefficients"));
                }
                let p = Polynomial::new(coeffs.clone());
                if p.degree() == 0 {
                    positive("constant polynomial", p.leading())?;
                } else if !polynomial_in_u_inf(coeffs)?.member {
                    return Err(invalid("polynomial is not strictly positive on the real line"));
                }
                poly = Some(p);
            }
            WeightKind::Tabulated { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return Err(invalid("tabulated weight needs at least two (t, value) pairs of equal length"));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().any(|g| !g.is_finite()) {
                    return Err(invalid("tabulated grid must be finite and strictly increasing"));
                }
                if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(invalid("tabulated values must be positive and finite"));
                }
            }
        }
        Ok(Self { kind, poly, cumulative: OnceLock::new() })
    }

    pub fn constant(c: f64) -> Self {
        Self::new(WeightKind::Constant { c }).expect("positive constant")
    }

    pub fn power(exponent: f64) -> Self {
        Self::new(WeightKind::Power { exponent, scale: 1.0 }).expect("valid power weight")
    }

    pub fn scaled_power(exponent: f64, scale: f64) -> Self {
        Self::new(WeightKind::Power { exponent, scale }).expect("valid power weight")
    }

    pub fn exp_abs(c: f64) -> Self {
        Self::new(WeightKind::ExpAbs { c }).expect("positive scale")
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Result<Self, WeightError> {
        Self::new(WeightKind::Polynomial { coeffs })
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self, WeightError> {
        Self::new(WeightKind::Tabulated { grid, values })
    }

    /// Samples `f` on `grid` into a tabulated weight.
    pub fn tabulate<F: Fn(f64) -> f64>(grid: Vec<f64>, f: F) -> Result<Self, WeightError> {
        let values = grid.iter().map(|&t| f(t)).collect();
        Self::tabulated(grid, values)
    }

    pub fn kind(&self) -> &WeightKind {
        &self.kind
    }

    pub fn is_tabulated(&self) -> bool {
        matches!(self.kind, WeightKind::Tabulated { .. })
    }

    pub fn eval(&self, t: f64) -> f64 {
        match &self.kind {
            WeightKind::Constant { c } => *c,
            WeightKind::Power { exponent, scale } => scale * (1.0 + t.abs()).powf(*exponent),
            WeightKind::ExpAbs { c } => c * t.abs().exp(),
            WeightKind::Polynomial { .. } => self.poly.as_ref().unwrap().eval(t),
            WeightKind::Tabulated { grid, values } => interpolate(grid, values, t),
        }
    }

    pub fn log_eval(&self, t: f64) -> f64 {
        match &self.kind {
            WeightKind::Power { exponent, scale } => scale.ln() + exponent * t.abs().ln_1p(),
            WeightKind::ExpAbs { c } => c.ln() + t.abs(),
            _ => self.eval(t).ln(),
        }
    }

    /// Interval on which the weight is known from data; the whole line for
    /// symbolic kinds.
    pub fn extent(&self) -> (f64, f64) {
        match &self.kind {
            WeightKind::Tabulated { grid, .. } => (grid[0], grid[grid.len() - 1]),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    fn cumulative(&self) -> &[f64] {
        self.cumulative.get_or_init(|| match &self.kind {
            WeightKind::Tabulated { grid, values } => {
                // anchored at the node nearest the origin so masses of
                // symmetric windows do not cancel
                let z = (0..grid.len()).min_by(|&i, &j| grid[i].abs().total_cmp(&grid[j].abs())).unwrap_or(0);
                let cell = |i: usize| 0.5 * (values[i] + values[i - 1]) * (grid[i] - grid[i - 1]);
                let mut acc = vec![0.0; grid.len()];
                for i in z + 1..grid.len() {
                    acc[i] = acc[i - 1] + cell(i);
                }
                for i in (0..z).rev() {
                    acc[i] = acc[i + 1] - cell(i + 1);
                }
                acc
            }
            _ => Vec::new(),
        })
    }

    /// Primitive of a tabulated weight, exact for the interpolant.
    fn tabulated_primitive(&self, x: f64) -> f64 {
        let WeightKind::Tabulated { grid, values } = &self.kind else {
            unreachable!()
        };
        let cum = self.cumulative();
        let n = grid.len();
        if x <= grid[0] {
            return cum[0] + values[0] * (x - grid[0]);
        }
        if x >= grid[n - 1] {
            return cum[n - 1] + values[n - 1] * (x - grid[n - 1]);
        }
        let i = grid.partition_point(|g| *g <= x) - 1;
        let v = interpolate(grid, values, x);
        cum[i] + 0.5 * (values[i] + v) * (x - grid[i])
    }

    /// `int_a^b w` for `a <= b`.
    pub fn integral(&self, a: f64, b: f64, tol: f64) -> Result<f64, WeightError> {
        Ok(self.log_integral(a, b, tol)?.exp())
    }

    /// Logarithm of `int_a^b w` for `a < b`.
    pub fn log_integral(&self, a: f64, b: f64, tol: f64) -> Result<f64, WeightError> {
        if !(b > a) {
            return Err(WeightError::NonPositiveT(b - a));
        }
        let odd_primitive = |x: f64, f: &dyn Fn(f64) -> f64| x.signum() * f(x.abs());
        let v = match &self.kind {
            WeightKind::Constant { c } => return Ok(c.ln() + (b - a).ln()),
            WeightKind::ExpAbs { c } => {
                let l = if a >= 0.0 {
                    b + (-(a - b).exp_m1()).ln()
                } else if b <= 0.0 {
                    -a + (-(a - b).exp_m1()).ln()
                } else {
                    let (hi, lo) = (b.max(-a), b.min(-a));
                    hi + (1.0 + (lo - hi).exp() - 2.0 * (-hi).exp()).ln()
                };
                return Ok(c.ln() + l);
            }
            WeightKind::Power { exponent, scale } => {
                let k = exponent + 1.0;
                let prim = |x: f64| scale * ((1.0 + x).powf(k) - 1.0) / k;
                odd_primitive(b, &prim) - odd_primitive(a, &prim)
            }
            WeightKind::Polynomial { .. } => {
                let p = self.poly.as_ref().unwrap();
                quadrature::adaptive(|x| p.eval(x), a, b, tol)?.value
            }
            WeightKind::Tabulated { .. } => self.tabulated_primitive(b) - self.tabulated_primitive(a),
        };
        if !(v > 0.0) {
            return Err(WeightError::QuadratureFailure(crate::error::QuadratureError::NonFinite { a, b }));
        }
        Ok(v.ln())
    }

    /// `mu(Q_T)`, possibly `+inf` for exponential weights at large `T`.
    pub fn mass(&self, t: f64) -> Result<f64, WeightError> {
        Ok(self.log_mass(t)?.exp())
    }

    pub fn log_mass(&self, t: f64) -> Result<f64, WeightError> {
        if !(t > 0.0) {
            return Err(WeightError::NonPositiveT(t));
        }
        self.log_integral(-t, t, DEFAULT_TOL)
    }

    /// `(inf w, sup w)` with `None` for an unbounded supremum.
    ///
    /// Symbolic kinds have monotone tails, so the extremes are found from
    /// closed forms or from sampling plus critical points. Tabulated weights
    /// report the extremes of their samples only.
    pub fn bounds(&self) -> (f64, Option<f64>) {
        match &self.kind {
            WeightKind::Constant { c } => (*c, Some(*c)),
            WeightKind::Power { exponent, scale } => (*scale, if *exponent > 0.0 { None } else { Some(*scale) }),
            WeightKind::ExpAbs { c } => (*c, None),
            WeightKind::Tabulated { values, .. } => (
                values.iter().copied().fold(f64::INFINITY, f64::min),
                Some(values.iter().copied().fold(0.0, f64::max)),
            ),
            WeightKind::Polynomial { .. } => {
                let p = self.poly.as_ref().unwrap();
                if p.degree() == 0 {
                    return (p.leading(), Some(p.leading()));
                }
                let dp = p.derivative();
                let mut inf = dp.real_roots().into_iter().map(|x| p.eval(x)).fold(p.eval(0.0), f64::min);
                let r = dp.cauchy_bound() + 1.0;
                let steps = ((2.0 * r / 1e-2).ceil() as usize).min(1_000_000);
                for k in 0..=steps {
                    let x = -r + 2.0 * r * k as f64 / steps as f64;
                    inf = inf.min(p.eval(x));
                }
                (inf, None)
            }
        }
    }
}

fn interpolate(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let n = grid.len();
    if t <= grid[0] {
        return values[0];
    }
    if t >= grid[n - 1] {
        return values[n - 1];
    }
    let i = grid.partition_point(|g| *g <= t) - 1;
    let s = (t - grid[i]) / (grid[i + 1] - grid[i]);
    values[i] + s * (values[i + 1] - values[i])
}

/// Default absolute quadrature tolerance for masses.
pub const DEFAULT_TOL: f64 = 1e-9;

/// `int_{-T}^{T} w` to absolute tolerance `tol`.
pub fn weight_mass(w: &Weight, t: f64, tol: f64) -> Result<f64, WeightError> {
    if !(t > 0.0) {
        return Err(WeightError::NonPositiveT(t));
    }
    if !(tol > 0.0) {
        return Err(WeightError::QuadratureFailure(crate::error::QuadratureError::InvalidTolerance(tol)));
    }
    Ok(w.log_integral(-t, t, tol)?.exp())
}

/// Truncation schedule and stabilization rule for limit estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitConfig {
    pub schedule: Schedule,
    pub rel_tol: f64,
    pub divergence_cap: f64,
}

impl Default for LimitConfig {
    fn default() -> Self {
        Self { schedule: Schedule::limits(), rel_tol: 1e-3, divergence_cap: 1e6 }
    }
}

/// Default shifts used for translation criteria.
pub fn default_tau_grid() -> Vec<f64> {
    vec![-10.0, -1.0, 1.0, 10.0]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tail {
    Plus,
    Minus,
}

/// Limit estimate of one criterion at one shift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEvidence {
    pub tau: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tail: Option<Tail>,
    /// `(x or T, ratio)` pairs along the schedule.
    pub trace: Vec<[f64; 2]>,
    /// `None` when the ratio diverges.
    pub limit: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassEvidence {
    pub tau_grid: Vec<f64>,
    pub mass_trace: Vec<[f64; 2]>,
    /// `mu(x + tau) / mu(x)` as `x -> +-inf`.
    pub pointwise_ratio: Vec<RatioEvidence>,
    /// `mu(Q_{T + tau}) / mu(Q_T)`.
    pub mass_ratio: Vec<RatioEvidence>,
    /// `mu(Q_T + tau) / mu(Q_T)`.
    pub shifted_mass_ratio: Vec<RatioEvidence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub caveat: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightClassReport {
    pub in_u_inf: bool,
    pub in_u_b: bool,
    pub in_u_inv: bool,
    pub in_u_s: bool,
    pub in_u_0: bool,
    pub inf_estimate: f64,
    /// `None` when the weight is unbounded.
    pub sup_estimate: Option<f64>,
    pub evidence: ClassEvidence,
}

impl WeightClassReport {
    /// `C_tau = lim mu(Q_T + tau) / mu(Q_T)` if it was estimated for `tau`.
    pub fn shifted_mass_limit(&self, tau: f64) -> Option<f64> {
        self.evidence
            .shifted_mass_ratio
            .iter()
            .find(|e| (e.tau - tau).abs() < 1e-12)
            .and_then(|e| e.limit)
    }

    /// `sup_tau D_tau` over the tested shifts; `None` if any is infinite.
    pub fn mass_growth_bound(&self) -> Option<f64> {
        self.evidence
            .mass_ratio
            .iter()
            .try_fold(0.0f64, |acc, e| e.limit.map(|l| acc.max(l)))
    }
}

fn firm_limit(trace: &[[f64; 2]], cfg: &LimitConfig, criterion: String) -> Result<Option<f64>, WeightError> {
    let values: Vec<f64> = trace.iter().map(|p| p[1]).collect();
    match estimate_limit(&values, cfg.rel_tol, cfg.divergence_cap) {
        LimitOutcome::Finite(l) => Ok(Some(l)),
        LimitOutcome::Infinite => Ok(None),
        LimitOutcome::Inconclusive => Err(WeightError::InconclusiveLimit {
            criterion,
            last: values.iter().rev().take(3).rev().copied().collect(),
        }),
    }
}

/// Decides class membership from limit estimates along `cfg.schedule`.
pub fn classify_weight(w: &Weight, tau_grid: &[f64], cfg: &LimitConfig) -> Result<WeightClassReport, WeightError> {
    if tau_grid.is_empty() {
        return Err(WeightError::InvalidConfig("tau grid must not be empty".into()));
    }
    cfg.schedule.validate().map_err(WeightError::InvalidConfig)?;
    let (lo, hi) = w.extent();
    let half = lo.abs().min(hi.abs()).min(if lo < 0.0 && hi > 0.0 { f64::INFINITY } else { 0.0 });
    let points = cfg.schedule.points();

    let mass_trace = points
        .iter()
        .filter(|&&t| t <= half)
        .map(|&t| Ok([t, w.mass(t)?]))
        .collect::<Result<Vec<_>, WeightError>>()?;

    let (inf_estimate, sup_estimate) = w.bounds();
    // A positive infimum forces mu(Q_T) >= 2 mu_0 T, so the mass is unbounded.
    let in_u_inf = inf_estimate > 0.0;

    let mut pointwise_ratio = Vec::new();
    let mut mass_ratio = Vec::new();
    let mut shifted_mass_ratio = Vec::new();
    for &tau in tau_grid {
        for (tail, sign) in [(Tail::Plus, 1.0), (Tail::Minus, -1.0)] {
            let trace: Vec<[f64; 2]> = points
                .iter()
                .map(|&x| sign * x)
                .filter(|&x| x >= lo && x <= hi && x + tau >= lo && x + tau <= hi)
                .map(|x| [x, (w.log_eval(x + tau) - w.log_eval(x)).exp()])
                .collect();
            let limit = firm_limit(&trace, cfg, format!("mu(x + {tau})/mu(x) as x -> {:?}", tail))?;
            pointwise_ratio.push(RatioEvidence { tau, tail: Some(tail), trace, limit });
        }

        let usable: Vec<f64> = points
            .iter()
            .copied()
            .filter(|&t| t > tau.abs() && t + tau.abs() <= half)
            .collect();
        let mut growth = Vec::with_capacity(usable.len());
        let mut shifted = Vec::with_capacity(usable.len());
        for &t in &usable {
            let base = w.log_mass(t)?;
            growth.push([t, (w.log_mass(t + tau)? - base).exp()]);
            shifted.push([t, (w.log_integral(-t + tau, t + tau, DEFAULT_TOL)? - base).exp()]);
        }
        let limit = firm_limit(&growth, cfg, format!("mu(Q_(T + {tau}))/mu(Q_T)"))?;
        mass_ratio.push(RatioEvidence { tau, tail: None, trace: growth, limit });
        let limit = firm_limit(&shifted, cfg, format!("mu(Q_T + {tau})/mu(Q_T)"))?;
        shifted_mass_ratio.push(RatioEvidence { tau, tail: None, trace: shifted, limit });
    }

    let pointwise_finite = pointwise_ratio.iter().all(|e| e.limit.is_some());
    let mass_finite = mass_ratio.iter().all(|e| e.limit.is_some());
    let in_u_b = in_u_inf && sup_estimate.is_some();
    let in_u_inv = in_u_inf && pointwise_finite && mass_finite;
    // Every built-in kind is continuous.
    let in_u_s = in_u_inf && pointwise_finite;
    let in_u_0 = in_u_inf && mass_finite;

    let caveat = w
        .is_tabulated()
        .then(|| format!("verdicts use only grid data on [{lo}, {hi}]; the weight is extrapolated as a constant beyond it"));

    Ok(WeightClassReport {
        in_u_inf,
        in_u_b,
        in_u_inv,
        in_u_s,
        in_u_0,
        inf_estimate,
        sup_estimate,
        evidence: ClassEvidence {
            tau_grid: tau_grid.to_vec(),
            mass_trace,
            pointwise_ratio,
            mass_ratio,
            shifted_mass_ratio,
            caveat,
        },
    })
}

/// Outcome of the positivity test for polynomial weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMembership {
    pub member: bool,
    /// Irreducible quadratic factors when `member` holds.
    pub factored_form: Option<Vec<QuadraticFactor>>,
    pub leading: f64,
}

/// Decides whether a polynomial is a weight in `U_inf` and factors it into
/// `leading * prod (x^2 + a_k x + b_k)^{m_k}` with `a_k^2 < 4 b_k`.
pub fn polynomial_in_u_inf(coeffs: &[f64]) -> Result<PolynomialMembership, WeightError> {
    let max = coeffs.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let p = Polynomial::new(coeffs.to_vec());
    if p.degree() == 0 {
        return Err(WeightError::ConstantPolynomial);
    }
    let leading = p.leading();
    if leading.abs() < 1e-12 * max {
        return Err(WeightError::DegenerateCoefficients { leading, max });
    }
    let member = p.degree().is_multiple_of(2) && leading > 0.0 && p.eval(0.0) > 0.0 && p.real_roots().is_empty();
    if !member {
        return Ok(PolynomialMembership { member, factored_form: None, leading });
    }
    let factors = quadratic_factorization(&p, 1e-8).map_err(WeightError::FactorizationFailed)?;
    if factors.iter().any(|f| f.discriminant() >= 0.0) {
        return Err(WeightError::FactorizationFailed("a recovered factor has real roots".into()));
    }
    let rebuilt = crate::poly::expand_factors(leading, &factors);
    let err = relative_coefficient_error(p.coeffs(), rebuilt.coeffs());
    if err >= 1e-8 {
        return Err(WeightError::FactorizationFailed(format!("reconstruction error {err:e}")));
    }
    Ok(PolynomialMembership { member, factored_form: Some(factors), leading })
}

/// `max_k |a_k - b_k| / max_k |a_k|`.
pub fn relative_coefficient_error(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().max(b.len());
    let get = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
    let scale = a.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    (0..n).map(|k| (get(a, k) - get(b, k)).abs()).fold(0.0, f64::max) / scale
}

/// Numeric check that `mu / nu` is bounded above and away from zero.
///
/// The ratio is sampled densely on a central window and along both tails of
/// the schedule. A tail that falls monotonically below `1 / divergence_cap`
/// counts as vanishing.
pub fn equivalent_weights(mu: &Weight, nu: &Weight, cfg: &LimitConfig) -> Result<bool, WeightError> {
    cfg.schedule.validate().map_err(WeightError::InvalidConfig)?;
    let ratio = |x: f64| (mu.log_eval(x) - nu.log_eval(x)).exp();
    let (lo, hi) = {
        let (a, b) = mu.extent();
        let (c, d) = nu.extent();
        (a.max(c), b.min(d))
    };
    let central = 100.0f64.min(cfg.schedule.last());
    let mut min = f64::INFINITY;
    let mut max = 0.0f64;
    let steps = (2.0 * central / 1e-2) as usize;
    for k in 0..=steps {
        let x = -central + 2.0 * central * k as f64 / steps as f64;
        if x >= lo && x <= hi {
            let r = ratio(x);
            min = min.min(r);
            max = max.max(r);
        }
    }
    let floor = 1.0 / cfg.divergence_cap;
    for sign in [1.0, -1.0] {
        let xs: Vec<f64> = cfg
            .schedule
            .points()
            .into_iter()
            .map(|x| sign * x)
            .filter(|&x| x >= lo && x <= hi)
            .collect();
        let logs: Vec<f64> = xs.iter().map(|&x| mu.log_eval(x) - nu.log_eval(x)).collect();
        match log_tail(&logs, cfg.rel_tol, cfg.divergence_cap.ln()) {
            TailLimit::Divergent => return Ok(false),
            TailLimit::Finite(l) => {
                min = min.min(l.exp());
                max = max.max(l.exp());
            }
            TailLimit::Inconclusive => {
                return Err(WeightError::InconclusiveLimit {
                    criterion: "mu(x)/nu(x) along the tails".into(),
                    last: logs.iter().rev().take(3).rev().map(|l| l.exp()).collect(),
                })
            }
        }
    }
    Ok(max.is_finite() && min >= floor)
}

enum TailLimit {
    Finite(f64),
    Divergent,
    Inconclusive,
}

/// Tail behaviour of a log-ratio sequence. Symmetric under negation.
fn log_tail(logs: &[f64], rel_tol: f64, log_cap: f64) -> TailLimit {
    let n = logs.len();
    if n < 3 {
        return TailLimit::Inconclusive;
    }
    let last = &logs[n - 3..];
    if last.iter().any(|l| !l.is_finite()) || last[2].abs() > log_cap {
        return TailLimit::Divergent;
    }
    let d1 = last[1] - last[0];
    let d2 = last[2] - last[1];
    if d1.abs() <= rel_tol && d2.abs() <= rel_tol {
        return TailLimit::Finite(last[2]);
    }
    if d1.signum() == d2.signum() && d2.abs() > rel_tol && d2.abs() >= 0.9 * d1.abs() {
        return TailLimit::Divergent;
    }
    TailLimit::Inconclusive
}

/// `theta = lim nu(Q_T) / mu(Q_T)` along `cfg.schedule`.
pub fn theta(mu: &Weight, nu: &Weight, cfg: &LimitConfig) -> Result<MeanEstimate, WeightError> {
    cfg.schedule.validate().map_err(WeightError::InvalidConfig)?;
    let mut trace = Vec::new();
    for t in cfg.schedule.points() {
        let r = (nu.log_mass(t)? - mu.log_mass(t)?).exp();
        trace.push(TracePoint { t, value: vec![r.into()] });
    }
    let values: Vec<f64> = trace.iter().map(|p| p.value[0].re).collect();
    match estimate_limit(&values, cfg.rel_tol, cfg.divergence_cap) {
        LimitOutcome::Infinite => Err(WeightError::DivergentRatio { last: values[values.len() - 1] }),
        LimitOutcome::Inconclusive => Err(WeightError::InconclusiveLimit {
            criterion: "nu(Q_T)/mu(Q_T)".into(),
            last: values.iter().rev().take(3).rev().copied().collect(),
        }),
        LimitOutcome::Finite(_) => {
            let scale = values.iter().rev().take(3).fold(1.0f64, |m, v| m.max(v.abs()));
            let mut est = MeanEstimate::from_trace(trace, cfg.rel_tol * scale);
            est.converged = true;
            Ok(est)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_mass(w: &Weight, t: f64) -> f64 {
        quadrature::adaptive(|x| w.eval(x), -t, 0.0, 1e-11).unwrap().value
            + quadrature::adaptive(|x| w.eval(x), 0.0, t, 1e-11).unwrap().value
    }

    #[test]
    fn closed_form_masses_match_quadrature() {
        for w in [Weight::constant(1.0), Weight::power(2.0), Weight::exp_abs(1.0), Weight::scaled_power(1.5, 3.0)] {
            for t in [0.5, 1.0, 3.0, 7.0] {
                let m = weight_mass(&w, t, 1e-9).unwrap();
                assert!((m - quad_mass(&w, t)).abs() < 1e-8 * m.max(1.0), "{w:?} at {t}");
            }
        }
        assert!((weight_mass(&Weight::constant(1.0), 5.0, 1e-9).unwrap() - 10.0).abs() < 1e-12);
        assert!((weight_mass(&Weight::power(2.0), 3.0, 1e-9).unwrap() - 42.0).abs() < 1e-10);
        let e = std::f64::consts::E;
        assert!((weight_mass(&Weight::exp_abs(1.0), 1.0, 1e-9).unwrap() - 2.0 * (e - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn shifted_integrals_match_quadrature() {
        let w = Weight::exp_abs(2.0);
        for (a, b) in [(-3.0, 1.0), (0.5, 2.0), (-4.0, -1.0), (-1.0, 4.0)] {
            let q = quadrature::adaptive(|x| w.eval(x), a, b, 1e-12).unwrap().value;
            assert!((w.integral(a, b, 1e-9).unwrap() - q).abs() < 1e-10 * q);
        }
        let w = Weight::power(2.0);
        let q = quadrature::adaptive(|x| w.eval(x), -2.0, 5.0, 1e-12).unwrap().value;
        assert!((w.integral(-2.0, 5.0, 1e-9).unwrap() - q).abs() < 1e-9);
    }

    #[test]
    fn tabulated_mass_is_exact_for_interpolant() {
        let w = Weight::tabulated(vec![-1.0, 0.0, 2.0], vec![1.0, 3.0, 2.0]).unwrap();
        // trapezoids 2 + 5, plus constant tails of 1 and 2 on [-3,-1] and [2,3]
        assert!((w.mass(3.0).unwrap() - (2.0 + 5.0 + 2.0 + 2.0)).abs() < 1e-12);
        assert_eq!(w.eval(10.0), 2.0);
        assert_eq!(w.eval(1.0), 2.5);
    }

    #[test]
    fn exponential_mass_survives_overflow() {
        let w = Weight::exp_abs(1.0);
        let l = w.log_mass(1e6).unwrap();
        assert!((l - (2f64.ln() + 1e6)).abs() < 1e-9);
        assert!(w.mass(1e6).unwrap().is_infinite());
    }

    #[test]
    fn json_round_trip() {
        let w: Weight = serde_json::from_str(r#"{"kind":"power","N":2}"#).unwrap();
        assert_eq!(w, Weight::power(2.0));
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(serde_json::from_str::<Weight>(&s).unwrap(), w);
        assert!(serde_json::from_str::<Weight>(r#"{"kind":"power","N":2,"x":1}"#).is_err());
        assert!(serde_json::from_str::<Weight>(r#"{"kind":"constant","c":-1}"#).is_err());
        assert!(serde_json::from_str::<Weight>(r#"{"kind":"polynomial","coeffs":[-1,0,1]}"#).is_err());
    }

    #[test]
    fn classify_constant() {
        let r = classify_weight(&Weight::constant(1.0), &default_tau_grid(), &LimitConfig::default()).unwrap();
        assert!(r.in_u_inf && r.in_u_b && r.in_u_inv && r.in_u_s && r.in_u_0);
        assert_eq!(r.inf_estimate, 1.0);
        assert_eq!(r.sup_estimate, Some(1.0));
    }

    #[test]
    fn classify_quadratic_polynomial() {
        let w = Weight::polynomial(vec![1.0, 0.0, 1.0]).unwrap();
        let r = classify_weight(&w, &default_tau_grid(), &LimitConfig::default()).unwrap();
        assert!(r.in_u_inf && !r.in_u_b && r.in_u_s && r.in_u_inv);
        assert!((r.inf_estimate - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classify_exponential() {
        let r = classify_weight(&Weight::exp_abs(1.0), &[1.0, -1.0], &LimitConfig::default()).unwrap();
        assert!(r.in_u_inf && r.in_u_s && !r.in_u_b);
        let plus = r.evidence.pointwise_ratio.iter().find(|e| e.tau == 1.0 && e.tail == Some(Tail::Plus)).unwrap();
        let x = 50.0f64;
        let oracle = ((x + 1.0).abs().exp()) / x.abs().exp();
        assert!((plus.limit.unwrap() - oracle).abs() < 1e-9);
        // C_1 = lim (e^{T+1} + e^{T-1}) / (2 e^T) = cosh 1
        assert!((r.shifted_mass_limit(1.0).unwrap() - 1f64.cosh()).abs() < 1e-9);
    }

    #[test]
    fn short_tabulated_grid_is_inconclusive() {
        let w = Weight::tabulated(vec![-3.0, 0.0, 3.0], vec![1.0, 2.0, 1.0]).unwrap();
        let r = classify_weight(&w, &default_tau_grid(), &LimitConfig::default());
        assert!(matches!(r, Err(WeightError::InconclusiveLimit { .. })));
    }

    #[test]
    fn membership_examples() {
        let m = polynomial_in_u_inf(&[1.0, 0.0, 1.0]).unwrap();
        assert!(m.member);
        assert_eq!(m.factored_form.unwrap(), vec![QuadraticFactor { a: 0.0, b: 1.0, multiplicity: 1 }]);
        assert!(!polynomial_in_u_inf(&[1.0, 0.0, 0.0, 1.0]).unwrap().member);
        assert!(!polynomial_in_u_inf(&[-1.0, 0.0, 1.0]).unwrap().member);
        assert!(!polynomial_in_u_inf(&[1.0, -2.0, 1.0]).unwrap().member);
        assert_eq!(polynomial_in_u_inf(&[3.0]), Err(WeightError::ConstantPolynomial));
        assert!(matches!(
            polynomial_in_u_inf(&[1.0, 0.0, 1e-14]),
            Err(WeightError::DegenerateCoefficients { .. })
        ));
    }

    #[test]
    fn repeated_factor_is_recovered() {
        // (x^2 + x + 1)^2 (x^2 + 4) expanded by hand
        let p = Polynomial::new(vec![1.0, 1.0, 1.0]).pow(2).mul(&Polynomial::new(vec![4.0, 0.0, 1.0]));
        let m = polynomial_in_u_inf(p.coeffs()).unwrap();
        let f = m.factored_form.unwrap();
        assert_eq!(f.len(), 2);
        assert!((f[0].a).abs() < 1e-8 && (f[0].b - 4.0).abs() < 1e-8 && f[0].multiplicity == 1);
        assert!((f[1].a - 1.0).abs() < 1e-8 && (f[1].b - 1.0).abs() < 1e-8 && f[1].multiplicity == 2);
    }

    #[test]
    fn equivalence_examples() {
        let cfg = LimitConfig::default();
        assert!(equivalent_weights(&Weight::constant(2.0), &Weight::constant(3.0), &cfg).unwrap());
        assert!(equivalent_weights(&Weight::power(2.0), &Weight::scaled_power(2.0, 5.0), &cfg).unwrap());
        assert!(!equivalent_weights(&Weight::power(2.0), &Weight::exp_abs(1.0), &cfg).unwrap());
        assert!(!equivalent_weights(&Weight::exp_abs(1.0), &Weight::power(2.0), &cfg).unwrap());
    }

    #[test]
    fn theta_examples() {
        let cfg = LimitConfig::default();
        let t = theta(&Weight::constant(1.0), &Weight::constant(1.0), &cfg).unwrap();
        assert!((t.scalar().re - 1.0).abs() < 1e-12);
        let t = theta(&Weight::constant(2.0), &Weight::constant(1.0), &cfg).unwrap();
        assert!((t.scalar().re - 0.5).abs() < 1e-12);
        let t = theta(&Weight::exp_abs(1.0), &Weight::power(2.0), &cfg).unwrap();
        assert!(t.scalar().re < 1e-12);
        assert!(matches!(
            theta(&Weight::constant(1.0), &Weight::power(2.0), &cfg),
            Err(WeightError::DivergentRatio { .. })
        ));
    }
}
