//! Classical and doubly-weighted means, Bohr transforms and spectra.
//!
//! Truncated means `(1 / mu(Q_T)) int_{Q_T} f nu` are accumulated outward
//! from the origin in symmetric Gauss–Legendre panel pairs. After every pair
//! the running sum is rescaled by `mu(Q_T_old) / mu(Q_T_new)` in log space,
//! so the accumulator always holds the partial mean itself and exponential
//! weights never overflow.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use crate::estimate::MeanEstimate;
use crate::error::{SpectralError, WeightError};
use crate::estimate::{Schedule, TracePoint};
use crate::quadrature::GaussLegendre;
use crate::signals::{vec_norm, PAPFunction, TrigPolynomial};
use crate::weights::{self, LimitConfig, Weight};

/// Truncation schedule and convergence tolerance of a mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanConfig {
    pub schedule: Schedule,
    pub tol: f64,
}

impl Default for MeanConfig {
    fn default() -> Self {
        Self { schedule: Schedule::means(), tol: 1e-3 }
    }
}

impl MeanConfig {
    pub fn new(schedule: Schedule, tol: f64) -> Self {
        Self { schedule, tol }
    }
}

/// A truncated mean plus the running maximum of `|partial mean|` between
/// consecutive schedule points.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRun {
    pub estimate: MeanEstimate,
    pub envelope: Vec<f64>,
}

/// Core accumulator: `(1 / mu(Q_T)) int_{Q_T} f(t) nu(t) dt` along the
/// schedule, with `f` written into its buffer (zeroed before each call).
pub(crate) fn run_mean<F, N, M>(
    dim: usize,
    mut f: F,
    log_nu: N,
    log_mu_mass: M,
    schedule: &Schedule,
    max_width: f64,
    tol: f64,
) -> Result<MeanRun, WeightError>
where
    F: FnMut(f64, &mut [Complex64]),
    N: Fn(f64) -> f64,
    M: Fn(f64) -> Result<f64, WeightError>,
{
    schedule.validate().map_err(WeightError::InvalidConfig)?;
    let per_t0 = (schedule.t0 / max_width).ceil().max(1.0) as usize;
    let w = schedule.t0 / per_t0 as f64;
    let rule = GaussLegendre::eight();
    let mut acc = vec![Complex64::new(0.0, 0.0); dim];
    let mut buf = vec![Complex64::new(0.0, 0.0); dim];
    let mut log_prev = f64::NEG_INFINITY;
    let mut trace = Vec::with_capacity(schedule.doublings as usize + 1);
    let mut envelope = Vec::with_capacity(schedule.doublings as usize + 1);
    let mut env = 0.0f64;
    let mut next_mark = per_t0;
    let mut s = 0usize;
    for j in 0..=schedule.doublings {
        let t_j = schedule.t0 * f64::powi(2.0, j as i32);
        while s < next_mark {
            s += 1;
            let b = if s == next_mark { t_j } else { w * s as f64 };
            let a = w * (s - 1) as f64;
            let log_mass = log_mu_mass(b)?;
            let shrink = (log_prev - log_mass).exp();
            acc.iter_mut().for_each(|z| *z *= shrink);
            let half = 0.5 * (b - a);
            for side in [1.0, -1.0] {
                let mid = side * 0.5 * (a + b);
                for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
                    let t = mid + side * half * x;
                    buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
                    f(t, &mut buf);
                    let k = wt * half * (log_nu(t) - log_mass).exp();
                    for (z, v) in acc.iter_mut().zip(&buf) {
                        *z += v * k;
                    }
                }
            }
            log_prev = log_mass;
            env = env.max(vec_norm(&acc));
        }
        if acc.iter().any(|z| !z.is_finite()) {
            return Err(WeightError::QuadratureFailure(crate::error::QuadratureError::NonFinite { a: -t_j, b: t_j }));
        }
        trace.push(TracePoint { t: t_j, value: acc.clone() });
        envelope.push(env);
        env = 0.0;
        next_mark *= 2;
    }
    Ok(MeanRun { estimate: MeanEstimate::from_trace(trace, tol), envelope })
}

fn require_converged(e: MeanEstimate) -> Result<MeanEstimate, SpectralError> {
    if e.converged {
        Ok(e)
    } else {
        Err(SpectralError::NotConverged(Box::new(e)))
    }
}

fn lebesgue_log_mass(t: f64) -> Result<f64, WeightError> {
    Ok((2.0 * t).ln())
}

/// `(1 / 2T) int_{Q_T} f(t) e^{-i lambda t} dt` along the schedule, without
/// the convergence gate.
pub fn bohr_trace(f: &PAPFunction, lambda: f64, cfg: &MeanConfig) -> Result<MeanEstimate, SpectralError> {
    let run = run_mean(
        f.dim(),
        |t, out| {
            f.eval_into(t, out);
            let e = Complex64::cis(-lambda * t);
            out.iter_mut().for_each(|z| *z *= e);
        },
        |_| 0.0,
        lebesgue_log_mass,
        &cfg.schedule,
        f.resolution(lambda),
        cfg.tol,
    )?;
    Ok(run.estimate)
}

/// Classical mean `M(f)`.
pub fn classical_mean(f: &PAPFunction, cfg: &MeanConfig) -> Result<MeanEstimate, SpectralError> {
    bohr_transform(f, 0.0, cfg)
}

/// Bohr coefficient `a(f, lambda)`.
pub fn bohr_transform(f: &PAPFunction, lambda: f64, cfg: &MeanConfig) -> Result<MeanEstimate, SpectralError> {
    require_converged(bohr_trace(f, lambda, cfg)?)
}

/// Verdict on the vanishing of `(1 / mu(Q_T)) int_{Q_T} e^{i lambda t} nu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationCheck {
    pub holds: bool,
    pub lambda: f64,
    /// `(T, |partial value|)`.
    pub trace: Vec<[f64; 2]>,
    /// Largest `|partial value|` between consecutive schedule points.
    pub envelope: Vec<f64>,
}

/// Decay threshold of the oscillation check.
pub const OSCILLATION_THRESHOLD: f64 = 1e-3;

/// Evaluates the oscillatory weighted integral along the schedule. It holds
/// when the running envelope ends below `1e-3` and does not increase over
/// its last five entries.
pub fn check_eq31(mu: &Weight, nu: &Weight, lambda: f64, schedule: &Schedule) -> Result<OscillationCheck, SpectralError> {
    if lambda == 0.0 {
        return Err(SpectralError::ZeroLambda);
    }
    let run = run_mean(
        1,
        |t, out| out[0] = Complex64::cis(lambda * t),
        |t| nu.log_eval(t),
        |t| mu.log_mass(t),
        schedule,
        crate::quadrature::oscillatory_width(lambda.abs(), 1.0),
        OSCILLATION_THRESHOLD,
    )?;
    let env = &run.envelope;
    if env.len() < 5 {
        return Err(SpectralError::InconclusiveLimit(format!(
            "oscillation check needs at least 5 schedule points, got {}",
            env.len()
        )));
    }
    let tail = &env[env.len() - 5..];
    let holds = env[env.len() - 1] < OSCILLATION_THRESHOLD && tail.windows(2).all(|w| w[1] <= w[0]);
    let trace = run.estimate.trace.iter().map(|p| [p.t, p.value[0].norm()]).collect();
    Ok(OscillationCheck { holds, lambda, trace, envelope: run.envelope })
}

fn theta_value(mu: &Weight, nu: &Weight) -> Result<f64, SpectralError> {
    weights::theta(mu, nu, &LimitConfig::default())
        .map(|e| e.scalar().re)
        .map_err(SpectralError::ThetaUndefined)
}

fn require_eq31(mu: &Weight, nu: &Weight, freqs: impl IntoIterator<Item = f64>, schedule: &Schedule) -> Result<(), SpectralError> {
    // offsets that do not complete a hundredth of a radian over the schedule
    // are indistinguishable from zero frequency
    let unresolved = 1e-2 / schedule.last();
    for lambda in freqs {
        if lambda.abs() > unresolved && !check_eq31(mu, nu, lambda, schedule)?.holds {
            return Err(SpectralError::PreconditionEq31Failed { lambda });
        }
    }
    Ok(())
}

fn weighted_run(f: &PAPFunction, mu: &Weight, nu: &Weight, lambda: f64, shift: f64, cfg: &MeanConfig) -> Result<MeanEstimate, SpectralError> {
    let run = run_mean(
        f.dim(),
        |t, out| {
            f.eval_into(t + shift, out);
            if lambda != 0.0 {
                let e = Complex64::cis(-lambda * t);
                out.iter_mut().for_each(|z| *z *= e);
            }
        },
        |t| nu.log_eval(t + shift),
        |t| mu.log_mass(t),
        &cfg.schedule,
        f.resolution(lambda),
        cfg.tol,
    )?;
    Ok(run.estimate)
}

/// `M(f, mu, nu) = lim (1 / mu(Q_T)) int_{Q_T} f nu`.
pub fn doubly_weighted_mean(f: &PAPFunction, mu: &Weight, nu: &Weight, cfg: &MeanConfig) -> Result<MeanEstimate, SpectralError> {
    doubly_weighted_bohr(f, mu, nu, 0.0, cfg)
}

/// `a_{mu nu}(f)(lambda)`: the doubly-weighted mean of `f(t) e^{-i lambda t}`.
pub fn doubly_weighted_bohr(f: &PAPFunction, mu: &Weight, nu: &Weight, lambda: f64, cfg: &MeanConfig) -> Result<MeanEstimate, SpectralError> {
    theta_value(mu, nu)?;
    require_eq31(mu, nu, f.ap.frequencies().into_iter().map(|w| w - lambda), &cfg.schedule)?;
    require_converged(weighted_run(f, mu, nu, lambda, 0.0, cfg)?)
}

/// `M(f_a, mu, nu_a) = lim (1 / mu(Q_T)) int_{Q_T} f(t + a) nu(t + a) dt`.
///
/// Both weights must have finite mass-growth limits.
pub fn translated_mean(f: &PAPFunction, mu: &Weight, nu: &Weight, a: f64, cfg: &MeanConfig) -> Result<MeanEstimate, SpectralError> {
    let taus = [-a.abs().max(1.0), a.abs().max(1.0)];
    let limits = LimitConfig::default();
    if !weights::classify_weight(mu, &taus, &limits)?.in_u_0 {
        return Err(SpectralError::NotInU0 { which: "mu" });
    }
    if !weights::classify_weight(nu, &taus, &limits)?.in_u_0 {
        return Err(SpectralError::NotInU0 { which: "nu" });
    }
    theta_value(mu, nu)?;
    require_eq31(mu, nu, f.ap.frequencies(), &cfg.schedule)?;
    require_converged(weighted_run(f, mu, nu, 0.0, a, cfg)?)
}

/// `lim nu(Q_T + a) / nu(Q_T)`, the factor relating translated and plain
/// doubly-weighted means.
pub fn translation_factor(nu: &Weight, a: f64) -> Result<f64, SpectralError> {
    if a == 0.0 {
        return Ok(1.0);
    }
    let r = weights::classify_weight(nu, &[a], &LimitConfig::default())?;
    r.shifted_mass_limit(a)
        .ok_or_else(|| SpectralError::InconclusiveLimit(format!("shifted mass ratio of nu at {a} diverges")))
}

/// Weighted mean of `|phi(t - s)|` for a scalar or vector perturbation.
pub fn weighted_norm_mean(f: &PAPFunction, mu: &Weight, nu: &Weight, shift: f64, cfg: &MeanConfig) -> Result<MeanEstimate, SpectralError> {
    let mut buf = vec![Complex64::new(0.0, 0.0); f.dim()];
    let run = run_mean(
        1,
        |t, out| {
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            f.eval_into(t - shift, &mut buf);
            out[0] = Complex64::new(vec_norm(&buf), 0.0);
        },
        |t| nu.log_eval(t),
        |t| mu.log_mass(t),
        &cfg.schedule,
        f.resolution(0.0),
        cfg.tol,
    )?;
    Ok(run.estimate)
}

/// Per-shift verdict of the translation test for ergodic perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationCheck {
    pub ok: bool,
    pub shifts: Vec<f64>,
    pub final_means: Vec<f64>,
}

/// Checks that `t -> phi(t - s)` keeps a vanishing weighted mean of its norm
/// for every shift, i.e. the ergodic class is stable under these shifts for
/// the given weights.
pub fn translation_invariance(phi: &PAPFunction, mu: &Weight, nu: &Weight, shifts: &[f64], cfg: &MeanConfig) -> Result<TranslationCheck, SpectralError> {
    let mut final_means = Vec::with_capacity(shifts.len());
    let mut ok = true;
    for &s in shifts {
        let e = weighted_norm_mean(phi, mu, nu, s, cfg)?;
        let values: Vec<f64> = e.trace.iter().map(|p| p.value[0].re).collect();
        ok &= crate::estimate::decays(&values, cfg.tol);
        final_means.push(e.scalar().re);
    }
    Ok(TranslationCheck { ok, shifts: shifts.to_vec(), final_means })
}

/// Which branch of the empty-or-equal alternative a spectrum falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DichotomyCase {
    Empty,
    EqualsClassical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub lambda: f64,
    pub coefficient: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Doubly-weighted spectrum with its coefficients.
    pub lambdas: Vec<SpectralLine>,
    pub theta: f64,
    pub dichotomy_case: DichotomyCase,
    /// Classical Bohr spectrum with its coefficients.
    pub classical: Vec<SpectralLine>,
    /// Mean of `|f - detected lines|` over the widest scan window.
    pub residual_mean: f64,
    pub warnings: Vec<String>,
}

impl SpectrumReport {
    pub fn lambda_set(&self) -> Vec<f64> {
        self.lambdas.iter().map(|l| l.lambda).collect()
    }

    pub fn classical_set(&self) -> Vec<f64> {
        self.classical.iter().map(|l| l.lambda).collect()
    }
}

/// Settings of [`scan_spectrum`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub mean: MeanConfig,
    /// Relative threshold for a nonzero coefficient.
    pub threshold: f64,
    /// Upper bound of the detection half-width.
    pub max_scan_width: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self { mean: MeanConfig::default(), threshold: 1e-3, max_scan_width: 4096.0 }
    }
}

/// Hann-windowed transform `(1/T) int_{-T}^{T} f(t) e^{-i lambda t} cos^2(pi t / 2T) dt`
/// on precomputed uniform samples.
struct WindowedSamples {
    times: Vec<f64>,
    values: Vec<Vec<Complex64>>,
    step: f64,
    half: f64,
}

impl WindowedSamples {
    fn new(f: &PAPFunction, half: f64, step: f64) -> Self {
        let n = (2.0 * half / step).ceil() as usize;
        let h = 2.0 * half / n as f64;
        let mut times = Vec::with_capacity(n + 1);
        let mut values = Vec::with_capacity(n + 1);
        for i in 0..=n {
            let t = -half + h * i as f64;
            let w = (std::f64::consts::FRAC_PI_2 * t / half).cos().powi(2);
            times.push(t);
            values.push(f.eval(t).into_iter().map(|z| z * w).collect());
        }
        Self { times, values, step: h, half }
    }

    fn transform(&self, lambda: f64) -> Vec<Complex64> {
        let dim = self.values[0].len();
        let mut acc = vec![Complex64::new(0.0, 0.0); dim];
        let rot = Complex64::cis(-lambda * self.step);
        let mut e = Complex64::cis(-lambda * self.times[0]);
        for (i, v) in self.values.iter().enumerate() {
            if i % 256 == 0 {
                e = Complex64::cis(-lambda * self.times[i]);
            }
            for (a, x) in acc.iter_mut().zip(v) {
                *a += x * e;
            }
            e *= rot;
        }
        acc.iter().map(|a| a * (self.step / self.half)).collect()
    }

    fn magnitude(&self, lambda: f64) -> f64 {
        vec_norm(&self.transform(lambda))
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Locates the Bohr spectrum of `f` on `lambda_grid` and reports the
/// doubly-weighted spectrum, which is empty when `theta = 0` and equal to the
/// classical one otherwise.
///
/// Detection uses Hann-windowed transforms whose width is matched to the
/// grid spacing, so off-grid frequencies still peak at a neighbouring grid
/// point while side lobes of other lines stay far below the threshold. Each
/// peak is refined by golden-section search at doubling window widths and
/// kept only when its windowed magnitude is stable under the last doubling,
/// which discards the decaying contribution of ergodic perturbations.
pub fn scan_spectrum(f: &PAPFunction, mu: &Weight, nu: &Weight, lambda_grid: &[f64], cfg: &ScanConfig) -> Result<SpectrumReport, SpectralError> {
    let theta = theta_value(mu, nu)?;
    let sup = f.sup_bound();
    let level = cfg.threshold * sup;
    let mut warnings = Vec::new();

    let mut grid: Vec<f64> = lambda_grid.iter().copied().filter(|x| x.is_finite()).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut classical = Vec::new();
    if sup > 0.0 && !grid.is_empty() {
        let spacing = grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
        let half0 = if spacing.is_finite() {
            (std::f64::consts::PI / spacing).min(cfg.max_scan_width)
        } else {
            cfg.max_scan_width
        };
        let bandwidth = f.ap.max_frequency() + grid.iter().fold(0.0f64, |m, x| m.max(x.abs())) + 1.0;
        let step = (std::f64::consts::PI / (2.0 * bandwidth)).min(0.2);

        let samples = WindowedSamples::new(f, half0, step);
        let mags: Vec<f64> = grid.par_iter().map(|&l| samples.magnitude(l)).collect();
        let mut peaks: Vec<(f64, f64)> = Vec::new();
        for i in 0..grid.len() {
            let left = if i > 0 { mags[i - 1] } else { 0.0 };
            let right = if i + 1 < grid.len() { mags[i + 1] } else { 0.0 };
            if mags[i] > level && mags[i] >= left && mags[i] >= right {
                peaks.push((grid[i], mags[i]));
            }
        }
        let lobe = 2.0 * std::f64::consts::PI / half0;
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for p in peaks {
            match merged.last_mut() {
                Some(last) if p.0 - last.0 <= lobe => {
                    if p.1 > last.1 {
                        *last = p;
                    }
                }
                _ => merged.push(p),
            }
        }

        let stages: Vec<WindowedSamples> = (1..=3)
            .map(|s| WindowedSamples::new(f, half0 * f64::powi(2.0, s), step))
            .collect();
        let refined: Vec<Option<f64>> = merged
            .par_iter()
            .map(|&(l0, _)| {
                let mut l = golden_max(|x| samples.magnitude(x), l0 - std::f64::consts::PI / half0, l0 + std::f64::consts::PI / half0);
                let mut prev = samples.magnitude(l);
                let mut cur = prev;
                for st in &stages {
                    let r = std::f64::consts::PI / st.half;
                    l = golden_max(|x| st.magnitude(x), l - r, l + r);
                    prev = cur;
                    cur = st.magnitude(l);
                }
                (cur > level && (cur - prev).abs() <= 0.1 * cur).then_some(l)
            })
            .collect();

        let lines: Vec<f64> = refined.into_iter().flatten().collect();
        let coeffs: Vec<Result<MeanEstimate, SpectralError>> =
            lines.par_iter().map(|&l| bohr_trace(f, l, &cfg.mean)).collect();
        for (l, c) in lines.iter().zip(coeffs) {
            let c = c?;
            if !c.converged {
                warnings.push(format!("Bohr coefficient at {l} did not converge"));
            }
            classical.push(SpectralLine { lambda: *l, coefficient: c.value });
        }
    }

    let found = TrigPolynomial::new(
        f.dim(),
        classical
            .iter()
            .map(|l| crate::signals::TrigTerm { freq: l.lambda, amp: l.coefficient.clone() })
            .collect(),
    )?;
    let residual_mean = residual_mean(f, &found, cfg.max_scan_width);
    if residual_mean > level && sup > 0.0 {
        warnings.push(format!(
            "missing frequencies: residual mean {residual_mean:.3e} exceeds threshold {level:.3e}; extend the lambda grid"
        ));
    }

    let (dichotomy_case, lambdas) = if theta.abs() < cfg.mean.tol {
        (DichotomyCase::Empty, Vec::new())
    } else {
        let mut lambdas = Vec::with_capacity(classical.len());
        for line in &classical {
            let c = doubly_weighted_bohr(f, mu, nu, line.lambda, &cfg.mean)?;
            lambdas.push(SpectralLine { lambda: line.lambda, coefficient: c.value });
        }
        (DichotomyCase::EqualsClassical, lambdas)
    };
    Ok(SpectrumReport { lambdas, theta, dichotomy_case, classical, residual_mean, warnings })
}

/// `(1/2T) int_{-T}^{T} |f - p|` on a uniform grid.
fn residual_mean(f: &PAPFunction, p: &TrigPolynomial, half: f64) -> f64 {
    let omega = f.ap.max_frequency().max(p.max_frequency()) + 1.0;
    let step = (std::f64::consts::PI / (4.0 * omega)).min(0.1);
    let n = (2.0 * half / step).ceil() as usize;
    let h = 2.0 * half / n as f64;
    let neg = Complex64::new(-1.0, 0.0);
    let p = p.scale(neg);
    let mut buf = vec![Complex64::new(0.0, 0.0); f.dim()];
    let mut acc = 0.0;
    for i in 0..=n {
        let t = -half + h * i as f64;
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        f.eval_into(t, &mut buf);
        p.eval_into(t, &mut buf);
        let w = if i == 0 || i == n { 0.5 } else { 1.0 };
        acc += w * vec_norm(&buf);
    }
    acc * h / (2.0 * half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{DecayProfile, ErgodicPerturbation};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn tone(freq: f64, a: f64) -> PAPFunction {
        TrigPolynomial::scalar(&[(freq, c(a))]).into()
    }

    #[test]
    fn classical_means() {
        let cfg = MeanConfig::default();
        let f: PAPFunction = TrigPolynomial::scalar(&[(0.0, c(3.0)), (1.0, c(1.0))]).into();
        assert!((classical_mean(&f, &cfg).unwrap().scalar() - 3.0).norm() < 1e-3);
        let e = classical_mean(&tone(1.0, 1.0), &cfg).unwrap();
        // partial means are sin(T)/T
        for p in &e.trace {
            assert!((p.value[0].re - p.t.sin() / p.t).abs() < 1e-10, "{p:?}");
        }
    }

    #[test]
    fn bohr_examples() {
        let cfg = MeanConfig::default();
        assert!((bohr_transform(&tone(2.0, 3.0), 2.0, &cfg).unwrap().scalar() - 3.0).norm() < 1e-12);
        assert!(bohr_transform(&tone(2.0, 3.0), 1.0, &cfg).unwrap().scalar().norm() < 1e-3);
        let f: PAPFunction = TrigPolynomial::scalar(&[(1.0, c(1.0)), (2f64.sqrt(), c(1.0))]).into();
        let e = bohr_transform(&f, 2f64.sqrt(), &cfg).unwrap();
        let t = e.trace.last().unwrap().t;
        let d = 1.0 - 2f64.sqrt();
        let oracle = Complex64::new(1.0 + (d * t).sin() / (d * t), 0.0);
        assert!((e.scalar() - oracle).norm() < 1e-10);
    }

    #[test]
    fn exponential_accumulation_matches_closed_form() {
        // (1 / 2(e^T - 1)) int_{-T}^{T} e^{|t|} = 1
        let run = run_mean(1, |_, o| o[0] = c(1.0), |t| t.abs(), |t| Weight::exp_abs(1.0).log_mass(t), &Schedule::new(1.0, 12), 1.0, 1e-3).unwrap();
        for p in &run.estimate.trace {
            assert!((p.value[0].re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn oscillation_examples() {
        let s = Schedule::means();
        assert!(check_eq31(&Weight::constant(1.0), &Weight::constant(1.0), 1.0, &s).unwrap().holds);
        assert!(check_eq31(&Weight::power(2.0), &Weight::power(2.0), std::f64::consts::PI, &s).unwrap().holds);
        assert!(check_eq31(&Weight::exp_abs(1.0), &Weight::power(2.0), 1.0, &s).unwrap().holds);
        assert!(!check_eq31(&Weight::exp_abs(1.0), &Weight::exp_abs(1.0), 1.0, &s).unwrap().holds);
        assert_eq!(check_eq31(&Weight::constant(1.0), &Weight::constant(1.0), 0.0, &s), Err(SpectralError::ZeroLambda));
    }

    #[test]
    fn weighted_mean_examples() {
        let cfg = MeanConfig::default();
        let five = tone(0.0, 5.0);
        let m = doubly_weighted_mean(&five, &Weight::constant(2.0), &Weight::constant(1.0), &cfg).unwrap();
        assert!((m.scalar() - 2.5).norm() < 1e-12);
        let f: PAPFunction = TrigPolynomial::scalar(&[(0.0, c(3.0)), (1.0, c(1.0))]).into();
        let m = doubly_weighted_mean(&f, &Weight::constant(1.0), &Weight::constant(1.0), &cfg).unwrap();
        assert!((m.scalar() - 3.0).norm() < 1e-3);
        let m = doubly_weighted_mean(&f, &Weight::exp_abs(1.0), &Weight::power(2.0), &cfg).unwrap();
        assert!(m.scalar().norm() < 1e-6);
        let b = doubly_weighted_bohr(&tone(3.0, 4.0), &Weight::constant(2.0), &Weight::constant(1.0), 3.0, &cfg).unwrap();
        assert!((b.scalar() - 2.0).norm() < 1e-12);
        assert!(matches!(
            doubly_weighted_mean(&tone(1.0, 1.0), &Weight::exp_abs(1.0), &Weight::exp_abs(1.0), &cfg),
            Err(SpectralError::PreconditionEq31Failed { .. })
        ));
        assert!(matches!(
            doubly_weighted_mean(&five, &Weight::constant(1.0), &Weight::power(2.0), &cfg),
            Err(SpectralError::ThetaUndefined(_))
        ));
    }

    #[test]
    fn translated_mean_examples() {
        let cfg = MeanConfig::default();
        let f: PAPFunction = TrigPolynomial::scalar(&[(0.0, c(2.0)), (1.0, c(1.0))]).into();
        let one = Weight::constant(1.0);
        assert!((translated_mean(&f, &one, &one, 7.0, &cfg).unwrap().scalar() - 2.0).norm() < 1e-3);
        let p2 = Weight::power(2.0);
        let m = translated_mean(&tone(0.0, 5.0), &p2, &p2, 3.0, &cfg).unwrap();
        let factor = translation_factor(&p2, 3.0).unwrap();
        assert!((factor - 1.0).abs() < 1e-3);
        assert!((m.scalar() - 5.0 * factor).norm() < 2e-3);
        let m = translated_mean(&f, &Weight::exp_abs(1.0), &p2, 1.0, &cfg).unwrap();
        assert!(m.scalar().norm() < 1e-6);
    }

    #[test]
    fn spectrum_of_sum_with_bump() {
        let f = PAPFunction::new(
            TrigPolynomial::scalar(&[(1.0, c(1.0)), (2f64.sqrt(), c(2.0))]),
            vec![ErgodicPerturbation::scalar(DecayProfile::gaussian(1.0))],
        )
        .unwrap();
        let grid: Vec<f64> = (0..=300).map(|k| k as f64 * 0.01).collect();
        let one = Weight::constant(1.0);
        let r = scan_spectrum(&f, &one, &one, &grid, &ScanConfig::default()).unwrap();
        assert_eq!(r.dichotomy_case, DichotomyCase::EqualsClassical);
        assert_eq!(r.classical.len(), 2, "{r:?}");
        assert!((r.classical[0].lambda - 1.0).abs() < 1e-6);
        assert!((r.classical[1].lambda - 2f64.sqrt()).abs() < 1e-6);
        assert!((r.classical[0].coefficient[0] - 1.0).norm() < 1e-3);
        assert!((r.classical[1].coefficient[0] - 2.0).norm() < 1e-3);
        assert!(r.warnings.is_empty(), "{:?}", r.warnings);
        let r = scan_spectrum(&f, &Weight::exp_abs(1.0), &Weight::power(2.0), &grid, &ScanConfig::default()).unwrap();
        assert_eq!(r.dichotomy_case, DichotomyCase::Empty);
        assert!(r.lambdas.is_empty());
        let r = scan_spectrum(&PAPFunction::zero(1), &one, &one, &grid, &ScanConfig::default()).unwrap();
        assert!(r.classical.is_empty() && r.lambdas.is_empty());
    }
}
