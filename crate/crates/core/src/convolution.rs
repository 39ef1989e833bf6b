//! Convolution with integrable kernels and stability of ergodic perturbations.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ConvolutionError, StabilityCondition, WeightError};
use crate::estimate::{decays, MeanEstimate};
use crate::quadrature::{oscillatory_width, Panels};
use crate::signals::{vec_norm, PAPFunction, TrigPolynomial};
use crate::spectral::{self, MeanConfig};
use crate::trace::SampledTrace;
use crate::weights::{self, LimitConfig, Weight};

/// Serialized form of a kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelKind {
    /// `c * e^{-a |t|}`
    TwoSidedExp { c: f64, a: f64 },
    /// `c * e^{-t^2 / (2 sigma^2)}`
    Gaussian { c: f64, sigma: f64 },
    /// Linear interpolation on `grid`, zero outside it.
    CompactSupport { grid: Vec<f64>, values: Vec<f64> },
}

/// A validated kernel with its `L^1` norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelKind", into = "KernelKind")]
pub struct Kernel {
    kind: KernelKind,
    l1_norm: f64,
}

impl From<Kernel> for KernelKind {
    fn from(k: Kernel) -> Self {
        k.kind
    }
}

impl TryFrom<KernelKind> for Kernel {
    type Error = ConvolutionError;

    fn try_from(kind: KernelKind) -> Result<Self, Self::Error> {
        Kernel::new(kind)
    }
}

impl Kernel {
    pub fn new(kind: KernelKind) -> Result<Self, ConvolutionError> {
        let bad = |m: &str| Err(ConvolutionError::InvalidKernel(m.into()));
        let l1_norm = match &kind {
            KernelKind::TwoSidedExp { c, a } => {
                if !(c.is_finite() && a.is_finite() && *a > 0.0) {
                    return bad("two-sided exponential needs finite c and a > 0");
                }
                2.0 * c.abs() / a
            }
            KernelKind::Gaussian { c, sigma } => {
                if !(c.is_finite() && sigma.is_finite() && *sigma > 0.0) {
                    return bad("gaussian kernel needs finite c and sigma > 0");
                }
                c.abs() * sigma * (2.0 * std::f64::consts::PI).sqrt()
            }
            KernelKind::CompactSupport { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return bad("compact kernel needs at least two (t, value) pairs of equal length");
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) || grid.iter().chain(values).any(|v| !v.is_finite()) {
                    return bad("compact kernel needs a strictly increasing finite grid and finite values");
                }
                grid.windows(2)
                    .zip(values.windows(2))
                    .map(|(g, v)| {
                        // |linear| is piecewise linear; split at a sign change
                        if v[0] * v[1] < 0.0 {
                            let z = g[0] + (g[1] - g[0]) * v[0] / (v[0] - v[1]);
                            0.5 * (v[0].abs() * (z - g[0]) + v[1].abs() * (g[1] - z))
                        } else {
                            (g[1] - g[0]) * 0.5 * (v[0].abs() + v[1].abs())
                        }
                    })
                    .sum()
            }
        };
        Ok(Self { kind, l1_norm })
    }

    pub fn two_sided_exp(c: f64, a: f64) -> Self {
        Self::new(KernelKind::TwoSidedExp { c, a }).expect("valid kernel")
    }

    pub fn gaussian(c: f64, sigma: f64) -> Self {
        Self::new(KernelKind::Gaussian { c, sigma }).expect("valid kernel")
    }

    /// Box `height` on `[-half, half]` with linear flanks of width `ramp`.
    pub fn boxcar(height: f64, half: f64, ramp: f64) -> Self {
        Self::new(KernelKind::CompactSupport {
            grid: vec![-half - ramp, -half, half, half + ramp],
            values: vec![0.0, height, height, 0.0],
        })
        .expect("valid kernel")
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    pub fn eval(&self, s: f64) -> f64 {
        match &self.kind {
            KernelKind::TwoSidedExp { c, a } => c * (-a * s.abs()).exp(),
            KernelKind::Gaussian { c, sigma } => c * (-s * s / (2.0 * sigma * sigma)).exp(),
            KernelKind::CompactSupport { grid, values } => {
                let n = grid.len();
                if s < grid[0] || s > grid[n - 1] {
                    return 0.0;
                }
                let i = (grid.partition_point(|g| *g <= s) - 1).min(n - 2);
                let r = (s - grid[i]) / (grid[i + 1] - grid[i]);
                values[i] + r * (values[i + 1] - values[i])
            }
        }
    }

    /// Closed-form `int k(s) e^{-i lambda s} ds` where available.
    pub fn transform_closed_form(&self, lambda: f64) -> Option<Complex64> {
        match &self.kind {
            KernelKind::TwoSidedExp { c, a } => Some(Complex64::new(2.0 * c * a / (a * a + lambda * lambda), 0.0)),
            KernelKind::Gaussian { c, sigma } => Some(Complex64::new(
                c * sigma * (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * sigma * sigma * lambda * lambda).exp(),
                0.0,
            )),
            KernelKind::CompactSupport { .. } => None,
        }
    }

    /// Smallest `s_max` with `int_{|s| > s_max} |k| < tail`.
    pub fn window(&self, tail: f64) -> f64 {
        match &self.kind {
            KernelKind::TwoSidedExp { c, a } => ((2.0 * c.abs() / (a * tail)).ln() / a).max(0.0),
            KernelKind::Gaussian { c, sigma } => {
                let mass = |s: f64| c.abs() * sigma * (2.0 * std::f64::consts::PI).sqrt() * statrs::function::erf::erfc(s / (sigma * 2f64.sqrt()));
                let (mut lo, mut hi) = (0.0, *sigma);
                while mass(hi) >= tail {
                    hi *= 2.0;
                }
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if mass(mid) >= tail {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
            KernelKind::CompactSupport { grid, .. } => grid[0].abs().max(grid[grid.len() - 1].abs()),
        }
    }

    /// Length scale on which the kernel varies.
    fn feature_scale(&self) -> f64 {
        match &self.kind {
            KernelKind::TwoSidedExp { a, .. } => 2.0 / a,
            KernelKind::Gaussian { sigma, .. } => *sigma,
            KernelKind::CompactSupport { grid, .. } => grid.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min),
        }
    }

    /// Breakpoints where the kernel is not smooth.
    fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            KernelKind::TwoSidedExp { .. } => vec![0.0],
            KernelKind::Gaussian { .. } => Vec::new(),
            KernelKind::CompactSupport { grid, .. } => grid.clone(),
        }
    }
}

/// Truncation controls of the convolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvolutionConfig {
    /// Kernel tail mass left out of the window.
    pub tail_mass: f64,
    /// Largest admissible window half-width.
    pub max_window: f64,
}

impl Default for ConvolutionConfig {
    fn default() -> Self {
        Self { tail_mass: 1e-10, max_window: 1e3 }
    }
}

/// Integrates `g` on `[lo, hi]` with panels no wider than `width`, splitting
/// at the given breakpoints.
fn integrate_split<F: FnMut(f64) -> Complex64>(lo: f64, hi: f64, breaks: &[f64], width: f64, mut g: F) -> Complex64 {
    let mut cuts = vec![lo];
    cuts.extend(breaks.iter().copied().filter(|&b| b > lo && b < hi));
    cuts.push(hi);
    cuts.windows(2).map(|w| Panels::new(w[0], w[1], width).integrate_complex(&mut g)).sum()
}

/// `f * k` as an evaluable function: the almost periodic part is mapped
/// through the kernel transform, the ergodic part is integrated directly.
#[derive(Debug, Clone)]
pub struct Convolved {
    pub ap: TrigPolynomial,
    ergodic: PAPFunction,
    kernel: Kernel,
    s_max: f64,
    width: f64,
    widths: Vec<f64>,
}

impl Convolved {
    pub fn new(f: &PAPFunction, k: &Kernel, cfg: &ConvolutionConfig) -> Result<Self, ConvolutionError> {
        let s_max = k.window(cfg.tail_mass);
        if s_max > cfg.max_window {
            return Err(ConvolutionError::TailTruncationFailure { needed: s_max, available: cfg.max_window });
        }
        let breaks = k.breakpoints();
        let ap = f.ap.map_amplitudes(|lambda| {
            let width = oscillatory_width(lambda.abs(), k.feature_scale().min(1.0));
            integrate_split(-s_max, s_max, &breaks, width, |s| Complex64::cis(-lambda * s) * k.eval(s))
        });
        let ergodic = PAPFunction::ergodic_only(f.dim(), f.ergodic.clone())?;
        // each perturbation gets panels matched to its own features, so the
        // result is linear in the perturbations
        let widths: Vec<f64> = ergodic
            .ergodic
            .iter()
            .map(|e| (e.profile.feature_scale() / 4.0).min(k.feature_scale() / 2.0).min(1.0))
            .collect();
        let width = widths.iter().copied().fold(1.0, f64::min);
        Ok(Self { ap, ergodic, kernel: k.clone(), s_max, width, widths })
    }

    pub fn window(&self) -> f64 {
        self.s_max
    }

    pub fn dim(&self) -> usize {
        self.ap.dim()
    }

    /// Adds `(phi * k)(t)` for the ergodic part to `out`.
    fn ergodic_into(&self, t: f64, out: &mut [Complex64]) {
        for (e, &width) in self.ergodic.ergodic.iter().zip(&self.widths) {
            // phi(t - s) vanishes unless t - s lies in the profile's support
            let (lo, hi) = match e.profile.support() {
                Some((a, b)) => ((t - b).max(-self.s_max), (t - a).min(self.s_max)),
                None => (-self.s_max, self.s_max),
            };
            if lo >= hi {
                continue;
            }
            let v = integrate_split(lo, hi, &self.kernel.breakpoints(), width, |s| {
                Complex64::new(e.profile.eval(t - s) * self.kernel.eval(s), 0.0)
            });
            for (o, d) in out.iter_mut().zip(&e.direction) {
                *o += d * v;
            }
        }
    }

    pub fn eval_into(&self, t: f64, out: &mut [Complex64]) {
        self.ap.eval_into(t, out);
        self.ergodic_into(t, out);
    }

    pub fn eval(&self, t: f64) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.dim()];
        self.eval_into(t, &mut out);
        out
    }

    /// Samples on `n` points `start + i * step`, in parallel.
    pub fn sample(&self, start: f64, step: f64, n: usize) -> SampledTrace {
        let dim = self.dim();
        let mut data = vec![Complex64::new(0.0, 0.0); n * dim];
        data.par_chunks_mut(dim).enumerate().for_each(|(i, row)| self.eval_into(start + step * i as f64, row));
        SampledTrace::new(start, step, dim, data).expect("nonempty grid")
    }
}

/// `(f * k)` sampled on `n` points `start + i * step`.
pub fn convolve(f: &PAPFunction, k: &Kernel, start: f64, step: f64, n: usize, cfg: &ConvolutionConfig) -> Result<SampledTrace, ConvolutionError> {
    Ok(Convolved::new(f, k, cfg)?.sample(start, step, n))
}

/// Direct `int f(t - s) k(s) ds` over the kernel window, one point at a time.
pub fn convolve_at(f: &PAPFunction, k: &Kernel, t: f64, cfg: &ConvolutionConfig) -> Result<Vec<Complex64>, ConvolutionError> {
    let s_max = k.window(cfg.tail_mass);
    if s_max > cfg.max_window {
        return Err(ConvolutionError::TailTruncationFailure { needed: s_max, available: cfg.max_window });
    }
    let width = f.resolution(0.0).min(k.feature_scale() / 4.0);
    let breaks = k.breakpoints();
    let mut buf = vec![Complex64::new(0.0, 0.0); f.dim()];
    let mut out = Vec::with_capacity(f.dim());
    for d in 0..f.dim() {
        out.push(integrate_split(-s_max, s_max, &breaks, width, |s| {
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            f.eval_into(t - s, &mut buf);
            buf[d] * k.eval(s)
        }));
    }
    Ok(out)
}

/// Convolution of a sampled trace by the trapezoid rule on its own grid. The
/// result loses `ceil(s_max / step)` points at each end.
pub fn convolve_trace(tr: &SampledTrace, k: &Kernel, cfg: &ConvolutionConfig) -> Result<SampledTrace, ConvolutionError> {
    let s_max = k.window(cfg.tail_mass);
    if s_max > cfg.max_window {
        return Err(ConvolutionError::TailTruncationFailure { needed: s_max, available: cfg.max_window });
    }
    let h = tr.step();
    let m = (s_max / h).ceil() as usize;
    if tr.len() <= 2 * m {
        return Err(ConvolutionError::TailTruncationFailure { needed: s_max, available: 0.5 * h * (tr.len() - 1) as f64 });
    }
    let weights: Vec<f64> = (0..=2 * m)
        .map(|j| {
            let s = (j as f64 - m as f64) * h;
            let w = if j == 0 || j == 2 * m { 0.5 } else { 1.0 };
            w * h * k.eval(s)
        })
        .collect();
    let dim = tr.dim();
    let n = tr.len() - 2 * m;
    let mut data = vec![Complex64::new(0.0, 0.0); n * dim];
    data.par_chunks_mut(dim).enumerate().for_each(|(i, row)| {
        let c = i + m;
        for (j, w) in weights.iter().enumerate() {
            // s = (j - m) h, so t - s sits at index c + m - j
            let v = tr.value(c + m - j);
            for (r, x) in row.iter_mut().zip(v) {
                *r += x * *w;
            }
        }
    });
    Ok(SampledTrace::new(tr.t(m), h, dim, data)?)
}

/// Outcome of the stability check for convolved perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Weighted truncated mean of `|phi * k|`.
    pub trace: MeanEstimate,
}

/// Decay threshold for the convolved mean.
pub const STABILITY_THRESHOLD: f64 = 1e-3;

/// Checks that `phi * k` keeps a vanishing weighted mean.
///
/// The mass ratio `nu(Q_T)/mu(Q_T)` must stay bounded, `mu` must have finite
/// mass-growth limits and `nu` must be translation compatible; otherwise the
/// violated condition is reported.
pub fn verify_pap0_stability(
    phi: &PAPFunction,
    k: &Kernel,
    mu: &Weight,
    nu: &Weight,
    mean: &MeanConfig,
    cfg: &ConvolutionConfig,
) -> Result<StabilityReport, ConvolutionError> {
    check_stability_conditions(mu, nu)?;
    let conv = Convolved::new(&PAPFunction::ergodic_only(phi.dim(), phi.ergodic.clone())?, k, cfg)?;
    let mut buf = vec![Complex64::new(0.0, 0.0); conv.dim()];
    let run = spectral::run_mean(
        1,
        |t, out| {
            buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
            conv.ergodic_into(t, &mut buf);
            out[0] = Complex64::new(vec_norm(&buf), 0.0);
        },
        |t| nu.log_eval(t),
        |t| mu.log_mass(t),
        &mean.schedule,
        conv.width.clamp(0.25, 1.0),
        mean.tol,
    )?;
    let values: Vec<f64> = run.estimate.trace.iter().map(|p| p.value[0].re).collect();
    let stable = decays(&values, STABILITY_THRESHOLD) || values.iter().all(|v| *v == 0.0);
    Ok(StabilityReport { stable, trace: run.estimate })
}

/// Enforces the hypotheses of the stability result on the weight pair.
pub fn check_stability_conditions(mu: &Weight, nu: &Weight) -> Result<(), ConvolutionError> {
    let limits = LimitConfig::default();
    match weights::theta(mu, nu, &limits) {
        Err(WeightError::DivergentRatio { .. }) => {
            return Err(ConvolutionError::PreconditionFailed { condition: StabilityCondition::BoundedMassRatio })
        }
        Err(e) => return Err(e.into()),
        Ok(_) => {}
    }
    let taus = weights::default_tau_grid();
    if !weights::classify_weight(mu, &taus, &limits)?.in_u_0 {
        return Err(ConvolutionError::PreconditionFailed { condition: StabilityCondition::FiniteMassGrowth });
    }
    if !weights::classify_weight(nu, &taus, &limits)?.in_u_inv {
        return Err(ConvolutionError::PreconditionFailed { condition: StabilityCondition::TranslationCompatible });
    }
    Ok(())
}
