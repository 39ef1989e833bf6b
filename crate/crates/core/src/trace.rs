//! Uniformly sampled vector signals: CSV exchange, translation-number search
//! and Bohr decomposition on the sample grid.

use std::collections::HashMap;
use std::io::{Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::SignalError;
use crate::estimate::{MeanEstimate, Schedule, TracePoint};
use crate::signals::{vec_norm, TrigPolynomial, TrigTerm};
use crate::weights::{LimitConfig, Weight};

/// Samples `values[i]` at `start + i * step`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledTrace {
    start: f64,
    step: f64,
    dim: usize,
    data: Vec<Complex64>,
}

/// Default sampling grid: step `1e-2` on `[-1e4, 1e4]`.
pub const DEFAULT_STEP: f64 = 1e-2;
pub const DEFAULT_HALF_WIDTH: f64 = 1e4;

impl SampledTrace {
    pub fn new(start: f64, step: f64, dim: usize, data: Vec<Complex64>) -> Result<Self, SignalError> {
        if !(step > 0.0 && step.is_finite() && start.is_finite()) {
            return Err(SignalError::InvalidTrace(format!("bad grid start {start} step {step}")));
        }
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(SignalError::InvalidTrace("data length must be a positive multiple of the dimension".into()));
        }
        Ok(Self { start, step, dim, data })
    }

    /// Evaluates `f(t, out)` on `n` grid points; `out` is zeroed before each call.
    pub fn from_fn<F: FnMut(f64, &mut [Complex64])>(start: f64, step: f64, n: usize, dim: usize, mut f: F) -> Self {
        let mut data = vec![Complex64::new(0.0, 0.0); n * dim];
        for (i, row) in data.chunks_mut(dim).enumerate() {
            f(start + step * i as f64, row);
        }
        Self { start, step, dim, data }
    }

    /// Number of points of a symmetric grid `[-half, half]` with spacing `step`.
    pub fn symmetric_len(half: f64, step: f64) -> usize {
        (2.0 * half / step).round() as usize + 1
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.t(self.len() - 1)
    }

    pub fn t(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn value(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (f64, &[Complex64])> {
        self.data.chunks(self.dim).enumerate().map(move |(i, v)| (self.t(i), v))
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.chunks(self.dim).map(vec_norm).fold(0.0, f64::max)
    }

    /// Largest `T` with `[-T, T]` inside the grid (zero if 0 is not covered).
    pub fn symmetric_half_width(&self) -> f64 {
        (-self.start).min(self.end()).max(0.0)
    }

    /// Index range of grid points inside `[-T, T]`.
    pub fn window(&self, half: f64) -> std::ops::Range<usize> {
        let eps = 1e-9 * self.step;
        let lo = ((-half - self.start - eps) / self.step).ceil().max(0.0) as usize;
        let hi = (((half - self.start + eps) / self.step).floor() as usize).min(self.len() - 1);
        lo..hi + 1
    }

    /// Pointwise `self - other` on the same grid.
    pub fn sub(&self, other: &SampledTrace) -> Result<SampledTrace, SignalError> {
        if self.dim != other.dim || self.len() != other.len() || self.start != other.start || self.step != other.step {
            return Err(SignalError::InvalidTrace("traces live on different grids".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(SampledTrace { data, ..*self })
    }

    /// Pointwise `self - p`.
    pub fn sub_trig(&self, p: &TrigPolynomial) -> Result<SampledTrace, SignalError> {
        if p.dim() != self.dim {
            return Err(SignalError::DimensionMismatch { expected: self.dim, got: p.dim() });
        }
        let mut out = self.clone();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.dim];
        for (i, row) in out.data.chunks_mut(self.dim).enumerate() {
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            p.eval_into(self.start + self.step * i as f64, &mut buf);
            for (r, b) in row.iter_mut().zip(&buf) {
                *r -= b;
            }
        }
        Ok(out)
    }

    /// Writes `t,re1,im1,...` rows with a header, 17 significant digits.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), SignalError> {
        let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
        let mut header = vec!["t".to_string()];
        for k in 1..=self.dim {
            header.push(format!("re{k}"));
            header.push(format!("im{k}"));
        }
        wr.write_record(&header).map_err(csv_err)?;
        let mut rec = Vec::with_capacity(1 + 2 * self.dim);
        for (t, v) in self.rows() {
            rec.clear();
            rec.push(fmt17(t));
            for z in v {
                rec.push(fmt17(z.re));
                rec.push(fmt17(z.im));
            }
            wr.write_record(&rec).map_err(csv_err)?;
        }
        wr.flush().map_err(|e| SignalError::Csv(e.to_string()))
    }

    /// Reads the format of [`SampledTrace::write_csv`]; the grid must be uniform.
    pub fn read_csv<R: Read>(r: R) -> Result<Self, SignalError> {
        let mut rd = csv::Reader::from_reader(r);
        let cols = rd.headers().map_err(csv_err)?.len();
        if cols < 3 || (cols - 1) % 2 != 0 {
            return Err(SignalError::InvalidTrace(format!("expected t plus re/im pairs, got {cols} columns")));
        }
        let dim = (cols - 1) / 2;
        let mut ts = Vec::new();
        let mut data = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let num = |i: usize| -> Result<f64, SignalError> {
                rec[i].trim().parse::<f64>().map_err(|e| SignalError::Csv(format!("{e} in '{}'", &rec[i])))
            };
            ts.push(num(0)?);
            for k in 0..dim {
                data.push(Complex64::new(num(1 + 2 * k)?, num(2 + 2 * k)?));
            }
        }
        if ts.len() < 2 {
            return Err(SignalError::InvalidTrace("need at least two samples".into()));
        }
        let step = (ts[ts.len() - 1] - ts[0]) / (ts.len() - 1) as f64;
        if ts.windows(2).any(|w| ((w[1] - w[0]) - step).abs() > 1e-6 * step) {
            return Err(SignalError::InvalidTrace("samples are not uniformly spaced".into()));
        }
        Self::new(ts[0], step, dim, data)
    }
}

fn csv_err(e: csv::Error) -> SignalError {
    SignalError::Csv(e.to_string())
}

/// Formats with 17 significant digits.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Witness of relative density of translation numbers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TranslationReport {
    /// First nontrivial `epsilon`-translation number (best in its cluster).
    pub tau_found: f64,
    /// Smallest window length for which ten consecutive windows
    /// `[j l, (j + 1) l]` each hold a translation number.
    pub l_bound: f64,
}

struct ShiftTester<'a> {
    tr: &'a SampledTrace,
    eps2: f64,
    probes: Vec<usize>,
    full: HashMap<usize, bool>,
}

impl<'a> ShiftTester<'a> {
    fn new(tr: &'a SampledTrace, eps: f64) -> Self {
        Self { tr, eps2: eps * eps, probes: Vec::new(), full: HashMap::new() }
    }

    fn dev2(&self, i: usize, k: usize) -> f64 {
        let a = self.tr.value(i + k);
        let b = self.tr.value(i);
        a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum()
    }

    /// Cheap necessary condition on 1024 spread-out samples of the overlap.
    fn coarse(&mut self, k: usize) -> bool {
        let m = self.tr.len() - k;
        let count = m.min(1024);
        self.probes.clear();
        self.probes.extend((0..count).map(|j| j * (m - 1) / (count - 1).max(1)));
        self.probes.iter().all(|&i| self.dev2(i, k) < self.eps2)
    }

    /// Sup over the whole overlap, visiting points coarse-to-fine.
    fn exact(&mut self, k: usize) -> bool {
        if let Some(&v) = self.full.get(&k) {
            return v;
        }
        let m = self.tr.len() - k;
        let stride = 97.min(m);
        let ok = (0..stride).all(|off| (off..m).step_by(stride).all(|i| self.dev2(i, k) < self.eps2));
        self.full.insert(k, ok);
        ok
    }

    fn sup_dev(&self, k: usize) -> f64 {
        (0..self.tr.len() - k).map(|i| self.dev2(i, k)).fold(0.0, f64::max).sqrt()
    }
}

/// Searches the trace for relatively dense `epsilon`-translation numbers.
///
/// Shifts are multiples of the grid step up to half the trace length, so the
/// overlap always covers at least half of the samples. The initial run of
/// small shifts that trivially qualify is skipped.
pub fn check_almost_periodic(tr: &SampledTrace, eps: f64) -> Result<TranslationReport, SignalError> {
    if !(eps > 0.0) {
        return Err(SignalError::InvalidSignal(format!("epsilon must be positive, got {eps}")));
    }
    let h = tr.step();
    let max_k = (tr.len() - 1) / 2;
    let horizon = max_k as f64 * h;
    if max_k < 10 {
        return Err(SignalError::NoTranslationNumberFound { horizon });
    }
    let mut tester = ShiftTester::new(tr, eps);

    let mut k0 = 1;
    while k0 <= max_k && tester.coarse(k0) && tester.exact(k0) {
        k0 += 1;
    }
    if k0 > max_k {
        return Ok(TranslationReport { tau_found: h, l_bound: h });
    }

    let mut candidates: Vec<usize> = Vec::new();
    let mut scanned = k0;
    let mut chunk = 1024usize;
    let mut m_next = 1usize;
    loop {
        let upto = (scanned + chunk).min(max_k);
        for k in scanned + 1..=upto {
            if tester.coarse(k) {
                candidates.push(k);
            }
        }
        scanned = upto;
        chunk *= 2;

        while 10 * m_next <= scanned {
            let m = m_next;
            let mut all = true;
            for j in 0..10 {
                let (lo, hi) = ((j * m).max(k0), (j + 1) * m);
                let first = candidates.partition_point(|&k| k < lo);
                let found = candidates[first..].iter().take_while(|&&k| k <= hi).any(|&k| tester.exact(k));
                if !found {
                    all = false;
                    break;
                }
            }
            if all {
                let first = candidates.iter().copied().find(|&k| tester.exact(k)).expect("a window held one");
                let mut best = (tester.sup_dev(first), first);
                let mut k = first + 1;
                while k <= max_k && tester.coarse(k) && tester.exact(k) {
                    let d = tester.sup_dev(k);
                    if d < best.0 {
                        best = (d, k);
                    }
                    k += 1;
                }
                return Ok(TranslationReport { tau_found: best.1 as f64 * h, l_bound: m as f64 * h });
            }
            m_next += 1;
        }
        if scanned >= max_k {
            return Err(SignalError::NoTranslationNumberFound { horizon });
        }
    }
}

/// Classical truncated Bohr coefficient over the largest symmetric window of
/// the trace, by the trapezoid rule.
pub fn trace_bohr_coefficient(tr: &SampledTrace, lambda: f64) -> Vec<Complex64> {
    let half = tr.symmetric_half_width();
    let idx = tr.window(half);
    let (first, last) = (idx.start, idx.end - 1);
    let mut acc = vec![Complex64::new(0.0, 0.0); tr.dim()];
    for i in idx {
        let w = if i == first || i == last { 0.5 } else { 1.0 };
        let e = Complex64::cis(-lambda * tr.t(i)) * w;
        for (a, v) in acc.iter_mut().zip(tr.value(i)) {
            *a += v * e;
        }
    }
    let len = tr.t(last) - tr.t(first);
    acc.iter().map(|a| a * (tr.step() / len)).collect()
}

/// Truncated `(1 / mu(Q_T)) int_{Q_T} |r| nu` along `schedule`, trapezoid on
/// the grid.
pub fn trace_weighted_norm_mean(tr: &SampledTrace, mu: &Weight, nu: &Weight, schedule: &Schedule, tol: f64) -> Result<MeanEstimate, SignalError> {
    let mut trace = Vec::new();
    for t in schedule.points() {
        if t > tr.symmetric_half_width() * (1.0 + 1e-12) {
            break;
        }
        let log_mass = mu.log_mass(t)?;
        let idx = tr.window(t);
        let (first, last) = (idx.start, idx.end - 1);
        let mut acc = 0.0;
        for i in idx {
            let w = if i == first || i == last { 0.5 } else { 1.0 };
            let x = tr.t(i);
            acc += w * vec_norm(tr.value(i)) * (nu.log_eval(x) - log_mass).exp();
        }
        trace.push(TracePoint { t, value: vec![Complex64::new(acc * tr.step(), 0.0)] });
    }
    Ok(MeanEstimate::from_trace(trace, tol))
}

/// Result of [`decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub ap: TrigPolynomial,
    pub residual: SampledTrace,
    /// Weighted truncated mean of `|residual|`.
    pub residual_mean: MeanEstimate,
    /// `inf_T nu(Q_T) / mu(Q_T)` over the schedule.
    pub mass_ratio_inf: f64,
}

/// Configuration of [`decompose`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposeConfig {
    /// Relative amplitude threshold for a nonzero coefficient.
    pub threshold: f64,
    /// Lower bound on `inf_T nu(Q_T)/mu(Q_T)` accepted as positive.
    pub ratio_floor: f64,
    /// Doublings of the residual-mean schedule ending at the trace window.
    pub doublings: u32,
    pub limits: LimitConfig,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self { threshold: 1e-3, ratio_floor: 1e-6, doublings: 8, limits: LimitConfig::default() }
    }
}

/// Splits a sampled signal into a trigonometric polynomial on the candidate
/// frequencies and a residual whose weighted mean vanishes.
pub fn decompose(tr: &SampledTrace, mu: &Weight, nu: &Weight, candidates: &[f64], cfg: &DecomposeConfig) -> Result<Decomposition, SignalError> {
    let mut inf_ratio = f64::INFINITY;
    for t in cfg.limits.schedule.points() {
        inf_ratio = inf_ratio.min((nu.log_mass(t)? - mu.log_mass(t)?).exp());
    }
    if !(inf_ratio > cfg.ratio_floor) {
        return Err(SignalError::ConditionViolated { inf_ratio });
    }
    let half = tr.symmetric_half_width();
    if half <= 0.0 {
        return Err(SignalError::InvalidTrace("trace must straddle t = 0".into()));
    }
    let sup = tr.sup_norm();
    let level = cfg.threshold * sup;
    let mut terms = Vec::new();
    for &lambda in candidates {
        let a = trace_bohr_coefficient(tr, lambda);
        if vec_norm(&a) > level {
            terms.push(TrigTerm { freq: lambda, amp: a });
        }
    }
    let ap = TrigPolynomial::new(tr.dim(), terms)?;
    let residual = tr.sub_trig(&ap)?;
    let schedule = Schedule::ending_at(half, cfg.doublings);
    let residual_mean = trace_weighted_norm_mean(&residual, mu, nu, &schedule, level.max(f64::MIN_POSITIVE))?;
    let last = residual_mean.scalar().re;
    if !(last < level) && sup > 0.0 {
        return Err(SignalError::MissingFrequencies { residual_mean: last });
    }
    Ok(Decomposition { ap, residual, residual_mean, mass_ratio_inf: inf_ratio })
}
