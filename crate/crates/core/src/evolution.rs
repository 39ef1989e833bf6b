//! Block-diagonal nonautonomous linear systems with an exponential dichotomy,
//! their Green operators, and the fixed-point solver for bounded mild
//! solutions of `u' = A(t) u + g(t, u)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{EvolutionError, SignalError, WeightError};
use crate::estimate::{decays, MeanEstimate, Schedule};
use crate::signals::{vec_norm, DecayProfile, ErgodicPerturbation, LipschitzMap, Nonlinearity, PAPFunction, TrigPolynomial};
use crate::spectral::{self, MeanConfig};
use crate::trace::{decompose, trace_weighted_norm_mean, DecomposeConfig, SampledTrace};
use crate::weights::Weight;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Improper Green integrals are cut at `TRUNCATION / delta`.
pub const TRUNCATION: f64 = 40.0;

/// Claimed dichotomy constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DichotomyClaim {
    #[serde(rename = "N")]
    pub n: f64,
    pub delta: f64,
}

/// Square matrix of scalar trigonometric polynomials.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    dim: usize,
    entries: Vec<TrigPolynomial>,
}

impl Block {
    fn new(rows: Vec<Vec<TrigPolynomial>>) -> Result<Self, EvolutionError> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(EvolutionError::InvalidProblem(format!("block rows must have {dim} entries")));
            }
            for e in row {
                if e.dim() != 1 {
                    return Err(EvolutionError::InvalidProblem("matrix entries must be scalar".into()));
                }
                entries.push(e);
            }
        }
        Ok(Self { dim, entries })
    }

    fn rows(&self) -> Vec<Vec<TrigPolynomial>> {
        self.entries.chunks(self.dim.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Row-major `A(t)`.
    pub fn eval_into(&self, t: f64, out: &mut [Complex64]) {
        for (o, e) in out.iter_mut().zip(&self.entries) {
            let mut v = [ZERO];
            e.eval_into(t, &mut v);
            *o = v[0];
        }
    }

    pub fn eval(&self, t: f64) -> Vec<Complex64> {
        let mut out = vec![ZERO; self.dim * self.dim];
        self.eval_into(t, &mut out);
        out
    }
}

/// Which diagonal block of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Stable,
    Unstable,
}

impl Part {
    fn name(self) -> &'static str {
        match self {
            Part::Stable => "stable",
            Part::Unstable => "unstable",
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct ProblemSpec {
    stable: Vec<Vec<TrigPolynomial>>,
    #[serde(default)]
    unstable: Vec<Vec<TrigPolynomial>>,
    dichotomy: DichotomyClaim,
    forcing: LipschitzMap,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    lipschitz: Option<f64>,
}

/// `u' = diag(A_-(t), A_+(t)) u + g(t, u)` with the stable block first and
/// `P` the coordinate projection onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProblemSpec", into = "ProblemSpec")]
pub struct EvolutionProblem {
    stable: Block,
    unstable: Block,
    pub claim: DichotomyClaim,
    pub forcing: LipschitzMap,
    lipschitz: f64,
    explicit_lipschitz: bool,
}

impl TryFrom<ProblemSpec> for EvolutionProblem {
    type Error = EvolutionError;

    fn try_from(s: ProblemSpec) -> Result<Self, Self::Error> {
        let mut p = EvolutionProblem::new(s.stable, s.unstable, s.dichotomy, s.forcing)?;
        if let Some(k) = s.lipschitz {
            p = p.with_lipschitz(k)?;
        }
        Ok(p)
    }
}

impl From<EvolutionProblem> for ProblemSpec {
    fn from(p: EvolutionProblem) -> Self {
        ProblemSpec {
            stable: p.stable.rows(),
            unstable: p.unstable.rows(),
            dichotomy: p.claim,
            forcing: p.forcing,
            lipschitz: p.explicit_lipschitz.then_some(p.lipschitz),
        }
    }
}

impl EvolutionProblem {
    pub fn new(
        stable: Vec<Vec<TrigPolynomial>>,
        unstable: Vec<Vec<TrigPolynomial>>,
        claim: DichotomyClaim,
        forcing: LipschitzMap,
    ) -> Result<Self, EvolutionError> {
        let stable = Block::new(stable)?;
        let unstable = Block::new(unstable)?;
        if stable.dim + unstable.dim == 0 {
            return Err(EvolutionError::InvalidProblem("system has no state".into()));
        }
        if !(claim.n >= 1.0 && claim.n.is_finite() && claim.delta > 0.0 && claim.delta.is_finite()) {
            return Err(EvolutionError::InvalidProblem("dichotomy needs N >= 1 and delta > 0".into()));
        }
        if forcing.alpha.dim() != 1 {
            return Err(EvolutionError::InvalidProblem("alpha must be scalar".into()));
        }
        if forcing.dim() != stable.dim + unstable.dim {
            return Err(EvolutionError::InvalidProblem(format!(
                "forcing has dimension {}, system has {}",
                forcing.dim(),
                stable.dim + unstable.dim
            )));
        }
        let lipschitz = forcing.lipschitz_constant();
        Ok(Self { stable, unstable, claim, forcing, lipschitz, explicit_lipschitz: false })
    }

    /// Diagonal constant blocks `diag(stable..., unstable...)`.
    pub fn diagonal(stable: &[f64], unstable: &[f64], claim: DichotomyClaim, forcing: LipschitzMap) -> Result<Self, EvolutionError> {
        let diag = |d: &[f64]| -> Vec<Vec<TrigPolynomial>> {
            (0..d.len())
                .map(|i| {
                    (0..d.len())
                        .map(|j| if i == j { TrigPolynomial::scalar(&[(0.0, Complex64::new(d[i], 0.0))]) } else { TrigPolynomial::zero(1) })
                        .collect()
                })
                .collect()
        };
        Self::new(diag(stable), diag(unstable), claim, forcing)
    }

    /// Declares a Lipschitz constant; it may not undercut `sup |alpha|`.
    pub fn with_lipschitz(mut self, k: f64) -> Result<Self, EvolutionError> {
        if !(k >= self.forcing.lipschitz_constant() && k.is_finite()) {
            return Err(EvolutionError::InvalidProblem(format!(
                "declared K = {k} is below the forcing's Lipschitz bound {}",
                self.forcing.lipschitz_constant()
            )));
        }
        self.lipschitz = k;
        self.explicit_lipschitz = true;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.stable.dim + self.unstable.dim
    }

    pub fn stable_dim(&self) -> usize {
        self.stable.dim
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn block(&self, part: Part) -> &Block {
        match part {
            Part::Stable => &self.stable,
            Part::Unstable => &self.unstable,
        }
    }

    /// Index range of a block inside the state vector.
    pub fn range(&self, part: Part) -> std::ops::Range<usize> {
        match part {
            Part::Stable => 0..self.stable.dim,
            Part::Unstable => self.stable.dim..self.dim(),
        }
    }

    /// Same problem with the ergodic parts of the forcing removed.
    pub fn without_ergodic_forcing(&self) -> Self {
        let mut p = self.clone();
        p.forcing.alpha = self.forcing.alpha.without_ergodic();
        p.forcing.beta = self.forcing.beta.without_ergodic();
        p
    }

    /// Same problem with another forcing of the same dimension.
    pub fn with_forcing(&self, forcing: LipschitzMap) -> Result<Self, EvolutionError> {
        Self::new(self.stable.rows(), self.unstable.rows(), self.claim, forcing)
    }
}

/// Dormand-Prince 5(4) integrator with mixed error control.
#[derive(Debug, Clone, Copy)]
pub struct Dopri {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Dopri {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12 }
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl Dopri {
    /// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction) in
    /// place. `h` carries the step size between calls.
    pub fn integrate<F>(&self, mut f: F, t0: f64, t1: f64, y: &mut [Complex64], h: &mut f64) -> Result<(), EvolutionError>
    where
        F: FnMut(f64, &[Complex64], &mut [Complex64]),
    {
        let n = y.len();
        if t0 == t1 || n == 0 {
            return Ok(());
        }
        let dir = (t1 - t0).signum();
        let span = (t1 - t0).abs();
        let mut step = if *h > 0.0 { h.min(span) } else { span.min(1e-2) };
        let mut k: Vec<Vec<Complex64>> = vec![vec![ZERO; n]; 7];
        let mut tmp = vec![ZERO; n];
        let mut y5 = vec![ZERO; n];
        let mut t = t0;
        f(t, y, &mut k[0]);
        loop {
            let left = (t1 - t) * dir;
            if left <= 0.0 {
                break;
            }
            let last = step >= left;
            let hs = if last { left } else { step } * dir;
            macro_rules! stage {
                ($idx:expr, $c:expr, [$(($j:expr, $a:expr)),*]) => {
                    for i in 0..n {
                        tmp[i] = y[i] $(+ k[$j][i] * ($a * hs))*;
                    }
                    f(t + $c * hs, &tmp, &mut k[$idx]);
                };
            }
            stage!(1, C2, [(0, A21)]);
            stage!(2, C3, [(0, A31), (1, A32)]);
            stage!(3, C4, [(0, A41), (1, A42), (2, A43)]);
            stage!(4, C5, [(0, A51), (1, A52), (2, A53), (3, A54)]);
            stage!(5, 1.0, [(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)]);
            for i in 0..n {
                y5[i] = y[i] + (k[0][i] * B1 + k[2][i] * B3 + k[3][i] * B4 + k[4][i] * B5 + k[5][i] * B6) * hs;
            }
            let t_new = if last { t1 } else { t + hs };
            f(t_new, &y5, &mut k[6]);
            let mut err = 0.0f64;
            for i in 0..n {
                let e = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7) * hs;
                let sc = self.atol + self.rtol * y[i].norm().max(y5[i].norm());
                err = err.max(e.norm() / sc);
            }
            if !err.is_finite() {
                return Err(EvolutionError::QuadratureFailure(format!("non-finite state near t = {t}")));
            }
            if err <= 1.0 {
                t = t_new;
                y.copy_from_slice(&y5);
                k.swap(0, 6);
                if !last {
                    *h = step;
                }
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            step *= if err <= 1.0 { fac } else { fac.min(1.0) };
            if step < 1e-13 * t.abs().max(1.0) {
                return Err(EvolutionError::StepSizeUnderflow { t });
            }
        }
        Ok(())
    }
}

fn mat_vec(a: &[Complex64], x: &[Complex64], out: &mut [Complex64]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = a[i * d..(i + 1) * d].iter().zip(x).map(|(p, q)| p * q).sum();
    }
}

/// Homogeneous propagation of one block from `s` to `t`, in either direction.
pub fn propagate_block(prob: &EvolutionProblem, part: Part, t: f64, s: f64, x: &[Complex64]) -> Result<Vec<Complex64>, EvolutionError> {
    let b = prob.block(part);
    if x.len() != b.dim {
        return Err(EvolutionError::InvalidProblem(format!("{} block needs a {}-vector", part.name(), b.dim)));
    }
    let mut y = x.to_vec();
    let mut a = vec![ZERO; b.dim * b.dim];
    let solver = Dopri { rtol: 1e-10, atol: 1e-14 * vec_norm(x).max(f64::MIN_POSITIVE) };
    solver.integrate(
        |tau, y, dy| {
            b.eval_into(tau, &mut a);
            mat_vec(&a, y, dy);
        },
        s,
        t,
        &mut y,
        &mut 0.0,
    )?;
    Ok(y)
}

/// `U(t, s) x` for `t >= s`.
pub fn propagate(prob: &EvolutionProblem, t: f64, s: f64, x: &[Complex64]) -> Result<Vec<Complex64>, EvolutionError> {
    if t < s {
        return Err(EvolutionError::InvalidProblem(format!("full propagator needs t >= s, got t = {t}, s = {s}")));
    }
    if x.len() != prob.dim() {
        return Err(EvolutionError::InvalidProblem(format!("state must have dimension {}", prob.dim())));
    }
    let mut out = Vec::with_capacity(prob.dim());
    for part in [Part::Stable, Part::Unstable] {
        out.extend(propagate_block(prob, part, t, s, &x[prob.range(part)])?);
    }
    Ok(out)
}

/// Fundamental matrix of one block, from `s` to every time in `ts` (in the
/// order given, which must be monotone away from `s`).
fn block_fundamental(prob: &EvolutionProblem, part: Part, s: f64, ts: &[f64]) -> Result<Vec<DMatrix<Complex64>>, EvolutionError> {
    let b = prob.block(part);
    let d = b.dim;
    // column-major state: y[j * d + i] = Y[i][j]
    let mut y = vec![ZERO; d * d];
    for i in 0..d {
        y[i * d + i] = Complex64::new(1.0, 0.0);
    }
    let mut a = vec![ZERO; d * d];
    let solver = Dopri { rtol: 1e-10, atol: 1e-300 };
    let mut h = 0.0;
    let mut now = s;
    let mut out = Vec::with_capacity(ts.len());
    for &t in ts {
        solver.integrate(
            |tau, y, dy| {
                b.eval_into(tau, &mut a);
                for j in 0..d {
                    mat_vec(&a, &y[j * d..(j + 1) * d], &mut dy[j * d..(j + 1) * d]);
                }
            },
            now,
            t,
            &mut y,
            &mut h,
        )?;
        now = t;
        out.push(DMatrix::from_column_slice(d, d, &y));
    }
    Ok(out)
}

fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Sampling plan for the dichotomy check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DichotomyGrid {
    /// Base times: `s` for the stable block, `t` for the unstable block.
    pub anchors: Vec<f64>,
    /// Positive lags `t - s`.
    pub lags: Vec<f64>,
}

impl DichotomyGrid {
    /// Anchors on `[-10, 10]` and lags up to the truncation horizon.
    pub fn for_problem(prob: &EvolutionProblem) -> Self {
        let horizon = TRUNCATION / prob.claim.delta;
        let anchors = (0..=8).map(|i| -10.0 + 2.5 * i as f64).collect();
        let mut lags: Vec<f64> = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3].into_iter().filter(|r| *r < horizon).collect();
        lags.extend((1..=100).map(|k| horizon * k as f64 / 100.0));
        lags.sort_by(f64::total_cmp);
        lags.dedup();
        Self { anchors, lags }
    }
}

/// Measured dichotomy envelope.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub ok: bool,
    /// `max ||.|| e^{delta r}` at the claimed `delta`.
    #[serde(rename = "measured_N")]
    pub measured_n: f64,
    /// Asymptotic decay rate of the log-norm envelope.
    pub measured_delta: f64,
}

/// Checks `||U(t,s)P|| <= N e^{-delta (t-s)}` and the backward bound on the
/// unstable block over the grid, with 5% slack on `N`.
pub fn verify_dichotomy(prob: &EvolutionProblem, grid: &DichotomyGrid) -> Result<DichotomyReport, EvolutionError> {
    let DichotomyClaim { n, delta } = prob.claim;
    if grid.lags.iter().any(|r| !(*r > 0.0)) || grid.lags.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EvolutionError::InvalidProblem("lags must be positive and increasing".into()));
    }
    let mut measured_n = 0.0f64;
    let mut worst: Option<(f64, EvolutionError)> = None;
    let mut measured_delta = f64::INFINITY;
    for part in [Part::Stable, Part::Unstable] {
        if prob.block(part).dim == 0 {
            continue;
        }
        let rows: Vec<Vec<f64>> = grid
            .anchors
            .par_iter()
            .map(|&base| {
                let ts: Vec<f64> = match part {
                    Part::Stable => grid.lags.iter().map(|r| base + r).collect(),
                    Part::Unstable => grid.lags.iter().map(|r| base - r).collect(),
                };
                block_fundamental(prob, part, base, &ts).map(|ms| ms.iter().map(spectral_norm).collect())
            })
            .collect::<Result<_, _>>()?;
        let mut envelope = vec![f64::NEG_INFINITY; grid.lags.len()];
        for (row, &base) in rows.iter().zip(&grid.anchors) {
            for (k, (&norm, &r)) in row.iter().zip(&grid.lags).enumerate() {
                let scaled = norm * (delta * r).exp();
                measured_n = measured_n.max(scaled);
                envelope[k] = envelope[k].max(norm.ln());
                let excess = scaled / n;
                if excess > 1.05 && worst.as_ref().is_none_or(|(w, _)| excess > *w) {
                    let (t, s) = match part {
                        Part::Stable => (base + r, base),
                        Part::Unstable => (base, base - r),
                    };
                    worst = Some((
                        excess,
                        EvolutionError::DichotomyViolated { block: part.name(), t, s, norm, bound: n * (-delta * r).exp() },
                    ));
                }
            }
        }
        measured_delta = measured_delta.min(envelope_rate(&grid.lags, &envelope));
    }
    if let Some((_, e)) = worst {
        return Err(e);
    }
    Ok(DichotomyReport { ok: true, measured_n, measured_delta })
}

/// Least-squares decay rate of `log ||.||` over the upper half of the lags.
fn envelope_rate(lags: &[f64], env: &[f64]) -> f64 {
    let r_max = lags[lags.len() - 1];
    let pts: Vec<(f64, f64)> = lags.iter().zip(env).filter(|(r, e)| **r >= 0.5 * r_max && e.is_finite()).map(|(r, e)| (*r, *e)).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    -num / den
}

/// Value of a Green operator with its truncation bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenValue {
    pub value: Vec<Complex64>,
    pub error_bound: f64,
}

fn green<H>(prob: &EvolutionProblem, part: Part, mut h: H, t: f64) -> Result<GreenValue, EvolutionError>
where
    H: FnMut(f64, &mut [Complex64]),
{
    let b = prob.block(part);
    let range = prob.range(part);
    let mut value = vec![ZERO; prob.dim()];
    if b.dim == 0 {
        return Ok(GreenValue { value, error_bound: 0.0 });
    }
    let width = TRUNCATION / prob.claim.delta;
    let mut a = vec![ZERO; b.dim * b.dim];
    let mut full = vec![ZERO; prob.dim()];
    let mut h_sup = 0.0f64;
    let mut y = vec![ZERO; b.dim];
    // Stable: y' = A_- y + P h forward from t - width.
    // Unstable: z' = A_+ z - Q h backward from t + width.
    let (from, sign) = match part {
        Part::Stable => (t - width, 1.0),
        Part::Unstable => (t + width, -1.0),
    };
    Dopri::default().integrate(
        |tau, y, dy| {
            b.eval_into(tau, &mut a);
            mat_vec(&a, y, dy);
            full.iter_mut().for_each(|z| *z = ZERO);
            h(tau, &mut full);
            h_sup = h_sup.max(vec_norm(&full[range.clone()]));
            for (d, g) in dy.iter_mut().zip(&full[range.clone()]) {
                *d += g * sign;
            }
        },
        from,
        t,
        &mut y,
        &mut 0.0,
    )?;
    if y.iter().any(|z| !z.is_finite()) {
        return Err(EvolutionError::QuadratureFailure(format!("non-finite Green integral at t = {t}")));
    }
    value[range].copy_from_slice(&y);
    let error_bound = prob.claim.n * h_sup * (-TRUNCATION).exp() / prob.claim.delta;
    Ok(GreenValue { value, error_bound })
}

/// `int_{t - 40/delta}^t U(t,s) P h(s) ds`.
pub fn gamma1<H: FnMut(f64, &mut [Complex64])>(prob: &EvolutionProblem, h: H, t: f64) -> Result<GreenValue, EvolutionError> {
    green(prob, Part::Stable, h, t)
}

/// `int_t^{t + 40/delta} U_Q(t,s) Q h(s) ds` with the backward propagator.
pub fn gamma2<H: FnMut(f64, &mut [Complex64])>(prob: &EvolutionProblem, h: H, t: f64) -> Result<GreenValue, EvolutionError> {
    green(prob, Part::Unstable, h, t)
}

/// Controls of the fixed-point solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveConfig {
    /// Half-width of the reported solution grid.
    pub t_sol: f64,
    pub step: f64,
    /// Stop once successive iterates differ by less than this in sup norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self { t_sol: 20.0, step: 1e-2, tol: 1e-8, max_iter: 200 }
    }
}

/// Bounded mild solution on `[-t_sol, t_sol]` with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct MildSolution {
    pub trace: SampledTrace,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// Largest ratio of successive Picard differences.
    pub contraction_rate: f64,
    #[serde(rename = "K")]
    pub lipschitz: f64,
    /// `C(0, delta) = 3 N / delta` from the measured prefactor.
    pub contraction_constant: f64,
    pub contraction_bound: f64,
    pub dichotomy: DichotomyReport,
    /// Largest defect of the variation-of-constants identity on sampled pairs.
    pub residual_norm: f64,
    pub final_change: f64,
}

/// Checks `K * C(0, delta) < 1` and returns the dichotomy report with `C`.
pub fn contraction_check(prob: &EvolutionProblem) -> Result<(DichotomyReport, f64), EvolutionError> {
    let report = verify_dichotomy(prob, &DichotomyGrid::for_problem(prob))?;
    let c = 3.0 * report.measured_n / prob.claim.delta;
    let k = prob.lipschitz();
    if k * c >= 1.0 {
        return Err(EvolutionError::NotAContraction { k, c });
    }
    Ok((report, c))
}

/// Four-point cubic interpolation of a uniformly sampled vector function.
fn cubic_into(data: &[Complex64], dim: usize, start: f64, step: f64, t: f64, out: &mut [Complex64]) {
    let n = data.len() / dim;
    let x = (t - start) / step;
    let i = (x.floor() as isize).clamp(1, n as isize - 3) as usize;
    let u = x - i as f64;
    // Lagrange weights on nodes i-1, i, i+1, i+2
    let w = [
        -u * (u - 1.0) * (u - 2.0) / 6.0,
        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
        -(u + 1.0) * u * (u - 2.0) / 2.0,
        (u + 1.0) * u * (u - 1.0) / 6.0,
    ];
    for (d, o) in out.iter_mut().enumerate() {
        *o = (0..4).map(|k| data[(i - 1 + k) * dim + d] * w[k]).sum();
    }
}

struct PicardGrid {
    start: f64,
    step: f64,
    n: usize,
    /// `A(t)` at nodes and at midpoints, per block.
    a_node: [Vec<Complex64>; 2],
    a_mid: [Vec<Complex64>; 2],
}

impl PicardGrid {
    fn new(prob: &EvolutionProblem, start: f64, step: f64, n: usize) -> Self {
        let sample = |part: Part, offset: f64| -> Vec<Complex64> {
            let b = prob.block(part);
            let m = b.dim * b.dim;
            let mut out = vec![ZERO; n * m];
            if m > 0 {
                out.par_chunks_mut(m).enumerate().for_each(|(i, row)| b.eval_into(start + step * (i as f64 + offset), row));
            }
            out
        };
        Self {
            start,
            step,
            n,
            a_node: [sample(Part::Stable, 0.0), sample(Part::Unstable, 0.0)],
            a_mid: [sample(Part::Stable, 0.5), sample(Part::Unstable, 0.5)],
        }
    }

    /// One Picard map `u -> Gamma_1 g(u) - Gamma_2 g(u)` by RK4 sweeps.
    fn apply(&self, prob: &EvolutionProblem, u: &[Complex64]) -> Vec<Complex64> {
        let d = prob.dim();
        let (n, h) = (self.n, self.step);
        let mut g = vec![ZERO; n * d];
        let mut g_mid = vec![ZERO; n * d];
        g.par_chunks_mut(d).zip(g_mid.par_chunks_mut(d)).enumerate().for_each(|(i, (gi, gm))| {
            let t = self.start + h * i as f64;
            prob.forcing.eval_into(t, &u[i * d..(i + 1) * d], gi);
            let mut um = vec![ZERO; d];
            cubic_into(u, d, self.start, h, t + 0.5 * h, &mut um);
            prob.forcing.eval_into(t + 0.5 * h, &um, gm);
        });
        let mut out = vec![ZERO; n * d];
        for (bi, part) in [Part::Stable, Part::Unstable].into_iter().enumerate() {
            let bd = prob.block(part).dim;
            if bd == 0 {
                continue;
            }
            let r = prob.range(part);
            let m = bd * bd;
            let (sign, hs) = if part == Part::Stable { (1.0, h) } else { (-1.0, -h) };
            let rhs = |a: &[Complex64], y: &[Complex64], gv: &[Complex64], dy: &mut [Complex64]| {
                mat_vec(a, y, dy);
                for (o, x) in dy.iter_mut().zip(gv) {
                    *o += x * sign;
                }
            };
            let mut y = vec![ZERO; bd];
            let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![ZERO; bd], vec![ZERO; bd], vec![ZERO; bd], vec![ZERO; bd], vec![ZERO; bd]);
            let order: Box<dyn Iterator<Item = usize>> = if part == Part::Stable { Box::new(0..n - 1) } else { Box::new((1..n).rev()) };
            for i in order {
                // step from node i to node j = i +- 1; the midpoint sits at min(i, j)
                let j = if part == Part::Stable { i + 1 } else { i - 1 };
                let mid = i.min(j);
                let (an, am, aj) = (&self.a_node[bi][i * m..(i + 1) * m], &self.a_mid[bi][mid * m..(mid + 1) * m], &self.a_node[bi][j * m..(j + 1) * m]);
                let (gi, gm, gj) = (&g[i * d..(i + 1) * d][r.clone()], &g_mid[mid * d..(mid + 1) * d][r.clone()], &g[j * d..(j + 1) * d][r.clone()]);
                rhs(an, &y, gi, &mut k1);
                for q in 0..bd {
                    tmp[q] = y[q] + k1[q] * (0.5 * hs);
                }
                rhs(am, &tmp, gm, &mut k2);
                for q in 0..bd {
                    tmp[q] = y[q] + k2[q] * (0.5 * hs);
                }
                rhs(am, &tmp, gm, &mut k3);
                for q in 0..bd {
                    tmp[q] = y[q] + k3[q] * hs;
                }
                rhs(aj, &tmp, gj, &mut k4);
                for q in 0..bd {
                    y[q] += (k1[q] + (k2[q] + k3[q]) * 2.0 + k4[q]) * (hs / 6.0);
                }
                for (q, idx) in r.clone().enumerate() {
                    out[j * d + idx] = y[q] * sign;
                }
            }
        }
        out
    }
}

fn sup_diff(a: &[Complex64], b: &[Complex64], dim: usize) -> f64 {
    a.chunks(dim)
        .zip(b.chunks(dim))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Picard iteration for the bounded mild solution, starting from zero.
pub fn solve_mild(prob: &EvolutionProblem, cfg: &SolveConfig) -> Result<MildSolution, EvolutionError> {
    solve_mild_from(prob, cfg, |_, _| {})
}

/// Picard iteration starting from the bounded iterate `init`.
///
/// The iteration runs on `[-t_sol - w, t_sol + w]` with `w = 40/delta`, so the
/// truncated Green integrals and the start-up transients stay outside the
/// reported window.
pub fn solve_mild_from<I>(prob: &EvolutionProblem, cfg: &SolveConfig, init: I) -> Result<MildSolution, EvolutionError>
where
    I: Fn(f64, &mut [Complex64]) + Sync,
{
    if !(cfg.t_sol > 0.0 && cfg.step > 0.0 && cfg.tol > 0.0 && cfg.max_iter > 0 && cfg.step < cfg.t_sol) {
        return Err(EvolutionError::InvalidProblem("solver needs positive t_sol, step, tol and max_iter".into()));
    }
    let (dichotomy, c) = contraction_check(prob)?;
    let d = prob.dim();
    let h = cfg.step;
    let pad = (TRUNCATION / prob.claim.delta / h).ceil() as usize;
    let core = (2.0 * cfg.t_sol / h).round() as usize + 1;
    let n = core + 2 * pad;
    let start = -((core - 1) as f64) * h / 2.0 - pad as f64 * h;
    let grid = PicardGrid::new(prob, start, h, n);
    let mut u = vec![ZERO; n * d];
    u.par_chunks_mut(d).enumerate().for_each(|(i, row)| init(start + h * i as f64, row));
    let mut prev_change: Option<f64> = None;
    let mut rate = 0.0f64;
    let mut iterations = 0;
    let mut change = f64::INFINITY;
    while iterations < cfg.max_iter {
        let next = grid.apply(prob, &u);
        iterations += 1;
        change = sup_diff(&next, &u, d);
        let scale = next.chunks(d).map(vec_norm).fold(1.0, f64::max);
        if let Some(p) = prev_change {
            let floor = 1e-12 * scale;
            if p > floor && change > floor {
                rate = rate.max(change / p);
            }
        }
        prev_change = Some(change);
        u = next;
        if !change.is_finite() {
            return Err(EvolutionError::SolveFailed("iterates became non-finite".into()));
        }
        if change < cfg.tol {
            break;
        }
    }
    if !(change < cfg.tol) {
        return Err(EvolutionError::MaxIterExceeded { iterations, last_change: change });
    }
    let residual_norm = identity_residual(prob, &u, d, start, h, cfg.t_sol)?;
    let trace = SampledTrace::new(start + pad as f64 * h, h, d, u[pad * d..(pad + core) * d].to_vec())
        .map_err(|e| EvolutionError::SolveFailed(e.to_string()))?;
    let k = prob.lipschitz();
    Ok(MildSolution {
        trace,
        diagnostics: SolveDiagnostics {
            iterations,
            contraction_rate: rate,
            lipschitz: k,
            contraction_constant: c,
            contraction_bound: k * c,
            dichotomy,
            residual_norm,
            final_change: change,
        },
    })
}

/// Largest `|u(t) - U(t,s) u(s) - int_s^t U(t,r) g(r, u(r)) dr|` over sampled
/// interior pairs, with `u` interpolated between grid points.
fn identity_residual(prob: &EvolutionProblem, u: &[Complex64], d: usize, start: f64, h: f64, t_sol: f64) -> Result<f64, EvolutionError> {
    let mut pairs = Vec::new();
    for k in 0..5 {
        let t = -0.5 * t_sol + 0.25 * t_sol * k as f64;
        for r in [0.5, 1.0, 2.0] {
            pairs.push((t, t - f64::min(r, t_sol)));
        }
    }
    let worst = pairs
        .par_iter()
        .map(|&(t, s)| -> Result<f64, EvolutionError> {
            let mut y = vec![ZERO; d];
            cubic_into(u, d, start, h, s, &mut y);
            let mut ua = vec![ZERO; d];
            let mut g = vec![ZERO; d];
            let blocks = [prob.block(Part::Stable), prob.block(Part::Unstable)];
            let mut a = [vec![ZERO; blocks[0].dim * blocks[0].dim], vec![ZERO; blocks[1].dim * blocks[1].dim]];
            Dopri { rtol: 1e-11, atol: 1e-13 }.integrate(
                |tau, y, dy| {
                    cubic_into(u, d, start, h, tau, &mut ua);
                    prob.forcing.eval_into(tau, &ua, &mut g);
                    let mut off = 0;
                    for (b, a) in blocks.iter().zip(a.iter_mut()) {
                        b.eval_into(tau, a);
                        mat_vec(a, &y[off..off + b.dim], &mut dy[off..off + b.dim]);
                        off += b.dim;
                    }
                    for (o, x) in dy.iter_mut().zip(&g) {
                        *o += x;
                    }
                },
                s,
                t,
                &mut y,
                &mut 0.0,
            )?;
            let mut ut = vec![ZERO; d];
            cubic_into(u, d, start, h, t, &mut ut);
            Ok(y.iter().zip(&ut).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt())
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(worst.into_iter().fold(0.0, f64::max))
}

/// Almost periodic reference of a mild solution and the ergodic verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPapReport {
    pub ap_part: TrigPolynomial,
    pub ergodic_ok: bool,
    /// Weighted mean of `|u - u_ref|` along the schedule.
    pub difference_mean: MeanEstimate,
    pub reference: MildSolution,
}

/// Threshold below which the weighted mean of `|u - u_ref|` counts as decayed.
pub const ERGODIC_THRESHOLD: f64 = 1e-3;

/// Splits a mild solution into the solution driven by the almost periodic
/// forcing alone and a remainder, and checks that the remainder has a
/// vanishing weighted mean.
pub fn verify_solution_pap(
    sol: &MildSolution,
    prob: &EvolutionProblem,
    mu: &Weight,
    nu: &Weight,
    schedule: &Schedule,
    cfg: &SolveConfig,
) -> Result<SolutionPapReport, EvolutionError> {
    let pre = |e: String| EvolutionError::PreconditionFailed(e);
    let dcfg = DecomposeConfig::default();
    for t in dcfg.limits.schedule.points() {
        let ratio = (nu.log_mass(t).map_err(weight_err)? - mu.log_mass(t).map_err(weight_err)?).exp();
        if !(ratio > dcfg.ratio_floor) {
            return Err(pre(format!("inf nu(Q_T)/mu(Q_T) is not positive (ratio {ratio:e} at T = {t})")));
        }
    }
    let ergodic = PAPFunction::ergodic_only(prob.dim(), prob.forcing.beta.ergodic.clone()).map_err(sig_err)?;
    if !ergodic.ergodic.is_empty() {
        let check = spectral::translation_invariance(&ergodic, mu, nu, &[-1.0, 1.0], &MeanConfig::default())
            .map_err(|e| pre(format!("translation invariance could not be checked: {e}")))?;
        if !check.ok {
            return Err(pre("ergodic forcing is not translation invariant under these weights".into()));
        }
    }
    let companion = prob.without_ergodic_forcing();
    let reference = if companion == *prob {
        sol.clone()
    } else {
        solve_mild(&companion, &SolveConfig { t_sol: sol.trace.symmetric_half_width(), step: sol.trace.step(), ..*cfg })
            .map_err(|e| EvolutionError::SolveFailed(format!("reference problem: {e}")))?
    };
    let diff = sol.trace.sub(&reference.trace).map_err(sig_err)?;
    let difference_mean = trace_weighted_norm_mean(&diff, mu, nu, schedule, ERGODIC_THRESHOLD).map_err(sig_err)?;
    let values: Vec<f64> = difference_mean.trace.iter().map(|p| p.value[0].re).collect();
    let ergodic_ok = values.iter().all(|v| *v == 0.0) || decays(&values, ERGODIC_THRESHOLD);
    let candidates = candidate_frequencies(&companion.forcing);
    let ap_part = match decompose(&reference.trace, mu, nu, &candidates, &dcfg) {
        Ok(dec) => dec.ap,
        Err(SignalError::ConditionViolated { inf_ratio }) => return Err(pre(format!("inf nu(Q_T)/mu(Q_T) = {inf_ratio:e}"))),
        Err(e) => return Err(EvolutionError::SolveFailed(format!("reference decomposition: {e}"))),
    };
    Ok(SolutionPapReport { ap_part, ergodic_ok, difference_mean, reference })
}

fn weight_err(e: WeightError) -> EvolutionError {
    EvolutionError::PreconditionFailed(e.to_string())
}

fn sig_err(e: SignalError) -> EvolutionError {
    EvolutionError::SolveFailed(e.to_string())
}

/// Frequencies the reference solution may carry: combinations of up to three
/// forcing frequencies (one when the forcing ignores `u`).
fn candidate_frequencies(f: &LipschitzMap) -> Vec<f64> {
    let mut base: Vec<f64> = f.beta.ap.frequencies();
    let order = if f.is_linear_in_t() {
        1
    } else {
        base.extend(f.alpha.ap.frequencies());
        3
    };
    let mut signed: Vec<f64> = base.iter().flat_map(|w| [*w, -*w]).collect();
    signed.push(0.0);
    let mut out = vec![0.0];
    let mut layer = vec![0.0];
    for _ in 0..order {
        let mut next = Vec::new();
        for a in &layer {
            for b in &signed {
                next.push(a + b);
            }
        }
        out.extend(&next);
        layer = next;
    }
    if order == 1 {
        out = base.clone();
        out.push(0.0);
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    out
}

/// Named reference problems with closed-form propagators.
pub fn builtin_problems() -> Vec<(&'static str, EvolutionProblem)> {
    let k = |x: f64| Complex64::new(x, 0.0);
    let zero = |d: usize| LipschitzMap::forcing(PAPFunction::zero(d));
    // -(2 + sin t) and 2 + cos t; both log-norms stay within 2 of the mean rate
    let minus_two_sin = TrigPolynomial::scalar(&[(0.0, k(-2.0)), (1.0, Complex64::new(0.0, 0.5)), (-1.0, Complex64::new(0.0, -0.5))]);
    let two_cos = TrigPolynomial::scalar(&[(0.0, k(2.0)), (1.0, k(0.5)), (-1.0, k(0.5))]);
    let wide = DichotomyClaim { n: std::f64::consts::E.powi(2), delta: 2.0 };
    let tone: PAPFunction = TrigPolynomial::scalar(&[(1.0, k(1.0))]).into();
    let bump = ErgodicPerturbation::scalar(DecayProfile::gaussian(1.0));
    let build = || -> Result<Vec<(&'static str, EvolutionProblem)>, Box<dyn std::error::Error>> {
        Ok(vec![
            ("hyperbolic_pair", EvolutionProblem::diagonal(&[-1.0], &[1.0], DichotomyClaim { n: 1.0, delta: 1.0 }, zero(2))?),
            ("oscillating_stable", EvolutionProblem::new(vec![vec![minus_two_sin.clone()]], vec![], wide, zero(1))?),
            ("oscillating_pair", EvolutionProblem::new(vec![vec![minus_two_sin]], vec![vec![two_cos]], wide, zero(2))?),
            ("linear_tone", EvolutionProblem::diagonal(&[-1.0], &[], DichotomyClaim { n: 1.0, delta: 1.0 }, LipschitzMap::forcing(tone))?),
            (
                "semilinear_sine",
                EvolutionProblem::diagonal(
                    &[-2.0],
                    &[],
                    DichotomyClaim { n: 1.0, delta: 2.0 },
                    LipschitzMap::new(TrigPolynomial::scalar(&[(0.0, k(0.1))]).into(), Nonlinearity::Sine, TrigPolynomial::cosine(1.0, 1.0).into())?,
                )?,
            ),
            (
                "bump_forced",
                EvolutionProblem::diagonal(
                    &[-1.0],
                    &[],
                    DichotomyClaim { n: 1.0, delta: 1.0 },
                    LipschitzMap::forcing(PAPFunction::new(TrigPolynomial::cosine(1.0, 1.0), vec![bump])?),
                )?,
            ),
        ])
    };
    build().expect("reference problems are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{DecayProfile, ErgodicPerturbation, Nonlinearity};

    fn c(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn claim(n: f64, delta: f64) -> DichotomyClaim {
        DichotomyClaim { n, delta }
    }

    fn scalar_trig(terms: &[(f64, Complex64)]) -> TrigPolynomial {
        TrigPolynomial::scalar(terms)
    }

    #[test]
    fn dopri_matches_exponential() {
        let mut y = vec![c(1.0)];
        Dopri::default().integrate(|_, y, dy| dy[0] = -y[0], 0.0, 3.0, &mut y, &mut 0.0).unwrap();
        assert!((y[0].re - (-3.0f64).exp()).abs() < 1e-11);
        Dopri::default().integrate(|_, y, dy| dy[0] = -y[0], 3.0, 0.0, &mut y, &mut 0.0).unwrap();
        assert!((y[0].re - 1.0).abs() < 1e-9);
    }

    #[test]
    fn propagation_examples() {
        let p = EvolutionProblem::diagonal(&[-1.0], &[], claim(1.0, 1.0), LipschitzMap::forcing(PAPFunction::zero(1))).unwrap();
        let y = propagate(&p, 1.0, 0.0, &[c(1.0)]).unwrap();
        assert!((y[0].re - 0.3678794411714423).abs() < 1e-10);
        assert_eq!(propagate(&p, 2.0, 2.0, &[c(0.7)]).unwrap(), vec![c(0.7)]);
        // -(2 + sin t)
        let a = scalar_trig(&[(0.0, c(-2.0)), (1.0, Complex64::new(0.0, 0.5)), (-1.0, Complex64::new(0.0, -0.5))]);
        let p = EvolutionProblem::new(vec![vec![a]], vec![], claim(1.0, 1.0), LipschitzMap::forcing(PAPFunction::zero(1))).unwrap();
        let y = propagate(&p, std::f64::consts::PI, 0.0, &[c(1.0)]).unwrap();
        let exact = (-(2.0 * std::f64::consts::PI + 2.0)).exp();
        assert!((y[0].re - exact).abs() < 1e-10 * exact.max(1e-3));
        assert!(matches!(propagate(&p, 0.0, 1.0, &[c(1.0)]), Err(EvolutionError::InvalidProblem(_))));
    }

    #[test]
    fn dichotomy_examples() {
        let zero2 = LipschitzMap::forcing(PAPFunction::zero(2));
        let p = EvolutionProblem::diagonal(&[-1.0], &[1.0], claim(1.0, 1.0), zero2.clone()).unwrap();
        let r = verify_dichotomy(&p, &DichotomyGrid::for_problem(&p)).unwrap();
        assert!(r.ok && (r.measured_delta - 1.0).abs() < 1e-6 && (r.measured_n - 1.0).abs() < 1e-6, "{r:?}");
        let p = EvolutionProblem::diagonal(&[-0.1], &[1.0], claim(1.0, 1.0), zero2).unwrap();
        assert!(matches!(verify_dichotomy(&p, &DichotomyGrid::for_problem(&p)), Err(EvolutionError::DichotomyViolated { block: "stable", .. })));
    }

    #[test]
    fn green_operator_examples() {
        let p = EvolutionProblem::diagonal(&[-2.0], &[], claim(1.0, 2.0), LipschitzMap::forcing(PAPFunction::zero(1))).unwrap();
        let g = gamma1(&p, |_, out| out[0] = c(1.0), 3.0).unwrap();
        assert!((g.value[0].re - 0.5).abs() < 1e-9);
        assert!(g.error_bound < 1e-17);
        let p = EvolutionProblem::diagonal(&[-1.0], &[], claim(1.0, 1.0), LipschitzMap::forcing(PAPFunction::zero(1))).unwrap();
        let t = 0.8;
        let g = gamma1(&p, |s, out| out[0] = Complex64::cis(s), t).unwrap();
        assert!((g.value[0] - Complex64::cis(t) / Complex64::new(1.0, 1.0)).norm() < 1e-9);
        assert_eq!(gamma2(&p, |_, out| out[0] = c(1.0), t).unwrap().value, vec![c(0.0)]);
        let p = EvolutionProblem::diagonal(&[-1.0], &[1.0], claim(1.0, 1.0), LipschitzMap::forcing(PAPFunction::zero(2))).unwrap();
        let g = gamma2(&p, |_, out| out[1] = c(1.0), 0.3).unwrap();
        assert!(g.value[0] == c(0.0) && (g.value[1].re - 1.0).abs() < 1e-9);
        assert_eq!(gamma1(&p, |_, _| {}, 0.3).unwrap().value, vec![c(0.0); 2]);
    }

    #[test]
    fn linear_mild_solution_is_exact() {
        let f = LipschitzMap::forcing(scalar_trig(&[(1.0, c(1.0))]).into());
        let p = EvolutionProblem::diagonal(&[-1.0], &[], claim(1.0, 1.0), f).unwrap();
        let sol = solve_mild(&p, &SolveConfig { t_sol: 5.0, ..Default::default() }).unwrap();
        for (t, v) in sol.trace.rows() {
            assert!((v[0] - Complex64::cis(t) / Complex64::new(1.0, 1.0)).norm() < 1e-8);
        }
        assert!(sol.diagnostics.residual_norm < 1e-7);
        let zero = EvolutionProblem::diagonal(&[-1.0], &[2.0], claim(1.0, 1.0), LipschitzMap::forcing(PAPFunction::zero(2))).unwrap();
        let sol = solve_mild(&zero, &SolveConfig { t_sol: 2.0, ..Default::default() }).unwrap();
        assert_eq!(sol.diagnostics.iterations, 1);
        assert_eq!(sol.trace.sup_norm(), 0.0);
    }

    #[test]
    fn refuses_non_contractions() {
        let alpha: PAPFunction = scalar_trig(&[(0.0, c(0.5))]).into();
        let f = LipschitzMap::new(alpha, Nonlinearity::Sine, PAPFunction::zero(1)).unwrap();
        let p = EvolutionProblem::diagonal(&[-1.0], &[], claim(1.0, 1.0), f).unwrap();
        match solve_mild(&p, &SolveConfig::default()) {
            Err(EvolutionError::NotAContraction { k, c }) => assert!((k * c - 1.5).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn semilinear_matches_forward_integration() {
        let alpha: PAPFunction = scalar_trig(&[(0.0, c(0.1))]).into();
        let f = LipschitzMap::new(alpha, Nonlinearity::Sine, TrigPolynomial::cosine(1.0, 1.0).into()).unwrap();
        let p = EvolutionProblem::diagonal(&[-2.0], &[], claim(1.0, 2.0), f).unwrap();
        let sol = solve_mild(&p, &SolveConfig { t_sol: 4.0, tol: 1e-10, ..Default::default() }).unwrap();
        let dg = &sol.diagnostics;
        assert!(dg.contraction_rate <= dg.contraction_bound * 1.05, "{dg:?}");
        // forward RK4 from far in the past; transients die like e^{-1.9 * 60}
        let rhs = |t: f64, u: f64| -2.0 * u + 0.1 * u.sin() + t.cos();
        let (mut u, h) = (0.0f64, 1e-3f64);
        let mut step = 0i64;
        let mut checks: Vec<(f64, f64)> = vec![(-2.0, 0.0), (0.0, 0.0), (3.0, 0.0)];
        for (target, slot) in checks.iter_mut() {
            let stop = ((*target + 60.0) / h).round() as i64;
            while step < stop {
                let t = -60.0 + h * step as f64;
                let k1 = rhs(t, u);
                let k2 = rhs(t + h / 2.0, u + h / 2.0 * k1);
                let k3 = rhs(t + h / 2.0, u + h / 2.0 * k2);
                let k4 = rhs(t + h, u + h * k3);
                u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
                step += 1;
            }
            *slot = u;
        }
        for (target, oracle) in checks {
            let i = ((target - sol.trace.start()) / sol.trace.step()).round() as usize;
            assert!((sol.trace.value(i)[0].re - oracle).abs() < 1e-6, "{target}");
        }
    }

    #[test]
    fn pap_split_of_bump_forced_solution() {
        let bump = ErgodicPerturbation::scalar(DecayProfile::gaussian(1.0));
        let beta = PAPFunction::new(TrigPolynomial::cosine(1.0, 1.0), vec![bump.clone()]).unwrap();
        let p = EvolutionProblem::diagonal(&[-1.0], &[], claim(1.0, 1.0), LipschitzMap::forcing(beta)).unwrap();
        let cfg = SolveConfig { t_sol: 1024.0, step: 0.05, tol: 1e-9, max_iter: 20 };
        let sol = solve_mild(&p, &cfg).unwrap();
        let one = Weight::constant(1.0);
        let r = verify_solution_pap(&sol, &p, &one, &one, &Schedule::ending_at(1024.0, 8), &cfg).unwrap();
        assert!(r.ergodic_ok);
        let f = r.ap_part.frequencies();
        assert_eq!(f.len(), 2);
        assert!((f[0] + 1.0).abs() < 1e-12 && (f[1] - 1.0).abs() < 1e-12);
        let only = EvolutionProblem::diagonal(&[-1.0], &[], claim(1.0, 1.0), LipschitzMap::forcing(PAPFunction::ergodic_only(1, vec![bump]).unwrap())).unwrap();
        let sol = solve_mild(&only, &cfg).unwrap();
        let r = verify_solution_pap(&sol, &only, &one, &one, &Schedule::ending_at(1024.0, 8), &cfg).unwrap();
        assert!(r.ergodic_ok && r.ap_part.is_empty());
    }

    #[test]
    fn problem_json_round_trip() {
        let json = r#"{
            "stable": [[{"dim": 1, "terms": [{"freq": 0.0, "amp": [[-1.0, 0.0]]}]}]],
            "unstable": [[{"dim": 1, "terms": [{"freq": 0.0, "amp": [[1.0, 0.0]]}]}]],
            "dichotomy": {"N": 1.0, "delta": 1.0},
            "forcing": {"alpha": {"ap": {"dim": 1, "terms": []}}, "beta": {"ap": {"dim": 2, "terms": []}}},
            "K": 0.1
        }"#;
        let p: EvolutionProblem = serde_json::from_str(json).unwrap();
        assert_eq!(p.dim(), 2);
        assert_eq!(p.lipschitz(), 0.1);
        let back: EvolutionProblem = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<EvolutionProblem>(&json.replace("\"K\"", "\"k\"")).is_err());
    }
}
