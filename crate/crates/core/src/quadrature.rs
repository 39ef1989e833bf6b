//! Gauss–Legendre rules and adaptive bisection quadrature.
//!
//! Two integration styles are used throughout the crate:
//!
//! * [`adaptive`] integrates a scalar function on a finite interval to an
//!   absolute tolerance by recursive bisection, comparing the rule on the whole
//!   interval against the sum of the rule on both halves.
//! * [`Panels`] applies a fixed Gauss–Legendre rule on a uniform partition.
//!   Oscillatory integrands choose the panel width from their highest
//!   frequency so every period is covered by enough nodes.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::QuadratureError;

/// Nodes and weights of an `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Computes the rule by Newton iteration on the Legendre polynomial.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi's initial guess.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 8-point rule used by the panel integrators.
    pub fn eight() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(8))
    }

    /// Shared 10-point rule used by the adaptive integrator.
    pub fn ten() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(10))
    }

    /// Applies the rule on `[a, b]`.
    pub fn apply<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += w * f(mid + half * x);
        }
        acc * half
    }

    /// Applies the rule on `[a, b]` to a complex-valued integrand.
    pub fn apply_complex<F: FnMut(f64) -> Complex64>(&self, a: f64, b: f64, mut f: F) -> Complex64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc += f(mid + half * x) * *w;
        }
        acc * half
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Maximum recursion depth of [`adaptive`].
pub const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to absolute tolerance `tol` by adaptive
/// bisection with a 10-point Gauss–Legendre interior rule.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<Integral, QuadratureError> {
    if !(tol > 0.0) {
        return Err(QuadratureError::InvalidTolerance(tol));
    }
    if a == b {
        return Ok(Integral { value: 0.0, error: 0.0 });
    }
    let rule = GaussLegendre::ten();
    let whole = rule.apply(a, b, &f);
    let mut budget = 200_000usize;
    let (value, error) = recurse(&f, rule, a, b, whole, tol, 0, &mut budget)?;
    if !value.is_finite() {
        return Err(QuadratureError::NonFinite { a, b });
    }
    Ok(Integral { value, error })
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    budget: &mut usize,
) -> Result<(f64, f64), QuadratureError> {
    let mid = 0.5 * (a + b);
    let left = rule.apply(a, mid, f);
    let right = rule.apply(mid, b, f);
    let refined = left + right;
    let err = (refined - whole).abs();
    // absolute accuracy below double-precision resolution of the value is unattainable
    let floor = 64.0 * f64::EPSILON * refined.abs();
    if err <= tol.max(floor) || (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
        return Ok((refined, err));
    }
    if depth >= MAX_DEPTH || *budget == 0 {
        return Err(QuadratureError::RefinementLimit { a, b, error: err, tol });
    }
    *budget -= 1;
    let (l, el) = recurse(f, rule, a, mid, left, 0.5 * tol, depth + 1, budget)?;
    let (r, er) = recurse(f, rule, mid, b, right, 0.5 * tol, depth + 1, budget)?;
    Ok((l + r, el + er))
}

/// Uniform partition of `[a, b]` into panels no wider than `max_width`.
#[derive(Debug, Clone, Copy)]
pub struct Panels {
    pub a: f64,
    pub b: f64,
    pub count: usize,
}

impl Panels {
    pub fn new(a: f64, b: f64, max_width: f64) -> Self {
        let len = (b - a).abs();
        let count = if len == 0.0 { 0 } else { ((len / max_width).ceil() as usize).max(1) };
        Self { a, b, count }
    }

    pub fn width(&self) -> f64 {
        (self.b - self.a) / self.count.max(1) as f64
    }

    /// Panel endpoints `(lo, hi)` in order from `a` to `b`.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let w = self.width();
        (0..self.count).map(move |k| {
            let lo = self.a + w * k as f64;
            let hi = if k + 1 == self.count { self.b } else { self.a + w * (k + 1) as f64 };
            (lo, hi)
        })
    }

    /// Integrates a complex integrand with the 8-point rule on every panel.
    pub fn integrate_complex<F: FnMut(f64) -> Complex64>(&self, mut f: F) -> Complex64 {
        let rule = GaussLegendre::eight();
        self.iter().map(|(lo, hi)| rule.apply_complex(lo, hi, &mut f)).sum()
    }

    /// Integrates a real integrand with the 8-point rule on every panel.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        let rule = GaussLegendre::eight();
        self.iter().map(|(lo, hi)| rule.apply(lo, hi, &mut f)).sum()
    }
}

/// Panel width that resolves oscillations up to angular frequency `omega`
/// with eight nodes per quarter period, capped at `cap`.
pub fn oscillatory_width(omega: f64, cap: f64) -> f64 {
    if omega <= 0.0 {
        cap
    } else {
        (std::f64::consts::FRAC_PI_2 / omega).min(cap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let rule = GaussLegendre::new(8);
        // degree 15 is the exactness limit of an 8-point rule
        let v = rule.apply(-1.0, 1.0, |x| x.powi(14));
        assert!((v - 2.0 / 15.0).abs() < 1e-14);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let r = adaptive(|x: f64| x.abs(), -1.0, 2.0, 1e-10).unwrap();
        assert!((r.value - 2.5).abs() < 1e-10);
    }

    #[test]
    fn adaptive_reports_refinement_limit() {
        let r = adaptive(|x: f64| if x > 0.3 { 1.0 / (x - 0.3) } else { 0.0 }, 0.0, 1.0, 1e-12);
        assert!(matches!(r, Err(QuadratureError::RefinementLimit { .. }) | Err(QuadratureError::NonFinite { .. })));
    }

    #[test]
    fn panels_cover_interval() {
        let p = Panels::new(0.0, 10.0, 3.0);
        assert_eq!(p.count, 4);
        let v = p.integrate(|x| x);
        assert!((v - 50.0).abs() < 1e-12);
        let e = p.iter().last().unwrap().1;
        assert_eq!(e, 10.0);
    }

    #[test]
    fn oscillatory_panels_are_accurate() {
        let omega = 7.3;
        let p = Panels::new(0.0, 50.0, oscillatory_width(omega, 1.0));
        let v = p.integrate_complex(|t| Complex64::new(0.0, omega * t).exp());
        let exact = (Complex64::new(0.0, omega * 50.0).exp() - 1.0) / Complex64::new(0.0, omega);
        assert!((v - exact).norm() < 1e-12);
    }
}
