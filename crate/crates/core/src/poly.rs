//! Dense real polynomials with real-root isolation and factorization into
//! irreducible quadratics.
//!
//! Real roots are isolated recursively: the critical points of `p` (real roots
//! of `p'`) split the Cauchy-bound interval into pieces on which `p` is
//! monotone, and each sign change is refined by bisection. Touching roots
//! are caught at the critical points themselves.

use num_complex::Complex64;

/// Real polynomial stored with ascending-degree coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Self {
        let mut coeffs = coeffs;
        while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == 0.0 {
            coeffs.pop();
        }
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        Self { coeffs }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn leading(&self) -> f64 {
        self.coeffs[self.coeffs.len() - 1]
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs
            .iter()
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
    }

    /// Running-error bound of Horner evaluation at `x`.
    pub fn eval_error_bound(&self, x: f64) -> f64 {
        let ax = x.abs();
        let mag = self.coeffs.iter().rev().fold(0.0, |acc, c| acc * ax + c.abs());
        4.0 * (self.coeffs.len() as f64) * f64::EPSILON * mag
    }

    pub fn derivative(&self) -> Polynomial {
        if self.coeffs.len() <= 1 {
            return Polynomial::new(vec![0.0]);
        }
        Polynomial::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| k as f64 * c)
                .collect(),
        )
    }

    pub fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Polynomial::new(out)
    }

    pub fn pow(&self, m: u32) -> Polynomial {
        let mut out = Polynomial::new(vec![1.0]);
        for _ in 0..m {
            out = out.mul(self);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        Polynomial::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    /// Cauchy bound: every root satisfies `|z| < 1 + max |c_k / c_n|`.
    pub fn cauchy_bound(&self) -> f64 {
        let lead = self.leading().abs();
        1.0 + self.coeffs[..self.degree()]
            .iter()
            .map(|c| c.abs() / lead)
            .fold(0.0, f64::max)
    }

    /// Sorted real roots; multiple roots are reported once.
    pub fn real_roots(&self) -> Vec<f64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        if n == 1 {
            return vec![-self.coeffs[0] / self.coeffs[1]];
        }
        let bound = self.cauchy_bound();
        let mut crit: Vec<f64> = self
            .derivative()
            .real_roots()
            .into_iter()
            .filter(|x| x.abs() < bound)
            .collect();
        crit.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut knots = Vec::with_capacity(crit.len() + 2);
        knots.push(-bound);
        knots.extend(crit.iter().copied());
        knots.push(bound);

        let mut roots: Vec<f64> = Vec::new();
        for &c in &crit {
            if self.eval(c).abs() <= self.eval_error_bound(c) {
                roots.push(c);
            }
        }
        for w in knots.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            let near_zero = |x: f64, fx: f64| fx.abs() <= self.eval_error_bound(x);
            if near_zero(a, fa) || near_zero(b, fb) {
                continue;
            }
            if fa.signum() != fb.signum() {
                roots.push(self.bisect(a, b, fa));
            }
        }
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
        roots
    }

    fn bisect(&self, mut a: f64, mut b: f64, mut fa: f64) -> f64 {
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = self.eval(m);
            if fm == 0.0 {
                return m;
            }
            if fm.signum() == fa.signum() {
                a = m;
                fa = fm;
            } else {
                b = m;
            }
        }
        0.5 * (a + b)
    }

    /// All complex roots by Aberth–Ehrlich iteration.
    pub fn complex_roots(&self) -> Vec<Complex64> {
        let n = self.degree();
        if n == 0 {
            return Vec::new();
        }
        let dp = self.derivative();
        let r = self.cauchy_bound();
        let mut z: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(0.5 * r, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64 + 0.4))
            .collect();
        for _ in 0..2000 {
            let mut max_step: f64 = 0.0;
            for i in 0..n {
                let p = self.eval_complex(z[i]);
                if p == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let ratio = p / dp.eval_complex(z[i]);
                let repulsion: Complex64 = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| {
                        let d = z[i] - z[j];
                        if d.norm() == 0.0 {
                            Complex64::new(0.0, 0.0)
                        } else {
                            d.inv()
                        }
                    })
                    .sum();
                let denom = Complex64::new(1.0, 0.0) - ratio * repulsion;
                let step = if denom.norm() == 0.0 { ratio } else { ratio / denom };
                if step.is_finite() {
                    z[i] -= step;
                    max_step = max_step.max(step.norm() / (1.0 + z[i].norm()));
                }
            }
            if max_step < 1e-15 {
                break;
            }
        }
        z
    }
}

/// One irreducible quadratic factor `(x^2 + a x + b)^multiplicity`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadraticFactor {
    pub a: f64,
    pub b: f64,
    pub multiplicity: u32,
}

impl QuadraticFactor {
    pub fn discriminant(&self) -> f64 {
        self.a * self.a - 4.0 * self.b
    }

    pub fn polynomial(&self) -> Polynomial {
        Polynomial::new(vec![self.b, self.a, 1.0])
    }
}

/// Expands `lead * prod (x^2 + a_k x + b_k)^{m_k}`.
pub fn expand_factors(lead: f64, factors: &[QuadraticFactor]) -> Polynomial {
    factors
        .iter()
        .fold(Polynomial::new(vec![lead]), |acc, f| acc.mul(&f.polynomial().pow(f.multiplicity)))
}

/// Factors a polynomial without real roots into irreducible quadratics.
///
/// Roots from [`Polynomial::complex_roots`] are clustered in each half plane,
/// each cluster is replaced by its centroid and polished by Newton's method on
/// the derivative whose simple root it is, and conjugate clusters are paired
/// within `pair_tol` relative distance. Clustering radii shrink from coarse to
/// fine until the expanded factors reproduce the coefficients.
pub fn quadratic_factorization(p: &Polynomial, pair_tol: f64) -> Result<Vec<QuadraticFactor>, String> {
    let roots = p.complex_roots();
    let scale = roots.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let mut best: Option<(f64, Vec<QuadraticFactor>)> = None;
    let mut last_err = String::from("no clustering radius produced a pairing");
    for rel in [5e-2, 1e-2, 1e-3, 1e-4, 1e-5] {
        match factor_with_radius(p, &roots, rel * scale, pair_tol) {
            Ok(factors) => {
                let rebuilt = expand_factors(p.leading(), &factors);
                let max = p.coeffs().iter().fold(0.0f64, |m, c| m.max(c.abs()));
                let err = p.coeffs().iter().zip(rebuilt.coeffs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / max;
                if err < 1e-10 {
                    return Ok(factors);
                }
                if best.as_ref().is_none_or(|(e, _)| err < *e) {
                    best = Some((err, factors));
                }
            }
            Err(e) => last_err = e,
        }
    }
    best.map(|(_, f)| f).ok_or(last_err)
}

fn factor_with_radius(p: &Polynomial, roots: &[Complex64], radius: f64, pair_tol: f64) -> Result<Vec<QuadraticFactor>, String> {
    let mut upper = cluster(roots.iter().copied().filter(|z| z.im > 0.0).collect(), radius);
    let mut lower = cluster(roots.iter().copied().filter(|z| z.im <= 0.0).collect(), radius);
    for c in upper.iter_mut().chain(lower.iter_mut()) {
        c.0 = polish(p, c.0, c.1);
    }
    if upper.len() != lower.len() {
        return Err(format!(
            "unpaired roots: {} clusters above the real axis, {} below",
            upper.len(),
            lower.len()
        ));
    }
    let mut factors = Vec::with_capacity(upper.len());
    for (z, m) in upper {
        let pos = lower
            .iter()
            .position(|(w, k)| *k == m && (w.conj() - z).norm() <= pair_tol * (1.0 + z.norm()))
            .ok_or_else(|| format!("no conjugate partner for root {z} of multiplicity {m}"))?;
        lower.swap_remove(pos);
        factors.push(QuadraticFactor { a: -2.0 * z.re, b: z.norm_sqr(), multiplicity: m });
    }
    factors.sort_by(|x, y| x.a.partial_cmp(&y.a).unwrap().then(x.b.partial_cmp(&y.b).unwrap()));
    Ok(factors)
}

fn cluster(mut pts: Vec<Complex64>, radius: f64) -> Vec<(Complex64, u32)> {
    let mut out = Vec::new();
    while let Some(seed) = pts.pop() {
        let mut members = vec![seed];
        let mut changed = true;
        while changed {
            changed = false;
            let mut i = 0;
            while i < pts.len() {
                if members.iter().any(|m| (pts[i] - m).norm() <= radius) {
                    members.push(pts.swap_remove(i));
                    changed = true;
                } else {
                    i += 1;
                }
            }
        }
        let n = members.len();
        let centroid = members.iter().sum::<Complex64>() / n as f64;
        out.push((centroid, n as u32));
    }
    out
}

fn polish(p: &Polynomial, z0: Complex64, multiplicity: u32) -> Complex64 {
    let mut q = p.clone();
    for _ in 1..multiplicity {
        q = q.derivative();
    }
    let dq = q.derivative();
    let mut z = z0;
    for _ in 0..50 {
        let d = dq.eval_complex(z);
        if d.norm() == 0.0 {
            break;
        }
        let step = q.eval_complex(z) / d;
        if !step.is_finite() {
            break;
        }
        z -= step;
        if step.norm() <= 1e-16 * (1.0 + z.norm()) {
            break;
        }
    }
    z
}
