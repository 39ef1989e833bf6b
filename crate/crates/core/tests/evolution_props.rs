mod common;

use common::{c, pinned};
use dwpap_core::evolution::{
    propagate, propagate_block, solve_mild, solve_mild_from, verify_dichotomy, DichotomyClaim, DichotomyGrid, EvolutionProblem, Part, SolveConfig,
};
use dwpap_core::signals::{LipschitzMap, Nonlinearity, TrigTerm};
use dwpap_core::{PAPFunction, TrigPolynomial};
use num_complex::Complex64;
use proptest::prelude::*;

fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `-(a0 + b sin(omega t))` on the stable side, `+(a0 + b sin(omega t))` on the unstable side.
fn modulated(sign: f64, a0: f64, b: f64, omega: f64) -> TrigPolynomial {
    TrigPolynomial::scalar(&[
        (0.0, c(sign * a0)),
        (omega, Complex64::new(0.0, -sign * b / 2.0)),
        (-omega, Complex64::new(0.0, sign * b / 2.0)),
    ])
}

/// Scalar stable and unstable blocks with bounded oscillating rates; the
/// claim follows from `|int_s^t sin(omega r) dr| <= 2 / omega`.
fn oscillating_problem() -> impl Strategy<Value = EvolutionProblem> {
    (0.5f64..2.0, 0.0f64..0.4, 0.5f64..3.0, 0.5f64..2.0, 0.0f64..0.4, 0.5f64..3.0).prop_map(|(a, ab, wa, b, bb, wb)| {
        let (ab, bb) = (ab * a, bb * b);
        let claim = DichotomyClaim { n: (2.0 * ab / wa).max(2.0 * bb / wb).exp(), delta: a.min(b) };
        let zero = LipschitzMap::forcing(PAPFunction::zero(2));
        EvolutionProblem::new(vec![vec![modulated(-1.0, a, ab, wa)]], vec![vec![modulated(1.0, b, bb, wb)]], claim, zero).unwrap()
    })
}

fn diagonal_problem() -> impl Strategy<Value = EvolutionProblem> {
    (prop::collection::vec(0.5f64..3.0, 1..=2), prop::collection::vec(0.5f64..3.0, 0..=2)).prop_map(|(s, u)| {
        let delta = s.iter().chain(&u).copied().fold(f64::INFINITY, f64::min);
        let stable: Vec<f64> = s.iter().map(|x| -x).collect();
        let zero = LipschitzMap::forcing(PAPFunction::zero(s.len() + u.len()));
        EvolutionProblem::diagonal(&stable, &u, DichotomyClaim { n: 1.0, delta }, zero).unwrap()
    })
}

fn any_problem() -> impl Strategy<Value = EvolutionProblem> {
    prop_oneof![oscillating_problem(), diagonal_problem()]
}

fn state(dim: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0).prop_map(|(re, im)| Complex64::new(re, im)), dim)
}

proptest! {
    #![proptest_config(pinned(48))]

    #[test]
    fn cocycle_defect_is_tiny(
        (p, x) in any_problem().prop_flat_map(|p| { let d = p.dim(); (Just(p), state(d)) }),
        times in prop::collection::vec(-10.0f64..10.0, 3),
    ) {
        let mut ts = times.clone();
        ts.sort_by(f64::total_cmp);
        let (r, s, t) = (ts[0], ts[1], ts[2]);
        let xs = &x[p.range(Part::Stable)];
        let two_step = propagate_block(&p, Part::Stable, t, s, &propagate_block(&p, Part::Stable, s, r, xs).unwrap()).unwrap();
        let direct = propagate_block(&p, Part::Stable, t, r, xs).unwrap();
        let defect: Vec<Complex64> = two_step.iter().zip(&direct).map(|(a, b)| a - b).collect();
        prop_assert!(norm(&defect) <= 1e-8 * norm(xs).max(f64::MIN_POSITIVE), "stable {}", norm(&defect));
        // the unstable block contracts backward in time
        let xu = &x[p.range(Part::Unstable)];
        if !xu.is_empty() {
            let two_step = propagate_block(&p, Part::Unstable, r, s, &propagate_block(&p, Part::Unstable, s, t, xu).unwrap()).unwrap();
            let direct = propagate_block(&p, Part::Unstable, r, t, xu).unwrap();
            let defect: Vec<Complex64> = two_step.iter().zip(&direct).map(|(a, b)| a - b).collect();
            prop_assert!(norm(&defect) <= 1e-8 * norm(xu), "unstable {}", norm(&defect));
        }
    }

    #[test]
    fn identity_at_equal_times_and_exact_commutation(
        (p, x) in any_problem().prop_flat_map(|p| { let d = p.dim(); (Just(p), state(d)) }),
        s in -10.0f64..10.0,
        lag in 0.0f64..5.0,
    ) {
        prop_assert_eq!(propagate(&p, s, s, &x).unwrap(), x.clone());
        // P x keeps the stable coordinates and zeroes the rest
        let mut px = x.clone();
        for i in p.range(Part::Unstable) {
            px[i] = Complex64::new(0.0, 0.0);
        }
        let u_px = propagate(&p, s + lag, s, &px).unwrap();
        let mut p_ux = propagate(&p, s + lag, s, &x).unwrap();
        for i in p.range(Part::Unstable) {
            p_ux[i] = Complex64::new(0.0, 0.0);
        }
        prop_assert_eq!(u_px, p_ux);
    }
}

proptest! {
    #![proptest_config(pinned(12))]

    #[test]
    fn claimed_envelopes_dominate(p in any_problem()) {
        let r = verify_dichotomy(&p, &DichotomyGrid::for_problem(&p)).unwrap();
        prop_assert!(r.ok);
        prop_assert!(r.measured_n <= p.claim.n * 1.05, "{} vs {}", r.measured_n, p.claim.n);
    }
}

fn forcing_terms(dim: usize) -> impl Strategy<Value = TrigPolynomial> {
    prop::collection::vec((-3.0f64..3.0, state(dim)), 1..=3)
        .prop_map(move |raw| TrigPolynomial::new(dim, raw.into_iter().map(|(freq, amp)| TrigTerm { freq, amp }).collect()).unwrap())
}

proptest! {
    #![proptest_config(pinned(8))]

    #[test]
    fn constant_coefficient_linear_problems_are_exact(
        (a, b, g) in (0.5f64..3.0, 0.5f64..3.0).prop_flat_map(|(a, b)| (Just(a), Just(b), forcing_terms(2))),
    ) {
        let claim = DichotomyClaim { n: 1.0, delta: a.min(b) };
        let p = EvolutionProblem::diagonal(&[-a], &[b], claim, LipschitzMap::forcing(g.clone().into())).unwrap();
        let sol = solve_mild(&p, &SolveConfig { t_sol: 10.0, ..Default::default() }).unwrap();
        let mut worst = 0.0f64;
        for (t, v) in sol.trace.rows() {
            // bounded solutions of u' = -a u + e^{i w t} and x' = b x + e^{i w t}
            let mut exact = [Complex64::new(0.0, 0.0); 2];
            for term in g.terms() {
                let e = Complex64::cis(term.freq * t);
                exact[0] += term.amp[0] * e / Complex64::new(a, term.freq);
                exact[1] -= term.amp[1] * e / Complex64::new(b, -term.freq);
            }
            worst = worst.max((v[0] - exact[0]).norm()).max((v[1] - exact[1]).norm());
        }
        prop_assert!(worst < 1e-6, "sup error {worst}");
    }

    #[test]
    fn picard_rate_respects_the_contraction_bound(
        a in 0.5f64..3.0,
        share in 0.05f64..0.9,
        g in forcing_terms(1),
        nl in prop_oneof![Just(Nonlinearity::Sine), Just(Nonlinearity::Tanh)],
    ) {
        // C = 3 N / delta with N = 1 for a constant stable rate
        let k = share * a / 3.0;
        let f = LipschitzMap::new(TrigPolynomial::scalar(&[(0.0, c(k))]).into(), nl, g.into()).unwrap();
        let p = EvolutionProblem::diagonal(&[-a], &[], DichotomyClaim { n: 1.0, delta: a }, f).unwrap();
        let sol = solve_mild(&p, &SolveConfig { t_sol: 5.0, ..Default::default() }).unwrap();
        let dg = &sol.diagnostics;
        prop_assert!((dg.dichotomy.measured_n - 1.0).abs() < 1e-6);
        prop_assert!(dg.contraction_rate <= share * 1.05, "rate {} vs K C {share}", dg.contraction_rate);
        prop_assert!(dg.residual_norm < 1e-5);
    }

    #[test]
    fn picard_limit_does_not_depend_on_the_start(
        a in 0.5f64..3.0,
        share in 0.05f64..0.6,
        g in forcing_terms(1),
        start in prop::collection::vec((-3.0f64..3.0, -2.0f64..2.0), 1..=3),
    ) {
        let k = share * a / 3.0;
        let f = LipschitzMap::new(TrigPolynomial::scalar(&[(0.0, c(k))]).into(), Nonlinearity::Sine, g.into()).unwrap();
        let p = EvolutionProblem::diagonal(&[-a], &[], DichotomyClaim { n: 1.0, delta: a }, f).unwrap();
        let cfg = SolveConfig { t_sol: 5.0, ..Default::default() };
        let from_zero = solve_mild(&p, &cfg).unwrap();
        let from_wave = solve_mild_from(&p, &cfg, |t, out| {
            out[0] = start.iter().map(|&(w, amp)| c(amp * (w * t).cos())).sum();
        })
        .unwrap();
        let gap = from_zero.trace.sub(&from_wave.trace).unwrap().sup_norm();
        prop_assert!(gap <= 10.0 * cfg.tol, "gap {gap}");
    }
}
