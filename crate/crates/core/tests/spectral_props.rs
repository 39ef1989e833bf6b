mod common;

use common::pinned;
use dwpap_core::signals::{DecayProfile, ErgodicPerturbation, TrigTerm};
use dwpap_core::spectral::{bohr_trace, classical_mean, doubly_weighted_mean, scan_spectrum, DichotomyCase, MeanConfig, ScanConfig, SpectrumReport};
use dwpap_core::weights::{theta, LimitConfig};
use dwpap_core::{PAPFunction, TrigPolynomial, Weight};
use num_complex::Complex64;
use proptest::prelude::*;

/// Weight pairs `(mu, nu)` with their mass-ratio limit.
fn weight_pairs() -> Vec<(Weight, Weight, f64)> {
    vec![
        (Weight::constant(1.0), Weight::constant(1.0), 1.0),
        (Weight::power(2.0), Weight::power(2.0), 1.0),
        (Weight::constant(2.0), Weight::constant(1.0), 0.5),
        (Weight::scaled_power(1.0, 2.0), Weight::power(1.0), 0.5),
        (Weight::exp_abs(1.0), Weight::power(2.0), 0.0),
        (Weight::exp_abs(1.0), Weight::power(3.0), 0.0),
        (Weight::power(3.0), Weight::power(1.0), 0.0),
    ]
}

fn profile_strategy() -> impl Strategy<Value = DecayProfile> {
    prop_oneof![
        (-10.0f64..10.0, 0.5f64..4.0, 0.1f64..2.0).prop_map(|(center, radius, height)| DecayProfile::CompactBump { center, radius, height }),
        (0.1f64..2.0, 1.0f64..3.0).prop_map(|(c, p)| DecayProfile::RationalDecay { c, p }),
        (0.1f64..2.0, -10.0f64..10.0, 0.3f64..3.0).prop_map(|(c, center, width)| DecayProfile::GaussianDecay { c, center, width }),
    ]
}

/// Lines at `s * spacing + jitter` with `|s| >= min_slot`; jitter stays below
/// `spacing / 2`, keeping lines apart and away from zero.
fn lines_strategy(max: usize, spacing: f64, min_slot: i32, max_slot: i32) -> impl Strategy<Value = TrigPolynomial> {
    let slots: Vec<i32> = (-max_slot..=max_slot).filter(|s| s.abs() >= min_slot).collect();
    (prop::sample::subsequence(slots, 1..=max), prop::collection::vec((0.0f64..0.1, 0.1f64..1.0, 0.0f64..6.3), max)).prop_map(
        move |(slots, params)| {
            let terms = slots
                .iter()
                .zip(params)
                .map(|(&s, (jitter, r, phase))| TrigTerm { freq: s as f64 * spacing + jitter * spacing, amp: vec![Complex64::from_polar(r, phase)] })
                .collect();
            TrigPolynomial::new(1, terms).unwrap()
        },
    )
}

/// Lines one unit apart, for tests that need converged Bohr means.
fn sparse_lines(max: usize) -> impl Strategy<Value = TrigPolynomial> {
    lines_strategy(max, 1.0, 1, 3)
}

fn with_profiles(ap: TrigPolynomial, profiles: Vec<DecayProfile>) -> PAPFunction {
    PAPFunction::new(ap, profiles.into_iter().map(ErgodicPerturbation::scalar).collect()).unwrap()
}

fn scan_grid() -> Vec<f64> {
    (0..=700).map(|k| -3.5 + k as f64 * 0.01).collect()
}

/// Every reported line matches exactly one expected frequency within `tol`.
fn same_set(found: &[f64], expected: &[f64], tol: f64) -> bool {
    found.len() == expected.len() && expected.iter().all(|e| found.iter().filter(|f| (*f - e).abs() <= tol).count() == 1)
}

fn dichotomy_holds(r: &SpectrumReport) -> bool {
    match r.dichotomy_case {
        DichotomyCase::Empty => r.lambdas.is_empty(),
        DichotomyCase::EqualsClassical => r.lambda_set() == r.classical_set(),
    }
}

proptest! {
    #![proptest_config(pinned(28))]

    #[test]
    fn weighted_mean_is_theta_times_classical(
        pair in 0usize..7,
        ap in sparse_lines(3),
        constant in -2.0f64..2.0,
        prof in profile_strategy(),
    ) {
        let (mu, nu, expected_theta) = weight_pairs().swap_remove(pair);
        let ap = ap.add(&TrigPolynomial::scalar(&[(0.0, Complex64::new(constant, 0.0))])).unwrap();
        let f = with_profiles(ap, vec![prof]);
        let cfg = MeanConfig::default();
        let th = theta(&mu, &nu, &LimitConfig::default()).unwrap();
        prop_assert!(th.converged);
        let th = th.scalar().re;
        prop_assert!((th - expected_theta).abs() < 1e-3, "theta {th}");
        let m = doubly_weighted_mean(&f, &mu, &nu, &cfg).unwrap();
        let classical = classical_mean(&f, &cfg).unwrap();
        prop_assert!(m.converged && classical.converged);
        let gap = (m.scalar() - classical.scalar() * th).norm();
        prop_assert!(gap <= 2.0 * cfg.tol, "gap {gap}");
    }

    #[test]
    fn bohr_transform_is_linear(
        f in sparse_lines(3),
        g in sparse_lines(3),
        pf in profile_strategy(),
        pg in profile_strategy(),
        alpha in -2.0f64..2.0,
        beta in -2.0f64..2.0,
        pick in 0usize..8,
    ) {
        let cfg = MeanConfig::default();
        let combo_ap = f.scale(alpha.into()).add(&g.scale(beta.into())).unwrap();
        let combo = PAPFunction::new(
            combo_ap,
            vec![
                ErgodicPerturbation::new(pf.clone(), vec![alpha.into()]).unwrap(),
                ErgodicPerturbation::new(pg.clone(), vec![beta.into()]).unwrap(),
            ],
        )
        .unwrap();
        let mut lambdas = f.frequencies();
        lambdas.extend(g.frequencies());
        lambdas.push(0.5);
        let lambda = lambdas[pick % lambdas.len()];
        let ff = with_profiles(f, vec![pf]);
        let gg = with_profiles(g, vec![pg]);
        let estimates = [&combo, &ff, &gg].map(|h| bohr_trace(h, lambda, &cfg).unwrap());
        // identity asserted only where the limits have stabilized
        prop_assume!(estimates.iter().all(|e| e.converged));
        let lhs = estimates[0].scalar();
        let rhs = estimates[1].scalar() * alpha + estimates[2].scalar() * beta;
        prop_assert!((lhs - rhs).norm() <= cfg.tol, "{lhs} vs {rhs}");
    }
}

proptest! {
    #![proptest_config(pinned(8))]

    #[test]
    fn scan_flags_exactly_the_lines(p in lines_strategy(5, 0.1, 5, 30)) {
        let grid: Vec<f64> = (0..10_000).map(|k| -3.5 + k as f64 * 7e-4).collect();
        let one = Weight::constant(1.0);
        let f = PAPFunction::from(p.clone());
        let r = scan_spectrum(&f, &one, &one, &grid, &ScanConfig::default()).unwrap();
        prop_assert!(same_set(&r.classical_set(), &p.frequencies(), 7e-4), "{:?} vs {:?}", r.classical_set(), p.frequencies());
    }

    #[test]
    fn perturbations_leave_the_spectrum_alone(p in sparse_lines(4), prof in profile_strategy(), pair in 0usize..7) {
        let (mu, nu, _) = weight_pairs().swap_remove(pair);
        let cfg = ScanConfig::default();
        let clean = scan_spectrum(&PAPFunction::from(p.clone()), &mu, &nu, &scan_grid(), &cfg).unwrap();
        let dirty = scan_spectrum(&with_profiles(p, vec![prof]), &mu, &nu, &scan_grid(), &cfg).unwrap();
        prop_assert!(same_set(&dirty.lambda_set(), &clean.lambda_set(), 0.01));
        prop_assert!(same_set(&dirty.classical_set(), &clean.classical_set(), 0.01));
    }
}

proptest! {
    #![proptest_config(pinned(16))]

    #[test]
    fn spectrum_is_empty_or_classical(p in sparse_lines(4), prof in profile_strategy(), pair in 0usize..7) {
        let (mu, nu, th) = weight_pairs().swap_remove(pair);
        let f = with_profiles(p.clone(), vec![prof]);
        let r = scan_spectrum(&f, &mu, &nu, &scan_grid(), &ScanConfig::default()).unwrap();
        prop_assert!(dichotomy_holds(&r));
        if th == 0.0 {
            prop_assert_eq!(r.dichotomy_case, DichotomyCase::Empty);
        } else {
            prop_assert!(same_set(&r.lambda_set(), &p.frequencies(), 0.01), "{:?} vs {:?}", r.lambda_set(), p.frequencies());
        }
    }
}
