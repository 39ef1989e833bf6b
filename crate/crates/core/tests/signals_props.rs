mod common;

use std::f64::consts::{PI, SQRT_2};

use common::{c, pinned};
use dwpap_core::signals::{DecayProfile, ErgodicPerturbation, TrigTerm};
use dwpap_core::spectral::{translation_invariance, MeanConfig};
use dwpap_core::trace::{check_almost_periodic, decompose, DecomposeConfig};
use dwpap_core::{PAPFunction, Schedule, TrigPolynomial, Weight};
use num_complex::Complex64;
use proptest::prelude::*;

fn profile_strategy() -> impl Strategy<Value = DecayProfile> {
    prop_oneof![
        (-20.0f64..20.0, 0.5f64..5.0, 0.1f64..2.0).prop_map(|(center, radius, height)| DecayProfile::CompactBump { center, radius, height }),
        (0.1f64..2.0, 1.0f64..3.0).prop_map(|(c, p)| DecayProfile::RationalDecay { c, p }),
        (0.1f64..2.0, -20.0f64..20.0, 0.3f64..4.0).prop_map(|(c, center, width)| DecayProfile::GaussianDecay { c, center, width }),
        (0.1f64..2.0, 1.0f64..6.0).prop_map(|(h, r)| DecayProfile::TabulatedDecay {
            grid: vec![-r, -r / 3.0, 0.0, r / 2.0, r],
            values: vec![0.0, 0.4 * h, h, 0.7 * h, 0.0],
        }),
    ]
}

fn trig_strategy() -> impl Strategy<Value = TrigPolynomial> {
    prop::collection::vec((-3.0f64..3.0, -1.0f64..1.0, -1.0f64..1.0), 1..=4).prop_map(|raw| {
        let terms = raw.into_iter().map(|(freq, re, im)| TrigTerm { freq, amp: vec![Complex64::new(re, im)] }).collect();
        TrigPolynomial::new(1, terms).unwrap()
    })
}

/// Periodic polynomials: harmonics of `2 pi / period` with an integer period.
fn periodic_strategy() -> impl Strategy<Value = TrigPolynomial> {
    (1u32..=20, prop::collection::vec((1i32..=4, -1.0f64..1.0, -1.0f64..1.0), 1..=3)).prop_map(|(period, raw)| {
        let base = 2.0 * PI / period as f64;
        let terms = raw
            .into_iter()
            .map(|(m, re, im)| TrigTerm { freq: m as f64 * base, amp: vec![Complex64::new(re, im) * 0.5] })
            .collect();
        TrigPolynomial::new(1, terms).unwrap()
    })
}

/// Independent sup of a profile: dense scan plus the analytic peak.
fn profile_sup(p: &DecayProfile) -> f64 {
    match p {
        DecayProfile::CompactBump { height, .. } => height.abs(),
        DecayProfile::RationalDecay { c, .. } => c.abs(),
        DecayProfile::GaussianDecay { c, .. } => c.abs(),
        DecayProfile::TabulatedDecay { values, .. } => values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    }
}

proptest! {
    #![proptest_config(pinned(48))]

    #[test]
    fn sampled_sup_never_exceeds_amplitude_bound(ap in trig_strategy(), prof in profile_strategy()) {
        let bound: f64 = ap.terms().iter().map(|t| t.amp[0].norm()).sum::<f64>() + profile_sup(&prof);
        let f = PAPFunction::new(ap, vec![ErgodicPerturbation::scalar(prof)]).unwrap();
        let tr = f.sample(-200.0, 0.01, 40_001);
        let defect = bound - tr.sup_norm();
        prop_assert!(defect >= -1e-12 * bound, "defect {defect}");
    }

    #[test]
    fn ergodic_norm_mean_decays_under_shifts(
        prof in profile_strategy(),
        w in prop_oneof![
            (0.5f64..4.0).prop_map(Weight::constant),
            (0.0f64..3.0).prop_map(Weight::power),
            Just(Weight::polynomial(vec![1.0, 0.0, 2.0]).unwrap()),
        ],
        scale in 0.5f64..2.0,
    ) {
        let phi = PAPFunction::ergodic_only(1, vec![ErgodicPerturbation::scalar(prof)]).unwrap();
        let nu = w.clone();
        let mu = match w.kind() {
            dwpap_core::WeightKind::Constant { c } => Weight::constant(c * scale),
            _ => w.clone(),
        };
        let cfg = MeanConfig::new(Schedule::means(), 1e-3);
        let r = translation_invariance(&phi, &mu, &nu, &[1.0, 10.0, 100.0], &cfg).unwrap();
        prop_assert!(r.ok, "{:?}", r.final_means);
        for m in &r.final_means {
            prop_assert!(*m < 1e-3);
        }
    }
}

proptest! {
    #![proptest_config(pinned(6))]

    #[test]
    fn periodic_polynomials_have_dense_translation_numbers(p in periodic_strategy()) {
        let f = PAPFunction::from(p);
        // shifts reach half the trace, i.e. 1e4
        let tr = f.sample(0.0, 0.01, 2_000_001);
        for eps in [0.5, 0.1, 0.05] {
            let r = check_almost_periodic(&tr, eps);
            prop_assert!(r.is_ok(), "eps {eps}: {r:?}");
            let r = r.unwrap();
            prop_assert!(r.tau_found > 0.0 && 10.0 * r.l_bound <= 1e4 + 1e-6);
        }
    }
}

#[test]
fn two_tone_translation_numbers_within_horizon() {
    let f = PAPFunction::from(TrigPolynomial::scalar(&[(1.0, c(0.5)), (SQRT_2, c(0.5))]));
    let tr = f.sample(0.0, 0.01, 2_000_001);
    for eps in [0.5, 0.1] {
        let r = check_almost_periodic(&tr, eps).unwrap();
        // brute-force witness check of the reported translation number
        let k = (r.tau_found / tr.step()).round() as usize;
        let dev = (0..tr.len() - k).map(|i| (tr.value(i + k)[0] - tr.value(i)[0]).norm()).fold(0.0, f64::max);
        assert!(dev < eps, "eps {eps} tau {} dev {dev}", r.tau_found);
    }
}

fn ergodic_kinds() -> Vec<DecayProfile> {
    vec![
        DecayProfile::gaussian(1.5),
        DecayProfile::RationalDecay { c: 1.0, p: 1.0 },
        DecayProfile::CompactBump { center: 3.0, radius: 2.0, height: 2.0 },
        DecayProfile::TabulatedDecay { grid: vec![-4.0, 0.0, 1.0, 5.0], values: vec![0.0, 1.0, -0.5, 0.0] },
    ]
}

proptest! {
    #![proptest_config(pinned(8))]

    #[test]
    fn decomposition_does_not_depend_on_the_ergodic_part(
        amps in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3),
        kinds in (0usize..4, 1usize..4),
    ) {
        let freqs = [-1.0, SQRT_2, PI];
        let terms: Vec<TrigTerm> = freqs.iter().zip(&amps).map(|(&freq, &(re, im))| TrigTerm { freq, amp: vec![Complex64::new(re, im)] }).collect();
        let ap = TrigPolynomial::new(1, terms).unwrap();
        let all = ergodic_kinds();
        let (a, b) = (kinds.0, (kinds.0 + kinds.1) % 4);
        let mu = Weight::power(1.0);
        let nu = Weight::scaled_power(1.0, 2.0);
        let cfg = DecomposeConfig::default();
        let mut candidates = freqs.to_vec();
        candidates.push(0.0);
        let mut recovered = Vec::new();
        for k in [a, b] {
            let f = PAPFunction::new(ap.clone(), vec![ErgodicPerturbation::scalar(all[k].clone())]).unwrap();
            let tr = f.sample(-8192.0, 0.1, 163_841);
            recovered.push(decompose(&tr, &mu, &nu, &candidates, &cfg).unwrap().ap);
        }
        for &l in &candidates {
            let d = (recovered[0].coefficient(l)[0] - recovered[1].coefficient(l)[0]).norm();
            prop_assert!(d < 1e-3, "lambda {l}: {d}");
        }
    }
}
