use proptest::prelude::*;

use rrs_core::model::{
    coherent_fraction, dip_depth_from_inelastic, hom_g2, inelastic_from_dip_depth, michelson_visibility,
    mollow_g2, mollow_g2_with, p_hom_copolarized, EmitterParams, InterferometerConfig, MichelsonModel,
    MuConvention, Polarization, ScatteringMix,
};

/// Physically valid emitter: T₂ ≤ 2T₁.
fn emitter() -> impl Strategy<Value = EmitterParams> {
    (0.1f64..5.0, 0.05f64..1.0, 0.0f64..15.0).prop_map(|(t1, frac, rabi)| EmitterParams::new(t1, 2.0 * t1 * frac, rabi))
}

fn convention() -> impl Strategy<Value = MuConvention> {
    prop_oneof![Just(MuConvention::AsPrinted), Just(MuConvention::Bloch)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn g2_is_bounded_even_and_antibunched(p in emitter(), tau in -50.0f64..50.0, conv in convention()) {
        let g = mollow_g2_with(tau, &p, conv).unwrap();
        prop_assert!((0.0..=2.0).contains(&g), "g2({tau}) = {g}");
        prop_assert_eq!(g, mollow_g2_with(-tau, &p, conv).unwrap());
        prop_assert_eq!(mollow_g2_with(0.0, &p, conv).unwrap(), 0.0);
    }

    #[test]
    fn dip_algebra_round_trips_and_is_monotone(x in 0.0f64..=1.0, dx in 1e-6f64..0.1) {
        let d = dip_depth_from_inelastic(x).unwrap();
        prop_assert!((0.0..=0.25).contains(&d));
        prop_assert!((inelastic_from_dip_depth(d).unwrap() - x).abs() <= 1e-9);
        let x2 = (x + dx).min(1.0);
        if x2 > x {
            let d2 = dip_depth_from_inelastic(x2).unwrap();
            prop_assert!(d2 > d);
            prop_assert!(inelastic_from_dip_depth(d2).unwrap() > inelastic_from_dip_depth(d).unwrap() - 1e-12);
        }
    }

    #[test]
    fn cross_never_below_co(
        p in emitter(),
        x in 0.0f64..=1.0,
        laser in prop_oneof![Just(f64::INFINITY), 0.5f64..100.0],
        overlap in 0.0f64..=1.0,
        delay in 3.0f64..40.0,
        tl in 0.05f64..=1.0,
        tau in -60.0f64..60.0,
    ) {
        let mix = ScatteringMix::new(x, laser).unwrap();
        let mut cfg = InterferometerConfig::balanced(delay, Polarization::Co);
        cfg.transmission_long = tl;
        cfg.mode_overlap = overlap;
        let co = hom_g2(tau, &p, &mix, &cfg).unwrap();
        let cross = hom_g2(tau, &p, &mix, &cfg.with_polarization(Polarization::Cross)).unwrap();
        prop_assert!(cross >= co - 1e-15, "cross {cross} < co {co}");
        prop_assert_eq!(co, hom_g2(-tau, &p, &mix, &cfg).unwrap());
    }

    #[test]
    fn balanced_cross_side_dip_is_three_quarters(p in emitter(), x in 0.0f64..=1.0) {
        // With T₁ ≤ 5 ns a 500 ns delay makes g²(2Δτ) = 1 to machine precision.
        let delay = 500.0;
        let mix = ScatteringMix::new(x, f64::INFINITY).unwrap();
        let cfg = InterferometerConfig::balanced(delay, Polarization::Cross);
        let g2_2d = mollow_g2(2.0 * delay, &p).unwrap();
        prop_assume!(g2_2d == 1.0);
        for tau in [delay, -delay] {
            prop_assert!((hom_g2(tau, &p, &mix, &cfg).unwrap() - 0.75).abs() <= 1e-15);
        }
    }

    #[test]
    fn interference_probability_is_even(x in 0.0f64..=1.0, laser in 0.1f64..50.0, t1 in 0.1f64..5.0, o in 0.0f64..=1.0, tau in 0.0f64..30.0) {
        let mix = ScatteringMix::new(x, laser).unwrap();
        let p = p_hom_copolarized(tau, &mix, t1, o);
        prop_assert_eq!(p, p_hom_copolarized(-tau, &mix, t1, o));
        prop_assert!((0.0..=0.5).contains(&p));
    }

    #[test]
    fn michelson_unity_at_zero_and_resonant_non_increasing(
        a in 0.0f64..=1.0,
        tau2 in 0.01f64..10.0,
        tc in 0.01f64..10.0,
        fss in 0.0f64..100.0,
        r in 0.0f64..=1.0,
        t in 0.0f64..20.0,
        dt in 0.0f64..5.0,
    ) {
        let resonant = MichelsonModel::resonant(a, tau2);
        let doublet = MichelsonModel::NonResonant { coherence_time: tc, fss, line_ratio: r };
        for m in [resonant, doublet] {
            prop_assert!((michelson_visibility(0.0, &m).unwrap() - 1.0).abs() <= 1e-15);
            prop_assert_eq!(michelson_visibility(t, &m).unwrap(), michelson_visibility(-t, &m).unwrap());
        }
        prop_assert!(michelson_visibility(t + dt, &resonant).unwrap() <= michelson_visibility(t, &resonant).unwrap());
    }

    #[test]
    fn coherent_fraction_decreases(gamma in 1e-3f64..1e3, rabi in 0.0f64..100.0, step in 1e-3f64..10.0) {
        prop_assert_eq!(coherent_fraction(0.0, gamma).unwrap(), 1.0);
        prop_assert!(coherent_fraction(rabi + step, gamma).unwrap() < coherent_fraction(rabi, gamma).unwrap());
    }
}

#[test]
fn quoted_unbalanced_value() {
    let p = EmitterParams::new(1.0, 1.8, 1.5);
    let mix = ScatteringMix::inelastic_only();
    let mut cfg = InterferometerConfig::balanced(400.0, Polarization::Cross);
    cfg.transmission_long = 10f64.powf(-0.58);
    let g = hom_g2(0.0, &p, &mix, &cfg).unwrap();
    assert!((g - 0.33).abs() < 0.01, "{g}");
}

#[test]
fn fourier_limit_is_enforced() {
    assert!(EmitterParams::new(1.0, 2.5, 1.0).validate().is_err());
    assert!(EmitterParams::new(1.0, 2.0, 1.0).validate().is_ok());
}
