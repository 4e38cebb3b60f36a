use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use rrs_core::correlator::{poisson_normalize, CorrelationHistogram, Window};
use rrs_core::fitting::{
    fit_coherent_fraction, fit_g2_hbt, fit_hom_joint, fit_lorentzian, fit_lorentzian_doublet, fit_michelson,
    fit_power_laws, least_squares, lorentzian, model_jacobian, CoherentFractionFit, Data, FitResult,
    HbtFitOptions, HomFitOptions, LmOptions, MichelsonFitMode, ParamSpec, PowerFitOptions, PowerSweep, Series,
};
use rrs_core::model::{
    g2_from_shape, EmitterParams, HomCorrelationModel, InterferometerConfig, Polarization, RabiShape,
    ScatteringMix,
};

fn assert_recovers(fit: &FitResult, truth: &[(&str, f64)], tol: f64) {
    for &(name, expected) in truth {
        let got = fit.value(name).unwrap_or_else(|| panic!("no parameter {name}"));
        let rel = (got - expected).abs() / expected.abs().max(1e-12);
        assert!(rel <= tol, "{}: {name} = {got}, expected {expected} (rel {rel:.2e})", fit.model);
    }
}

/// Bin averages as a histogram records them without detector jitter: eight
/// equally spaced sub-samples per bin.
fn bin_averages(start_ns: f64, width_ns: f64, bins: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..bins)
        .map(|b| {
            (0..8)
                .map(|k| f(start_ns + width_ns * (b as f64 + (k as f64 + 0.5) / 8.0)))
                .sum::<f64>()
                / 8.0
        })
        .collect()
}

/// Noiseless histogram carrying `level · f` counts on ±`half` ps, 50 ps bins.
fn noiseless_histogram(half: i64, level: f64, f: impl Fn(f64) -> f64) -> CorrelationHistogram {
    let bins = (2 * half / 50) as usize;
    let counts = bin_averages(-half as f64 * 1e-3, 0.05, bins, f)
        .into_iter()
        .map(|v| (level * v).round() as u64)
        .collect();
    CorrelationHistogram::from_raw_counts(50, Window::symmetric(half), counts, (1e5, 1e5), 1_000_000_000_000).unwrap()
}

// ---------------------------------------------------------------------------
// noiseless recovery
// ---------------------------------------------------------------------------

#[test]
fn lorentzians_recover_exactly() {
    let x: Vec<f64> = (0..241).map(|i| -60.0 + 0.5 * i as f64).collect();
    let single: Vec<f64> = x.iter().map(|&x| lorentzian(x, 3.2, 6.5, 800.0, 20.0)).collect();
    let fit = fit_lorentzian(&x, &single, None).unwrap();
    assert_recovers(&fit, &[("center", 3.2), ("fwhm", 6.5), ("amplitude", 800.0), ("offset", 20.0)], 1e-6);

    let doublet: Vec<f64> = x
        .iter()
        .map(|&x| lorentzian(x, -11.15, 5.0, 100.0, 3.0) + lorentzian(x, 15.15, 5.0, 60.0, 0.0))
        .collect();
    let fit = fit_lorentzian_doublet(&x, &doublet, None).unwrap();
    assert_recovers(
        &fit,
        &[("center", 2.0), ("splitting", 26.3), ("fwhm", 5.0), ("amplitude_1", 100.0), ("amplitude_2", 60.0), ("offset", 3.0)],
        1e-6,
    );
}

#[test]
fn michelson_fits_recover_exactly() {
    let h = 4.1357;
    let tau: Vec<f64> = (0..=200).map(|i| 0.01 * i as f64).collect();
    let (tc, fss, r): (f64, f64, f64) = (0.447, 26.3, 0.35);
    let v: Vec<f64> = tau
        .iter()
        .map(|&t| {
            let phase = std::f64::consts::TAU * fss * t / h;
            (-t / tc).exp() * (r * r + (1.0 - r).powi(2) + 2.0 * r * (1.0 - r) * phase.cos()).sqrt()
        })
        .collect();
    let sigma = vec![0.01; tau.len()];
    let fit = fit_michelson(&tau, &v, &sigma, MichelsonFitMode::NonResonant).unwrap();
    assert_recovers(&fit, &[("coherence_time", tc), ("fss", fss), ("line_ratio", r)], 1e-6);

    let tau: Vec<f64> = (0..=150).map(|i| 0.1 * i as f64).collect();
    let v: Vec<f64> = tau.iter().map(|&t| 0.4 + 0.6 * (-t / 1.8).exp()).collect();
    let fit = fit_michelson(&tau, &v, &vec![0.01; tau.len()], MichelsonFitMode::Resonant { laser_breakthrough: None }).unwrap();
    assert_recovers(&fit, &[("coherent_amplitude", 0.4), ("tau2", 1.8)], 1e-6);
}

#[test]
fn power_fits_recover_exactly() {
    let power: Vec<f64> = (1..=20).map(|i| 0.25 * i as f64).collect();
    let series = |f: &dyn Fn(f64) -> f64| Series {
        values: power.iter().map(|&p| f(p)).collect(),
        sigma: None,
    };
    let sweep = PowerSweep {
        power: power.clone(),
        linewidth: Some(series(&|p| 2.7 * (1.0 + p / 1.3).sqrt())),
        counts: Some(series(&|p| 491.0 * (p / 1.3) / (1.0 + p / 1.3))),
        background: Some(series(&|p| 0.5 + 2.0 * p)),
    };
    let fits = fit_power_laws(&sweep, &PowerFitOptions { shared_p_sat: true, background_degree: 1 }).unwrap();
    assert_recovers(fits.linewidth.as_ref().unwrap(), &[("gamma0", 2.7), ("p_sat", 1.3)], 1e-6);
    assert_recovers(fits.counts.as_ref().unwrap(), &[("i_sat", 491.0), ("p_sat", 1.3)], 1e-6);
    assert_recovers(fits.background.as_ref().unwrap(), &[("c0", 0.5), ("c1", 2.0)], 1e-6);
    assert_recovers(fits.joint.as_ref().unwrap(), &[("gamma0", 2.7), ("i_sat", 491.0), ("p_sat", 1.3)], 1e-6);

    let a: Vec<f64> = power.iter().map(|&p| 1.0 / (1.0 + p / 1.7)).collect();
    let fit = fit_coherent_fraction(&power, &a, &vec![0.01; a.len()], CoherentFractionFit::GammaOverK).unwrap();
    assert_recovers(&fit, &[("gamma_over_k", 1.7)], 1e-6);
}

#[test]
fn hbt_fit_recovers_exactly() {
    let shape = RabiShape { eta: 0.78, mu: 3.1 };
    let background = 0.07;
    let s2 = (1.0 - background) * (1.0 - background);
    let raw = noiseless_histogram(20_000, 1e12, |t| s2 * g2_from_shape(t, &shape) + 1.0 - s2);
    let hist = poisson_normalize(&raw, &[(-20_000, -15_000), (15_000, 20_000)]).unwrap();
    let fit = fit_g2_hbt(&hist, &HbtFitOptions::default()).unwrap();
    let amplitude = 1e12 * hist.normalization().scale;
    assert_recovers(
        &fit,
        &[("eta", 0.78), ("mu", 3.1), ("background", background), ("amplitude", amplitude)],
        1e-6,
    );
}

#[test]
fn hom_fit_recovers_exactly() {
    let params = EmitterParams::new(1.0, 1.8, 1.5);
    let mix = ScatteringMix::new(0.5, f64::INFINITY).unwrap();
    let mut cfg = InterferometerConfig::balanced(12.5, Polarization::Co);
    cfg.mode_overlap = 0.8;
    let model = HomCorrelationModel::new(&params, &mix, &cfg).unwrap();
    let background = 0.05;
    let s2 = (1.0 - background) * (1.0 - background);
    let histogram = |pol| {
        let raw = noiseless_histogram(17_500, 1e12, |t| s2 * model.g2(t, pol) + 1.0 - s2);
        poisson_normalize(&raw, &[(-7_500, -5_000), (5_000, 7_500)]).unwrap()
    };
    let co = histogram(Polarization::Co);
    let cross = histogram(Polarization::Cross);
    let fit = fit_hom_joint(&co, &cross, &HomFitOptions::balanced(12.5, 1.8)).unwrap();
    assert_recovers(
        &fit,
        &[
            ("eta", model.shape.eta),
            ("mu", model.shape.mu),
            ("delay", 12.5),
            ("inelastic_fraction", 0.5),
            ("overlap", 0.8),
            ("background", background),
            ("scale_co", 1e12 * co.normalization().scale),
            ("scale_cross", 1e12 * cross.normalization().scale),
        ],
        1e-6,
    );
}

// ---------------------------------------------------------------------------
// engine properties
// ---------------------------------------------------------------------------

type Model = fn(&[f64], &[f64]) -> Vec<f64>;

fn lorentzian_model(p: &[f64], x: &[f64]) -> Vec<f64> {
    x.iter().map(|&x| lorentzian(x, p[0], p[1], p[2], p[3])).collect()
}

fn g2_model(p: &[f64], x: &[f64]) -> Vec<f64> {
    let shape = RabiShape { eta: p[0], mu: p[1] };
    let s2 = (1.0 - p[3]).powi(2);
    x.iter().map(|&t| p[2] * (s2 * g2_from_shape(t, &shape) + 1.0 - s2)).collect()
}

fn resonant_model(p: &[f64], x: &[f64]) -> Vec<f64> {
    x.iter().map(|&t| p[0] + (1.0 - p[0]) * (-t.abs() / p[1]).exp()).collect()
}

fn saturation_model(p: &[f64], x: &[f64]) -> Vec<f64> {
    x.iter().map(|&x| p[0] * (x / p[1]) / (1.0 + x / p[1])).collect()
}

/// Fourth-order central difference, independent of the engine.
fn five_point(model: Model, p: &[f64], x: &[f64], i: usize) -> Vec<f64> {
    let h = 1e-3 * p[i].abs().max(1e-2);
    let at = |d: f64| {
        let mut q = p.to_vec();
        q[i] += d;
        model(&q, x)
    };
    let (m2, m1, p1, p2) = (at(-2.0 * h), at(-h), at(h), at(2.0 * h));
    (0..x.len())
        .map(|k| (m2[k] - 8.0 * m1[k] + 8.0 * p1[k] - p2[k]) / (12.0 * h))
        .collect()
}

fn check_jacobian(model: Model, p: &[f64], x: &[f64]) -> Result<(), TestCaseError> {
    let data = Data::unweighted(x.to_vec(), model(p, x)).unwrap();
    let specs: Vec<ParamSpec> = p.iter().map(|&v| ParamSpec::new("p", "", v)).collect();
    let engine = model_jacobian(model, &data, &specs, p, LmOptions::default().diff_step).unwrap();
    for i in 0..p.len() {
        let reference = five_point(model, p, x, i);
        let scale = reference.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
        for (k, r) in reference.iter().enumerate() {
            let e = engine[k][i];
            prop_assert!(
                (e - r).abs() <= 1e-5 * scale.max(r.abs()),
                "param {i}, point {k}: engine {e} vs reference {r}"
            );
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn jacobian_matches_finite_differences(
        c in -5.0f64..5.0, w in 0.5f64..10.0, a in 1.0f64..1e3, off in 0.0f64..50.0,
        eta in 0.3f64..2.0, mu in 0.5f64..8.0, amp in 0.5f64..2.0, bg in 0.01f64..0.5,
        coh in 0.05f64..0.95, tau2 in 0.2f64..5.0,
        isat in 10.0f64..1e3, psat in 0.1f64..10.0,
    ) {
        let spectrum: Vec<f64> = (0..101).map(|i| -25.0 + 0.5 * i as f64).collect();
        check_jacobian(lorentzian_model, &[c, w, a, off], &spectrum)?;
        let delays: Vec<f64> = (0..121).map(|i| -6.0 + 0.1 * i as f64 + 0.013).collect();
        check_jacobian(g2_model, &[eta, mu, amp, bg], &delays)?;
        let lags: Vec<f64> = (0..80).map(|i| 0.1 * i as f64).collect();
        check_jacobian(resonant_model, &[coh, tau2], &lags)?;
        let power: Vec<f64> = (1..30).map(|i| 0.3 * i as f64).collect();
        check_jacobian(saturation_model, &[isat, psat], &power)?;
    }
}

#[test]
fn refit_from_optimum_is_a_fixed_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let noise = Normal::new(0.0, 5.0).unwrap();
    let x: Vec<f64> = (0..201).map(|i| -50.0 + 0.5 * i as f64).collect();
    let y: Vec<f64> = x.iter().map(|&x| lorentzian(x, 1.0, 8.0, 500.0, 30.0) + noise.sample(&mut rng)).collect();
    let data = Data::new(x, y, vec![5.0; 201]).unwrap();
    let specs = |init: &[f64]| -> Vec<ParamSpec> {
        ["center", "fwhm", "amplitude", "offset"]
            .iter()
            .zip(init)
            .map(|(n, &v)| ParamSpec::new(n, "", v))
            .collect()
    };
    let lm = LmOptions::default();
    let first = least_squares("lorentzian", lorentzian_model, &data, &specs(&[0.0, 5.0, 400.0, 0.0]), &lm).unwrap();
    let again = least_squares("lorentzian", lorentzian_model, &data, &specs(&first.values()), &lm).unwrap();
    for (a, b) in first.values().iter().zip(again.values()) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0), "{a} moved to {b}");
    }
    for row in &again.covariance {
        assert!(row.iter().all(|v| v.is_finite()));
    }
    assert!((0..4).all(|i| (again.covariance[i][i] - first.covariance[i][i]).abs() <= 1e-6 * first.covariance[i][i]));
}

/// Mean η uncertainty over repeated Poisson histograms with `n` coincidences.
fn mean_eta_uncertainty(n: f64, seed: u64) -> f64 {
    let shape = RabiShape { eta: 0.78, mu: 3.1 };
    let half = 10_000;
    let width = 250;
    let bins = (2 * half / width) as usize;
    let expected = bin_averages(-10.0, 0.25, bins, |t| g2_from_shape(t, &shape));
    let total: f64 = expected.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let repeats = 8;
    let mut sum = 0.0;
    for _ in 0..repeats {
        let counts = expected
            .iter()
            .map(|&e| Poisson::new(n * e / total).unwrap().sample(&mut rng) as u64)
            .collect();
        let raw = CorrelationHistogram::from_raw_counts(width, Window::symmetric(half), counts, (1e4, 1e4), 1_000_000_000_000).unwrap();
        let hist = poisson_normalize(&raw, &[(-10_000, -6_000), (6_000, 10_000)]).unwrap();
        let options = HbtFitOptions {
            background: rrs_core::fitting::BackgroundMode::Fixed(0.0),
            ..Default::default()
        };
        let fit = fit_g2_hbt(&hist, &options).unwrap();
        sum += fit.uncertainty("eta").unwrap();
    }
    sum / repeats as f64
}

#[test]
fn uncertainties_scale_inverse_sqrt_n() {
    let sigmas: Vec<f64> = [1e3, 1e4, 1e5].iter().enumerate().map(|(i, &n)| mean_eta_uncertainty(n, i as u64)).collect();
    let expected = 10f64.sqrt();
    for w in sigmas.windows(2) {
        let ratio = w[0] / w[1];
        assert!(
            ratio > expected / 1.5 && ratio < expected * 1.5,
            "uncertainty ratio {ratio:.2} (sigmas {sigmas:?})"
        );
    }
}
