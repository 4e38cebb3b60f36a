use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::stream::{StreamMetadata, TimeTagStream};
use super::{derive_seed, CHANNEL_A, CHANNEL_B};
use crate::error::{check_non_negative, check_positive, Error, Result};
use crate::model::{EmitterParams, HomCorrelationModel, InterferometerConfig, ScatteringMix};
use crate::par::map_indexed;
use crate::units::ns_to_ps;

/// Rates and extent of a sampled coincidence record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSamplerConfig {
    /// Rate of correlated click pairs, 1/s.
    pub pair_rate: f64,
    /// Rate of uncorrelated extra clicks per channel, 1/s.
    pub singles_rate: f64,
    /// Acquisition time, ns.
    pub duration: f64,
    /// Pair delays are drawn from [−window, window], ns.
    pub window: f64,
}

impl PairSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        check_non_negative("pair_rate", self.pair_rate)?;
        check_non_negative("singles_rate", self.singles_rate)?;
        check_positive("duration", self.duration)?;
        check_positive("window", self.window)
    }
}

/// Number of features a window edge may not cut through, in units of T₁.
const EDGE_CLEARANCE: f64 = 5.0;
const SEGMENTS: usize = 256;
const ENVELOPE_GRID: usize = 40_001;

fn check_window(window: f64, delay: f64, t1: f64) -> Result<()> {
    let clear = EDGE_CLEARANCE * t1;
    if window < clear {
        return Err(Error::Config(format!(
            "sampling window {window} ns must cover the central feature ({clear} ns)"
        )));
    }
    let side_inside = delay + clear <= window;
    let side_outside = delay - clear >= window;
    if !(side_inside || side_outside) {
        return Err(Error::Config(format!(
            "sampling window {window} ns cuts through the side feature at {delay} ns"
        )));
    }
    Ok(())
}

/// Draws two click streams whose cross-correlation follows the HOM
/// coincidence model of the configured interferometer.
///
/// Pair seeds form a Poisson process on channel A; the partner click on
/// channel B follows after a delay drawn by rejection from the model.
/// The result is independent of thread count: the acquisition is split into
/// fixed segments with their own derived seeds.
pub fn sample_hom_coincidences(
    params: &EmitterParams,
    mix: &ScatteringMix,
    interferometer: &InterferometerConfig,
    sampler: &PairSamplerConfig,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream)> {
    sampler.validate()?;
    let model = HomCorrelationModel::new(params, mix, interferometer)?;
    let pol = interferometer.polarization;
    let w = sampler.window;
    check_window(w, model.delay, params.t1)?;

    let envelope = 1.02
        * (0..ENVELOPE_GRID)
            .map(|k| model.g2(-w + 2.0 * w * k as f64 / (ENVELOPE_GRID - 1) as f64, pol))
            .chain([model.g2(model.delay, pol), model.g2(-model.delay, pol)])
            .fold(0.0f64, f64::max);
    if !(envelope > 0.0 && envelope.is_finite()) {
        return Err(Error::Config("coincidence model vanishes over the window".into()));
    }

    let seg_len = sampler.duration / SEGMENTS as f64;
    let pair_mean = sampler.pair_rate * 1e-9 * seg_len;
    let single_mean = sampler.singles_rate * 1e-9 * seg_len;
    let draw = |rng: &mut rand_chacha::ChaCha8Rng, mean: f64| -> usize {
        if mean > 0.0 {
            Poisson::new(mean).map_or(0.0, |p| p.sample(rng)) as usize
        } else {
            0
        }
    };

    let parts = map_indexed(SEGMENTS, |k| {
        let mut rng = super::rng(derive_seed(seed, k as u64));
        let start = k as f64 * seg_len;
        let n = draw(&mut rng, pair_mean);
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        for _ in 0..n {
            let t = start + seg_len * rng.random::<f64>();
            let tau = loop {
                let tau = -w + 2.0 * w * rng.random::<f64>();
                if envelope * rng.random::<f64>() < model.g2(tau, pol) {
                    break tau;
                }
            };
            a.push(ns_to_ps(t));
            b.push(ns_to_ps(t + tau));
        }
        for out in [&mut a, &mut b] {
            let m = draw(&mut rng, single_mean);
            out.extend((0..m).map(|_| ns_to_ps(start + seg_len * rng.random::<f64>())));
        }
        (a, b)
    });

    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (pa, pb) in parts {
        a.extend(pa);
        b.extend(pb);
    }
    let duration = ns_to_ps(sampler.duration);
    let meta = |label: &str| StreamMetadata {
        seed,
        generator: format!("hom-pair-sampler/{label}"),
    };
    Ok((
        TimeTagStream::from_unsorted(CHANNEL_A, a, duration, meta("a")),
        TimeTagStream::from_unsorted(CHANNEL_B, b, duration, meta("b")),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Polarization;

    fn setup() -> (EmitterParams, ScatteringMix, InterferometerConfig, PairSamplerConfig) {
        (
            EmitterParams::new(1.0, 1.8, 3.0),
            ScatteringMix::inelastic_only(),
            InterferometerConfig::balanced(12.5, Polarization::Cross),
            PairSamplerConfig {
                pair_rate: 2e4,
                singles_rate: 0.0,
                duration: 1e10,
                window: 25.0,
            },
        )
    }

    #[test]
    fn deterministic_for_seed() {
        let (p, m, i, s) = setup();
        let a = sample_hom_coincidences(&p, &m, &i, &s, 5).unwrap();
        let b = sample_hom_coincidences(&p, &m, &i, &s, 5).unwrap();
        assert_eq!(a, b);
        let expected = 2e4 * 10.0;
        assert!((a.0.len() as f64 - expected).abs() < 5.0 * expected.sqrt());
    }

    #[test]
    fn window_must_not_cut_side_feature() {
        let (p, m, i, mut s) = setup();
        s.window = 14.0;
        assert!(matches!(
            sample_hom_coincidences(&p, &m, &i, &s, 1),
            Err(Error::Config(_))
        ));
        s.window = 6.0;
        assert!(sample_hom_coincidences(&p, &m, &i, &s, 1).is_ok());
        s.window = 3.0;
        assert!(sample_hom_coincidences(&p, &m, &i, &s, 1).is_err());
    }
}
