use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::stream::{StreamMetadata, TimeTagStream};
use crate::error::{check_non_negative, check_unit_interval, Error, Result};

/// Single-photon detector and timing electronics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Detection probability per incident photon.
    pub efficiency: f64,
    /// Gaussian timing jitter (standard deviation), ps.
    pub jitter: f64,
    /// Dark-count rate, 1/s.
    pub dark_rate: f64,
    /// Dead time after each registered click, ps.
    pub dead_time: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self::ideal()
    }
}

impl DetectorConfig {
    /// Perfect detector: every photon recorded at its true time.
    pub fn ideal() -> Self {
        Self {
            efficiency: 1.0,
            jitter: 0.0,
            dark_rate: 0.0,
            dead_time: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_unit_interval("efficiency", self.efficiency)?;
        check_non_negative("jitter", self.jitter)?;
        check_non_negative("dark_rate", self.dark_rate)?;
        check_non_negative("dead_time", self.dead_time)
    }
}

/// Applies loss, jitter, dark counts and dead time to photon arrival times
/// (ps, any order) and returns the registered clicks.
///
/// An ideal detector returns the input unchanged apart from sorting and the
/// removal of exact duplicates.
pub fn apply_detector(
    photons: &[i64],
    duration: i64,
    channel: u8,
    config: &DetectorConfig,
    seed: u64,
) -> Result<TimeTagStream> {
    config.validate()?;
    if duration < 0 {
        return Err(Error::Config(format!("negative duration {duration}")));
    }
    let mut rng = super::rng(seed);
    let mut clicks: Vec<i64> = if config.efficiency >= 1.0 {
        photons.to_vec()
    } else {
        photons
            .iter()
            .copied()
            .filter(|_| rng.random::<f64>() < config.efficiency)
            .collect()
    };
    if config.jitter > 0.0 {
        let normal = Normal::new(0.0, config.jitter).expect("validated jitter");
        for t in &mut clicks {
            *t += normal.sample(&mut rng).round() as i64;
        }
    }
    if config.dark_rate > 0.0 && duration > 0 {
        let mean = config.dark_rate * duration as f64 * 1e-12;
        let n = Poisson::new(mean).map_or(0.0, |p| p.sample(&mut rng)) as usize;
        clicks.extend((0..n).map(|_| rng.random_range(0..=duration)));
    }
    clicks.retain(|&t| (0..=duration).contains(&t));
    clicks.sort_unstable();
    let dead = config.dead_time.ceil() as i64;
    let mut registered = Vec::with_capacity(clicks.len());
    let mut last: Option<i64> = None;
    for t in clicks {
        if last.is_none_or(|l| t > l && t - l >= dead) {
            registered.push(t);
            last = Some(t);
        }
    }
    TimeTagStream::new(
        channel,
        registered,
        duration,
        StreamMetadata {
            seed,
            generator: "detector".into(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_detector_is_identity() {
        let photons = vec![5, 17, 400, 10_000];
        let s = apply_detector(&photons, 20_000, 1, &DetectorConfig::ideal(), 3).unwrap();
        assert_eq!(s.tags(), &photons[..]);
    }

    #[test]
    fn dead_time_spaces_clicks() {
        let photons: Vec<i64> = (0..1000).map(|k| k * 7).collect();
        let cfg = DetectorConfig {
            dead_time: 20.0,
            ..DetectorConfig::ideal()
        };
        let s = apply_detector(&photons, 10_000, 1, &cfg, 0).unwrap();
        assert!(s.tags().windows(2).all(|w| w[1] - w[0] >= 20));
        assert_eq!(s.tags()[1], 21);
    }

    #[test]
    fn efficiency_thins_binomially() {
        let photons: Vec<i64> = (0..200_000).map(|k| k * 10).collect();
        let cfg = DetectorConfig {
            efficiency: 0.3,
            ..DetectorConfig::ideal()
        };
        let s = apply_detector(&photons, 2_000_000, 1, &cfg, 11).unwrap();
        let sigma = (200_000.0f64 * 0.3 * 0.7).sqrt();
        assert!((s.len() as f64 - 60_000.0).abs() < 5.0 * sigma);
    }

    #[test]
    fn dark_counts_follow_rate() {
        let cfg = DetectorConfig {
            dark_rate: 1e5,
            ..DetectorConfig::ideal()
        };
        // 1 s of acquisition
        let s = apply_detector(&[], 1_000_000_000_000, 2, &cfg, 4).unwrap();
        assert!((s.len() as f64 - 1e5).abs() < 5.0 * 1e5f64.sqrt());
    }

    #[test]
    fn jitter_keeps_order_strict() {
        let photons: Vec<i64> = (0..10_000).map(|k| k * 3).collect();
        let cfg = DetectorConfig {
            jitter: 50.0,
            ..DetectorConfig::ideal()
        };
        let s = apply_detector(&photons, 30_000, 1, &cfg, 8).unwrap();
        assert!(s.tags().windows(2).all(|w| w[1] > w[0]));
    }
}
