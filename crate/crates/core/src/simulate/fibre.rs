use rand::Rng;
use serde::{Deserialize, Serialize};

use super::stream::{StreamMetadata, TimeTagStream};
use crate::error::{check_non_negative, check_positive, Result};
use crate::units::{db_to_transmission, ns_to_ps, SPEED_OF_LIGHT_KM_PER_NS};

/// Single-mode fibre spool inserted in one interferometer arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FibreConfig {
    /// km
    pub length: f64,
    /// dB/km
    pub attenuation: f64,
    pub group_index: f64,
    /// Measured delay that replaces the one computed from length and group
    /// index, ns.
    #[serde(default)]
    pub override_delay: Option<f64>,
}

impl Default for FibreConfig {
    /// The 25 km spool with its measured 95 µs delay.
    fn default() -> Self {
        Self {
            length: 25.0,
            attenuation: 0.173,
            group_index: 1.468,
            override_delay: Some(95_000.0),
        }
    }
}

impl FibreConfig {
    /// Spool of the given length with nominal telecom-fibre constants and
    /// the delay computed from the group index.
    pub fn spool(length: f64) -> Self {
        Self {
            length,
            override_delay: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("length", self.length)?;
        check_non_negative("attenuation", self.attenuation)?;
        check_positive("group_index", self.group_index)?;
        if let Some(d) = self.override_delay {
            check_non_negative("override_delay", d)?;
        }
        Ok(())
    }

    /// Propagation delay, ns.
    pub fn delay(&self) -> f64 {
        self.override_delay
            .unwrap_or(self.length * self.group_index / SPEED_OF_LIGHT_KM_PER_NS)
    }

    /// Total loss, dB.
    pub fn loss_db(&self) -> f64 {
        self.length * self.attenuation
    }

    /// Power transmission through the spool.
    pub fn transmission(&self) -> f64 {
        db_to_transmission(self.loss_db())
    }
}

/// Delays every photon by the fibre transit time and removes the ones lost
/// to attenuation. The acquisition window grows by the delay so that no
/// surviving tag is dropped.
pub fn apply_fibre(stream: &TimeTagStream, config: &FibreConfig, seed: u64) -> Result<TimeTagStream> {
    config.validate()?;
    let shift = ns_to_ps(config.delay());
    let keep = config.transmission();
    let mut rng = super::rng(seed);
    let tags: Vec<i64> = stream
        .tags()
        .iter()
        .filter(|_| keep >= 1.0 || rng.random::<f64>() < keep)
        .map(|&t| t + shift)
        .collect();
    TimeTagStream::new(
        stream.channel(),
        tags,
        stream.duration() + shift,
        StreamMetadata {
            seed,
            generator: "fibre".into(),
        },
    )
}
