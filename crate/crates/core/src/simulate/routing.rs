use rand::Rng;

use super::detector::{apply_detector, DetectorConfig};
use super::stream::TimeTagStream;
use super::trajectory::Emissions;
use super::{derive_seed, CHANNEL_A, CHANNEL_B};
use crate::error::{check_unit_interval, Result};

/// Hanbury Brown–Twiss arrangement: each emitted photon leaves the beam
/// splitter towards detector A with probability `split`, otherwise towards
/// B. Channels are [`CHANNEL_A`] and [`CHANNEL_B`].
pub fn route_hbt(
    emissions: &Emissions,
    detector_a: &DetectorConfig,
    detector_b: &DetectorConfig,
    split: f64,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream)> {
    check_unit_interval("split", split)?;
    let mut rng = super::rng(derive_seed(seed, 0));
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for &t in &emissions.times {
        if rng.random::<f64>() < split {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    let sa = apply_detector(&a, emissions.duration, CHANNEL_A, detector_a, derive_seed(seed, 1))?;
    let sb = apply_detector(&b, emissions.duration, CHANNEL_B, detector_b, derive_seed(seed, 2))?;
    Ok((sa, sb))
}
