use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::histogram::CorrelationHistogram;
use crate::error::{Error, Result};

/// Largest tolerated relative shot-noise error of the fitted minimum.
pub const MAX_RELATIVE_MINIMUM_ERROR: f64 = 0.2;

/// Side-dip depth relative to the neighbouring local maximum,
/// D = 1 − min/localmax, so an ideal dip from 1 to 0.75 has D = 0.25.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DipDepth {
    pub value: f64,
    pub uncertainty: f64,
    pub minimum: f64,
    pub minimum_error: f64,
    pub local_max: f64,
    pub local_max_error: f64,
    /// Position of the fitted minimum, ps.
    pub position: f64,
}

/// Measures a dip by a weighted parabola fit over `dip_center ± half_width`
/// and a mean level over `local_max_regions` (all in ps). Uses the
/// histogram's normalised values; shot-noise errors are propagated.
pub fn extract_dip_depth(
    hist: &CorrelationHistogram,
    dip_center: i64,
    half_width: i64,
    local_max_regions: &[(i64, i64)],
) -> Result<DipDepth> {
    let (lo, hi) = (dip_center - half_width, dip_center + half_width);
    if local_max_regions.iter().any(|&(a, b)| a < hi && lo < b) {
        return Err(Error::Config(
            "dip and local-maximum regions must be disjoint".into(),
        ));
    }
    let scale = hist.normalization.scale;
    let dip_bins = hist.bins_within(lo, hi);
    if dip_bins.len() < 3 {
        return Err(Error::Config(format!(
            "dip region of ±{half_width} ps holds fewer than three bins"
        )));
    }

    // Weighted least squares in s = (bin centre − dip centre) / half_width.
    let width = half_width as f64;
    let mut xtwx = Matrix3::zeros();
    let mut xtwy = Vector3::zeros();
    for i in dip_bins {
        let c = hist.counts[i] as f64;
        let s = (hist.bin_start(i) as f64 + 0.5 * hist.bin_width as f64 - dip_center as f64) / width;
        let y = c * scale;
        let var = c.max(1.0) * scale * scale;
        let x = Vector3::new(1.0, s, s * s);
        xtwx += x * x.transpose() / var;
        xtwy += x * (y / var);
    }
    let cov = xtwx
        .try_inverse()
        .ok_or_else(|| Error::Config("degenerate dip region".into()))?;
    let c = cov * xtwy;
    let eval = |s: f64| c[0] + c[1] * s + c[2] * s * s;
    let (s_min, grad) = if c[2] > 0.0 && (c[1] / (2.0 * c[2])).abs() <= 1.0 {
        let s = -c[1] / (2.0 * c[2]);
        (s, Vector3::new(1.0, -c[1] / (2.0 * c[2]), c[1] * c[1] / (4.0 * c[2] * c[2])))
    } else {
        // no interior minimum: the lower end of the fitted region
        let s = if eval(-1.0) <= eval(1.0) { -1.0 } else { 1.0 };
        (s, Vector3::new(1.0, s, s * s))
    };
    let minimum = eval(s_min);
    let minimum_error = (grad.transpose() * cov * grad)[0].max(0.0).sqrt();

    let relative_error = if minimum > 0.0 {
        minimum_error / minimum
    } else {
        f64::INFINITY
    };
    if !(relative_error < MAX_RELATIVE_MINIMUM_ERROR) {
        return Err(Error::Precision {
            relative_error,
            extra_duration_factor: (relative_error / MAX_RELATIVE_MINIMUM_ERROR).powi(2),
        });
    }

    let mut n = 0usize;
    let mut sum = 0u64;
    for &(a, b) in local_max_regions {
        for i in hist.bins_within(a, b) {
            n += 1;
            sum += hist.counts[i];
        }
    }
    if n == 0 || sum == 0 {
        return Err(Error::Config("local-maximum regions hold no counts".into()));
    }
    let local_max = sum as f64 * scale / n as f64;
    let local_max_error = (sum as f64).sqrt() * scale / n as f64;

    let ratio = minimum / local_max;
    let uncertainty =
        ratio * ((minimum_error / minimum).powi(2) + (local_max_error / local_max).powi(2)).sqrt();
    Ok(DipDepth {
        value: 1.0 - ratio,
        uncertainty,
        minimum,
        minimum_error,
        local_max,
        local_max_error,
        position: dip_center as f64 + s_min * width,
    })
}
