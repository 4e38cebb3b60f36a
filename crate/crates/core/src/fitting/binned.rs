//! Model curves as a histogram records them: convolved with the detector
//! response and averaged over each bin.

use crate::correlator::CorrelationHistogram;
use crate::error::{Error, Result};
use crate::model::irf_convolve;

/// Contiguous run of histogram bins, in ns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct BinGrid {
    pub start: f64,
    pub width: f64,
    pub bins: usize,
}

impl BinGrid {
    pub fn centers(&self) -> Vec<f64> {
        (0..self.bins)
            .map(|i| self.start + (i as f64 + 0.5) * self.width)
            .collect()
    }
}

const MIN_SUBSAMPLES: usize = 8;
const MAX_SUBSAMPLES: usize = 64;

/// Bin averages of `f ⊗ IRF`. Returns the values and whether the internal
/// grid had to stay coarser than σ/2.
pub(crate) fn binned_convolved<F: Fn(f64) -> f64>(grid: &BinGrid, sigma: f64, f: F) -> (Vec<f64>, bool) {
    let mut sub = MIN_SUBSAMPLES;
    if sigma > 0.0 {
        sub = sub.max((2.0 * grid.width / sigma).ceil() as usize).min(MAX_SUBSAMPLES);
    }
    let step = grid.width / sub as f64;
    let pad = if sigma > 0.0 {
        (6.0 * sigma / step).ceil() as usize + 1
    } else {
        0
    };
    let n = grid.bins * sub + 2 * pad;
    let samples: Vec<f64> = (0..n)
        .map(|k| f(grid.start + (k as f64 - pad as f64 + 0.5) * step))
        .collect();
    let conv = irf_convolve(&samples, step, sigma);
    let values = (0..grid.bins)
        .map(|b| {
            let lo = pad + b * sub;
            conv.values[lo..lo + sub].iter().sum::<f64>() / sub as f64
        })
        .collect();
    (values, conv.coarse_grid)
}

/// Normalised values, errors and bin grid of the histogram bins whose
/// centres lie within `|τ| ≤ half_window` ns (all bins if `None`).
pub(crate) fn histogram_data(
    hist: &CorrelationHistogram,
    half_window: Option<f64>,
) -> Result<(BinGrid, Vec<f64>, Vec<f64>)> {
    let centers = hist.centers_ns();
    let keep: Vec<usize> = (0..hist.len())
        .filter(|&i| half_window.is_none_or(|w| centers[i].abs() <= w))
        .collect();
    let (Some(&first), Some(&last)) = (keep.first(), keep.last()) else {
        return Err(Error::Config("fit window contains no histogram bins".into()));
    };
    let scale = hist.normalization().scale;
    let y: Vec<f64> = hist.counts()[first..=last].iter().map(|&c| c as f64 * scale).collect();
    let sigma: Vec<f64> = hist.counts()[first..=last]
        .iter()
        .map(|&c| (c as f64).max(1.0).sqrt() * scale)
        .collect();
    let grid = BinGrid {
        start: hist.bin_start(first) as f64 * 1e-3,
        width: hist.bin_width() as f64 * 1e-3,
        bins: last - first + 1,
    };
    Ok((grid, y, sigma))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_bin_centre() {
        let grid = BinGrid {
            start: -1.0,
            width: 0.1,
            bins: 20,
        };
        let (v, coarse) = binned_convolved(&grid, 0.05, |t| 2.0 * t + 1.0);
        assert!(!coarse);
        for (c, v) in grid.centers().iter().zip(&v) {
            assert!((v - (2.0 * c + 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_gains_bin_and_irf_variance() {
        let grid = BinGrid {
            start: -1.0,
            width: 0.1,
            bins: 20,
        };
        let sigma = 0.03;
        let (v, _) = binned_convolved(&grid, sigma, |t| t * t);
        for (c, v) in grid.centers().iter().zip(&v) {
            let expected = c * c + 0.01 / 12.0 + sigma * sigma;
            assert!((v - expected).abs() < 2e-5, "{v} {expected}");
        }
    }
}
