use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::histogram::{CorrelationHistogram, NormalizationKind};
use crate::error::{Error, Result};
use crate::model::HomNormalization;

/// A baseline whose scatter has a shot-noise p-value below this is flagged.
pub const DISPERSION_P_VALUE: f64 = 1e-3;

/// Divides the histogram by its mean level over the baseline regions
/// (delay ranges `[lo, hi)` in ps, bins fully inside count).
///
/// The scatter of the baseline bins is compared with shot noise; excess
/// dispersion usually means a region overlaps a dip or bunching peak and
/// sets `baseline_flagged`.
pub fn poisson_normalize(
    hist: &CorrelationHistogram,
    baseline_regions: &[(i64, i64)],
) -> Result<CorrelationHistogram> {
    let mut bins: Vec<usize> = baseline_regions
        .iter()
        .flat_map(|&(lo, hi)| hist.bins_within(lo, hi))
        .collect();
    bins.sort_unstable();
    bins.dedup();
    if bins.is_empty() {
        return Err(Error::Normalization(
            "baseline regions contain no complete bins".into(),
        ));
    }
    let n = bins.len() as f64;
    let values: Vec<f64> = bins.iter().map(|&i| hist.counts[i] as f64).collect();
    let mean = values.iter().sum::<f64>() / n;
    if mean <= 0.0 {
        return Err(Error::Normalization("baseline holds no coincidences".into()));
    }
    let (dispersion, flagged) = if bins.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let dispersion = var / mean;
        let dof = n - 1.0;
        let chi2 = ChiSquared::new(dof).expect("positive degrees of freedom");
        let p = chi2.sf(dispersion * dof);
        (Some(dispersion), p < DISPERSION_P_VALUE)
    } else {
        (None, false)
    };
    if flagged {
        log::warn!(
            "baseline dispersion {:.2} exceeds shot noise; the baseline may overlap a feature",
            dispersion.unwrap_or(f64::NAN)
        );
    }
    let mut out = hist.clone();
    let norm = &mut out.normalization;
    norm.kind = NormalizationKind::Poisson;
    norm.scale = 1.0 / mean;
    norm.baseline_regions = baseline_regions.to_vec();
    norm.baseline = Some(mean);
    norm.baseline_error = Some((mean / n).sqrt());
    norm.baseline_dispersion = dispersion;
    norm.baseline_flagged = flagged;
    norm.copol_factor = None;
    Ok(out)
}

/// Multiplies a Poisson-normalised co-polarised histogram by the
/// normalization factor N, compensating the interference-depleted single
/// rates. N = 1 leaves the values unchanged.
pub fn renormalize_copolarized(
    hist: &CorrelationHistogram,
    norm: &HomNormalization,
) -> Result<CorrelationHistogram> {
    if hist.normalization.kind != NormalizationKind::Poisson {
        return Err(Error::Normalization(
            "co-polarised renormalisation needs a Poisson-normalised histogram".into(),
        ));
    }
    if !norm.factor.is_finite() || norm.factor <= 0.0 {
        return Err(Error::FullyElastic);
    }
    let mut out = hist.clone();
    out.normalization.kind = NormalizationKind::CopolCorrected;
    out.normalization.scale *= norm.factor;
    out.normalization.copol_factor = Some(norm.factor);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::Window;

    fn hist(counts: Vec<u64>) -> CorrelationHistogram {
        let n = counts.len() as i64;
        CorrelationHistogram::from_counts(100, Window::new(0, 100 * n), counts, (1.0, 1.0), 1)
    }

    #[test]
    fn flat_histogram_normalises_to_one() {
        let h = poisson_normalize(&hist(vec![400; 50]), &[(0, 5000)]).unwrap();
        assert!(h.normalized().iter().all(|&v| (v - 1.0).abs() < 1e-15));
        assert!(!h.normalization().baseline_flagged);
        assert_eq!(h.normalization().baseline_dispersion, Some(0.0));
    }

    #[test]
    fn sloped_baseline_is_flagged() {
        let counts = (0..50).map(|i| 1000 + 20 * i).collect();
        let h = poisson_normalize(&hist(counts), &[(0, 5000)]).unwrap();
        assert!(h.normalization().baseline_flagged);
    }

    #[test]
    fn empty_baseline_is_an_error() {
        assert!(matches!(
            poisson_normalize(&hist(vec![1; 10]), &[(5000, 9000)]),
            Err(Error::Normalization(_))
        ));
        assert!(poisson_normalize(&hist(vec![1; 10]), &[(0, 50)]).is_err());
    }

    #[test]
    fn copol_identity_and_guards() {
        let raw = hist(vec![10, 20, 30]);
        let p = poisson_normalize(&raw, &[(0, 300)]).unwrap();
        let c = renormalize_copolarized(&p, &HomNormalization::identity()).unwrap();
        assert_eq!(c.normalized(), p.normalized());
        assert_eq!(c.normalization().kind, NormalizationKind::CopolCorrected);
        assert!(renormalize_copolarized(&raw, &HomNormalization::identity()).is_err());
        let mut bad = HomNormalization::identity();
        bad.factor = f64::INFINITY;
        assert!(matches!(renormalize_copolarized(&p, &bad), Err(Error::FullyElastic)));
    }
}
