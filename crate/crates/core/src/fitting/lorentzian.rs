use super::lm::{least_squares, Data, LmOptions, ParamSpec};
use super::result::{FitFlag, FitResult};
use crate::error::{Error, Result};

/// Lorentzian line with full width at half maximum `fwhm` and peak height
/// `amplitude` above `offset`.
pub fn lorentzian(x: f64, center: f64, fwhm: f64, amplitude: f64, offset: f64) -> f64 {
    let h = 0.5 * fwhm;
    offset + amplitude * h * h / ((x - center).powi(2) + h * h)
}

fn weights(y: &[f64], sigma: Option<&[f64]>) -> Vec<f64> {
    match sigma {
        Some(s) => s.to_vec(),
        None if y.iter().all(|&v| v >= 0.0) => y.iter().map(|&v| v.max(1.0).sqrt()).collect(),
        None => vec![1.0; y.len()],
    }
}

struct Guess {
    center: f64,
    fwhm: f64,
    amplitude: f64,
    offset: f64,
    peak: usize,
}

fn guess(x: &[f64], y: &[f64]) -> Guess {
    let (peak, &max) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let min = y.iter().copied().fold(f64::INFINITY, f64::min);
    let half = min + 0.5 * (max - min);
    let mut l = peak;
    while l > 0 && y[l - 1] > half {
        l -= 1;
    }
    let mut r = peak;
    while r + 1 < y.len() && y[r + 1] > half {
        r += 1;
    }
    let span = x[x.len() - 1] - x[0];
    let fwhm = if r > l { (x[r] - x[l]).abs() } else { span.abs() / 20.0 };
    Guess {
        center: x[peak],
        fwhm: fwhm.max(span.abs() * 1e-4),
        amplitude: max - min,
        offset: min,
        peak,
    }
}

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() || x.len() < 5 {
        return Err(Error::Config("spectrum needs at least five (detuning, counts) pairs".into()));
    }
    if x.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("detuning axis must increase".into()));
    }
    Ok(())
}

/// Single Lorentzian fit (center, fwhm, amplitude, offset).
///
/// A perfectly flat spectrum is fitted with the offset alone and flagged
/// [`FitFlag::AmplitudeZero`], as is any amplitude within 2σ of zero.
pub fn fit_lorentzian(detuning: &[f64], counts: &[f64], sigma: Option<&[f64]>) -> Result<FitResult> {
    check(detuning, counts)?;
    let data = Data::new(detuning.to_vec(), counts.to_vec(), weights(counts, sigma))?;
    let g = guess(detuning, counts);
    let span = detuning[detuning.len() - 1] - detuning[0];
    let flat = g.amplitude == 0.0;
    let specs = [
        ParamSpec::new("center", "ueV", g.center).fixed(flat),
        ParamSpec::new("fwhm", "ueV", if flat { span / 3.0 } else { g.fwhm })
            .bounded(0.0, f64::INFINITY)
            .fixed(flat),
        ParamSpec::new("amplitude", "counts", g.amplitude).fixed(flat),
        ParamSpec::new("offset", "counts", g.offset),
    ];
    let mut fit = least_squares(
        "lorentzian",
        |p, x| x.iter().map(|&x| lorentzian(x, p[0], p[1], p[2], p[3])).collect(),
        &data,
        &specs,
        &LmOptions::default(),
    )?;
    let amp = &fit.parameters[2];
    if flat || amp.value.abs() < 2.0 * amp.uncertainty {
        fit.flag(FitFlag::AmplitudeZero);
    } else if span < 3.0 * fit.values()[1] {
        log::warn!("spectrum spans fewer than three linewidths");
    }
    Ok(fit)
}

/// Two Lorentzians of common width at center ∓ splitting/2, e.g. the
/// fine-structure doublet.
pub fn fit_lorentzian_doublet(
    detuning: &[f64],
    counts: &[f64],
    sigma: Option<&[f64]>,
) -> Result<FitResult> {
    check(detuning, counts)?;
    let data = Data::new(detuning.to_vec(), counts.to_vec(), weights(counts, sigma))?;
    let g = guess(detuning, counts);
    // second line: highest point at least one width from the first
    let second = (0..detuning.len())
        .filter(|&i| (detuning[i] - g.center).abs() > 1.5 * g.fwhm)
        .max_by(|&a, &b| counts[a].total_cmp(&counts[b]))
        .unwrap_or(g.peak);
    let (c1, c2) = (g.center, detuning[second]);
    let (lo, hi) = if c1 < c2 { (g.peak, second) } else { (second, g.peak) };
    let specs = [
        ParamSpec::new("center", "ueV", 0.5 * (c1 + c2)),
        ParamSpec::new("splitting", "ueV", (c2 - c1).abs().max(g.fwhm)).bounded(0.0, f64::INFINITY),
        ParamSpec::new("fwhm", "ueV", g.fwhm).bounded(0.0, f64::INFINITY),
        ParamSpec::new("amplitude_1", "counts", counts[lo] - g.offset),
        ParamSpec::new("amplitude_2", "counts", counts[hi] - g.offset),
        ParamSpec::new("offset", "counts", g.offset),
    ];
    let mut fit = least_squares(
        "lorentzian_doublet",
        |p, x| {
            x.iter()
                .map(|&x| {
                    lorentzian(x, p[0] - 0.5 * p[1], p[2], p[3], p[5])
                        + lorentzian(x, p[0] + 0.5 * p[1], p[2], p[4], 0.0)
                })
                .collect()
        },
        &data,
        &specs,
        &LmOptions::default(),
    )?;
    for i in [3, 4] {
        let a = &fit.parameters[i];
        if a.value.abs() < 2.0 * a.uncertainty {
            fit.flag(FitFlag::AmplitudeZero);
        }
    }
    Ok(fit)
}
