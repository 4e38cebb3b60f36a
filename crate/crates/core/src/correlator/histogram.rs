use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::engine::Window;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationKind {
    Raw,
    Poisson,
    CopolCorrected,
}

/// How the raw counts were turned into a correlation function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub kind: NormalizationKind,
    /// Multiplies the raw counts.
    pub scale: f64,
    /// Delay ranges [lo, hi) in ps used for the Poisson baseline.
    pub baseline_regions: Vec<(i64, i64)>,
    /// Mean counts per bin over the baseline.
    pub baseline: Option<f64>,
    pub baseline_error: Option<f64>,
    /// Sample variance over mean of the baseline bins; 1 for pure shot noise.
    pub baseline_dispersion: Option<f64>,
    /// The baseline scatters more than shot noise allows; it probably
    /// overlaps a feature.
    pub baseline_flagged: bool,
    /// Co-polarisation correction factor applied on top of the baseline.
    pub copol_factor: Option<f64>,
}

impl Normalization {
    pub fn raw() -> Self {
        Self {
            kind: NormalizationKind::Raw,
            scale: 1.0,
            baseline_regions: Vec::new(),
            baseline: None,
            baseline_error: None,
            baseline_dispersion: None,
            baseline_flagged: false,
            copol_factor: None,
        }
    }
}

/// Ordered-pair coincidence counts over a delay window.
///
/// Bin `i` covers delays `[window.lo + i·bin_width, window.lo + (i+1)·bin_width)`
/// in ps, where delay = t_b − t_a.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationHistogram {
    pub(crate) bin_width: i64,
    pub(crate) window: Window,
    pub(crate) counts: Vec<u64>,
    pub(crate) total_pairs: u64,
    /// Mean rates of the two channels, 1/s.
    pub(crate) rates: (f64, f64),
    pub(crate) duration: i64,
    pub(crate) normalization: Normalization,
}

/// Sidecar contents: everything but the per-bin counts.
#[derive(Serialize, Deserialize)]
struct Sidecar {
    bin_width: i64,
    window: Window,
    bins: usize,
    total_pairs: u64,
    rates: (f64, f64),
    duration: i64,
    normalization: Normalization,
}

impl CorrelationHistogram {
    /// Raw histogram from externally accumulated counts. `rates` are the
    /// mean channel rates in 1/s and `duration` the acquisition time in ps.
    pub fn from_raw_counts(
        bin_width: i64,
        window: Window,
        counts: Vec<u64>,
        rates: (f64, f64),
        duration: i64,
    ) -> Result<Self> {
        let bins = window.bins(bin_width)?;
        if counts.len() != bins {
            return Err(Error::Config(format!(
                "{} counts do not fill {bins} bins",
                counts.len()
            )));
        }
        if duration <= 0 {
            return Err(Error::Config(format!("duration {duration} ps must be positive")));
        }
        Ok(Self::from_counts(bin_width, window, counts, rates, duration))
    }

    pub(crate) fn from_counts(
        bin_width: i64,
        window: Window,
        counts: Vec<u64>,
        rates: (f64, f64),
        duration: i64,
    ) -> Self {
        let total_pairs = counts.iter().sum();
        Self {
            bin_width,
            window,
            counts,
            total_pairs,
            rates,
            duration,
            normalization: Normalization::raw(),
        }
    }

    pub fn bin_width(&self) -> i64 {
        self.bin_width
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total_pairs(&self) -> u64 {
        self.total_pairs
    }

    pub fn rates(&self) -> (f64, f64) {
        self.rates
    }

    /// ps
    pub fn duration(&self) -> i64 {
        self.duration
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Lower edge of bin `i`, ps.
    pub fn bin_start(&self, i: usize) -> i64 {
        self.window.lo + i as i64 * self.bin_width
    }

    /// Bin centres, ns.
    pub fn centers_ns(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| (self.bin_start(i) as f64 + 0.5 * self.bin_width as f64) * 1e-3)
            .collect()
    }

    /// Index of the bin containing delay `tau` ps.
    pub fn bin_of(&self, tau: i64) -> Option<usize> {
        self.window
            .contains(tau)
            .then(|| ((tau - self.window.lo) / self.bin_width) as usize)
    }

    /// Indices of bins lying entirely inside `[lo, hi)` ps.
    pub fn bins_within(&self, lo: i64, hi: i64) -> std::ops::Range<usize> {
        let w = self.bin_width;
        let first = (lo - self.window.lo).max(0);
        let first = ((first + w - 1) / w) as usize;
        let last = ((hi - self.window.lo).max(0) / w) as usize;
        first.min(self.len())..last.min(self.len()).max(first.min(self.len()))
    }

    pub fn normalized(&self) -> Vec<f64> {
        let s = self.normalization.scale;
        self.counts.iter().map(|&c| c as f64 * s).collect()
    }

    /// Shot-noise error of each normalised bin.
    pub fn errors(&self) -> Vec<f64> {
        let s = self.normalization.scale;
        self.counts.iter().map(|&c| (c as f64).sqrt() * s).collect()
    }

    /// Expected accidental coincidences per bin for uncorrelated streams.
    pub fn accidental_level(&self) -> f64 {
        self.rates.0 * self.rates.1 * (self.duration as f64 * 1e-12) * (self.bin_width as f64 * 1e-12)
    }

    /// Adds the counts of a histogram taken with identical binning, e.g. from
    /// a later part of the same acquisition.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.bin_width != other.bin_width || self.window != other.window {
            return Err(Error::Config("merged histograms must share their binning".into()));
        }
        if self.normalization.kind != NormalizationKind::Raw
            || other.normalization.kind != NormalizationKind::Raw
        {
            return Err(Error::Normalization("only raw histograms can be merged".into()));
        }
        let counts = self
            .counts
            .iter()
            .zip(&other.counts)
            .map(|(a, b)| a + b)
            .collect();
        let d = self.duration + other.duration;
        let rate = |a: f64, b: f64| {
            if d == 0 {
                0.0
            } else {
                (a * self.duration as f64 + b * other.duration as f64) / d as f64
            }
        };
        Ok(Self::from_counts(
            self.bin_width,
            self.window,
            counts,
            (rate(self.rates.0, other.rates.0), rate(self.rates.1, other.rates.1)),
            d,
        ))
    }

    /// Writes `tau_ps,counts,normalized,error` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau_ps,counts,normalized,error")?;
        let s = self.normalization.scale;
        for (i, &c) in self.counts.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                self.bin_start(i),
                c,
                c as f64 * s,
                (c as f64).sqrt() * s
            )?;
        }
        Ok(())
    }

    /// Writes the JSON sidecar with binning and normalisation metadata.
    pub fn write_sidecar<W: Write>(&self, w: W) -> Result<()> {
        let side = Sidecar {
            bin_width: self.bin_width,
            window: self.window,
            bins: self.len(),
            total_pairs: self.total_pairs,
            rates: self.rates,
            duration: self.duration,
            normalization: self.normalization.clone(),
        };
        serde_json::to_writer_pretty(w, &side)?;
        Ok(())
    }

    /// Rebuilds a histogram from its CSV table and JSON sidecar.
    pub fn read<R: BufRead, S: std::io::Read>(csv: R, sidecar: S) -> Result<Self> {
        let side: Sidecar = serde_json::from_reader(sidecar)?;
        let mut counts = Vec::with_capacity(side.bins);
        for (n, line) in csv.lines().enumerate() {
            let line = line?;
            if n == 0 {
                if line.trim() != "tau_ps,counts,normalized,error" {
                    return Err(Error::Format(format!("unexpected histogram header `{line}`")));
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let tau: i64 = parse(fields.next(), n)?;
            let c: u64 = parse(fields.next(), n)?;
            if tau != side.window.lo + counts.len() as i64 * side.bin_width {
                return Err(Error::Data {
                    index: n,
                    message: format!("bin edge {tau} out of sequence"),
                });
            }
            counts.push(c);
        }
        if counts.len() != side.bins {
            return Err(Error::Format(format!(
                "sidecar lists {} bins but the table has {}",
                side.bins,
                counts.len()
            )));
        }
        let mut h = Self::from_counts(side.bin_width, side.window, counts, side.rates, side.duration);
        if h.total_pairs != side.total_pairs {
            return Err(Error::Format("total_pairs does not match the counts".into()));
        }
        h.normalization = side.normalization;
        Ok(h)
    }
}

fn parse<T: std::str::FromStr>(field: Option<&str>, line: usize) -> Result<T> {
    field
        .and_then(|f| f.trim().parse().ok())
        .ok_or_else(|| Error::Data {
            index: line,
            message: "malformed histogram row".into(),
        })
}
