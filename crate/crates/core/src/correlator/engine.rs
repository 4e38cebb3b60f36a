use serde::{Deserialize, Serialize};

use super::histogram::CorrelationHistogram;
use crate::error::{Error, Result};
use crate::simulate::TimeTagStream;

/// Half-open delay window `[lo, hi)` in ps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Self {
        Self { lo, hi }
    }

    /// `[−half, half)`
    pub fn symmetric(half: i64) -> Self {
        Self { lo: -half, hi: half }
    }

    pub fn contains(&self, tau: i64) -> bool {
        tau >= self.lo && tau < self.hi
    }

    /// The mirrored window `[−hi, −lo)`.
    pub fn negated(&self) -> Self {
        Self {
            lo: -self.hi,
            hi: -self.lo,
        }
    }

    pub(crate) fn bins(&self, bin_width: i64) -> Result<usize> {
        if bin_width <= 0 {
            return Err(Error::Config(format!("bin width {bin_width} ps must be positive")));
        }
        let span = self.hi - self.lo;
        if span <= 0 || span % bin_width != 0 {
            return Err(Error::Config(format!(
                "window [{}, {}) ps is empty or not a multiple of the {bin_width} ps bin width",
                self.lo, self.hi
            )));
        }
        Ok((span / bin_width) as usize)
    }
}

/// Tags of one chunk of stream A processed as a unit by the parallel path.
const CHUNK: usize = 1 << 15;

/// Counts every ordered pair (t_a, t_b) with t_b − t_a in `window`.
///
/// Streams sharing a channel id are treated as one detector: pairs of
/// identical timestamps are skipped, since a click cannot coincide with
/// itself. Uses all cores when the `parallel` feature is enabled; the
/// counts are identical to [`correlate_sequential`].
pub fn correlate(
    a: &TimeTagStream,
    b: &TimeTagStream,
    bin_width: i64,
    window: Window,
) -> Result<CorrelationHistogram> {
    correlate_impl(a, b, bin_width, window, cfg!(feature = "parallel"))
}

/// Single-threaded variant of [`correlate`].
pub fn correlate_sequential(
    a: &TimeTagStream,
    b: &TimeTagStream,
    bin_width: i64,
    window: Window,
) -> Result<CorrelationHistogram> {
    correlate_impl(a, b, bin_width, window, false)
}

fn correlate_impl(
    a: &TimeTagStream,
    b: &TimeTagStream,
    bin_width: i64,
    window: Window,
    parallel: bool,
) -> Result<CorrelationHistogram> {
    let same = a.channel() == b.channel();
    let counts = count_pairs(a.tags(), b.tags(), same, bin_width, window, parallel)?;
    Ok(CorrelationHistogram::from_counts(
        bin_width,
        window,
        counts,
        (a.rate_per_second(), b.rate_per_second()),
        a.duration().min(b.duration()),
    ))
}

/// Raw-slice entry point: checks that both slices are sorted and returns
/// the per-bin counts.
pub fn correlate_tags(
    a: &[i64],
    b: &[i64],
    same_channel: bool,
    bin_width: i64,
    window: Window,
) -> Result<Vec<u64>> {
    for tags in [a, b] {
        if let Some(i) = tags.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Data {
                index: i + 1,
                message: format!("tag {} precedes {}", tags[i + 1], tags[i]),
            });
        }
    }
    count_pairs(a, b, same_channel, bin_width, window, cfg!(feature = "parallel"))
}

fn count_pairs(
    a: &[i64],
    b: &[i64],
    same_channel: bool,
    bin_width: i64,
    window: Window,
    parallel: bool,
) -> Result<Vec<u64>> {
    let bins = window.bins(bin_width)?;
    if !parallel || a.len() <= CHUNK {
        let mut counts = vec![0u64; bins];
        accumulate(a, b, same_channel, bin_width, window, &mut counts);
        return Ok(counts);
    }
    let chunks = a.len().div_ceil(CHUNK);
    let partial = crate::par::map_indexed(chunks, |k| {
        let part = &a[k * CHUNK..((k + 1) * CHUNK).min(a.len())];
        let mut counts = vec![0u64; bins];
        accumulate(part, b, same_channel, bin_width, window, &mut counts);
        counts
    });
    let mut counts = vec![0u64; bins];
    for p in partial {
        for (c, x) in counts.iter_mut().zip(p) {
            *c += x;
        }
    }
    Ok(counts)
}

/// Two-pointer sweep: `start` tracks the first B tag not earlier than
/// t_a + lo and only moves forward, so the work per A tag is proportional
/// to the number of B tags inside the window.
fn accumulate(
    a: &[i64],
    b: &[i64],
    same_channel: bool,
    bin_width: i64,
    window: Window,
    counts: &mut [u64],
) {
    let Some(&first) = a.first() else { return };
    let mut start = b.partition_point(|&t| t < first + window.lo);
    for &ta in a {
        let lo = ta + window.lo;
        let hi = ta + window.hi;
        while start < b.len() && b[start] < lo {
            start += 1;
        }
        for &tb in &b[start..] {
            if tb >= hi {
                break;
            }
            if same_channel && tb == ta {
                continue;
            }
            counts[((tb - lo) / bin_width) as usize] += 1;
        }
    }
}
