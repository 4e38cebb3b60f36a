use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct StreamMetadata {
    pub seed: u64,
    pub generator: String,
}

/// Detection times of one channel in integer picoseconds.
///
/// Tags are strictly increasing and lie in `[0, duration]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeTagStream {
    channel: u8,
    tags: Vec<i64>,
    duration: i64,
    pub metadata: StreamMetadata,
}

impl TimeTagStream {
    pub fn new(channel: u8, tags: Vec<i64>, duration: i64, metadata: StreamMetadata) -> Result<Self> {
        if duration < 0 {
            return Err(Error::Config(format!("negative stream duration {duration}")));
        }
        if let Some(i) = tags.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Data {
                index: i + 1,
                message: format!("tag {} does not follow {}", tags[i + 1], tags[i]),
            });
        }
        if let (Some(&first), Some(&last)) = (tags.first(), tags.last()) {
            if first < 0 || last > duration {
                let index = if first < 0 { 0 } else { tags.len() - 1 };
                return Err(Error::Data {
                    index,
                    message: format!("tag outside [0, {duration}]"),
                });
            }
        }
        Ok(Self {
            channel,
            tags,
            duration,
            metadata,
        })
    }

    /// Sorts, removes duplicate times and drops tags outside
    /// `[0, duration]`.
    pub(crate) fn from_unsorted(
        channel: u8,
        mut tags: Vec<i64>,
        duration: i64,
        metadata: StreamMetadata,
    ) -> Self {
        tags.retain(|&t| (0..=duration).contains(&t));
        tags.sort_unstable();
        tags.dedup();
        Self {
            channel,
            tags,
            duration,
            metadata,
        }
    }

    pub fn empty(channel: u8, duration: i64, metadata: StreamMetadata) -> Self {
        Self {
            channel,
            tags: Vec::new(),
            duration,
            metadata,
        }
    }

    pub fn channel(&self) -> u8 {
        self.channel
    }

    pub fn tags(&self) -> &[i64] {
        &self.tags
    }

    pub fn into_tags(self) -> Vec<i64> {
        self.tags
    }

    /// Acquisition length in ps.
    pub fn duration(&self) -> i64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    /// Mean count rate in 1/s.
    pub fn rate_per_second(&self) -> f64 {
        if self.duration == 0 {
            0.0
        } else {
            self.tags.len() as f64 / (self.duration as f64 * 1e-12)
        }
    }

    pub fn with_channel(mut self, channel: u8) -> Self {
        self.channel = channel;
        self
    }
}
