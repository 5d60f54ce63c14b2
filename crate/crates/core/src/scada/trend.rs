use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::plc::Quality;

pub const DEFAULT_TREND_CAPACITY: usize = 3600;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendSample {
    pub timestamp: u64,
    pub value: f64,
    pub quality: Quality,
}

/// Bounded history of one item. Timestamps are strictly increasing; the
/// oldest sample is evicted first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendSeries {
    pub address: String,
    pub capacity: usize,
    samples: VecDeque<TrendSample>,
    dropped: u64,
}

impl TrendSeries {
    pub fn new(address: impl Into<String>, capacity: usize) -> Self {
        TrendSeries { address: address.into(), capacity: capacity.max(1), samples: VecDeque::new(), dropped: 0 }
    }

    /// Appends unless the sample is not newer than the last one, in which
    /// case it is counted as dropped. Returns whether it was kept.
    pub fn append(&mut self, sample: TrendSample) -> bool {
        if self.samples.back().is_some_and(|last| sample.timestamp <= last.timestamp) {
            self.dropped += 1;
            return false;
        }
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(sample);
        true
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn samples(&self) -> impl Iterator<Item = &TrendSample> {
        self.samples.iter()
    }

    pub fn last(&self) -> Option<&TrendSample> {
        self.samples.back()
    }

    /// Samples with `from <= timestamp <= to`.
    pub fn window(&self, from: u64, to: u64) -> Vec<TrendSample> {
        let start = self.samples.partition_point(|s| s.timestamp < from);
        self.samples.iter().skip(start).take_while(|s| s.timestamp <= to).copied().collect()
    }
}
