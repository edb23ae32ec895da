//! Multiply-accumulate tallies per pipeline stage.

use std::iter::Sum;
use std::ops::AddAssign;

/// Complex multiply-accumulate counts, attributed to the stage that performed them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounts {
    pub init: u64,
    pub phase: u64,
    pub irls: u64,
    pub music: u64,
}

impl OpCounts {
    pub fn total(&self) -> u64 {
        self.init + self.phase + self.irls + self.music
    }
}

impl AddAssign for OpCounts {
    fn add_assign(&mut self, rhs: Self) {
        self.init += rhs.init;
        self.phase += rhs.phase;
        self.irls += rhs.irls;
        self.music += rhs.music;
    }
}

impl Sum for OpCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |mut acc, x| {
            acc += x;
            acc
        })
    }
}
