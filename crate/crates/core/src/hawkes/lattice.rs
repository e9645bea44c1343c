use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LEVELS: u32 = 3;
pub const DEFAULT_SENTIMENTS: u32 = 11;

/// The (hierarchy level × sentiment class) grid that indexes the process dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lattice {
    pub levels: u32,
    pub sentiments: u32,
}

impl Default for Lattice {
    fn default() -> Self {
        Lattice {
            levels: DEFAULT_LEVELS,
            sentiments: DEFAULT_SENTIMENTS,
        }
    }
}

/// One cell of the lattice: a 1-based `(level, sentiment)` pair plus its row-major flat index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DimensionIndex {
    pub level: u32,
    pub sentiment: u32,
    pub flat: usize,
}

impl Lattice {
    pub fn new(levels: u32, sentiments: u32) -> Result<Self> {
        if levels == 0 {
            return Err(Error::domain("levels", "must be at least 1"));
        }
        if sentiments == 0 {
            return Err(Error::domain("sentiments", "must be at least 1"));
        }
        Ok(Lattice { levels, sentiments })
    }

    /// Number of dimensions `L·C`.
    pub fn dims(&self) -> usize {
        self.levels as usize * self.sentiments as usize
    }

    pub fn dim(&self, level: u32, sentiment: u32) -> Result<DimensionIndex> {
        if level < 1 || level > self.levels {
            return Err(Error::domain(
                "level",
                format!("{level} is outside [1, {}]", self.levels),
            ));
        }
        if sentiment < 1 || sentiment > self.sentiments {
            return Err(Error::domain(
                "sentiment",
                format!("{sentiment} is outside [1, {}]", self.sentiments),
            ));
        }
        let flat = (level as usize - 1) * self.sentiments as usize + (sentiment as usize - 1);
        Ok(DimensionIndex {
            level,
            sentiment,
            flat,
        })
    }

    pub fn from_flat(&self, flat: usize) -> Result<DimensionIndex> {
        if flat >= self.dims() {
            return Err(Error::domain(
                "flat",
                format!("{flat} is outside [0, {})", self.dims()),
            ));
        }
        let c = self.sentiments as usize;
        Ok(DimensionIndex {
            level: (flat / c) as u32 + 1,
            sentiment: (flat % c) as u32 + 1,
            flat,
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = DimensionIndex> + '_ {
        (0..self.dims()).map(move |f| self.from_flat(f).expect("flat index in range"))
    }

    /// Flat indices of every sentiment cell on one level.
    pub fn level_cells(&self, level: u32) -> std::ops::Range<usize> {
        let c = self.sentiments as usize;
        let start = (level as usize - 1) * c;
        start..start + c
    }
}
