//! Sorted centroid sets and the nearest-centroid encoding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ascending centroids. A centroid's code is its index, so comparing codes as unsigned
/// integers agrees with comparing centroid values.
///
/// Adjacent duplicates only appear when a population has fewer distinct values than the
/// requested size; the upper copy of a duplicate is never produced by [`Codebook::encode`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Codebook {
    centroids: Vec<f64>,
}

impl Codebook {
    pub fn new(centroids: Vec<f64>) -> Result<Self> {
        if centroids.is_empty() {
            return Err(Error::InvalidConfig("codebook needs at least one centroid".into()));
        }
        if centroids.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfig("codebook centroids must be finite".into()));
        }
        if centroids.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfig("codebook centroids must be ascending".into()));
        }
        Ok(Self { centroids })
    }

    pub(crate) fn from_sorted(centroids: Vec<f64>) -> Self {
        debug_assert!(!centroids.is_empty() && centroids.windows(2).all(|w| w[0] <= w[1]));
        Self { centroids }
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Code width in bits, `ceil(log2 k)`.
    pub fn bits(&self) -> u32 {
        self.len().next_power_of_two().trailing_zeros()
    }

    /// Number of distinct centroid values.
    pub fn distinct(&self) -> usize {
        1 + self.centroids.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// Index of the nearest centroid; a value equidistant from two centroids gets the lower one.
    pub fn encode(&self, value: f64) -> u32 {
        let c = &self.centroids;
        let hi = c.partition_point(|&x| x < value);
        let mut best = if hi == 0 {
            0
        } else if hi == c.len() || value - c[hi - 1] <= c[hi] - value {
            hi - 1
        } else {
            hi
        };
        while best > 0 && c[best - 1] == c[best] {
            best -= 1;
        }
        best as u32
    }

    pub fn decode(&self, code: u32) -> f64 {
        self.centroids[code as usize]
    }

    /// Replaces a value by its nearest centroid.
    pub fn snap(&self, value: f64) -> f64 {
        self.decode(self.encode(value))
    }
}

impl TryFrom<Vec<f64>> for Codebook {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Codebook::new(v)
    }
}

impl From<Codebook> for Vec<f64> {
    fn from(c: Codebook) -> Self {
        c.centroids
    }
}
