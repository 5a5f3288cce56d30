//! Fixed-point representations used by the lookup path.
//!
//! `Y`, activation points and outputs, and encoding centroids are signed 32-bit words with
//! `frac_bits` fractional bits. Product tables are 32-bit words with a per-table binary
//! scale chosen so the largest entry uses 30 bits; sums of table entries are accumulated
//! in 64 bits at that scale and rounded once into `Y`.

use crate::composer::{ActivationStage, Codebook, ProductTable};

/// Largest per-table scale; keeps biases at table scale inside i64.
const MAX_TABLE_SCALE: i32 = 46;

/// Rounds `v * 2^bits` to i32, saturating. Returns the word and whether it saturated.
pub fn to_fixed(v: f64, bits: u32) -> (i32, bool) {
    let s = (v * f64::from(bits).exp2()).round();
    if s > f64::from(i32::MAX) {
        (i32::MAX, true)
    } else if s < f64::from(i32::MIN) {
        (i32::MIN, true)
    } else {
        (s as i32, false)
    }
}

pub fn from_fixed(v: i32, bits: u32) -> f64 {
    f64::from(v) / f64::from(bits).exp2()
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedTable {
    pub rows: usize,
    pub cols: usize,
    /// Fractional bits of the entries.
    pub scale: u32,
    pub values: Vec<i32>,
}

impl FixedTable {
    pub fn new(t: &ProductTable) -> Self {
        let max = t.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let scale = if max > 0.0 {
            (30 - max.log2().ceil() as i32).clamp(0, MAX_TABLE_SCALE)
        } else {
            30
        } as u32;
        let values = t.values.iter().map(|&v| to_fixed(v, scale).0).collect();
        Self {
            rows: t.rows,
            cols: t.cols,
            scale,
            values,
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> i32 {
        self.values[i * self.cols + j]
    }

    /// A bias at table scale.
    pub fn bias(&self, b: f64) -> i64 {
        (b * f64::from(self.scale).exp2()).round() as i64
    }

    /// Rounds an accumulator at table scale to a `frac_bits` word, saturating.
    pub fn to_y(&self, acc: i64, frac_bits: u32) -> (i32, bool) {
        let acc = i128::from(acc);
        let y = if self.scale >= frac_bits {
            let d = self.scale - frac_bits;
            if d == 0 {
                acc
            } else {
                (acc + (1i128 << (d - 1))) >> d
            }
        } else {
            acc << (frac_bits - self.scale)
        };
        if y > i128::from(i32::MAX) {
            (i32::MAX, true)
        } else if y < i128::from(i32::MIN) {
            (i32::MIN, true)
        } else {
            (y as i32, false)
        }
    }
}

/// Nearest-value search over fixed-point centroids.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedCodebook {
    pub centroids: Vec<i32>,
}

impl FixedCodebook {
    pub fn new(cb: &Codebook, frac_bits: u32) -> Self {
        Self {
            centroids: cb.centroids().iter().map(|&c| to_fixed(c, frac_bits).0).collect(),
        }
    }

    /// Index of the nearest centroid, lower index on ties and among duplicates.
    #[inline]
    pub fn encode(&self, v: i32) -> u16 {
        nearest(&self.centroids, v) as u16
    }
}

#[inline]
fn nearest(sorted: &[i32], v: i32) -> usize {
    let hi = sorted.partition_point(|&c| c < v);
    let mut best = if hi == 0 {
        0
    } else if hi == sorted.len() || i64::from(v) - i64::from(sorted[hi - 1]) <= i64::from(sorted[hi]) - i64::from(v) {
        hi - 1
    } else {
        hi
    };
    while best > 0 && sorted[best - 1] == sorted[best] {
        best -= 1;
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub enum FixedActivation {
    Lut { y: Vec<i32>, z: Vec<i32> },
    Comparator,
}

impl FixedActivation {
    pub fn new(stage: &ActivationStage, frac_bits: u32) -> Self {
        match stage {
            ActivationStage::Lut(lut) => FixedActivation::Lut {
                y: lut.points().iter().map(|&v| to_fixed(v, frac_bits).0).collect(),
                z: lut.outputs().iter().map(|&v| to_fixed(v, frac_bits).0).collect(),
            },
            ActivationStage::Comparator => FixedActivation::Comparator,
        }
    }

    #[inline]
    pub fn eval(&self, y: i32) -> i32 {
        match self {
            FixedActivation::Lut { y: points, z } => z[nearest(points, y)],
            FixedActivation::Comparator => y.max(0),
        }
    }

    /// Rows stored in the activation memory (0 for the comparator).
    pub fn rows(&self) -> usize {
        match self {
            FixedActivation::Lut { y, .. } => y.len(),
            FixedActivation::Comparator => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_scale_keeps_entries_in_30_bits() {
        let wc = Codebook::new(vec![-0.7, 0.2]).unwrap();
        let xc = Codebook::new(vec![0.0, 1.5]).unwrap();
        let t = FixedTable::new(&ProductTable::build(&wc, &xc));
        // max |t| = 1.05 -> ceil(log2) = 1 -> scale 29.
        assert_eq!(t.scale, 29);
        assert!(t.values.iter().all(|v| v.unsigned_abs() <= 1 << 30));
        assert_eq!(t.get(1, 1), to_fixed(0.2 * 1.5, 29).0);
    }

    #[test]
    fn accumulator_rounds_once() {
        let t = FixedTable {
            rows: 1,
            cols: 1,
            scale: 20,
            values: vec![0],
        };
        // 1.5 ulp of Q16 at scale 20 is 24 units -> rounds half up to 2.
        assert_eq!(t.to_y(24, 16), (2, false));
        assert_eq!(t.to_y(-24, 16), (-1, false));
        assert_eq!(t.to_y(i64::MAX, 16), (i32::MAX, true));
    }

    #[test]
    fn nearest_prefers_lower_on_ties() {
        let cb = FixedCodebook { centroids: vec![-4, 0, 0, 4] };
        assert_eq!(cb.encode(2), 1);
        assert_eq!(cb.encode(3), 3);
        assert_eq!(cb.encode(-2), 0);
        assert_eq!(cb.encode(i32::MAX), 3);
        assert_eq!(cb.encode(i32::MIN), 0);
    }

    #[test]
    fn saturating_conversion() {
        assert_eq!(to_fixed(1e12, 16), (i32::MAX, true));
        assert_eq!(to_fixed(-1e12, 16), (i32::MIN, true));
        assert_eq!(to_fixed(0.5, 16), (32768, false));
        assert_eq!(from_fixed(32768, 16), 0.5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_within_half_ulp(v in -30000.0f64..30000.0) {
                let (q, sat) = to_fixed(v, 16);
                prop_assert!(!sat);
                prop_assert!((from_fixed(q, 16) - v).abs() <= 0.5 / 65536.0);
            }
        }
    }
}
