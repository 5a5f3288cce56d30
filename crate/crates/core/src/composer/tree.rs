//! Multi-level codebooks built by recursive 2-means.
//!
//! Level `l` holds `2^l` centroids. Node `i` of level `l` splits into nodes `2i` and `2i + 1`
//! of level `l + 1`, so a child's code is its parent's code with one bit appended and a
//! coarser level is obtained by dropping trailing code bits.

use serde::{Deserialize, Serialize};

use super::codebook::Codebook;
use super::kmeans::{kmeans_sorted, mean};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodebookTree {
    /// `levels[l - 1]` is level `l`.
    levels: Vec<Codebook>,
}

impl CodebookTree {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Codebook of level `l` (1-based, `2^l` entries).
    pub fn level(&self, l: usize) -> &Codebook {
        &self.levels[l - 1]
    }

    /// Codebook with `k` entries; `k` must be a power of two within the tree.
    pub fn with_size(&self, k: usize) -> Result<&Codebook> {
        if !k.is_power_of_two() || k < 2 || k.trailing_zeros() as usize > self.depth() {
            return Err(Error::InvalidConfig(format!(
                "codebook size {k} is not a power of two between 2 and 2^{}",
                self.depth()
            )));
        }
        Ok(self.level(k.trailing_zeros() as usize))
    }

    /// Index of the parent of node `i` of level `l` in level `l - 1`.
    pub fn parent(i: u32) -> u32 {
        i >> 1
    }
}

/// Builds a tree of the given depth over `samples`.
///
/// A node whose members have fewer than two distinct values cannot be split; both of its
/// children repeat the node's centroid.
pub fn build_tree(samples: &[f64], depth: usize, seed: u64) -> Result<CodebookTree> {
    if depth == 0 {
        return Err(Error::InvalidConfig("tree depth must be at least 1".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidConfig("cannot build a codebook tree from no samples".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig("codebook samples must be finite".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);

    // Each node is a contiguous range of the sorted samples plus its centroid.
    let root = if sorted[0] == sorted[sorted.len() - 1] { sorted[0] } else { mean(&sorted) };
    let mut nodes = vec![(0, sorted.len(), root)];
    let mut levels = Vec::with_capacity(depth);
    for l in 0..depth {
        let mut next = Vec::with_capacity(nodes.len() * 2);
        for (n, &(lo, hi, c)) in nodes.iter().enumerate() {
            let members = &sorted[lo..hi];
            if members.is_empty() || members[0] == members[members.len() - 1] {
                next.push((lo, lo, c));
                next.push((lo, hi, c));
                continue;
            }
            let seed = seed ^ ((l as u64) << 32 | n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let r = kmeans_sorted(members, 2, seed);
            let split = lo + r.sizes[0];
            let cents = r.codebook.centroids();
            next.push((lo, split, cents[0]));
            next.push((split, hi, cents[1]));
        }
        levels.push(Codebook::from_sorted(next.iter().map(|n| n.2).collect()));
        nodes = next;
    }
    Ok(CodebookTree { levels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        // Level 1 gives {-2.1, 1.9}; the right node splits into {0.9, 2.3}.
        let xs = [-2.6, -1.6, 0.8, 1.0, 2.2, 2.3, 2.3, 2.3, 2.4];
        let t = build_tree(&xs, 3, 0).unwrap();
        let l1 = t.level(1).centroids();
        assert!((l1[0] + 2.1).abs() < 1e-12 && (l1[1] - 1.9).abs() < 1e-12, "{l1:?}");
        let l2 = t.level(2).centroids();
        assert!((l2[2] - 0.9).abs() < 1e-12 && (l2[3] - 2.3).abs() < 1e-12, "{l2:?}");
        assert_eq!(t.level(3).len(), 8);
    }

    #[test]
    fn symmetric_pair() {
        let t = build_tree(&[-0.75, 0.75], 1, 9).unwrap();
        assert_eq!(t.level(1).centroids(), &[-0.75, 0.75]);
    }

    #[test]
    fn constant_population_duplicates() {
        let t = build_tree(&[4.0; 5], 3, 0).unwrap();
        assert_eq!(t.level(3).centroids(), &[4.0; 8]);
        assert_eq!(t.level(3).encode(4.0), 0);
    }

    #[test]
    fn with_size_checks_bounds() {
        let t = build_tree(&[1.0, 2.0, 3.0], 2, 0).unwrap();
        assert!(t.with_size(4).is_ok());
        assert!(t.with_size(8).is_err());
        assert!(t.with_size(3).is_err());
        assert!(build_tree(&[1.0], 0, 0).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn levels_sorted_and_parents_between_children(xs in prop::collection::vec(-50.0f64..50.0, 1..300), seed in 0u64..50) {
                let t = build_tree(&xs, 5, seed).unwrap();
                for l in 1..=t.depth() {
                    let cb = t.level(l);
                    prop_assert_eq!(cb.len(), 1 << l);
                    prop_assert!(cb.centroids().windows(2).all(|w| w[0] <= w[1]));
                }
                // A parent is the weighted mean of its two children, so it sits between them.
                for l in 2..=t.depth() {
                    let (fine, coarse) = (t.level(l), t.level(l - 1));
                    for i in 0..fine.len() as u32 {
                        let p = coarse.decode(CodebookTree::parent(i));
                        let (a, b) = (fine.decode(i & !1), fine.decode(i | 1));
                        prop_assert!(a - 1e-9 <= p && p <= b + 1e-9, "{} not in [{}, {}]", p, a, b);
                    }
                }
            }
        }
    }
}
