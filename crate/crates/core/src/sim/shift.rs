//! Turning a counter value into shifted copies of a stored product.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftTerm {
    pub shift: u32,
    /// False for a subtracted term.
    pub positive: bool,
}

impl ShiftTerm {
    pub fn apply(self, v: i64) -> i64 {
        let t = v << self.shift;
        if self.positive {
            t
        } else {
            -t
        }
    }
}

/// Decomposes `count` into signed powers of two, highest shift first.
///
/// The longest run of two or more consecutive ones (the most significant one on ties)
/// becomes `2^(hi+1) - 2^lo`; every other set bit is a positive term. So 4 is `2^2`,
/// 9 is `2^3 + 2^0` and 15 is `2^4 - 2^0`.
pub fn shift_decompose(count: u16) -> Vec<ShiftTerm> {
    let c = u32::from(count);
    // (lo, len) of the longest run.
    let mut best: Option<(u32, u32)> = None;
    let mut bit = 0;
    while bit < 16 {
        if c >> bit & 1 == 1 {
            let lo = bit;
            while bit < 16 && c >> bit & 1 == 1 {
                bit += 1;
            }
            let len = bit - lo;
            if len >= 2 && best.is_none_or(|(_, l)| len >= l) {
                best = Some((lo, len));
            }
        } else {
            bit += 1;
        }
    }
    let mut terms = Vec::new();
    let run_mask = best.map_or(0, |(lo, len)| ((1u32 << len) - 1) << lo);
    if let Some((lo, len)) = best {
        terms.push(ShiftTerm { shift: lo + len, positive: true });
        terms.push(ShiftTerm { shift: lo, positive: false });
    }
    let rest = c & !run_mask;
    for b in 0..16 {
        if rest >> b & 1 == 1 {
            terms.push(ShiftTerm { shift: b, positive: true });
        }
    }
    terms.sort_by_key(|t| std::cmp::Reverse(t.shift));
    terms
}

/// `Σ sign · (v << shift)` over the terms.
pub fn apply_terms(terms: &[ShiftTerm], v: i64) -> i64 {
    terms.iter().map(|t| t.apply(v)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plus(shift: u32) -> ShiftTerm {
        ShiftTerm { shift, positive: true }
    }

    fn minus(shift: u32) -> ShiftTerm {
        ShiftTerm { shift, positive: false }
    }

    #[test]
    fn worked_examples() {
        assert_eq!(shift_decompose(4), vec![plus(2)]);
        assert_eq!(shift_decompose(9), vec![plus(3), plus(0)]);
        assert_eq!(shift_decompose(15), vec![plus(4), minus(0)]);
        assert_eq!(shift_decompose(0), vec![]);
        assert_eq!(shift_decompose(1), vec![plus(0)]);
    }

    #[test]
    fn ties_pick_the_upper_run() {
        // 0b1101_1 -> runs at bits 0..=1 and 3..=4, both length 2.
        assert_eq!(shift_decompose(0b11011), vec![plus(5), minus(3), plus(1), plus(0)]);
    }

    #[test]
    fn every_12_bit_count_reconstructs() {
        for c in 0..4096u16 {
            assert_eq!(apply_terms(&shift_decompose(c), 1), i64::from(c), "count {c}");
        }
    }
}
