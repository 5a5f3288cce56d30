//! Cycle count of the in-memory carry-save adder tree.

/// Stages of a 3:2 reduction tree for `k` addends: the smallest `s` with `1.5^s >= k`.
pub fn adder_tree_stages(k: u64) -> u64 {
    let (mut pow3, mut pow2, mut s) = (1u128, 1u128, 0);
    while pow3 < u128::from(k) * pow2 {
        pow3 *= 3;
        pow2 *= 2;
        s += 1;
    }
    s
}

/// Cycles to add `k_terms` operands of `bit_width` bits: every tree stage costs
/// `stage_cycles` and the final carry-propagate addition `stage_cycles * bit_width`.
pub fn adder_tree_cycles_with(k_terms: u64, bit_width: u32, stage_cycles: u64) -> u64 {
    if k_terms == 0 {
        return 0;
    }
    stage_cycles * (adder_tree_stages(k_terms) + u64::from(bit_width))
}

/// [`adder_tree_cycles_with`] at 13 cycles per stage.
pub fn adder_tree_cycles(k_terms: u64, bit_width: u32) -> u64 {
    adder_tree_cycles_with(k_terms, bit_width, 13)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_points() {
        assert_eq!(adder_tree_stages(4096), 21);
        assert_eq!(adder_tree_cycles(4096, 32), 689);
        assert_eq!(adder_tree_cycles(2, 8), 130);
        assert_eq!(adder_tree_cycles(1, 32), 13 * 32);
        assert_eq!(adder_tree_cycles(0, 32), 0);
    }

    #[test]
    fn stages_match_float_ceiling_away_from_powers() {
        for k in 1..5000u64 {
            let f = (k as f64).ln() / 1.5f64.ln();
            if (f - f.round()).abs() > 1e-9 {
                assert_eq!(adder_tree_stages(k), f.ceil() as u64, "k = {k}");
            }
        }
    }
}
