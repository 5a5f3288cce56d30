//! Counter values as shift terms, and the cycles of the adder tree that sums them.

use lutnn::sim::{adder_tree_cycles, adder_tree_stages, apply_terms, shift_decompose};

fn main() {
    for count in [1u16, 4, 9, 15, 27, 100, 4095] {
        let terms = shift_decompose(count);
        let text: Vec<String> = terms
            .iter()
            .map(|t| format!("{}(v << {})", if t.positive { '+' } else { '-' }, t.shift))
            .collect();
        assert_eq!(apply_terms(&terms, 3), 3 * i64::from(count));
        println!("{count:>5} * v = {}", text.join(" "));
    }
    println!();
    for (k, bits) in [(2, 8), (16, 32), (256, 32), (4096, 32)] {
        println!(
            "{k:>5} operands of {bits} bits: {:>2} carry-save stages, {} cycles",
            adder_tree_stages(k),
            adder_tree_cycles(k, bits)
        );
    }
}
