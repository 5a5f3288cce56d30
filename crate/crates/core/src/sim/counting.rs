//! Parallel counting: one buffer of input codes per weight code, one pick per buffer per cycle.

use crate::lut::CountVector;

#[derive(Debug, Clone, PartialEq)]
pub struct CountingOutcome {
    pub counts: CountVector,
    pub cycles: u64,
    /// True when some counter would have exceeded its width and stuck at the maximum.
    pub saturated: bool,
}

/// Replays the counting phase cycle by cycle. `buffers[i]` holds the input codes of the
/// edges whose weight code is `i`; `u` is the number of input codes.
pub fn counting_schedule(buffers: &[Vec<u16>], u: usize, counter_bits: u32) -> CountingOutcome {
    let max = (1u32 << counter_bits) - 1;
    let mut counts = CountVector::new(buffers.len(), u);
    let mut raw = vec![0u32; buffers.len() * u];
    let cycles = buffers.iter().map(Vec::len).max().unwrap_or(0);
    let mut saturated = false;
    for cycle in 0..cycles {
        // Each buffer feeds a different row of counters, so no counter sees two increments.
        for (i, buf) in buffers.iter().enumerate() {
            if let Some(&x) = buf.get(cycle) {
                let cell = &mut raw[i * u + usize::from(x)];
                if *cell == max {
                    saturated = true;
                } else {
                    *cell += 1;
                    counts.add(i, usize::from(x));
                }
            }
        }
    }
    CountingOutcome {
        counts,
        cycles: cycles as u64,
        saturated,
    }
}

/// Counting cycles implied by a count vector: the fullest weight buffer.
pub fn counting_cycles(counts: &CountVector) -> u64 {
    counts.row_sums().into_iter().max().map_or(0, u64::from)
}
