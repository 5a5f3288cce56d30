//! Nearest-distance search over an 8-bit table in the three search modes, plus the cost of
//! pooling windows.

use lutnn::sim::{cmos_pooling_cost, mismatch_rate, ndcam_search, pooling_cost, RnaCostModel, SearchMode};

fn main() -> lutnn::Result<()> {
    let rows = [7u64, 12, 40, 41, 200];
    for q in [8u64, 26, 39, 255] {
        let hits: Vec<u64> = [SearchMode::Oracle, SearchMode::Staged, SearchMode::MatchScore]
            .into_iter()
            .map(|m| ndcam_search(q, &rows, 8, m).map(|i| rows[i]))
            .collect::<lutnn::Result<_>>()?;
        println!("query {q:>3}: oracle {:>3}, staged {:>3}, bitwise match score {:>3}", hits[0], hits[1], hits[2]);
    }

    // A 16-bit table searched in two 8-bit stages.
    let wide: Vec<u64> = (0..64).map(|i| (i * 1031 + 17) % 65536).collect();
    for m in [SearchMode::Staged, SearchMode::MatchScore] {
        let rate = mismatch_rate(&wide, 16, (0..65536).step_by(7), m)?;
        println!("{m:?}: {:.2}% of queries differ from the exact nearest row", 100.0 * rate);
    }

    let cost = RnaCostModel::default();
    for w in [2, 3, 4] {
        let a = pooling_cost(w, &cost)?;
        let b = cmos_pooling_cost(w, &cost)?;
        println!(
            "{w}x{w} max pool: CAM {:.1} um2 {:.2} ns {:.0} fJ, CMOS {:.1} um2 {:.2} ns {:.0} fJ",
            a.area_um2, a.latency_ns, a.energy_fj, b.area_um2, b.latency_ns, b.energy_fj
        );
    }
    Ok(())
}
