//! Nearest-distance CAM search and the cost of pooling in CAM.

use serde::{Deserialize, Serialize};

use super::cost::RnaCostModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Exact `argmin |row - query|`.
    Oracle,
    /// MSB-first search in 8-bit stages; each stage keeps the rows nearest to the query
    /// within that stage.
    Staged,
    /// Staged search ranking rows by the bit-weighted match score of each stage.
    MatchScore,
}

const STAGE_BITS: u32 = 8;

/// Index of the stored row closest to `query` among `bits`-wide unsigned words; ties go to
/// the lowest index.
pub fn ndcam_search(query: u64, rows: &[u64], bits: u32, mode: SearchMode) -> Result<usize> {
    if rows.is_empty() {
        return Err(Error::InvalidConfig("CAM search over an empty table".into()));
    }
    if bits == 0 || bits > 64 || !bits.is_multiple_of(STAGE_BITS) {
        return Err(Error::WidthMismatch {
            expected: bits.div_ceil(STAGE_BITS).max(1) * STAGE_BITS,
            actual: bits,
        });
    }
    let width = |v: u64| 64 - v.leading_zeros();
    if let Some(&v) = std::iter::once(&query).chain(rows).find(|&&v| width(v) > bits) {
        return Err(Error::WidthMismatch {
            expected: bits,
            actual: width(v),
        });
    }
    Ok(match mode {
        SearchMode::Oracle => oracle(query, rows),
        SearchMode::Staged | SearchMode::MatchScore => staged(query, rows, bits, mode),
    })
}

fn oracle(query: u64, rows: &[u64]) -> usize {
    let mut best = 0;
    for (i, &r) in rows.iter().enumerate() {
        if r.abs_diff(query) < rows[best].abs_diff(query) {
            best = i;
        }
    }
    best
}

/// Match score of one stage: each matching cell contributes twice its lower neighbour.
pub fn match_score(query: u8, row: u8) -> u32 {
    u32::from(!(query ^ row))
}

fn staged(query: u64, rows: &[u64], bits: u32, mode: SearchMode) -> usize {
    let mut alive: Vec<usize> = (0..rows.len()).collect();
    for stage in (0..bits / STAGE_BITS).rev() {
        let shift = stage * STAGE_BITS;
        let byte = |v: u64| (v >> shift & 0xFF) as u8;
        let prefix = |v: u64| v.checked_shr(shift + STAGE_BITS).unwrap_or(0);
        let qb = byte(query);
        let cost = |i: usize| -> u32 {
            let r = rows[i];
            match mode {
                SearchMode::MatchScore => 255 - match_score(qb, byte(r)),
                _ => {
                    // A row already above (below) the query only gets closer by being as
                    // small (large) as possible in the remaining stages.
                    let target = match prefix(r).cmp(&prefix(query)) {
                        std::cmp::Ordering::Equal => qb,
                        std::cmp::Ordering::Greater => 0x00,
                        std::cmp::Ordering::Less => 0xFF,
                    };
                    u32::from(byte(r).abs_diff(target))
                }
            }
        };
        let best = alive.iter().map(|&i| cost(i)).min().unwrap();
        alive.retain(|&i| cost(i) == best);
        if alive.len() == 1 {
            break;
        }
    }
    alive[0]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolingCost {
    pub area_um2: f64,
    pub latency_ns: f64,
    pub energy_fj: f64,
}

fn scaled(window: usize, area: f64, latency: f64, energy: f64, rows: usize) -> Result<PoolingCost> {
    let cells = window * window;
    if window == 0 || cells > rows {
        return Err(Error::InvalidConfig(format!("a {window}x{window} window does not fit one {rows}-row block")));
    }
    if window == 1 {
        return Ok(PoolingCost {
            area_um2: 0.0,
            latency_ns: 0.0,
            energy_fj: 0.0,
        });
    }
    // The constants describe a 4x4 window; other sizes scale with the number of cells.
    let f = cells as f64 / 16.0;
    Ok(PoolingCost {
        area_um2: area * f,
        latency_ns: latency,
        energy_fj: energy * f,
    })
}

/// Cost of one pooling window in NDCAM.
pub fn pooling_cost(window: usize, cost: &RnaCostModel) -> Result<PoolingCost> {
    scaled(
        window,
        cost.ndcam_pool_area_um2,
        cost.ndcam_pool_latency_ns,
        cost.ndcam_pool_energy_fj,
        cost.activation_rows,
    )
}

/// The same window in CMOS logic, for comparison.
pub fn cmos_pooling_cost(window: usize, cost: &RnaCostModel) -> Result<PoolingCost> {
    scaled(
        window,
        cost.cmos_pool_area_um2,
        cost.cmos_pool_latency_ns,
        cost.cmos_pool_energy_fj,
        cost.activation_rows,
    )
}

/// Share of queries on which `mode` disagrees with the exact search, over every query in
/// `queries` against `rows`.
pub fn mismatch_rate(rows: &[u64], bits: u32, queries: impl Iterator<Item = u64>, mode: SearchMode) -> Result<f64> {
    let (mut total, mut wrong) = (0u64, 0u64);
    for q in queries {
        total += 1;
        if ndcam_search(q, rows, bits, mode)? != ndcam_search(q, rows, bits, SearchMode::Oracle)? {
            wrong += 1;
        }
    }
    Ok(if total == 0 { 0.0 } else { wrong as f64 / total as f64 })
}
