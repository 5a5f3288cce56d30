//! Behaviour and cost of the accelerator: counting, shift-and-add accumulation,
//! nearest-distance CAM search and the layer pipeline.

pub mod adder;
pub mod cost;
pub mod counting;
pub mod ndcam;
pub mod shift;
pub mod simulate;

pub use adder::{adder_tree_cycles, adder_tree_cycles_with, adder_tree_stages};
pub use cost::{AreaBreakdown, RnaCostModel};
pub use counting::{counting_cycles, counting_schedule, CountingOutcome};
pub use ndcam::{cmos_pooling_cost, match_score, mismatch_rate, ndcam_search, pooling_cost, PoolingCost, SearchMode};
pub use shift::{apply_terms, shift_decompose, ShiftTerm};
pub use simulate::{simulate, EnergyBreakdown, LayerReport, SimOptions, SimReport, SimResult};
