//! Area, power and timing constants of the accelerator.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-block constants. Areas in µm², powers in mW unless the name says otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RnaCostModel {
    pub crossbar_area_um2: f64,
    pub crossbar_power_mw: f64,
    pub counter_area_um2: f64,
    pub counter_power_mw: f64,
    pub counter_bits: u32,
    pub activation_area_um2: f64,
    pub activation_power_mw: f64,
    pub activation_rows: usize,
    pub encoder_area_um2: f64,
    pub encoder_power_mw: f64,
    pub encoder_rows: usize,
    pub rnas_per_tile: usize,
    /// Broadcast buffer of one tile.
    pub buffer_area_um2: f64,
    pub buffer_power_mw: f64,
    pub tiles: usize,
    pub clock_ghz: f64,
    /// Cycles of one in-memory NOR step.
    pub nor_cycles: u64,
    /// Cycles of one carry-save adder-tree stage.
    pub adder_stage_cycles: u64,
    /// Operand width N of the final carry-propagate addition and of CAM words.
    pub word_bits: u32,
    pub cam_stage_bits: u32,
    pub cam_search_ns: f64,
    /// 4x4 max pooling in NDCAM.
    pub ndcam_pool_area_um2: f64,
    pub ndcam_pool_latency_ns: f64,
    pub ndcam_pool_energy_fj: f64,
    /// 4x4 max pooling in CMOS, for comparison only.
    pub cmos_pool_area_um2: f64,
    pub cmos_pool_latency_ns: f64,
    pub cmos_pool_energy_fj: f64,
    /// Published chip power figures, reported next to the composed value.
    pub reported_chip_power_table_w: f64,
    pub reported_chip_power_text_w: f64,
}

impl Default for RnaCostModel {
    fn default() -> Self {
        Self {
            crossbar_area_um2: 3136.0,
            crossbar_power_mw: 3.7,
            counter_area_um2: 538.6,
            counter_power_mw: 0.7,
            counter_bits: 12,
            activation_area_um2: 83.2,
            activation_power_mw: 0.2,
            activation_rows: 64,
            encoder_area_um2: 83.2,
            encoder_power_mw: 0.2,
            encoder_rows: 64,
            rnas_per_tile: 1000,
            buffer_area_um2: 37_600.0,
            buffer_power_mw: 2.8,
            tiles: 32,
            clock_ghz: 1.0,
            nor_cycles: 1,
            adder_stage_cycles: 13,
            word_bits: 32,
            cam_stage_bits: 8,
            cam_search_ns: 0.5,
            ndcam_pool_area_um2: 24.0,
            ndcam_pool_latency_ns: 0.5,
            ndcam_pool_energy_fj: 920.0,
            cmos_pool_area_um2: 374.0,
            cmos_pool_latency_ns: 1.2,
            cmos_pool_energy_fj: 378.0,
            reported_chip_power_table_w: 310.4,
            reported_chip_power_text_w: 155.3,
        }
    }
}

/// Chip area split by block class, in mm².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaBreakdown {
    pub crossbar_mm2: f64,
    pub counter_mm2: f64,
    pub activation_mm2: f64,
    pub encoder_mm2: f64,
    pub buffer_mm2: f64,
    pub total_mm2: f64,
}

impl RnaCostModel {
    /// Parses a TOML table; every key is optional and overrides the default.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let model: Self = toml::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path).map_err(Error::file(path))?)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clock_ghz.is_finite() && self.clock_ghz > 0.0) {
            return Err(Error::InvalidConfig("clock_ghz must be positive".into()));
        }
        if self.cam_stage_bits == 0 || !self.word_bits.is_multiple_of(self.cam_stage_bits) {
            return Err(Error::InvalidConfig("word_bits must be a multiple of cam_stage_bits".into()));
        }
        if self.tiles == 0 || self.rnas_per_tile == 0 {
            return Err(Error::InvalidConfig("tiles and rnas_per_tile must be positive".into()));
        }
        if self.counter_bits == 0 || self.counter_bits > 31 {
            return Err(Error::InvalidConfig("counter_bits must be in 1..=31".into()));
        }
        Ok(())
    }

    pub fn rna_area_um2(&self) -> f64 {
        sum_small_first([self.crossbar_area_um2, self.counter_area_um2, self.activation_area_um2, self.encoder_area_um2])
    }

    pub fn rna_power_mw(&self) -> f64 {
        sum_small_first([self.crossbar_power_mw, self.counter_power_mw, self.activation_power_mw, self.encoder_power_mw])
    }

    pub fn tile_area_um2(&self) -> f64 {
        self.rnas_per_tile as f64 * self.rna_area_um2() + self.buffer_area_um2
    }

    pub fn tile_power_w(&self) -> f64 {
        (self.rnas_per_tile as f64 * self.rna_power_mw() + self.buffer_power_mw) * 1e-3
    }

    pub fn chip_area_mm2(&self) -> f64 {
        self.tiles as f64 * self.tile_area_um2() * 1e-6
    }

    /// Peak power composed from the block constants.
    pub fn chip_power_w(&self) -> f64 {
        self.tiles as f64 * self.tile_power_w()
    }

    pub fn total_rnas(&self) -> usize {
        self.tiles * self.rnas_per_tile
    }

    pub fn counter_max(&self) -> u32 {
        (1 << self.counter_bits) - 1
    }

    pub fn cycle_ns(&self) -> f64 {
        1.0 / self.clock_ghz
    }

    /// Clock cycles covering one CAM search.
    pub fn cam_cycles(&self) -> u64 {
        (self.cam_search_ns * self.clock_ghz - 1e-9).ceil().max(1.0) as u64
    }

    pub fn area_breakdown(&self) -> AreaBreakdown {
        let rnas = (self.tiles * self.rnas_per_tile) as f64 * 1e-6;
        let out = AreaBreakdown {
            crossbar_mm2: rnas * self.crossbar_area_um2,
            counter_mm2: rnas * self.counter_area_um2,
            activation_mm2: rnas * self.activation_area_um2,
            encoder_mm2: rnas * self.encoder_area_um2,
            buffer_mm2: self.tiles as f64 * self.buffer_area_um2 * 1e-6,
            total_mm2: 0.0,
        };
        AreaBreakdown {
            total_mm2: out.crossbar_mm2 + out.counter_mm2 + out.activation_mm2 + out.encoder_mm2 + out.buffer_mm2,
            ..out
        }
    }
}

fn sum_small_first<const N: usize>(mut parts: [f64; N]) -> f64 {
    parts.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    parts.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rna_block_area_is_sum_of_parts() {
        let c = RnaCostModel::default();
        assert_eq!(c.rna_area_um2(), 3841.0);
        assert!((c.rna_power_mw() - 4.8).abs() < 1e-12);
    }

    #[test]
    fn chip_area_within_tenth_of_a_percent() {
        let c = RnaCostModel::default();
        let a = c.chip_area_mm2();
        assert!((a - 124.1).abs() / 124.1 < 1e-3, "{a}");
        assert!((c.area_breakdown().total_mm2 - a).abs() < 1e-9);
        assert!((c.tile_area_um2() * 1e-6 - 3.88).abs() < 0.01);
    }

    #[test]
    fn composed_power_sits_near_the_text_figure() {
        let c = RnaCostModel::default();
        assert!((c.chip_power_w() - 153.69).abs() < 0.01);
    }

    #[test]
    fn toml_overrides_single_keys() {
        let c = RnaCostModel::from_toml_str("clock_ghz = 2.0\ntiles = 4").unwrap();
        assert_eq!(c.clock_ghz, 2.0);
        assert_eq!(c.tiles, 4);
        assert_eq!(c.crossbar_area_um2, 3136.0);
        assert!(RnaCostModel::from_toml_str("clock = 2.0").is_err());
        assert!(RnaCostModel::from_toml_str("clock_ghz = 0.0").is_err());
    }

    #[test]
    fn cam_search_fits_one_cycle_at_one_ghz() {
        let c = RnaCostModel::default();
        assert_eq!(c.cam_cycles(), 1);
        let fast = RnaCostModel { clock_ghz: 4.0, ..c };
        assert_eq!(fast.cam_cycles(), 2);
    }
}
