//! Area and power roll-up of the default chip and of a variant read from TOML.

use lutnn::sim::RnaCostModel;

fn main() -> lutnn::Result<()> {
    let c = RnaCostModel::default();
    println!("RNA block: {:.1} um2, {:.2} mW", c.rna_area_um2(), c.rna_power_mw());
    println!("tile ({} RNAs + buffer): {:.3} mm2, {:.3} W", c.rnas_per_tile, c.tile_area_um2() * 1e-6, c.tile_power_w());
    println!("chip ({} tiles): {:.2} mm2, {:.2} W", c.tiles, c.chip_area_mm2(), c.chip_power_w());
    let a = c.area_breakdown();
    for (name, v) in [
        ("crossbar", a.crossbar_mm2),
        ("counter", a.counter_mm2),
        ("activation", a.activation_mm2),
        ("encoder", a.encoder_mm2),
        ("buffer", a.buffer_mm2),
    ] {
        println!("  {name:<10} {v:>7.2} mm2 ({:.1}%)", 100.0 * v / a.total_mm2);
    }

    let small = RnaCostModel::from_toml_str("tiles = 8\nclock_ghz = 0.5\n")?;
    println!(
        "8 tiles at 500 MHz: {:.2} mm2, {:.2} W, {} cycle(s) per CAM search",
        small.chip_area_mm2(),
        small.chip_power_w(),
        small.cam_cycles()
    );
    Ok(())
}
