//! Memory accounting and report rendering.

use serde::Serialize;

use super::run::RunSummary;
use crate::composer::{ActivationStage, ReinterpretedModel};
use crate::sim::SimReport;

/// Bytes per stored table entry, codebook centroid and activation point.
pub const ENTRY_BYTES: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerMemory {
    pub layer: usize,
    pub product_tables: usize,
    pub codebooks: usize,
    pub activation_lut: usize,
    pub encoding_lut: usize,
}

impl LayerMemory {
    pub fn total(&self) -> usize {
        self.product_tables + self.codebooks + self.activation_lut + self.encoding_lut
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryReport {
    pub layers: Vec<LayerMemory>,
    pub total: usize,
}

impl MemoryReport {
    pub const FORMULA: &'static str = "bytes = sum over layers of 4 * (table cells + weight centroids + input centroids + 2 * activation rows + encoding centroids)";
}

/// Storage of a composed model with 32-bit entries. Code-forwarding pools store nothing.
pub fn report_memory(rm: &ReinterpretedModel) -> MemoryReport {
    let layers: Vec<LayerMemory> = rm
        .stages
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let wc = s.weights.as_ref()?;
            let cells: usize = wc.tables.iter().map(|t| t.rows * t.cols).sum();
            let centroids: usize = wc.codebooks.iter().map(|c| c.len()).sum::<usize>() + s.input_codebook.len();
            let act_rows = match &s.activation {
                Some(ActivationStage::Lut(l)) => l.len(),
                _ => 0,
            };
            Some(LayerMemory {
                layer: i + 1,
                product_tables: cells * ENTRY_BYTES,
                codebooks: centroids * ENTRY_BYTES,
                activation_lut: 2 * act_rows * ENTRY_BYTES,
                encoding_lut: s.encoding.as_ref().map_or(0, |e| e.len()) * ENTRY_BYTES,
            })
        })
        .collect();
    let total = layers.iter().map(LayerMemory::total).sum();
    MemoryReport { layers, total }
}

/// Published efficiency of reference accelerators, for side-by-side tables.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferencePoint {
    pub name: &'static str,
    pub gops_per_mm2: f64,
    pub gops_per_w: f64,
}

pub const REFERENCE_ACCELERATORS: [ReferencePoint; 3] = [
    ReferencePoint {
        name: "RAPIDNN",
        gops_per_mm2: 1904.6,
        gops_per_w: 839.1,
    },
    ReferencePoint {
        name: "ISAAC",
        gops_per_mm2: 479.0,
        gops_per_w: 380.7,
    },
    ReferencePoint {
        name: "PipeLayer",
        gops_per_mm2: 1485.1,
        gops_per_w: 142.9,
    },
];

/// Markdown table of the simulated efficiency next to the published figures.
pub fn compare_reference(sim: &SimReport) -> String {
    let mut s = String::from("| design | source | GOP/s/mm2 | GOP/s/W |\n|---|---|---:|---:|\n");
    s.push_str(&format!("| this run | simulated | {:.1} | {:.1} |\n", sim.gops_per_mm2, sim.gops_per_w));
    for r in REFERENCE_ACCELERATORS {
        s.push_str(&format!("| {} | published | {:.1} | {:.1} |\n", r.name, r.gops_per_mm2, r.gops_per_w));
    }
    s
}

pub fn markdown_summary(r: &RunSummary) -> String {
    let sim = &r.sim;
    let best = r.reinterpret.best();
    let mut s = format!(
        "# Run summary\n\n\
         dataset `{}`, topology `{}`, w = {}, u = {}, q = {}, seed {}\n\n\
         | metric | value |\n|---|---:|\n\
         | baseline error ({:?}) | {:.4} |\n\
         | lookup error ({:?}) | {:.4} |\n\
         | validation delta_e | {:+.4} |\n\
         | iterations | {} (converged: {}) |\n\
         | memory | {} bytes |\n\
         | simulated samples | {} |\n\
         | latency per sample | {:.1} cycles |\n\
         | steady-state throughput | {:.3e} samples/s |\n\
         | energy | {:.3e} J |\n\
         | EDP | {:.3e} J*s |\n\
         | chip power | {:.1} W composed, {:.1} W and {:.1} W published |\n\
         | train / compose / simulate | {:.1} s / {:.1} s / {:.1} s |\n",
        r.dataset,
        r.topology.join(" "),
        r.w,
        r.u,
        r.q,
        r.seed,
        r.evaluation_split,
        r.baseline_error,
        r.evaluation_split,
        r.lut_error,
        best.delta_e,
        r.reinterpret.iterations.len(),
        r.reinterpret.converged,
        r.reinterpret.memory_bytes,
        sim.samples,
        sim.latency_cycles,
        sim.steady_state_samples_per_s,
        sim.energy_j,
        sim.edp_js,
        sim.chip_power_w,
        sim.reported_chip_power_table_w,
        sim.reported_chip_power_text_w,
        r.train_seconds,
        r.compose_seconds,
        r.simulate_seconds,
    );
    let e = &sim.energy;
    s.push_str("\n## Energy\n\n| part | J | share |\n|---|---:|---:|\n");
    for (name, v) in [
        ("accumulation", e.accumulation_j),
        ("activation", e.activation_j),
        ("encoding and pooling", e.encoding_pooling_j),
        ("other", e.other_j),
    ] {
        s.push_str(&format!("| {name} | {v:.3e} | {:.1}% |\n", 100.0 * v / sim.energy_j));
    }
    let a = &sim.area;
    s.push_str("\n## Area\n\n| block | mm2 | share |\n|---|---:|---:|\n");
    for (name, v) in [
        ("crossbar", a.crossbar_mm2),
        ("counter", a.counter_mm2),
        ("activation", a.activation_mm2),
        ("encoder", a.encoder_mm2),
        ("buffer", a.buffer_mm2),
        ("total", a.total_mm2),
    ] {
        s.push_str(&format!("| {name} | {v:.2} | {:.1}% |\n", 100.0 * v / a.total_mm2));
    }
    s.push_str("\n## Efficiency\n\n");
    s.push_str(&compare_reference(sim));
    s.push_str("\n## Layers\n\n| layer | kind | neurons | tiles | rounds | mean cycles |\n|---:|---|---:|---:|---:|---:|\n");
    for l in &sim.layers {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.1} |\n",
            l.layer, l.kind, l.neurons, l.tiles, l.rounds, l.mean_cycles
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composer::{compose, ComposeConfig, ModelParams};
    use crate::nn::{build_topology, dataset, Network};

    fn single_layer(w: usize, u: usize) -> MemoryReport {
        let data = dataset::cifar_like(200, 0, 0, 1);
        let net = Network::new(build_topology(vec![3, 8, 8], &["fc:10:softmax".into()]).unwrap(), 1).unwrap();
        let cfg = ComposeConfig {
            w,
            u,
            sample_fraction: 1.0,
            ..ComposeConfig::default()
        };
        report_memory(&compose(&net, &data, &cfg).unwrap())
    }

    #[test]
    fn table_bytes_follow_w_times_u() {
        let m = single_layer(64, 64);
        assert_eq!(m.layers.len(), 1);
        assert_eq!(m.layers[0].product_tables, 16384);
        assert_eq!(m.layers[0].codebooks, (64 + 64) * 4);
        assert_eq!(m.layers[0].activation_lut + m.layers[0].encoding_lut, 0);
        assert_eq!(m.total, 16384 + 512);
        assert_eq!(single_layer(4, 4).layers[0].product_tables, 64);
    }

    #[test]
    fn empty_model_needs_nothing() {
        let rm = ReinterpretedModel {
            input_dims: vec![1],
            params: ModelParams {
                w: 2,
                u: 2,
                q: 2,
                tree_depth: 1,
                frac_bits: 16,
            },
            stages: vec![],
        };
        assert_eq!(report_memory(&rm).total, 0);
    }
}
