//! Cycle, energy and area accounting for a workload run through the lookup path.
//!
//! The functional result comes from [`LutModel::forward`]; a tracer observes every neuron's
//! count vector and turns it into counting and adder-tree cycles. Layers form a pipeline:
//! a sample enters layer `l` once it has left layer `l - 1` and the previous sample has
//! left layer `l`.

use serde::{Deserialize, Serialize};

use super::adder::adder_tree_cycles_with;
use super::cost::{AreaBreakdown, RnaCostModel};
use super::counting::counting_cycles;
use super::ndcam::pooling_cost;
use super::shift::shift_decompose;
use crate::composer::ReinterpretedModel;
use crate::error::{Error, Result};
use crate::experiment::report_memory;
use crate::lut::{CountVector, LutModel, Tracer};
use crate::nn::{predicted_class, Dataset, LayerKind, PoolMode};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    /// Let one RNA serve several neurons in turn when a model does not fit the chip.
    pub allow_sharing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    /// Counters and crossbar adder trees of dense and convolution layers.
    pub accumulation_j: f64,
    pub activation_j: f64,
    /// Encoder searches, the input encoding and pooling.
    pub encoding_pooling_j: f64,
    /// Broadcast buffers.
    pub other_j: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.accumulation_j + self.activation_j + self.encoding_pooling_j + self.other_j
    }

    pub fn accumulation_share(&self) -> f64 {
        self.accumulation_j / self.total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    /// Layer index in the original network (0 is the input-encoding layer).
    pub layer: usize,
    pub kind: String,
    pub neurons: usize,
    pub tiles: usize,
    /// Times each RNA is reused per sample.
    pub rounds: usize,
    pub mean_cycles: f64,
    pub max_cycles: u64,
    pub max_counting_cycles: u64,
    pub max_adder_cycles: u64,
    pub energy: EnergyBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub samples: usize,
    pub clock_ghz: f64,
    /// Cycles until the last sample leaves the pipeline.
    pub total_cycles: u64,
    pub wall_time_s: f64,
    /// Mean cycles one sample spends in the pipeline.
    pub latency_cycles: f64,
    /// Mean cycles of the slowest layer; the pipeline's steady-state interval.
    pub bottleneck_cycles: f64,
    pub steady_state_samples_per_s: f64,
    pub samples_per_s: f64,
    pub energy: EnergyBreakdown,
    pub energy_j: f64,
    pub edp_js: f64,
    pub ops_per_sample: u64,
    pub gops: f64,
    pub gops_per_mm2: f64,
    pub gops_per_w: f64,
    pub area: AreaBreakdown,
    pub chip_power_w: f64,
    pub reported_chip_power_table_w: f64,
    pub reported_chip_power_text_w: f64,
    pub memory_bytes: usize,
    pub counter_saturations: u64,
    pub accumulator_saturations: u64,
    pub error_rate: Option<f64>,
    pub layers: Vec<LayerReport>,
}

/// Report plus the scores the simulated hardware produced.
#[derive(Debug, Clone)]
pub struct SimResult {
    pub report: SimReport,
    pub scores: Tensor,
}

#[derive(Debug, Clone, Default)]
struct StageSample {
    max_neuron: u64,
    max_counting: u64,
    max_adder: u64,
    counting_sum: u64,
    adder_sum: u64,
    neurons: u64,
    windows: u64,
}

struct SimTracer<'a> {
    cost: &'a RnaCostModel,
    /// Shift terms needed for each counter value.
    terms: Vec<u8>,
    stages: Vec<StageSample>,
    counter_saturations: u64,
    accumulator_saturations: u64,
}

impl Tracer for SimTracer<'_> {
    fn neuron(&mut self, stage: usize, counts: &CountVector) {
        let counting = counting_cycles(counts);
        let max = self.cost.counter_max();
        let mut k_terms = 0u64;
        for &c in counts.as_slice().iter().filter(|&&c| c > 0) {
            if c > max {
                self.counter_saturations += 1;
            }
            k_terms += u64::from(self.terms[c.min(max) as usize]);
        }
        let adder = adder_tree_cycles_with(k_terms, self.cost.word_bits, self.cost.adder_stage_cycles);
        let s = &mut self.stages[stage];
        s.max_neuron = s.max_neuron.max(counting + adder);
        s.max_counting = s.max_counting.max(counting);
        s.max_adder = s.max_adder.max(adder);
        s.counting_sum += counting;
        s.adder_sum += adder;
        s.neurons += 1;
    }

    fn pool(&mut self, stage: usize, _window: usize) {
        self.stages[stage].windows += 1;
    }

    fn saturation(&mut self, _stage: usize) {
        self.accumulator_saturations += 1;
    }
}

/// Tiles and reuse rounds for each stage.
fn allocate(neurons: &[usize], cost: &RnaCostModel, opts: SimOptions) -> Result<Vec<(usize, usize)>> {
    let per = cost.rnas_per_tile;
    let needed: Vec<usize> = neurons.iter().map(|n| n.div_ceil(per).max(1)).collect();
    let total: usize = needed.iter().sum();
    if total <= cost.tiles {
        return Ok(needed.into_iter().map(|t| (t, 1)).collect());
    }
    if !opts.allow_sharing || neurons.len() > cost.tiles {
        return Err(Error::Capacity {
            needed: total,
            available: cost.tiles,
        });
    }
    Ok(needed
        .iter()
        .zip(neurons)
        .map(|(&t, &n)| {
            let tiles = (cost.tiles * t / total).max(1);
            (tiles, n.div_ceil(tiles * per))
        })
        .collect())
}

/// Simulates `workload` on the accelerator described by `cost`.
pub fn simulate(rm: &ReinterpretedModel, workload: &Dataset, cost: &RnaCostModel, opts: SimOptions) -> Result<SimResult> {
    cost.validate()?;
    let model = LutModel::new(rm)?;
    if workload.is_empty() {
        return Err(Error::InvalidDataset("empty workload".into()));
    }
    let n_stages = rm.stages.len();
    let neurons: Vec<usize> = rm.stages.iter().map(|s| s.spec.out_len()).collect();
    let alloc = allocate(&neurons, cost, opts)?;
    let cam = cost.cam_cycles();
    let ns = cost.cycle_ns();
    let pj = 1e-12;

    let mut tracer = SimTracer {
        cost,
        terms: (0..=cost.counter_max()).map(|c| shift_decompose(c as u16).len() as u8).collect(),
        stages: vec![StageSample::default(); n_stages],
        counter_saturations: 0,
        accumulator_saturations: 0,
    };
    // Completion cycle of the previous sample in each pipeline step (input encoding first).
    let mut done = vec![0u64; n_stages + 1];
    let mut sum_cycles = vec![0u64; n_stages + 1];
    let mut max_cycles = vec![0u64; n_stages + 1];
    let mut max_counting = vec![0u64; n_stages];
    let mut max_adder = vec![0u64; n_stages];
    let mut energy = vec![EnergyBreakdown::default(); n_stages + 1];
    let mut scores = Vec::with_capacity(workload.len() * rm.num_outputs());
    let mut wrong = 0usize;
    let input_len = model.input_len();

    for i in 0..workload.len() {
        for s in tracer.stages.iter_mut() {
            *s = StageSample::default();
        }
        let out = model.forward(workload.samples.item(i), Some(&mut tracer))?;
        if predicted_class(&out.scores) != workload.labels[i] {
            wrong += 1;
        }
        scores.extend_from_slice(&out.scores);

        // Input encoding: one parallel round of encoder searches.
        let mut cycles = vec![cam; n_stages + 1];
        energy[0].encoding_pooling_j += input_len as f64 * cost.encoder_power_mw * cost.cam_search_ns * pj;
        for (si, st) in rm.stages.iter().enumerate() {
            let sample = &tracer.stages[si];
            let (tiles, rounds) = alloc[si];
            let e = &mut energy[si + 1];
            let c = if st.passes_codes() {
                let window = st.spec.pool_window();
                let pc = pooling_cost(window, cost)?;
                e.encoding_pooling_j += sample.windows as f64 * pc.energy_fj * 1e-15;
                rounds as u64 * (pc.latency_ns * cost.clock_ghz - 1e-9).ceil().max(0.0) as u64
            } else {
                let searches = u64::from(st.activation.is_some()) + u64::from(st.encoding.is_some());
                let accum = (cost.counter_power_mw * sample.counting_sum as f64 + cost.crossbar_power_mw * sample.adder_sum as f64) * ns * pj;
                if st.spec.kind == LayerKind::Pooling {
                    e.encoding_pooling_j += accum;
                } else {
                    e.accumulation_j += accum;
                }
                if st.activation.is_some() {
                    e.activation_j += sample.neurons as f64 * cost.activation_power_mw * cost.cam_search_ns * pj;
                }
                if st.encoding.is_some() {
                    e.encoding_pooling_j += sample.neurons as f64 * cost.encoder_power_mw * cost.cam_search_ns * pj;
                }
                max_counting[si] = max_counting[si].max(sample.max_counting);
                max_adder[si] = max_adder[si].max(sample.max_adder);
                rounds as u64 * (sample.max_neuron + searches * cam)
            };
            cycles[si + 1] = c;
            e.other_j += cost.buffer_power_mw * tiles as f64 * c as f64 * ns * pj;
        }
        energy[0].other_j += cost.buffer_power_mw * cycles[0] as f64 * ns * pj;

        let mut prev_stage_done = 0;
        for (l, &c) in cycles.iter().enumerate() {
            done[l] = done[l].max(prev_stage_done) + c;
            prev_stage_done = done[l];
            sum_cycles[l] += c;
            max_cycles[l] = max_cycles[l].max(c);
        }
    }

    let samples = workload.len();
    let total_cycles = done[n_stages];
    let wall_time_s = total_cycles as f64 * ns * 1e-9;
    let mut total = EnergyBreakdown::default();
    for e in &energy {
        total.accumulation_j += e.accumulation_j;
        total.activation_j += e.activation_j;
        total.encoding_pooling_j += e.encoding_pooling_j;
        total.other_j += e.other_j;
    }
    let energy_j = total.total();
    let mean = |l: usize| sum_cycles[l] as f64 / samples as f64;
    let bottleneck_cycles = (0..=n_stages).map(mean).fold(0.0, f64::max);
    let latency_cycles = (0..=n_stages).map(mean).sum();
    let ops_per_sample: u64 = rm
        .stages
        .iter()
        .filter(|s| !s.passes_codes())
        .map(|s| 2 * (s.spec.out_len() * s.spec.fan_in()) as u64)
        .sum();
    let samples_per_s = samples as f64 / wall_time_s;
    let gops = ops_per_sample as f64 * samples_per_s * 1e-9;
    let area = cost.area_breakdown();
    let layers = std::iter::once(LayerReport {
        layer: 0,
        kind: "input encoding".into(),
        neurons: input_len,
        tiles: 1,
        rounds: 1,
        mean_cycles: mean(0),
        max_cycles: max_cycles[0],
        max_counting_cycles: 0,
        max_adder_cycles: 0,
        energy: energy[0],
    })
    .chain(rm.stages.iter().enumerate().map(|(si, st)| LayerReport {
        layer: si + 1,
        kind: stage_kind(st.spec.kind, st.spec.pool_mode),
        neurons: neurons[si],
        tiles: alloc[si].0,
        rounds: alloc[si].1,
        mean_cycles: mean(si + 1),
        max_cycles: max_cycles[si + 1],
        max_counting_cycles: max_counting[si],
        max_adder_cycles: max_adder[si],
        energy: energy[si + 1],
    }))
    .collect();
    let report = SimReport {
        samples,
        clock_ghz: cost.clock_ghz,
        total_cycles,
        wall_time_s,
        latency_cycles,
        bottleneck_cycles,
        steady_state_samples_per_s: cost.clock_ghz * 1e9 / bottleneck_cycles,
        samples_per_s,
        energy: total,
        energy_j,
        edp_js: energy_j * wall_time_s,
        ops_per_sample,
        gops,
        gops_per_mm2: gops / area.total_mm2,
        gops_per_w: gops / (energy_j / wall_time_s),
        chip_power_w: cost.chip_power_w(),
        reported_chip_power_table_w: cost.reported_chip_power_table_w,
        reported_chip_power_text_w: cost.reported_chip_power_text_w,
        area,
        memory_bytes: report_memory(rm).total,
        counter_saturations: tracer.counter_saturations,
        accumulator_saturations: tracer.accumulator_saturations,
        error_rate: (workload.num_classes > 0).then(|| wrong as f64 / samples as f64),
        layers,
    };
    let width = rm.num_outputs();
    Ok(SimResult {
        report,
        scores: Tensor::new(vec![samples, width], scores)?,
    })
}

fn stage_kind(kind: LayerKind, pool: Option<PoolMode>) -> String {
    match (kind, pool) {
        (LayerKind::FullyConnected, _) => "dense".into(),
        (LayerKind::Convolution, _) => "convolution".into(),
        (LayerKind::Pooling, Some(PoolMode::Max)) => "max pool".into(),
        (LayerKind::Pooling, Some(PoolMode::Min)) => "min pool".into(),
        (LayerKind::Pooling, _) => "average pool".into(),
        (LayerKind::Input, _) => "input".into(),
    }
}

impl SimReport {
    /// `metric,value` rows, then one row per layer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let mut row = |k: &str, v: String| out.push_str(&format!("{k},{v}\n"));
        row("samples", self.samples.to_string());
        row("clock_ghz", format!("{:.3}", self.clock_ghz));
        row("total_cycles", self.total_cycles.to_string());
        row("wall_time_s", format!("{:.6e}", self.wall_time_s));
        row("latency_cycles", format!("{:.3}", self.latency_cycles));
        row("bottleneck_cycles", format!("{:.3}", self.bottleneck_cycles));
        row("steady_state_samples_per_s", format!("{:.6e}", self.steady_state_samples_per_s));
        row("energy_accumulation_j", format!("{:.6e}", self.energy.accumulation_j));
        row("energy_activation_j", format!("{:.6e}", self.energy.activation_j));
        row("energy_encoding_pooling_j", format!("{:.6e}", self.energy.encoding_pooling_j));
        row("energy_other_j", format!("{:.6e}", self.energy.other_j));
        row("energy_j", format!("{:.6e}", self.energy_j));
        row("edp_js", format!("{:.6e}", self.edp_js));
        row("ops_per_sample", self.ops_per_sample.to_string());
        row("gops", format!("{:.6}", self.gops));
        row("gops_per_mm2", format!("{:.6}", self.gops_per_mm2));
        row("gops_per_w", format!("{:.6}", self.gops_per_w));
        row("chip_area_mm2", format!("{:.4}", self.area.total_mm2));
        row("chip_power_w", format!("{:.4}", self.chip_power_w));
        row("memory_bytes", self.memory_bytes.to_string());
        row("counter_saturations", self.counter_saturations.to_string());
        row("accumulator_saturations", self.accumulator_saturations.to_string());
        if let Some(e) = self.error_rate {
            row("error_rate", format!("{e:.6}"));
        }
        out.push_str("\nlayer,kind,neurons,tiles,rounds,mean_cycles,max_cycles,max_counting_cycles,max_adder_cycles,energy_j\n");
        for l in &self.layers {
            out.push_str(&format!(
                "{},{},{},{},{},{:.3},{},{},{},{:.6e}\n",
                l.layer,
                l.kind,
                l.neurons,
                l.tiles,
                l.rounds,
                l.mean_cycles,
                l.max_cycles,
                l.max_counting_cycles,
                l.max_adder_cycles,
                l.energy.total()
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let e = &self.energy;
        let pct = |v: f64| 100.0 * v / self.energy_j;
        let mut s = format!(
            "samples            {}\n\
             clock              {:.2} GHz\n\
             total cycles       {}\n\
             wall time          {:.3e} s\n\
             latency / sample   {:.1} cycles\n\
             bottleneck layer   {:.1} cycles ({:.3e} samples/s steady state)\n\
             energy             {:.3e} J\n\
             \x20 accumulation     {:.3e} J ({:.1}%)\n\
             \x20 activation       {:.3e} J ({:.1}%)\n\
             \x20 encoding/pooling {:.3e} J ({:.1}%)\n\
             \x20 other            {:.3e} J ({:.1}%)\n\
             EDP                {:.3e} J*s\n\
             throughput         {:.3} GOP/s, {:.3} GOP/s/mm2, {:.3} GOP/s/W\n\
             chip area          {:.2} mm2\n\
             chip power         {:.1} W composed (published: {:.1} W table, {:.1} W text)\n\
             memory             {} bytes\n",
            self.samples,
            self.clock_ghz,
            self.total_cycles,
            self.wall_time_s,
            self.latency_cycles,
            self.bottleneck_cycles,
            self.steady_state_samples_per_s,
            self.energy_j,
            e.accumulation_j,
            pct(e.accumulation_j),
            e.activation_j,
            pct(e.activation_j),
            e.encoding_pooling_j,
            pct(e.encoding_pooling_j),
            e.other_j,
            pct(e.other_j),
            self.edp_js,
            self.gops,
            self.gops_per_mm2,
            self.gops_per_w,
            self.area.total_mm2,
            self.chip_power_w,
            self.reported_chip_power_table_w,
            self.reported_chip_power_text_w,
            self.memory_bytes,
        );
        if let Some(err) = self.error_rate {
            s.push_str(&format!("error rate         {:.4}\n", err));
        }
        if self.counter_saturations + self.accumulator_saturations > 0 {
            s.push_str(&format!(
                "saturations        {} counter, {} accumulator\n",
                self.counter_saturations, self.accumulator_saturations
            ));
        }
        s.push_str("\nlayer  kind            neurons  tiles  rounds  mean cycles  max counting  max adder\n");
        for l in &self.layers {
            s.push_str(&format!(
                "{:>5}  {:<14}  {:>7}  {:>5}  {:>6}  {:>11.1}  {:>12}  {:>9}\n",
                l.layer, l.kind, l.neurons, l.tiles, l.rounds, l.mean_cycles, l.max_counting_cycles, l.max_adder_cycles
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composer::{compose, ComposeConfig};
    use crate::nn::{build_topology, dataset, Network, Split};

    fn toy(topology: &[&str]) -> (ReinterpretedModel, Dataset) {
        let data = dataset::cifar_like(200, 20, 20, 3);
        let layers = build_topology(vec![3, 8, 8], &topology.iter().map(|s| s.to_string()).collect::<Vec<_>>()).unwrap();
        let net = Network::new(layers, 5).unwrap();
        let cfg = ComposeConfig {
            w: 8,
            u: 8,
            q: 16,
            retrain_epochs: 0,
            sample_fraction: 0.5,
            ..Default::default()
        };
        (compose(&net, &data, &cfg).unwrap(), data)
    }

    #[test]
    fn scores_match_the_lookup_path() {
        let (rm, data) = toy(&["conv:4:3:relu", "pool:max:2", "fc:6:sigmoid", "fc:10:softmax"]);
        let work = data.subset(Split::Test);
        let r = simulate(&rm, &work, &RnaCostModel::default(), SimOptions::default()).unwrap();
        let expected = LutModel::new(&rm).unwrap().predict(&work.samples).unwrap();
        let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&r.scores), bits(&expected));
        assert_eq!(r.report.layers.len(), rm.stages.len() + 1);
        assert_eq!(r.report.layers[2].kind, "max pool");
    }

    #[test]
    fn pipeline_of_identical_samples() {
        let (rm, data) = toy(&["fc:12:relu", "fc:10:softmax"]);
        let one = data.select(&[0]);
        let cost = RnaCostModel::default();
        let single = simulate(&rm, &one, &cost, SimOptions::default()).unwrap().report;
        assert_eq!(single.total_cycles as f64, single.latency_cycles);

        let five = data.select(&[0; 5]);
        let r = simulate(&rm, &five, &cost, SimOptions::default()).unwrap().report;
        let expected = single.latency_cycles + 4.0 * single.bottleneck_cycles;
        assert_eq!(r.total_cycles as f64, expected);
        assert!((r.energy_j - 5.0 * single.energy_j).abs() < 1e-9 * r.energy_j);
        assert!((r.edp_js - r.energy_j * r.wall_time_s).abs() <= 1e-15 * r.edp_js.abs().max(1.0));
    }

    #[test]
    fn layer_latency_adds_searches_to_the_slowest_neuron() {
        let (rm, data) = toy(&["fc:12:relu", "fc:10:softmax"]);
        let r = simulate(&rm, &data.select(&[1]), &RnaCostModel::default(), SimOptions::default()).unwrap().report;
        let hidden = &r.layers[1];
        // Activation and encoding searches take one cycle each at 1 GHz.
        assert!(hidden.max_cycles >= hidden.max_counting_cycles + hidden.max_adder_cycles + 2);
        assert_eq!(r.layers[0].max_cycles, 1);
        assert_eq!(r.ops_per_sample, 2 * (192 * 12 + 12 * 10));
    }

    #[test]
    fn capacity_and_sharing() {
        let (rm, data) = toy(&["fc:8:relu", "fc:10:softmax"]);
        let cost = RnaCostModel {
            rnas_per_tile: 2,
            tiles: 6,
            ..Default::default()
        };
        let work = data.select(&[0, 1]);
        let err = simulate(&rm, &work, &cost, SimOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Capacity { needed: 9, available: 6 }), "{err}");

        let shared = simulate(&rm, &work, &cost, SimOptions { allow_sharing: true }).unwrap().report;
        let alloc: Vec<(usize, usize)> = shared.layers[1..].iter().map(|l| (l.tiles, l.rounds)).collect();
        assert_eq!(alloc, vec![(2, 2), (3, 2)]);
        let roomy = simulate(&rm, &work, &RnaCostModel::default(), SimOptions::default()).unwrap().report;
        assert!(shared.bottleneck_cycles > roomy.bottleneck_cycles);
    }

    #[test]
    fn energy_splits_into_four_parts() {
        let (rm, data) = toy(&["conv:4:3:relu", "pool:avg:2", "fc:10:softmax"]);
        let r = simulate(&rm, &data.select(&[0, 1, 2]), &RnaCostModel::default(), SimOptions::default()).unwrap().report;
        let e = r.energy;
        assert!(e.accumulation_j > 0.0 && e.activation_j > 0.0 && e.encoding_pooling_j > 0.0 && e.other_j > 0.0);
        let per_layer: f64 = r.layers.iter().map(|l| l.energy.total()).sum();
        assert!((per_layer - r.energy_j).abs() < 1e-12 * r.energy_j);
        assert!(r.to_csv().starts_with("metric,value\n"));
        assert!(r.to_text().contains("accumulation"));
    }
}
