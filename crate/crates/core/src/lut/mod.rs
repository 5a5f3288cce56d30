//! Executes a reinterpreted model the way the accelerator does: encoded operands,
//! product-table fetches summed by occurrence count, table activation and re-encoding.

pub mod fixed;

use rayon::prelude::*;

use crate::composer::{Codebook, ReinterpretedModel};
use crate::error::{Error, Result};
use crate::nn::layers::{self, ConvGeometry, PoolGeometry};
use crate::nn::{predicted_class, Dataset, LayerKind, LayerSpec, PoolMode, Split};
use crate::tensor::Tensor;
pub use fixed::{from_fixed, to_fixed, FixedActivation, FixedCodebook, FixedTable};

/// An encoded value: index into a codebook of `2^level` entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Code {
    pub bits: u32,
    pub level: u32,
}

pub fn encode(value: f64, codebook: &Codebook) -> Code {
    Code {
        bits: codebook.encode(value),
        level: codebook.bits(),
    }
}

/// Occurrences of each product-table cell among one neuron's edges.
#[derive(Debug, Clone, PartialEq)]
pub struct CountVector {
    pub rows: usize,
    pub cols: usize,
    counts: Vec<u32>,
}

impl CountVector {
    pub fn new(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            counts: vec![0; rows * cols],
        }
    }

    pub fn clear(&mut self) {
        self.counts.fill(0);
    }

    #[inline]
    pub fn add(&mut self, i: usize, j: usize) {
        self.counts[i * self.cols + j] += 1;
    }

    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.counts[i * self.cols + j]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Edges per weight code, i.e. the occupancy of each weight buffer.
    pub fn row_sums(&self) -> Vec<u32> {
        self.counts.chunks(self.cols).map(|r| r.iter().sum()).collect()
    }

    /// `Σ counts[i][j] · table[i][j]` at table scale.
    pub fn weighted_sum(&self, table: &FixedTable) -> i64 {
        self.counts
            .iter()
            .zip(&table.values)
            .map(|(&c, &t)| i64::from(c) * i64::from(t))
            .sum()
    }
}

/// Result of one neuron: fixed-point `Y`, `Z` and the re-encoded output code.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronOutput {
    pub y: i32,
    pub z: i32,
    pub code: u16,
    pub counts: CountVector,
    pub saturated: bool,
}

/// Computes one neuron from encoded operands.
///
/// `Y = Σ counts[i][j] · table[i][j] + bias`, `Z = activation(Y)`, then `Z` is re-encoded.
pub fn neuron_forward(
    inputs: &[u16],
    weights: &[u16],
    table: &FixedTable,
    bias: f64,
    activation: &FixedActivation,
    encoding: &FixedCodebook,
    frac_bits: u32,
) -> Result<NeuronOutput> {
    if inputs.len() != weights.len() {
        return Err(Error::ShapeMismatch {
            expected: vec![weights.len()],
            actual: vec![inputs.len()],
        });
    }
    if let Some(&c) = weights.iter().find(|&&c| usize::from(c) >= table.rows) {
        return Err(Error::CodeOutOfRange {
            code: u32::from(c),
            size: table.rows,
        });
    }
    if let Some(&c) = inputs.iter().find(|&&c| usize::from(c) >= table.cols) {
        return Err(Error::CodeOutOfRange {
            code: u32::from(c),
            size: table.cols,
        });
    }
    let mut counts = CountVector::new(table.rows, table.cols);
    for (&w, &x) in weights.iter().zip(inputs) {
        counts.add(usize::from(w), usize::from(x));
    }
    let (y, saturated) = table.to_y(counts.weighted_sum(table) + table.bias(bias), frac_bits);
    if saturated {
        log::warn!("fixed-point accumulator saturated");
    }
    let z = activation.eval(y);
    Ok(NeuronOutput {
        y,
        z,
        code: encoding.encode(z),
        counts,
        saturated,
    })
}

/// Pools codes of one codebook. Max and min compare codes as unsigned integers; average
/// pooling is not a code operation and goes through a normalized product table instead.
pub fn pool_encoded(codes: &[Code], mode: PoolMode) -> Result<Code> {
    let first = *codes.first().ok_or_else(|| Error::InvalidConfig("empty pooling window".into()))?;
    if codes.iter().any(|c| c.level != first.level) {
        return Err(Error::MixedCodebooks);
    }
    match mode {
        PoolMode::Max => Ok(*codes.iter().max_by_key(|c| c.bits).unwrap()),
        PoolMode::Min => Ok(*codes.iter().min_by_key(|c| c.bits).unwrap()),
        PoolMode::Avg => Err(Error::InvalidConfig(
            "average pooling is computed by accumulation over a normalized table".into(),
        )),
    }
}

/// Observer of the functional path, used by the simulator for cost accounting.
pub trait Tracer {
    /// Called once per accumulating neuron with its count vector.
    fn neuron(&mut self, _stage: usize, _counts: &CountVector) {}
    /// Called once per max/min pooling window.
    fn pool(&mut self, _stage: usize, _window: usize) {}
    /// Called when `Y` saturated.
    fn saturation(&mut self, _stage: usize) {}
}

enum Op {
    Dense,
    Conv(ConvGeometry),
    PoolCodes(PoolGeometry, PoolMode),
    PoolAvg(PoolGeometry),
}

struct FixedStage {
    spec: LayerSpec,
    op: Op,
    tables: Vec<FixedTable>,
    codes: Vec<u16>,
    /// Bias per output group at the scale of that group's table.
    bias: Vec<i64>,
    activation: Option<FixedActivation>,
    encoding: Option<FixedCodebook>,
}

/// A reinterpreted model prepared for fixed-point execution.
pub struct LutModel {
    input: Codebook,
    input_len: usize,
    frac_bits: u32,
    stages: Vec<FixedStage>,
}

/// Scores plus the number of saturated accumulations.
#[derive(Debug, Clone, PartialEq)]
pub struct LutOutput {
    pub scores: Vec<f64>,
    pub saturations: usize,
}

impl LutModel {
    pub fn new(rm: &ReinterpretedModel) -> Result<Self> {
        rm.validate()?;
        let fb = rm.params.frac_bits;
        let stages = rm
            .stages
            .iter()
            .map(|s| {
                let op = match s.spec.kind {
                    LayerKind::FullyConnected => Op::Dense,
                    LayerKind::Convolution => Op::Conv(s.spec.conv_geometry()),
                    LayerKind::Pooling => match s.spec.pool_mode.unwrap() {
                        PoolMode::Avg => Op::PoolAvg(s.spec.pool_geometry()),
                        mode => Op::PoolCodes(s.spec.pool_geometry(), mode),
                    },
                    LayerKind::Input => unreachable!("validated"),
                };
                let (tables, codes, bias) = match &s.weights {
                    Some(wc) => {
                        let tables: Vec<FixedTable> = wc.tables.iter().map(FixedTable::new).collect();
                        let bias = match s.spec.kind {
                            LayerKind::FullyConnected => wc.bias.iter().map(|&b| tables[0].bias(b)).collect(),
                            _ => wc.bias.iter().zip(&tables).map(|(&b, t)| t.bias(b)).collect(),
                        };
                        (tables, wc.codes.clone(), bias)
                    }
                    None => (vec![], vec![], vec![]),
                };
                FixedStage {
                    spec: s.spec.clone(),
                    op,
                    tables,
                    codes,
                    bias,
                    activation: s.activation.as_ref().map(|a| FixedActivation::new(a, fb)),
                    encoding: s.encoding.as_ref().map(|e| FixedCodebook::new(e, fb)),
                }
            })
            .collect();
        Ok(Self {
            input: rm.virtual_layer().clone(),
            input_len: rm.input_dims.iter().product(),
            frac_bits: fb,
            stages,
        })
    }

    pub fn input_len(&self) -> usize {
        self.input_len
    }

    /// Runs one raw input through the model. With a tracer, accumulation goes through
    /// explicit count vectors; the result is identical either way.
    pub fn forward(&self, raw: &[f64], mut tracer: Option<&mut dyn Tracer>) -> Result<LutOutput> {
        if raw.len() != self.input_len {
            return Err(Error::ShapeMismatch {
                expected: vec![self.input_len],
                actual: vec![raw.len()],
            });
        }
        // Virtual layer: encode the raw input.
        let mut codes: Vec<u16> = raw.iter().map(|&v| self.input.encode(v) as u16).collect();
        let mut saturations = 0;
        let last = self.stages.len() - 1;
        let mut counts = CountVector::new(0, 0);
        for (si, st) in self.stages.iter().enumerate() {
            let mut ys: Vec<i32> = Vec::with_capacity(st.spec.out_len());
            match &st.op {
                Op::PoolCodes(g, mode) => {
                    let next = (0..g.out_len())
                        .map(|o| {
                            let window = g.window_offsets(o).map(|k| codes[k]);
                            if let Some(t) = tracer.as_deref_mut() {
                                t.pool(si, g.window * g.window);
                            }
                            match mode {
                                PoolMode::Max => window.max().unwrap(),
                                _ => window.min().unwrap(),
                            }
                        })
                        .collect();
                    codes = next;
                    continue;
                }
                Op::Dense => {
                    let fan_in = st.spec.in_len();
                    let t = &st.tables[0];
                    for o in 0..st.spec.out_len() {
                        let w = &st.codes[o * fan_in..(o + 1) * fan_in];
                        let acc = match tracer.as_deref_mut() {
                            Some(tr) => {
                                reset(&mut counts, t);
                                for (&wi, &xi) in w.iter().zip(&codes) {
                                    counts.add(usize::from(wi), usize::from(xi));
                                }
                                tr.neuron(si, &counts);
                                counts.weighted_sum(t)
                            }
                            None => w
                                .iter()
                                .zip(&codes)
                                .map(|(&wi, &xi)| i64::from(t.get(usize::from(wi), usize::from(xi))))
                                .sum(),
                        };
                        ys.push(self.finish(t, acc + st.bias[o], si, &mut saturations, &mut tracer));
                    }
                }
                Op::Conv(g) => {
                    let fan = g.fan_in();
                    for m in 0..g.out_channels {
                        let t = &st.tables[m];
                        let w = &st.codes[m * fan..(m + 1) * fan];
                        for oy in 0..g.out_h() {
                            for ox in 0..g.out_w() {
                                let mut acc = 0i64;
                                match tracer.as_deref_mut() {
                                    Some(tr) => {
                                        reset(&mut counts, t);
                                        g.for_each_edge(oy, ox, |wo, io| counts.add(usize::from(w[wo]), usize::from(codes[io])));
                                        tr.neuron(si, &counts);
                                        acc = counts.weighted_sum(t);
                                    }
                                    None => g.for_each_edge(oy, ox, |wo, io| {
                                        acc += i64::from(t.get(usize::from(w[wo]), usize::from(codes[io])));
                                    }),
                                }
                                ys.push(self.finish(t, acc + st.bias[m], si, &mut saturations, &mut tracer));
                            }
                        }
                    }
                }
                Op::PoolAvg(g) => {
                    let t = &st.tables[0];
                    for o in 0..g.out_len() {
                        let acc = match tracer.as_deref_mut() {
                            Some(tr) => {
                                reset(&mut counts, t);
                                for k in g.window_offsets(o) {
                                    counts.add(0, usize::from(codes[k]));
                                }
                                tr.neuron(si, &counts);
                                counts.weighted_sum(t)
                            }
                            None => g.window_offsets(o).map(|k| i64::from(t.get(0, usize::from(codes[k])))).sum(),
                        };
                        ys.push(self.finish(t, acc, si, &mut saturations, &mut tracer));
                    }
                }
            }
            if si == last {
                let y: Vec<f64> = ys.iter().map(|&v| from_fixed(v, self.frac_bits)).collect();
                let scores = layers::apply_activation(st.spec.activation, &y, y.len());
                return Ok(LutOutput { scores, saturations });
            }
            let enc = st.encoding.as_ref().expect("hidden stage re-encodes");
            codes = match &st.activation {
                Some(act) => ys.iter().map(|&y| enc.encode(act.eval(y))).collect(),
                None => ys.iter().map(|&y| enc.encode(y)).collect(),
            };
        }
        unreachable!("validated model ends with an accumulating stage")
    }

    fn finish(&self, t: &FixedTable, acc: i64, stage: usize, saturations: &mut usize, tracer: &mut Option<&mut dyn Tracer>) -> i32 {
        let (y, sat) = t.to_y(acc, self.frac_bits);
        if sat {
            *saturations += 1;
            log::debug!("stage {stage}: accumulator saturated");
            if let Some(tr) = tracer.as_deref_mut() {
                tr.saturation(stage);
            }
        }
        y
    }

    /// Scores for every item of `batch`, computed in parallel.
    pub fn predict(&self, batch: &Tensor) -> Result<Tensor> {
        if batch.shape().len() < 2 || batch.item_len() != self.input_len {
            return Err(Error::ShapeMismatch {
                expected: vec![batch.batch_len(), self.input_len],
                actual: batch.shape().to_vec(),
            });
        }
        let outs: Vec<LutOutput> = (0..batch.batch_len())
            .into_par_iter()
            .map(|i| self.forward(batch.item(i), None))
            .collect::<Result<_>>()?;
        let saturations: usize = outs.iter().map(|o| o.saturations).sum();
        if saturations > 0 {
            log::warn!("{saturations} fixed-point accumulations saturated");
        }
        let width = outs.first().map_or(0, |o| o.scores.len());
        let data = outs.into_iter().flat_map(|o| o.scores).collect();
        Ok(Tensor::from_parts(vec![batch.batch_len(), width], data))
    }

    /// Classification error on one split.
    pub fn error(&self, data: &Dataset, split: Split) -> Result<f64> {
        let idx = data.indices_of(split);
        if idx.is_empty() {
            return Err(Error::InvalidDataset(format!("no samples in the {split:?} split")));
        }
        let scores = self.predict(&data.samples.select(&idx))?;
        let wrong = idx
            .iter()
            .enumerate()
            .filter(|&(r, &i)| predicted_class(scores.item(r)) != data.labels[i])
            .count();
        Ok(wrong as f64 / idx.len() as f64)
    }
}

fn reset(counts: &mut CountVector, t: &FixedTable) {
    if counts.rows != t.rows || counts.cols != t.cols {
        *counts = CountVector::new(t.rows, t.cols);
    } else {
        counts.clear();
    }
}

/// Scores of one raw input.
pub fn model_forward(rm: &ReinterpretedModel, raw: &[f64]) -> Result<Vec<f64>> {
    Ok(LutModel::new(rm)?.forward(raw, None)?.scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composer::{compose, snapped_forward, ActivationStage, ComposeConfig, ProductTable};
    use crate::nn::{build_topology, dataset, Network};

    fn toy_neuron() -> (FixedTable, FixedActivation, FixedCodebook) {
        let weights = Codebook::new(vec![-1.0, 0.5]).unwrap();
        let inputs = Codebook::new(vec![0.0, 1.0, 2.0]).unwrap();
        let table = FixedTable::new(&ProductTable::build(&weights, &inputs));
        let enc = FixedCodebook::new(&Codebook::new(vec![0.0, 0.5, 1.0]).unwrap(), 16);
        (table, FixedActivation::new(&ActivationStage::Comparator, 16), enc)
    }

    #[test]
    fn neuron_sums_table_entries_by_count() {
        let (table, act, enc) = toy_neuron();
        // x = [2, 2, 1, 0], w = [-1, 0.5, 0.5, -1]: y = -2 + 1 + 0.5 + 0 + 0.25 = -0.25
        let out = neuron_forward(&[2, 2, 1, 0], &[0, 1, 1, 0], &table, 0.25, &act, &enc, 16).unwrap();
        assert_eq!(out.y, -(1 << 14));
        assert_eq!(out.z, 0);
        assert_eq!(out.code, 0);
        assert_eq!(out.counts.get(0, 2), 1);
        assert_eq!(out.counts.get(1, 2), 1);
        assert_eq!(out.counts.get(1, 1), 1);
        assert_eq!(out.counts.get(0, 0), 1);
        assert_eq!(out.counts.total(), 4);
        assert_eq!(out.counts.row_sums(), vec![2, 2]);

        let out = neuron_forward(&[2, 2, 2], &[1, 1, 1], &table, -2.25, &act, &enc, 16).unwrap();
        assert_eq!(from_fixed(out.y, 16), 0.75);
        assert_eq!(out.code, 1);
        assert!(!out.saturated);
    }

    #[test]
    fn neuron_rejects_bad_operands() {
        let (table, act, enc) = toy_neuron();
        assert!(matches!(
            neuron_forward(&[0, 1], &[0], &table, 0.0, &act, &enc, 16),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(matches!(
            neuron_forward(&[0], &[2], &table, 0.0, &act, &enc, 16),
            Err(Error::CodeOutOfRange { code: 2, size: 2 })
        ));
        assert!(matches!(
            neuron_forward(&[3], &[0], &table, 0.0, &act, &enc, 16),
            Err(Error::CodeOutOfRange { code: 3, size: 3 })
        ));
    }

    #[test]
    fn max_and_min_of_codes_follow_the_values() {
        let cb = Codebook::new((0..64).map(|i| (i as f64 - 20.0).powi(3) / 7.0).collect()).unwrap();
        let values: Vec<f64> = cb.centroids().to_vec();
        let code = |i: usize| encode(values[i], &cb);
        let mut checked = 0;
        for a in 0..64 {
            for b in a + 1..64 {
                for c in b + 1..64 {
                    for d in c + 1..64 {
                        let window = [code(c), code(a), code(d), code(b)];
                        let max = pool_encoded(&window, PoolMode::Max).unwrap();
                        let min = pool_encoded(&window, PoolMode::Min).unwrap();
                        assert_eq!(cb.decode(max.bits), values[d]);
                        assert_eq!(cb.decode(min.bits), values[a]);
                        checked += 1;
                    }
                }
            }
        }
        assert_eq!(checked, 635_376);
    }

    #[test]
    fn pooling_rejects_mixed_and_average() {
        let a = Code { bits: 1, level: 4 };
        let b = Code { bits: 1, level: 5 };
        assert!(matches!(pool_encoded(&[a, b], PoolMode::Max), Err(Error::MixedCodebooks)));
        assert!(pool_encoded(&[a, a], PoolMode::Avg).is_err());
        assert!(pool_encoded(&[], PoolMode::Max).is_err());
    }

    #[derive(Default)]
    struct Counter {
        neurons: usize,
        edges: u64,
        windows: usize,
    }

    impl Tracer for Counter {
        fn neuron(&mut self, _stage: usize, counts: &CountVector) {
            self.neurons += 1;
            self.edges += counts.total();
        }
        fn pool(&mut self, _stage: usize, _window: usize) {
            self.windows += 1;
        }
    }

    #[test]
    fn traced_and_fast_paths_agree() {
        let data = dataset::cifar_like(100, 10, 10, 2);
        let topo = ["conv:3:3:sigmoid", "pool:max:2", "pool:avg:3", "fc:5:relu", "fc:10:softmax"].map(String::from);
        let net = Network::new(build_topology(vec![3, 8, 8], &topo).unwrap(), 4).unwrap();
        let cfg = ComposeConfig {
            w: 8,
            u: 4,
            q: 16,
            sample_fraction: 1.0,
            ..Default::default()
        };
        let rm = compose(&net, &data, &cfg).unwrap();
        let model = LutModel::new(&rm).unwrap();
        let oracle = snapped_forward(&rm, &data.samples).unwrap();
        for i in 0..data.len() {
            let mut t = Counter::default();
            let traced = model.forward(data.samples.item(i), Some(&mut t)).unwrap();
            let fast = model.forward(data.samples.item(i), None).unwrap();
            assert_eq!(traced, fast);
            assert_eq!(predicted_class(&fast.scores), predicted_class(oracle.item(i)));
            // conv 3x6x6, avg pool 3x1x1, dense 5 and 10; 3x3x3 max-pooling windows.
            assert_eq!(t.neurons, 108 + 3 + 5 + 10);
            assert_eq!(t.edges, 108 * 27 + 3 * 9 + 5 * 3 + 10 * 5);
            assert_eq!(t.windows, 27);
        }
    }

    #[test]
    fn lossless_codebooks_reproduce_the_float_network() {
        let data = dataset::xor();
        let mut net = Network::new(build_topology(vec![2], &["fc:3:softmax".to_string()]).unwrap(), 0).unwrap();
        net.weights[1] = Some(Tensor::new(vec![3, 2], vec![0.5, -0.25, -0.25, 0.5, 0.5, 0.5]).unwrap());
        net.biases[1] = Some(Tensor::new(vec![3], vec![0.125, -0.375, 0.0]).unwrap());
        let cfg = ComposeConfig {
            w: 2,
            u: 2,
            sample_fraction: 1.0,
            ..Default::default()
        };
        let rm = compose(&net, &data, &cfg).unwrap();
        let lut = LutModel::new(&rm).unwrap().predict(&data.samples).unwrap();
        let float = crate::nn::predict(&net, &data.samples).unwrap();
        assert_eq!(lut.data(), float.data());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn codebook(max: usize) -> impl Strategy<Value = Codebook> {
            prop::collection::btree_set(-2000i32..2000, 1..max)
                .prop_map(|s| Codebook::new(s.into_iter().map(|v| f64::from(v) / 1000.0).collect()).unwrap())
        }

        proptest! {
            #[test]
            fn fixed_sum_within_one_ulp_of_float(
                wc in codebook(16),
                xc in codebook(16),
                pairs in prop::collection::vec((0usize..16, 0usize..16), 1..200),
                bias in -3.0f64..3.0,
            ) {
                let float = ProductTable::build(&wc, &xc);
                let table = FixedTable::new(&float);
                let (ws, xs): (Vec<u16>, Vec<u16>) =
                    pairs.iter().map(|&(w, x)| ((w % wc.len()) as u16, (x % xc.len()) as u16)).unzip();
                let enc = FixedCodebook::new(&xc, 16);
                let out = neuron_forward(&xs, &ws, &table, bias, &FixedActivation::Comparator, &enc, 16).unwrap();
                let exact: f64 = ws.iter().zip(&xs).map(|(&w, &x)| float.get(w.into(), x.into())).sum::<f64>() + bias;
                prop_assert!(!out.saturated);
                prop_assert!((from_fixed(out.y, 16) - exact).abs() <= 1.0 / 65536.0, "{} vs {exact}", from_fixed(out.y, 16));
            }
        }
    }
}
