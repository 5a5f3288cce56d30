//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! The MNIST criteria share one trained baseline. MNIST is read from `data/mnist` at the
//! workspace root (see `scripts/fetch_mnist.sh`).

use std::process::ExitCode;
use std::time::{Duration, Instant};

use lutnn::composer::{reinterpret, snapped_forward, ComposeConfig, ReinterpretedModel};
use lutnn::lut::LutModel;
use lutnn::nn::{self, build_topology, dataset, Dataset, DatasetFormat, Network, Split, TrainConfig};
use lutnn::sim::{
    adder_tree_cycles, apply_terms, mismatch_rate, ndcam_search, shift_decompose, simulate, RnaCostModel, SearchMode, SimOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

struct Outcome {
    id: u32,
    title: &'static str,
    result: Check,
    elapsed: Duration,
}

fn run(id: u32, title: &'static str, f: impl FnOnce() -> Check) -> Outcome {
    let t = Instant::now();
    let result = f();
    let o = Outcome {
        id,
        title,
        result,
        elapsed: t.elapsed(),
    };
    print_line(&o);
    o
}

fn print_line(o: &Outcome) {
    let (tag, detail) = match &o.result {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    println!("{tag} criterion {}: {} [{:.1} s] {detail}", o.id, o.title, o.elapsed.as_secs_f64());
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: lutnn::Error) -> String {
    e.to_string()
}

fn shift_exhaustive() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let values: Vec<i64> = (0..1000).map(|_| rng.gen_range(-(1i64 << 40)..(1i64 << 40))).collect();
    let mut max_terms = 0;
    for c in 0..4096u16 {
        let terms = shift_decompose(c);
        max_terms = max_terms.max(terms.len());
        for &v in &values {
            let got = apply_terms(&terms, v);
            if got != i64::from(c) * v {
                return Err(format!("count {c}, value {v}: got {got}"));
            }
        }
    }
    Ok(format!("4096 x 1000 products exact, at most {max_terms} terms per count"))
}

fn ndcam() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for t in 0..20 {
        let rows: Vec<u64> = (0..64).map(|_| rng.gen_range(0..256)).collect();
        for q in 0..256u64 {
            let a = ndcam_search(q, &rows, 8, SearchMode::Oracle).map_err(err)?;
            let b = ndcam_search(q, &rows, 8, SearchMode::Staged).map_err(err)?;
            if a != b {
                return Err(format!("table {t}, query {q}: staged row {b} ({}) vs oracle row {a} ({})", rows[b], rows[a]));
            }
        }
    }
    // Informational: two and three 8-bit stages.
    let mut info = Vec::new();
    for bits in [16u32, 24] {
        let rows: Vec<u64> = (0..64).map(|_| rng.gen_range(0..1u64 << bits)).collect();
        let queries: Vec<u64> = (0..20_000).map(|_| rng.gen_range(0..1u64 << bits)).collect();
        let staged = mismatch_rate(&rows, bits, queries.iter().copied(), SearchMode::Staged).map_err(err)?;
        let score = mismatch_rate(&rows, bits, queries.iter().copied(), SearchMode::MatchScore).map_err(err)?;
        info.push(format!("{bits}-bit staged mismatch {:.2}%, bitwise-score mismatch {:.2}%", 100.0 * staged, 100.0 * score));
    }
    Ok(format!("20 tables x 256 queries identical; {}", info.join("; ")))
}

fn cost() -> Check {
    let c = RnaCostModel::default();
    let rna = c.rna_area_um2();
    let chip = c.chip_area_mm2();
    let rel = (chip - 124.1).abs() / 124.1;
    ensure(
        rna == 3841.0 && rel <= 1e-3,
        format!("RNA {rna} um2, chip {chip:.4} mm2 ({:.3}% off 124.1)", 100.0 * rel),
    )
}

fn adder() -> Check {
    let a = adder_tree_cycles(4096, 32);
    let b = adder_tree_cycles(2, 8);
    ensure(a == 689 && b == 130, format!("(4096, 32) -> {a}, (2, 8) -> {b}"))
}

struct Mnist {
    data: Dataset,
    net: Network,
}

fn load_mnist() -> Result<Dataset, String> {
    let dir = dataset::default_mnist_dir();
    dataset::load_dataset(&dir, DatasetFormat::Idx)
        .and_then(|d| d.with_validation_tail(5000))
        .map_err(|e| format!("{e} (run scripts/fetch_mnist.sh)"))
}

fn mlp_config() -> TrainConfig {
    TrainConfig {
        epochs: 15,
        lr_decay: 0.9,
        seed: 1,
        ..Default::default()
    }
}

fn baseline(data: &Dataset) -> Result<(Network, String), String> {
    let topo = ["fc:512:relu", "fc:512:relu", "fc:10:softmax"].map(String::from);
    let net = Network::new(build_topology(vec![784], &topo).map_err(err)?, 1).map_err(err)?;
    let t = Instant::now();
    let out = nn::train(&net, data, &mlp_config()).map_err(err)?;
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    let e = nn::train::evaluate_split(&out.network, data, Split::Test).map_err(err)?;
    let detail = format!("test error {:.2}% after 15 epochs in {minutes:.1} min", 100.0 * e);
    if e <= 0.025 && minutes <= 20.0 {
        Ok((out.network, detail))
    } else {
        Err(detail)
    }
}

fn quality(m: &Mnist) -> Result<(ReinterpretedModel, String), String> {
    let cfg = ComposeConfig {
        w: 64,
        u: 16,
        q: 64,
        epsilon: 0.005,
        max_iters: 5,
        ..Default::default()
    };
    let t = Instant::now();
    let (rm, report) = reinterpret(&m.net, &m.data, &cfg).map_err(err)?;
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    let best = report.best();
    let e_test = LutModel::new(&rm).and_then(|l| l.error(&m.data, Split::Test)).map_err(err)?;
    let base_test = nn::train::evaluate_split(&m.net, &m.data, Split::Test).map_err(err)?;
    let detail = format!(
        "validation delta_e {:+.2}% after {} iteration(s) in {minutes:.1} min; test error {:.2}% vs {:.2}% float; {} bytes",
        100.0 * best.delta_e,
        report.iterations.len(),
        100.0 * e_test,
        100.0 * base_test,
        report.memory_bytes
    );
    if report.converged && best.delta_e <= 0.005 && report.iterations.len() <= 5 && minutes <= 30.0 {
        Ok((rm, detail))
    } else {
        Err(detail)
    }
}

fn equivalence(m: &Mnist, rm: &ReinterpretedModel, share: &mut Option<f64>) -> Check {
    let idx: Vec<usize> = m.data.indices_of(Split::Test).into_iter().take(1000).collect();
    let work = m.data.select(&idx);
    let lut = LutModel::new(rm).and_then(|l| l.predict(&work.samples)).map_err(err)?;
    let sim = simulate(rm, &work, &RnaCostModel::default(), SimOptions::default()).map_err(err)?;
    *share = Some(sim.report.energy.accumulation_share());
    let differing = lut
        .data()
        .iter()
        .zip(sim.scores.data())
        .filter(|(a, b)| a.to_bits() != b.to_bits())
        .count();
    let oracle = snapped_forward(rm, &work.samples).map_err(err)?;
    let agree = lut
        .argmax_rows()
        .iter()
        .zip(oracle.argmax_rows())
        .filter(|(a, b)| **a == *b)
        .count();
    ensure(
        differing == 0 && agree == work.len(),
        format!(
            "{differing} differing score bits over {} samples; argmax agrees with the snapped oracle on {agree}/{}",
            work.len(),
            work.len()
        ),
    )
}

const GRID: [(usize, usize); 3] = [(4, 4), (16, 16), (64, 64)];

fn medians(net: &Network, data: &Dataset, sample_fraction: f64) -> Result<Vec<f64>, String> {
    GRID.iter()
        .map(|&(w, u)| {
            let mut d: Vec<f64> = (1..=3)
                .map(|seed| {
                    let cfg = ComposeConfig {
                        w,
                        u,
                        epsilon: f64::INFINITY,
                        sample_fraction,
                        seed,
                        ..Default::default()
                    };
                    reinterpret(net, data, &cfg).map(|(_, r)| r.best().delta_e).map_err(err)
                })
                .collect::<Result<_, _>>()?;
            d.sort_by(f64::total_cmp);
            Ok(d[1])
        })
        .collect()
}

fn non_increasing(m: &[f64]) -> bool {
    m.windows(2).all(|p| p[1] <= p[0])
}

fn describe(name: &str, m: &[f64]) -> String {
    let parts: Vec<String> = GRID
        .iter()
        .zip(m)
        .map(|((w, u), d)| format!("({w},{u}) {:+.2}%", 100.0 * d))
        .collect();
    format!("{name}: {}", parts.join(", "))
}

fn cifar_like_medians() -> Result<Vec<f64>, String> {
    let data = dataset::cifar_like(5000, 1000, 1000, 7);
    let topo = ["conv:8:3:relu", "pool:max:2", "fc:32:relu", "fc:10:softmax"].map(String::from);
    let net = Network::new(build_topology(vec![3, 8, 8], &topo).map_err(err)?, 1).map_err(err)?;
    let cfg = TrainConfig {
        epochs: 30,
        learning_rate: 0.02,
        dropout_rate: 0.0,
        seed: 1,
        ..Default::default()
    };
    let net = nn::train(&net, &data, &cfg).map_err(err)?.network;
    medians(&net, &data, 0.1)
}

fn main() -> ExitCode {
    let mut outcomes = vec![
        run(4, "shift decomposition is exact", shift_exhaustive),
        run(5, "staged NDCAM search equals the nearest-distance oracle", ndcam),
        run(6, "RNA and chip area composition", cost),
        run(9, "adder-tree cycle formula", adder),
    ];

    let mut mnist = Some(load_mnist());
    let mut baseline_ok = None;
    outcomes.push(run(1, "MNIST 784-512-512-10 baseline error and training time", || {
        let data = mnist.take().expect("loaded once")?;
        let (net, detail) = baseline(&data)?;
        baseline_ok = Some(Mnist { data, net });
        Ok(detail)
    }));
    let mnist = baseline_ok;
    let need = || "needs the MNIST baseline".to_string();

    let mut composed = None;
    outcomes.push(run(2, "reinterpretation at w=64, u=16, q=64", || {
        let m = mnist.as_ref().ok_or_else(need)?;
        let (rm, detail) = quality(m)?;
        composed = Some(rm);
        Ok(detail)
    }));

    let mut share = None;
    outcomes.push(run(7, "lookup inference, simulator and snapped oracle agree", || {
        let m = mnist.as_ref().ok_or_else(need)?;
        let rm = composed.as_ref().ok_or_else(|| "needs the composed model of criterion 2".to_string())?;
        equivalence(m, rm, &mut share)
    }));
    outcomes.push(run(8, "accumulation share of simulated energy", || {
        let s = share.ok_or_else(|| "needs the simulation of criterion 7".to_string())?;
        ensure(s >= 0.6, format!("{:.1}% of energy in weighted accumulation", 100.0 * s))
    }));

    outcomes.push(run(3, "median delta_e non-increasing over (4,4), (16,16), (64,64)", || {
        let m = mnist.as_ref().ok_or_else(need)?;
        let a = medians(&m.net, &m.data, 0.02)?;
        let b = cifar_like_medians()?;
        let detail = format!("{}; {}", describe("MNIST", &a), describe("CIFAR-like", &b));
        ensure(non_increasing(&a) && non_increasing(&b), detail)
    }));

    outcomes.sort_by_key(|o| o.id);
    println!("\nsummary");
    for o in &outcomes {
        print_line(o);
    }
    let failed = outcomes.iter().filter(|o| o.result.is_err()).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
