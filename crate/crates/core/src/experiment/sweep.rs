//! Grid sweeps over `(w, u, q, seed)` for one trained network.

use std::fs;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::held_out_split;
use crate::composer::{reinterpret, save_reinterpreted, ComposeConfig};
use crate::error::{Error, Result};
use crate::lut::LutModel;
use crate::nn::{Dataset, Network};
use crate::sim::simulate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SweepPoint {
    pub w: usize,
    pub u: usize,
    pub q: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: SweepPoint,
    /// Validation errors of the original and the best reinterpreted model.
    pub e_baseline: f64,
    pub e_clustered: f64,
    pub delta_e: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Error of the lookup path on held-out data.
    pub lut_error: f64,
    pub memory_bytes: usize,
    pub energy_j: Option<f64>,
    pub latency_cycles: Option<f64>,
    pub edp_js: Option<f64>,
    pub gops_per_w: Option<f64>,
}

pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    let s = &cfg.sweep;
    let mut points = Vec::new();
    for &w in &s.w {
        for &u in &s.u {
            for &q in &s.q {
                for &seed in &s.seeds {
                    points.push(SweepPoint { w, u, q, seed });
                }
            }
        }
    }
    points
}

/// Composes every grid point with `sweep.workers` threads. Each point's model and
/// report go to `<output.dir>/sweep/w<w>_u<u>_q<q>_s<seed>/`. Rows come back sorted.
pub fn sweep(cfg: &ExperimentConfig, net: &Network, data: &Dataset) -> Result<Vec<SweepRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.sweep.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let points = sweep_points(cfg);
    let mut rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .map(|&p| sweep_point(cfg, net, data, p))
            .collect::<Result<_>>()
    })?;
    rows.sort_by_key(|r| r.point);
    Ok(rows)
}

fn sweep_point(cfg: &ExperimentConfig, net: &Network, data: &Dataset, p: SweepPoint) -> Result<SweepRow> {
    let compose = ComposeConfig {
        w: p.w,
        u: p.u,
        q: p.q,
        seed: p.seed,
        ..cfg.compose.clone()
    };
    let (rm, report) = reinterpret(net, data, &compose).map_err(|e| e.in_stage("compose"))?;
    let lut_error = LutModel::new(&rm)?.error(data, held_out_split(data))?;
    let sim = if cfg.sweep.simulate {
        let r = simulate(&rm, &cfg.simulate.workload(data), &cfg.cost, cfg.simulate.options()).map_err(|e| e.in_stage("simulate"))?;
        Some(r.report)
    } else {
        None
    };
    let best = report.best();
    let row = SweepRow {
        point: p,
        e_baseline: best.e_baseline,
        e_clustered: best.e_clustered,
        delta_e: best.delta_e,
        iterations: report.iterations.len(),
        converged: report.converged,
        lut_error,
        memory_bytes: report.memory_bytes,
        energy_j: sim.as_ref().map(|s| s.energy_j),
        latency_cycles: sim.as_ref().map(|s| s.latency_cycles),
        edp_js: sim.as_ref().map(|s| s.edp_js),
        gops_per_w: sim.as_ref().map(|s| s.gops_per_w),
    };
    let dir = cfg
        .output
        .dir
        .join("sweep")
        .join(format!("w{}_u{}_q{}_s{}", p.w, p.u, p.q, p.seed));
    let write = || -> Result<()> {
        fs::create_dir_all(&dir)?;
        save_reinterpreted(&rm, &dir.join("model.lut"))?;
        fs::write(dir.join("reinterpret.json"), serde_json::to_string_pretty(&report)?)?;
        fs::write(dir.join("row.json"), serde_json::to_string_pretty(&row)?)?;
        if let Some(s) = &sim {
            fs::write(dir.join("sim.csv"), s.to_csv())?;
        }
        Ok(())
    };
    write().map_err(|e| e.in_stage("output"))?;
    Ok(row)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("w,u,q,seed,e_baseline,e_clustered,delta_e,iterations,converged,lut_error,memory_bytes,energy_j,latency_cycles,edp_js,gops_per_w\n");
    let opt = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:.6e}"));
    for r in rows {
        let p = r.point;
        out.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{},{},{:.6},{},{},{},{},{}\n",
            p.w,
            p.u,
            p.q,
            p.seed,
            r.e_baseline,
            r.e_clustered,
            r.delta_e,
            r.iterations,
            r.converged,
            r.lut_error,
            r.memory_bytes,
            opt(r.energy_j),
            r.latency_cycles.map_or(String::new(), |v| format!("{v:.1}")),
            opt(r.edp_js),
            opt(r.gops_per_w)
        ));
    }
    out
}

/// Median `delta_e` over seeds for each `(w, u, q)`, in grid order.
pub fn median_delta_e(rows: &[SweepRow]) -> Vec<((usize, usize, usize), f64)> {
    let mut groups: Vec<((usize, usize, usize), Vec<f64>)> = Vec::new();
    for r in rows {
        let key = (r.point.w, r.point.u, r.point.q);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.delta_e),
            None => groups.push((key, vec![r.delta_e])),
        }
    }
    groups
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            let n = v.len();
            let m = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
            (k, m)
        })
        .collect()
}
