//! Experiment configuration, read from TOML.
//!
//! ```toml
//! seed = 1
//!
//! [dataset]
//! kind = "mnist"
//! path = "../data/mnist"
//! validation = 5000
//!
//! [topology]
//! layers = ["fc:512:relu", "fc:512:relu", "fc:10:softmax"]
//!
//! [train]
//! epochs = 15
//!
//! [compose]
//! w = 64
//! u = 16
//! ```
//!
//! Every section and key is optional. Relative paths resolve against the directory of
//! the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::composer::ComposeConfig;
use crate::error::{Error, Result};
use crate::nn::{dataset, Dataset, DatasetFormat, Split, TrainConfig};
use crate::sim::{RnaCostModel, SimOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// IDX files: a directory with the four MNIST files, or one image file.
    Mnist,
    /// `label,feature,...` rows.
    Csv,
    /// Synthetic 10-class `3 x 8 x 8` images.
    CifarLike,
    Xor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Defaults to the bundled MNIST directory for `mnist`; required for `csv`.
    pub path: Option<PathBuf>,
    /// Training samples moved, from the end of the training split, into validation.
    pub validation: usize,
    /// Caps on the training and test splits, applied before the validation split is carved.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    /// Sizes and seed of the synthetic task.
    pub train: usize,
    pub test: usize,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            kind: DatasetKind::Mnist,
            path: None,
            validation: 5000,
            train_limit: None,
            test_limit: None,
            train: 5000,
            test: 1000,
            seed: 7,
        }
    }
}

impl DatasetConfig {
    pub fn load(&self) -> Result<Dataset> {
        let data = match self.kind {
            DatasetKind::Mnist => {
                let path = self.path.clone().unwrap_or_else(dataset::default_mnist_dir);
                dataset::load_dataset(&path, DatasetFormat::Idx)?
            }
            DatasetKind::Csv => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("dataset.path is required for csv".into()))?;
                dataset::load_dataset(path, DatasetFormat::Csv)?
            }
            DatasetKind::CifarLike => return Ok(dataset::cifar_like(self.train, self.validation, self.test, self.seed)),
            DatasetKind::Xor => return Ok(dataset::xor()),
        };
        let mut data = data;
        if let Some(n) = self.train_limit {
            data = data.truncate_split(Split::Train, n);
        }
        if let Some(n) = self.test_limit {
            data = data.truncate_split(Split::Test, n);
        }
        if self.validation > 0 {
            data = data.with_validation_tail(self.validation)?;
        }
        Ok(data)
    }

    pub fn name(&self) -> String {
        match (self.kind, &self.path) {
            (DatasetKind::Mnist, None) => "mnist".into(),
            (DatasetKind::CifarLike, _) => "cifar_like".into(),
            (DatasetKind::Xor, _) => "xor".into(),
            (_, Some(p)) => p.display().to_string(),
            (DatasetKind::Csv, None) => "csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Layer strings such as `fc:512:relu`, `conv:8:3:relu` or `pool:max:2`. The input
    /// layer comes from the dataset.
    pub layers: Vec<String>,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            layers: ["fc:512:relu", "fc:512:relu", "fc:10:softmax"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub w: Vec<usize>,
    pub u: Vec<usize>,
    pub q: Vec<usize>,
    /// Composer seeds; the network is trained once.
    pub seeds: Vec<u64>,
    /// Points composed in parallel.
    pub workers: usize,
    /// Also run the simulator on every point.
    pub simulate: bool,
    /// Whether `run` composes the grid and writes `sweep.csv`.
    pub in_run: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            w: vec![4, 16, 64],
            u: vec![4, 16, 64],
            q: vec![64],
            seeds: vec![1, 2, 3],
            workers: 1,
            simulate: false,
            in_run: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub allow_sharing: bool,
    /// Workload split and size cap.
    pub split: Split,
    pub samples: Option<usize>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            allow_sharing: false,
            split: Split::Test,
            samples: Some(1000),
        }
    }
}

impl SimulateConfig {
    pub fn options(&self) -> SimOptions {
        SimOptions {
            allow_sharing: self.allow_sharing,
        }
    }

    pub fn workload(&self, data: &Dataset) -> Dataset {
        let mut idx = data.indices_of(self.split);
        if let Some(n) = self.samples {
            idx.truncate(n);
        }
        data.select(&idx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seeds network initialisation, training and the composer, overriding the
    /// per-section seeds.
    pub seed: Option<u64>,
    pub dataset: DatasetConfig,
    pub topology: TopologyConfig,
    pub train: TrainConfig,
    pub compose: ComposeConfig,
    pub cost: RnaCostModel,
    pub sweep: SweepConfig,
    pub simulate: SimulateConfig,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text)?;
        if let Some(seed) = cfg.seed {
            cfg.set_seed(seed);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(Error::file(path))?;
        let mut cfg = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Toml(t) => {
                let line = t.span().map_or(1, |s| text[..s.start].matches('\n').count() + 1);
                Error::parse(path, format!("line {line}"), t.message())
            }
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Makes relative paths absolute with respect to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if let Some(p) = &mut self.dataset.path {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.train.seed = seed;
        self.compose.seed = seed;
    }

    /// Seed of the network's initial weights.
    pub fn init_seed(&self) -> u64 {
        self.seed.unwrap_or(self.train.seed)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.compose.validate()?;
        self.cost.validate()?;
        if self.topology.layers.is_empty() {
            return Err(Error::InvalidConfig("topology.layers is empty".into()));
        }
        let s = &self.sweep;
        if s.w.is_empty() || s.u.is_empty() || s.q.is_empty() || s.seeds.is_empty() {
            return Err(Error::InvalidConfig("sweep lists must not be empty".into()));
        }
        if s.workers == 0 {
            return Err(Error::InvalidConfig("sweep.workers must be at least 1".into()));
        }
        for &w in &s.w {
            for &u in &s.u {
                for &q in &s.q {
                    ComposeConfig { w, u, q, ..self.compose.clone() }
                        .validate()
                        .map_err(|e| Error::InvalidConfig(format!("sweep point w={w}, u={u}, q={q}: {e}")))?;
                }
            }
        }
        Ok(())
    }
}
