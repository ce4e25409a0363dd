//! Flat `key = value` run configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use kgperf_core::benchgen::{Function, ModuleSpace};
use kgperf_core::ela::{SampleDesign, SampleStrategy};
use kgperf_core::embed::{Loss, TrainConfig};
use kgperf_core::seed::SeedMixer;

/// Anything wrong with the command line or the configuration file. Exit code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> Result<T, UsageError> {
    Err(UsageError(msg.into()))
}

const KEYS: &[&str] = &[
    "dimension",
    "budgets",
    "thresholds",
    "runs",
    "configs",
    "functions",
    "instances",
    "sample_strategy",
    "sample_size",
    "sample_repetitions",
    "grid_k",
    "grid_learning_rate",
    "grid_loss",
    "k",
    "learning_rate",
    "loss",
    "max_epochs",
    "patience",
    "burn_in",
    "eta",
    "batch_size",
    "margin",
    "temperature",
    "l2",
    "rf_trees",
    "split_ratios",
    "repeats",
    "seed",
    "out_dir",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dimension: usize,
    pub budgets: Vec<u64>,
    pub thresholds: Vec<f64>,
    pub runs: usize,
    /// Number of configurations kept by even subsampling; 0 keeps all.
    pub configs: usize,
    pub functions: Vec<Function>,
    pub instances: u32,
    pub sample_strategy: SampleStrategy,
    /// `None` means 100·D.
    pub sample_size: Option<usize>,
    pub sample_repetitions: usize,
    /// `module.<name>` overrides of the modular DE value lists.
    pub modules: ModuleSpace,
    pub grid_k: Vec<usize>,
    pub grid_learning_rate: Vec<f64>,
    pub grid_loss: Vec<Loss>,
    /// Used by `train` and by `eval --fixed`; seed is ignored (see `seeds`).
    pub train: TrainConfig,
    pub rf_trees: usize,
    pub split_ratios: [u32; 3],
    /// `None` uses the scenario default.
    pub repeats: Option<usize>,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dimension: 5,
            budgets: vec![2000, 5000, 10000, 50000],
            thresholds: vec![1.0, 0.1, 0.001],
            runs: 5,
            configs: 0,
            functions: Function::ALL.to_vec(),
            instances: 5,
            sample_strategy: SampleStrategy::Halton,
            sample_size: None,
            sample_repetitions: 5,
            modules: ModuleSpace::modde(),
            grid_k: vec![50, 100, 150, 200],
            grid_learning_rate: vec![1e-3, 1e-4],
            grid_loss: Loss::ALL.to_vec(),
            train: TrainConfig::default(),
            rf_trees: 10,
            split_ratios: [60, 20, 20],
            repeats: None,
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

fn list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, UsageError>
where
    T::Err: fmt::Display,
{
    let items: Vec<&str> = value.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        return usage(format!("{key}: list must not be empty"));
    }
    items
        .iter()
        .map(|s| s.parse::<T>().map_err(|e| UsageError(format!("{key}: {s:?}: {e}"))))
        .collect()
}

fn one<T: FromStr>(key: &str, value: &str) -> Result<T, UsageError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| UsageError(format!("{key}: {value:?}: {e}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, UsageError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return usage(format!("config line {}: expected key = value", i + 1));
            };
            let (key, value) = (key.trim(), value.trim());
            let known = KEYS.contains(&key) || key.starts_with("module.");
            if !known {
                return usage(format!("config line {}: unknown key {key:?}", i + 1));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return usage(format!("config line {}: duplicate key {key:?}", i + 1));
            }
        }

        let mut c = RunConfig::default();
        if let Some(v) = entries.get("dimension") {
            c.dimension = one("dimension", v)?;
            // thresholds default to the coarser set on high-dimensional problems
            if c.dimension >= 30 {
                c.thresholds = vec![10.0, 1.0, 0.1];
            }
        }
        for (key, value) in &entries {
            let v = value.as_str();
            match key.as_str() {
                "dimension" => {}
                "budgets" => c.budgets = list(key, v)?,
                "thresholds" => c.thresholds = list(key, v)?,
                "runs" => c.runs = one(key, v)?,
                "configs" => c.configs = one(key, v)?,
                "functions" => c.functions = list(key, v)?,
                "instances" => c.instances = one(key, v)?,
                "sample_strategy" => c.sample_strategy = one(key, v)?,
                "sample_size" => c.sample_size = Some(one(key, v)?),
                "sample_repetitions" => c.sample_repetitions = one(key, v)?,
                "grid_k" => c.grid_k = list(key, v)?,
                "grid_learning_rate" => c.grid_learning_rate = list(key, v)?,
                "grid_loss" => c.grid_loss = list(key, v)?,
                "k" => c.train.k = one(key, v)?,
                "learning_rate" => c.train.learning_rate = one(key, v)?,
                "loss" => c.train.loss = one(key, v)?,
                "max_epochs" => c.train.max_epochs = one(key, v)?,
                "patience" => c.train.patience = one(key, v)?,
                "burn_in" => c.train.burn_in = one(key, v)?,
                "eta" => c.train.eta = one(key, v)?,
                "batch_size" => c.train.batch_size = one(key, v)?,
                "margin" => c.train.margin = one(key, v)?,
                "temperature" => c.train.temperature = one(key, v)?,
                "l2" => c.train.l2 = one(key, v)?,
                "rf_trees" => c.rf_trees = one(key, v)?,
                "split_ratios" => {
                    let r: Vec<u32> = list(key, v)?;
                    let Ok(r) = <[u32; 3]>::try_from(r) else {
                        return usage("split_ratios: expected three integers");
                    };
                    c.split_ratios = r;
                }
                "repeats" => c.repeats = Some(one(key, v)?),
                "seed" => c.seed = one(key, v)?,
                "out_dir" => c.out_dir = PathBuf::from(v),
                module => {
                    let name = module.strip_prefix("module.").expect("checked above");
                    let values: Vec<String> = list(key, v)?;
                    c.modules.restrict(name, values).map_err(|e| UsageError(format!("{key}: {e}")))?;
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), UsageError> {
        if self.dimension == 0 || self.dimension > 1000 {
            return usage(format!("dimension must be in 1..=1000, got {}", self.dimension));
        }
        if self.budgets.contains(&0) {
            return usage("budgets must be positive");
        }
        if self.thresholds.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return usage("thresholds must be positive and finite");
        }
        if self.runs == 0 {
            return usage("runs must be at least 1");
        }
        if self.instances == 0 {
            return usage("instances must be at least 1");
        }
        if self.sample_repetitions == 0 {
            return usage("sample_repetitions must be at least 1");
        }
        if let Some(n) = self.sample_size {
            if n < self.dimension + 2 {
                return usage(format!("sample_size must be at least dimension + 2 = {}", self.dimension + 2));
            }
        }
        if self.grid_k.contains(&0) {
            return usage("grid_k values must be positive");
        }
        if self.grid_learning_rate.iter().any(|lr| !(lr.is_finite() && *lr > 0.0)) {
            return usage("grid_learning_rate values must be positive");
        }
        if self.rf_trees == 0 {
            return usage("rf_trees must be at least 1");
        }
        if self.split_ratios.iter().sum::<u32>() != 100 || self.split_ratios.contains(&0) {
            return usage("split_ratios must be three positive integers summing to 100");
        }
        if self.repeats == Some(0) {
            return usage("repeats must be at least 1");
        }
        self.train.validate().map_err(|e| UsageError(e.to_string()))?;
        for cfg in self.grid() {
            cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        }
        Ok(())
    }

    pub fn sample_design(&self) -> SampleDesign {
        SampleDesign {
            strategy: self.sample_strategy,
            sample_size: self.sample_size,
            repetitions: self.sample_repetitions,
            seed: self.seed_for("ela"),
        }
    }

    /// Grid points in k, learning rate, loss order; other fields from `train`.
    pub fn grid(&self) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for &k in &self.grid_k {
            for &learning_rate in &self.grid_learning_rate {
                for &loss in &self.grid_loss {
                    out.push(TrainConfig {
                        k,
                        learning_rate,
                        loss,
                        seed: self.seed_for("train"),
                        ..self.train.clone()
                    });
                }
            }
        }
        out
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed_for("train"),
            ..self.train.clone()
        }
    }

    /// Per-component seed derived from the root seed.
    pub fn seed_for(&self, component: &str) -> u64 {
        SeedMixer::new(self.seed).str(component).finish()
    }
}
