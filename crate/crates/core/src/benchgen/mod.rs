//! Fixed-budget performance data from a modular DE over a built-in problem suite.

mod config;
mod modde;
mod problems;

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{ConfigurationRecord, ProblemRecord};
use crate::seed::SeedMixer;

pub use config::{
    enumerate_configs, modde_configs, subsample, Adaptation, AlgorithmConfiguration, Crossover,
    ModuleSpace, MutationBase, MutationReference,
};
pub use modde::{run_modde, RunOutcome, Trajectory, LPSR_MIN_POPULATION, SHADE_MEMORY};
pub use problems::{problem_suite, Function, ProblemClass, ProblemInstanceDescriptor, LOWER, UPPER};

/// Median best-so-far precision of one configuration on one problem at each budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceRecord {
    pub config_id: String,
    pub problem_id: String,
    pub median_precision: BTreeMap<u64, f64>,
}

impl PerformanceRecord {
    pub fn precision_at(&self, budget: u64) -> Option<f64> {
        self.median_precision.get(&budget).copied()
    }
}

/// Median of a nonempty slice; the mean of the two middle values for even lengths.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty slice");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Seed of one run: mixes the root seed with the configuration id, problem id
/// and run index.
pub fn run_seed(base_seed: u64, config_id: &str, problem_id: &str, run: usize) -> u64 {
    SeedMixer::new(base_seed)
        .str(config_id)
        .str(problem_id)
        .int(run as u64)
        .finish()
}

/// Runs every configuration on every problem `runs` times for the largest
/// budget and records the median best-so-far precision at each budget.
///
/// Records come back in (configuration, problem) order regardless of how the
/// work is scheduled.
pub fn collect_performance(
    configs: &[AlgorithmConfiguration],
    problems: &[ProblemInstanceDescriptor],
    budgets: &[u64],
    runs: usize,
    base_seed: u64,
) -> Result<Vec<PerformanceRecord>> {
    if runs == 0 {
        return Err(Error::Config("run count must be at least 1".into()));
    }
    if budgets.is_empty() || budgets.contains(&0) {
        return Err(Error::Config("budgets must be a nonempty list of positive integers".into()));
    }
    let max_budget = *budgets.iter().max().expect("nonempty");
    let tasks: Vec<(usize, usize)> = (0..configs.len())
        .flat_map(|c| (0..problems.len()).map(move |p| (c, p)))
        .collect();
    tasks
        .par_iter()
        .map(|&(c, p)| {
            let config = &configs[c];
            let problem = &problems[p];
            let problem_id = problem.id();
            let mut at_budget: Vec<Vec<f64>> = vec![Vec::with_capacity(runs); budgets.len()];
            for run in 0..runs {
                let seed = run_seed(base_seed, &config.id, &problem_id, run);
                let outcome = run_modde(config, problem, max_budget, seed)?;
                for (slot, &b) in at_budget.iter_mut().zip(budgets) {
                    let value = outcome.trajectory.at(b).ok_or_else(|| {
                        Error::Config(format!(
                            "budget {b} is below the initial population of {}",
                            config.id
                        ))
                    })?;
                    slot.push(value);
                }
            }
            Ok(PerformanceRecord {
                config_id: config.id.clone(),
                problem_id,
                median_precision: budgets
                    .iter()
                    .zip(&at_budget)
                    .map(|(&b, vals)| (b, median(vals)))
                    .collect(),
            })
        })
        .collect()
}

/// Fraction of records with median precision ≤ `threshold` at `budget`.
pub fn solved_fraction(records: &[PerformanceRecord], budget: u64, threshold: f64) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    let mut solved = 0usize;
    for r in records {
        if r.precision_at(budget)? <= threshold {
            solved += 1;
        }
    }
    Some(solved as f64 / records.len() as f64)
}

/// Picks a threshold whose solved fraction at `budget` falls in `[lo, hi]`.
///
/// Powers of ten from 1e2 down to 1e-8 are tried first; failing that, the
/// precision at the middle of the target range's quantile is used.
pub fn threshold_for_fraction(
    records: &[PerformanceRecord],
    budget: u64,
    lo: f64,
    hi: f64,
) -> Option<f64> {
    for e in (-8..=2).rev() {
        let t = 10f64.powi(e);
        let frac = solved_fraction(records, budget, t)?;
        if (lo..=hi).contains(&frac) {
            return Some(t);
        }
    }
    let mut values: Vec<f64> = records
        .iter()
        .map(|r| r.precision_at(budget))
        .collect::<Option<_>>()?;
    values.sort_by(f64::total_cmp);
    let target = 0.5 * (lo + hi);
    let idx = ((target * values.len() as f64).floor() as usize).clamp(1, values.len()) - 1;
    let t = values[idx];
    let frac = solved_fraction(records, budget, t)?;
    ((lo..=hi).contains(&frac) && t > 0.0).then_some(t)
}

#[derive(Debug, Serialize, Deserialize)]
struct PerformanceRow {
    config_id: String,
    problem_id: String,
    budget: u64,
    median_precision: f64,
}

/// Performance CSV: `config_id,problem_id,budget,median_precision`.
pub fn write_performance_csv(records: &[PerformanceRecord], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        for (&budget, &value) in &r.median_precision {
            w.serialize(PerformanceRow {
                config_id: r.config_id.clone(),
                problem_id: r.problem_id.clone(),
                budget,
                median_precision: value,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the performance CSV, grouping rows by (config, problem) in first-seen order.
pub fn read_performance_csv(input: impl Read) -> Result<Vec<PerformanceRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out: Vec<PerformanceRecord> = Vec::new();
    let mut index: std::collections::HashMap<(String, String), usize> = Default::default();
    for (i, row) in rdr.deserialize::<PerformanceRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(i + 2, e.to_string()))?;
        if !(row.median_precision >= 0.0) {
            return Err(Error::parse(i + 2, "median_precision must be a nonnegative number"));
        }
        let key = (row.config_id.clone(), row.problem_id.clone());
        let slot = *index.entry(key).or_insert_with(|| {
            out.push(PerformanceRecord {
                config_id: row.config_id.clone(),
                problem_id: row.problem_id.clone(),
                median_precision: BTreeMap::new(),
            });
            out.len() - 1
        });
        if out[slot]
            .median_precision
            .insert(row.budget, row.median_precision)
            .is_some()
        {
            return Err(Error::parse(i + 2, "duplicate (config, problem, budget) row"));
        }
    }
    Ok(out)
}

/// Config TSV: `config_id<TAB>module<TAB>value`, one row per module setting.
pub fn write_config_tsv(configs: &[ConfigurationRecord], mut out: impl Write) -> Result<()> {
    for c in configs {
        for (m, v) in &c.settings {
            writeln!(out, "{}\t{m}\t{v}", c.id)?;
        }
    }
    Ok(())
}

pub fn read_config_tsv(input: impl Read) -> Result<Vec<ConfigurationRecord>> {
    let text = read_text(input)?;
    let mut out: Vec<ConfigurationRecord> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 || f.iter().any(|s| s.is_empty()) {
            return Err(Error::parse(i + 1, "expected config_id<TAB>module<TAB>value"));
        }
        if out.last().map(|c| c.id.as_str()) != Some(f[0]) {
            if !seen.insert(f[0].to_string()) {
                return Err(Error::parse(i + 1, format!("rows of {} are not contiguous", f[0])));
            }
            out.push(ConfigurationRecord {
                id: f[0].to_string(),
                family: ConfigurationRecord::family_of(f[0]).to_string(),
                settings: Vec::new(),
            });
        }
        out.last_mut()
            .expect("pushed above")
            .settings
            .push((f[1].to_string(), f[2].to_string()));
    }
    Ok(out)
}

/// Problems TSV: `problem_id<TAB>function<TAB>instance<TAB>class`.
pub fn write_problems_tsv(problems: &[ProblemRecord], mut out: impl Write) -> Result<()> {
    for p in problems {
        writeln!(out, "{}\t{}\t{}\t{}", p.id, p.function, p.instance, p.class)?;
    }
    Ok(())
}

pub fn read_problems_tsv(input: impl Read) -> Result<Vec<ProblemRecord>> {
    let text = read_text(input)?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 || f.iter().any(|s| s.is_empty()) {
                return Err(Error::parse(i + 1, "expected problem_id<TAB>function<TAB>instance<TAB>class"));
            }
            let instance = f[2]
                .parse()
                .map_err(|_| Error::parse(i + 1, format!("bad instance index {:?}", f[2])))?;
            Ok(ProblemRecord {
                id: f[0].to_string(),
                function: f[1].to_string(),
                instance,
                class: f[3].to_string(),
            })
        })
        .collect()
}

fn read_text(mut input: impl Read) -> Result<String> {
    let mut s = String::new();
    input.read_to_string(&mut s)?;
    Ok(s)
}
