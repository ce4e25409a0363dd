//! Evaluation scenarios, metrics and reports.

mod metrics;
mod split;

use std::fmt::Write as _;
use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embed::{grid_search, train, ComplExModel, TrainConfig, Validation};
use crate::error::{Error, Result};
use crate::kg::{schema, KnowledgeGraph, PerformanceLabel, Triple};
use crate::predict::{classify_scores, pair_features, Prediction, RandomForest, RfParams, TripleQuery};
use crate::seed::SeedMixer;

pub use metrics::{auc_roc, confusion, f1, majority_baseline, majority_class, Confusion};
pub use split::{
    instance_fold_count, split_leave_algorithm_configs_out, split_leave_problem_instances_out,
    split_random_stratified, Scenario, Split, SplitSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pipeline {
    /// Compare the scores of the two performance relations.
    Score,
    /// Random forest on concatenated algorithm and problem embeddings.
    Rf,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::Score => "score",
            Pipeline::Rf => "rf",
        }
    }
}

impl std::str::FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(Pipeline::Score),
            "rf" => Ok(Pipeline::Rf),
            _ => Err(Error::Config(format!("unknown pipeline {s:?}"))),
        }
    }
}

/// Either one fixed training configuration or a grid searched per fold.
#[derive(Debug, Clone, PartialEq)]
pub enum Tuning {
    Fixed(TrainConfig),
    Grid(Vec<TrainConfig>),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FoldMetrics {
    pub f1_solved: f64,
    pub f1_not_solved: f64,
    /// F1 with the training-majority class as positive.
    pub f1_majority: f64,
    /// NaN when the test part holds a single class.
    pub auc_roc: f64,
    pub baseline_f1_majority: f64,
    pub baseline_auc: f64,
    pub improvement_pct: f64,
}

pub const METRIC_NAMES: [&str; 7] = [
    "f1_solved",
    "f1_not_solved",
    "f1_majority",
    "auc_roc",
    "baseline_f1_majority",
    "baseline_auc",
    "improvement_pct",
];

impl FoldMetrics {
    pub fn values(&self) -> [f64; 7] {
        [
            self.f1_solved,
            self.f1_not_solved,
            self.f1_majority,
            self.auc_roc,
            self.baseline_f1_majority,
            self.baseline_auc,
            self.improvement_pct,
        ]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        METRIC_NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }

    /// Metrics of `predictions` with `ranking` as the solved-ness score.
    pub fn compute(
        train_labels: &[PerformanceLabel],
        test_labels: &[PerformanceLabel],
        predictions: &[PerformanceLabel],
        ranking: &[f64],
    ) -> Result<Self> {
        let (majority, baseline) = majority_baseline(train_labels, test_labels)?;
        let f1_maj = f1(test_labels, predictions, majority);
        let is_solved: Vec<bool> = test_labels.iter().map(|l| l.is_solved()).collect();
        let auc = match auc_roc(&is_solved, ranking) {
            Ok(a) => a,
            Err(Error::Undefined(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        let baseline_auc = match auc_roc(&is_solved, &vec![0.0; is_solved.len()]) {
            Ok(a) => a,
            Err(Error::Undefined(_)) => f64::NAN,
            Err(e) => return Err(e),
        };
        Ok(FoldMetrics {
            f1_solved: f1(test_labels, predictions, PerformanceLabel::Solved),
            f1_not_solved: f1(test_labels, predictions, PerformanceLabel::NotSolved),
            f1_majority: f1_maj,
            auc_roc: auc,
            baseline_f1_majority: baseline,
            baseline_auc,
            improvement_pct: improvement_pct(f1_maj, baseline),
        })
    }
}

/// 100·(f1 − baseline)/baseline; NaN for a zero baseline.
pub fn improvement_pct(f1: f64, baseline: f64) -> f64 {
    if baseline == 0.0 {
        f64::NAN
    } else {
        100.0 * (f1 - baseline) / baseline
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldOutcome {
    pub fold: usize,
    /// Training-majority class.
    pub positive: PerformanceLabel,
    pub config: TrainConfig,
    pub val_f1: f64,
    pub metrics: FoldMetrics,
    pub test_labels: Vec<PerformanceLabel>,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub scenario: Scenario,
    pub pipeline: Pipeline,
    pub folds: Vec<FoldOutcome>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl EvaluationReport {
    /// `<scenario>/<pipeline>`, the key used in report files.
    pub fn key(&self) -> String {
        format!("{}/{}", self.scenario, self.pipeline.as_str())
    }

    pub fn metric(&self, name: &str) -> Vec<f64> {
        self.folds.iter().filter_map(|f| f.metrics.get(name)).collect()
    }

    /// Mean over folds.
    pub fn mean(&self, name: &str) -> f64 {
        mean_std(&self.metric(name)).0
    }

    /// Sample standard deviation over folds (0 for a single fold).
    pub fn std(&self, name: &str) -> f64 {
        mean_std(&self.metric(name)).1
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        let mut rows = Vec::new();
        for f in &self.folds {
            for (name, value) in METRIC_NAMES.iter().zip(f.metrics.values()) {
                rows.push(ReportRow {
                    scenario: self.key(),
                    fold: f.fold.to_string(),
                    metric: name.to_string(),
                    value,
                });
            }
        }
        for (tag, pick) in [("mean", 0usize), ("std", 1)] {
            for name in METRIC_NAMES {
                let (m, s) = mean_std(&self.metric(name));
                rows.push(ReportRow {
                    scenario: self.key(),
                    fold: tag.to_string(),
                    metric: name.to_string(),
                    value: if pick == 0 { m } else { s },
                });
            }
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub scenario: String,
    pub fold: String,
    pub metric: String,
    pub value: f64,
}

/// Report CSV: `scenario,fold,metric,value`.
pub fn write_report_csv(reports: &[EvaluationReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        for row in r.rows() {
            w.serialize(row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv(input: impl Read) -> Result<Vec<ReportRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize::<ReportRow>()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::parse(i + 2, e.to_string())))
        .collect()
}

/// Classifier F1 / baseline F1 / improvement per fold, then mean (std).
pub fn format_table(reports: &[EvaluationReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<40} {:>6}  {:>24}  {:>8}  {:>8}",
        "scenario", "fold", "F1/baseline/improvement", "AUC", "val F1"
    );
    for r in reports {
        for f in &r.folds {
            let m = &f.metrics;
            let _ = writeln!(
                out,
                "{:<40} {:>6}  {:>24}  {:>8.3}  {:>8.3}",
                r.key(),
                f.fold,
                format!(
                    "{:.3}/{:.3}/{:.2}%",
                    m.f1_majority, m.baseline_f1_majority, m.improvement_pct
                ),
                m.auc_roc,
                f.val_f1
            );
        }
        let _ = writeln!(
            out,
            "{:<40} {:>6}  {:>24}  {:>8.3}",
            r.key(),
            "mean",
            format!(
                "{:.3} ({:.3})/{:.3}/{:.2}%",
                r.mean("f1_majority"),
                r.std("f1_majority"),
                r.mean("baseline_f1_majority"),
                r.mean("improvement_pct")
            ),
            r.mean("auc_roc")
        );
    }
    out
}

/// Number of folds or repeats the scenario runs for this graph.
pub fn fold_count(kg: &KnowledgeGraph, spec: &SplitSpec) -> Result<usize> {
    spec.validate()?;
    match spec.scenario {
        Scenario::LeaveProblemInstancesOut => {
            let m = instance_fold_count(kg, &kg.performance_triples())?;
            Ok(spec.repeats.min(m))
        }
        _ => Ok(spec.repeats),
    }
}

pub fn split_for(kg: &KnowledgeGraph, spec: &SplitSpec, fold: usize) -> Result<Split> {
    spec.validate()?;
    let perf = kg.performance_triples();
    let seed = SeedMixer::new(spec.seed).int(fold as u64).finish();
    match spec.scenario {
        Scenario::RandomStratified => split_random_stratified(kg, &perf, spec.ratios, seed),
        Scenario::LeaveProblemInstancesOut => split_leave_problem_instances_out(kg, &perf, fold),
        Scenario::LeaveAlgorithmConfigsOut => split_leave_algorithm_configs_out(kg, &perf, spec.ratios, seed),
    }
}

fn labels_of(kg: &KnowledgeGraph, triples: &[Triple]) -> Vec<PerformanceLabel> {
    triples
        .iter()
        .map(|t| kg.performance_label(t).expect("split holds performance triples"))
        .collect()
}

fn bare(label: &str) -> &str {
    label.split_once(':').map_or(label, |(_, rest)| rest)
}

/// Trains (or grid-searches) embeddings on the training part of `split` and
/// returns the model, the chosen configuration and its validation F1.
pub fn fit_embeddings(
    kg: &KnowledgeGraph,
    split: &Split,
    tuning: &Tuning,
    seed: u64,
) -> Result<(ComplExModel, TrainConfig, f64)> {
    let train_labels = labels_of(kg, &split.train);
    let positive = majority_class(&train_labels)?;
    let kg_train = kg.descriptive_plus(split.train.iter().copied())?;
    let validation = Validation::from_triples(kg, &split.val, positive)?;
    let reseed = |c: &TrainConfig| TrainConfig {
        seed: SeedMixer::new(c.seed).int(seed).finish(),
        ..c.clone()
    };
    match tuning {
        Tuning::Fixed(cfg) => {
            let cfg = reseed(cfg);
            let (model, h) = train(&kg_train, &validation, &cfg)?;
            Ok((model, cfg, h.best_f1))
        }
        Tuning::Grid(grid) => {
            let grid: Vec<TrainConfig> = grid.iter().map(reseed).collect();
            let r = grid_search(&kg_train, &validation, &grid)?;
            let cfg = r.best_config().clone();
            let f = r.results[r.best_index].best_f1;
            Ok((r.model, cfg, f))
        }
    }
}

/// Test-set predictions and solved-ness ranking of one pipeline.
pub fn predict_split(
    kg: &KnowledgeGraph,
    model: &ComplExModel,
    split: &Split,
    pipeline: Pipeline,
    rf: &RfParams,
) -> Result<(Vec<PerformanceLabel>, Vec<f64>)> {
    let query = |t: &Triple| TripleQuery {
        algorithm: t.head,
        problem: t.tail,
    };
    match pipeline {
        Pipeline::Score => {
            let solved = model.relation(schema::SOLVED)?;
            let not_solved = model.relation(schema::NOT_SOLVED)?;
            Ok(split
                .test
                .iter()
                .map(|t| classify_scores(model.score(t.head, solved, t.tail), model.score(t.head, not_solved, t.tail)))
                .unzip())
        }
        Pipeline::Rf => {
            let x = split
                .train
                .iter()
                .map(|t| pair_features(model, query(t)))
                .collect::<Result<Vec<_>>>()?;
            let y: Vec<bool> = labels_of(kg, &split.train).iter().map(|l| l.is_solved()).collect();
            let forest = RandomForest::train(&x, &y, rf)?;
            let mut labels = Vec::with_capacity(split.test.len());
            let mut probas = Vec::with_capacity(split.test.len());
            for t in &split.test {
                let f = pair_features(model, query(t))?;
                labels.push(PerformanceLabel::from_solved(forest.predict(&f)?));
                probas.push(forest.predict_proba(&f)?);
            }
            Ok((labels, probas))
        }
    }
}

/// One fold, embeddings shared across pipelines. Outcomes follow `pipelines`.
pub fn run_fold(
    kg: &KnowledgeGraph,
    spec: &SplitSpec,
    fold: usize,
    tuning: &Tuning,
    pipelines: &[Pipeline],
    rf: &RfParams,
) -> Result<Vec<FoldOutcome>> {
    let split = split_for(kg, spec, fold)?;
    if split.train.is_empty() || split.test.is_empty() {
        return Err(Error::InvalidInput(format!("fold {fold} has an empty train or test part")));
    }
    let (model, config, val_f1) = fit_embeddings(kg, &split, tuning, fold as u64)?;
    let train_labels = labels_of(kg, &split.train);
    let test_labels = labels_of(kg, &split.test);
    let positive = majority_class(&train_labels)?;
    let rf = RfParams {
        seed: SeedMixer::new(rf.seed).int(fold as u64).finish(),
        ..rf.clone()
    };
    pipelines
        .iter()
        .map(|&p| {
            let (preds, ranking) = predict_split(kg, &model, &split, p, &rf)?;
            let metrics = FoldMetrics::compute(&train_labels, &test_labels, &preds, &ranking)?;
            let predictions = split
                .test
                .iter()
                .zip(preds.iter().zip(&ranking))
                .map(|(t, (&l, &s))| Prediction {
                    config_id: bare(kg.entity_label(t.head)).to_string(),
                    problem_id: bare(kg.entity_label(t.tail)).to_string(),
                    predicted_label: l,
                    score_or_proba: s,
                })
                .collect();
            Ok(FoldOutcome {
                fold,
                positive,
                config: config.clone(),
                val_f1,
                metrics,
                test_labels: test_labels.clone(),
                predictions,
            })
        })
        .collect()
}

/// Runs every fold (in parallel) and returns one report per pipeline.
pub fn run_scenario(
    kg: &KnowledgeGraph,
    spec: &SplitSpec,
    tuning: &Tuning,
    pipelines: &[Pipeline],
    rf: &RfParams,
) -> Result<Vec<EvaluationReport>> {
    if pipelines.is_empty() {
        return Err(Error::Config("no pipeline selected".into()));
    }
    let n = fold_count(kg, spec)?;
    let per_fold = (0..n)
        .into_par_iter()
        .map(|fold| run_fold(kg, spec, fold, tuning, pipelines, rf))
        .collect::<Result<Vec<_>>>()?;
    Ok(pipelines
        .iter()
        .enumerate()
        .map(|(i, &pipeline)| EvaluationReport {
            scenario: spec.scenario,
            pipeline,
            folds: per_fold.iter().map(|f| f[i].clone()).collect(),
        })
        .collect())
}
