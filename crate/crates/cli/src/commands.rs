use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use kgperf_core::benchgen::{
    collect_performance, enumerate_configs, problem_suite, read_config_tsv, read_performance_csv, read_problems_tsv,
    solved_fraction, subsample, write_config_tsv, write_performance_csv, write_problems_tsv, AlgorithmConfiguration,
};
use kgperf_core::ela::{bin_features, problem_features, read_features_csv, write_features_csv, FeatureTable};
use kgperf_core::embed::{self, grid_search, write_training_log, ComplExModel, TrainHistory, Validation};
use kgperf_core::eval::{
    format_table, majority_class, run_scenario, split_for, write_report_csv, Pipeline, Scenario, Split, SplitSpec,
    Tuning,
};
use kgperf_core::kg::{build_kg, read_kg, schema, write_kg, KnowledgeGraph, PerformanceLabel};
use kgperf_core::predict::{
    classify_by_score, pair_features, write_predictions_csv, Prediction, RandomForest, RfParams, TripleQuery,
};

use crate::config::{RunConfig, UsageError};

pub const PERFORMANCE_CSV: &str = "performance.csv";
pub const CONFIGS_TSV: &str = "configs.tsv";
pub const PROBLEMS_TSV: &str = "problems.tsv";
pub const FEATURES_CSV: &str = "features.csv";
pub const MODEL_FILE: &str = "model.txt";
pub const TRAINING_LOG: &str = "training_log.csv";
pub const GRID_CSV: &str = "grid_search.csv";
pub const REPORT_CSV: &str = "report.csv";

pub fn kg_file_name(dimension: usize, budget: u64, threshold: f64) -> String {
    format!("kg_D{dimension}_B{budget}_T{threshold}.tsv")
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    Ok(cfg.out_dir.join(name))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(BufReader::new(f))
}

fn parse_arg<T: std::str::FromStr<Err = kgperf_core::Error>>(what: &str, s: &str) -> Result<T> {
    s.parse::<T>().map_err(|e| UsageError(format!("--{what}: {e}")).into())
}

pub fn datagen(cfg: &RunConfig, count: Option<usize>) -> Result<()> {
    let mut configs = enumerate_configs(&cfg.modules)?
        .iter()
        .map(AlgorithmConfiguration::from_record)
        .collect::<kgperf_core::Result<Vec<_>>>()?;
    let n = count.unwrap_or(cfg.configs);
    if n > 0 {
        configs = subsample(&configs, n);
    }
    let problems = problem_suite(&cfg.functions, cfg.instances, cfg.dimension)?;
    let perf = collect_performance(&configs, &problems, &cfg.budgets, cfg.runs, cfg.seed_for("datagen"))?;

    let path = out_path(cfg, PERFORMANCE_CSV)?;
    write_performance_csv(&perf, create(&path)?)?;
    let records: Vec<_> = configs.iter().map(|c| c.record()).collect();
    write_config_tsv(&records, create(&out_path(cfg, CONFIGS_TSV)?)?)?;
    let problem_records: Vec<_> = problems.iter().map(|p| p.record()).collect();
    write_problems_tsv(&problem_records, create(&out_path(cfg, PROBLEMS_TSV)?)?)?;
    println!(
        "{} configurations x {} problems x {} runs -> {}",
        configs.len(),
        problems.len(),
        cfg.runs,
        path.display()
    );
    Ok(())
}

pub fn ela(cfg: &RunConfig, ingest: Option<&Path>) -> Result<()> {
    let table = match ingest {
        Some(path) => {
            let table = read_features_csv(open(path)?).with_context(|| format!("parsing {}", path.display()))?;
            validate_ingested(&table)?;
            table
        }
        None => {
            let design = cfg.sample_design();
            let mut table = FeatureTable::default();
            for p in problem_suite(&cfg.functions, cfg.instances, cfg.dimension)? {
                table.insert_vector(&p.id(), &problem_features(&design, &p)?);
            }
            table
        }
    };
    let path = out_path(cfg, FEATURES_CSV)?;
    write_features_csv(&table, create(&path)?)?;
    println!("{} problems -> {}", table.rows.len(), path.display());
    Ok(())
}

/// Every problem must carry the same nonempty feature set.
fn validate_ingested(table: &FeatureTable) -> Result<()> {
    let mut rows = table.rows.iter();
    let Some((_, first)) = rows.next() else {
        return Err(kgperf_core::Error::MissingData("features CSV has no rows".into()).into());
    };
    for (problem, row) in rows {
        if !row.keys().eq(first.keys()) {
            return Err(kgperf_core::Error::InvalidInput(format!(
                "problem {problem} has a different feature set than the first problem"
            ))
            .into());
        }
    }
    Ok(())
}

pub fn build(cfg: &RunConfig, budget: Option<u64>, threshold: Option<f64>) -> Result<()> {
    let input = |name: &str| cfg.out_dir.join(name);
    let perf = read_performance_csv(open(&input(PERFORMANCE_CSV))?)?;
    let configs = read_config_tsv(open(&input(CONFIGS_TSV))?)?;
    let problems = read_problems_tsv(open(&input(PROBLEMS_TSV))?)?;
    let features = read_features_csv(open(&input(FEATURES_CSV))?)?;
    let binned = bin_features(&features)?;

    let budgets = budget.map_or_else(|| cfg.budgets.clone(), |b| vec![b]);
    let thresholds = threshold.map_or_else(|| cfg.thresholds.clone(), |t| vec![t]);
    for &b in &budgets {
        for &t in &thresholds {
            let kg = build_kg(&configs, &problems, &binned, &perf, b, t)?;
            let path = out_path(cfg, &kg_file_name(cfg.dimension, b, t))?;
            write_kg(&kg, &path)?;
            let frac = solved_fraction(&perf, b, t).unwrap_or(f64::NAN);
            println!("{} ({} triples, {:.1}% solved)", path.display(), kg.len(), 100.0 * frac);
        }
    }
    Ok(())
}

fn load_kg(path: &Path) -> Result<KnowledgeGraph> {
    read_kg(path).with_context(|| format!("reading {}", path.display()))
}

fn split_spec(cfg: &RunConfig, scenario: Scenario) -> SplitSpec {
    let base = SplitSpec::new(scenario, cfg.seed_for("split"));
    SplitSpec {
        ratios: cfg.split_ratios,
        repeats: cfg.repeats.unwrap_or(base.repeats),
        ..base
    }
}

/// Training graph and validation set of the first fold of `scenario`.
fn first_fold(cfg: &RunConfig, kg: &KnowledgeGraph, scenario: &str) -> Result<(KnowledgeGraph, Validation)> {
    let scenario: Scenario = parse_arg("scenario", scenario)?;
    let split: Split = split_for(kg, &split_spec(cfg, scenario), 0)?;
    let labels: Vec<PerformanceLabel> = split.train.iter().filter_map(|t| kg.performance_label(t)).collect();
    let positive = majority_class(&labels)?;
    let kg_train = kg.descriptive_plus(split.train.iter().copied())?;
    let validation = Validation::from_triples(kg, &split.val, positive)?;
    Ok((kg_train, validation))
}

fn save_model(cfg: &RunConfig, model: &ComplExModel, history: &TrainHistory) -> Result<PathBuf> {
    let path = out_path(cfg, MODEL_FILE)?;
    model.save(&path).with_context(|| format!("writing {}", path.display()))?;
    let mut log = create(&out_path(cfg, TRAINING_LOG)?)?;
    write_training_log(history, &mut log)?;
    log.flush()?;
    Ok(path)
}

pub fn train(cfg: &RunConfig, kg_path: &Path, scenario: &str) -> Result<()> {
    let kg = load_kg(kg_path)?;
    let (kg_train, validation) = first_fold(cfg, &kg, scenario)?;
    let tc = cfg.train_config();
    let (model, history) = embed::train(&kg_train, &validation, &tc)?;
    let path = save_model(cfg, &model, &history)?;
    println!(
        "k={} lr={} loss={}: {} epochs, best validation F1 {:.4} at epoch {}{} -> {}",
        tc.k,
        tc.learning_rate,
        tc.loss,
        history.epochs_run,
        history.best_f1,
        history.best_epoch,
        if history.stopped_early { " (stopped early)" } else { "" },
        path.display()
    );
    Ok(())
}

pub fn gridsearch(cfg: &RunConfig, kg_path: &Path, scenario: &str) -> Result<()> {
    let kg = load_kg(kg_path)?;
    let (kg_train, validation) = first_fold(cfg, &kg, scenario)?;
    let grid = cfg.grid();
    let result = grid_search(&kg_train, &validation, &grid)?;
    let best = &result.results[result.best_index];
    let path = save_model(cfg, &result.model, &best.history)?;

    let mut w = csv::Writer::from_writer(create(&out_path(cfg, GRID_CSV)?)?);
    w.write_record(["k", "learning_rate", "loss", "best_f1", "best_epoch", "epochs_run"])?;
    for p in &result.results {
        w.write_record([
            p.config.k.to_string(),
            p.config.learning_rate.to_string(),
            p.config.loss.to_string(),
            p.best_f1.to_string(),
            p.history.best_epoch.to_string(),
            p.history.epochs_run.to_string(),
        ])?;
    }
    w.flush()?;
    println!(
        "trained {} models; best k={} lr={} loss={} with validation F1 {:.4} -> {}",
        result.results.len(),
        best.config.k,
        best.config.learning_rate,
        best.config.loss,
        best.best_f1,
        path.display()
    );
    Ok(())
}

fn rf_params(cfg: &RunConfig) -> RfParams {
    RfParams {
        n_trees: cfg.rf_trees,
        seed: cfg.seed_for("rf"),
        ..RfParams::default()
    }
}

pub fn eval(cfg: &RunConfig, kg_path: &Path, scenario: &str, pipeline: &str, fixed: bool) -> Result<()> {
    let kg = load_kg(kg_path)?;
    let scenario: Scenario = parse_arg("scenario", scenario)?;
    let pipelines = match pipeline {
        "both" => vec![Pipeline::Score, Pipeline::Rf],
        p => vec![parse_arg::<Pipeline>("pipeline", p)?],
    };
    let tuning = if fixed {
        Tuning::Fixed(cfg.train_config())
    } else {
        Tuning::Grid(cfg.grid())
    };
    let reports = run_scenario(&kg, &split_spec(cfg, scenario), &tuning, &pipelines, &rf_params(cfg))?;
    print!("{}", format_table(&reports));

    let mut w = create(&out_path(cfg, REPORT_CSV)?)?;
    write_report_csv(&reports, &mut w)?;
    w.flush()?;
    for r in &reports {
        let preds: Vec<Prediction> = r.folds.iter().flat_map(|f| f.predictions.iter().cloned()).collect();
        let mut w = create(&out_path(cfg, &format!("predictions_{}_{}.csv", scenario, r.pipeline.as_str()))?)?;
        write_predictions_csv(&preds, &mut w)?;
        w.flush()?;
    }
    Ok(())
}

pub fn read_queries(path: &Path) -> Result<Vec<(String, String)>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| kgperf_core::Error::MissingData(format!("{}: no {name} column", path.display())))
    };
    let (c, p) = (col("config_id")?, col("problem_id")?);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push((rec[c].to_string(), rec[p].to_string()));
    }
    Ok(out)
}

fn with_namespace(id: &str, namespace: &str, label: fn(&str) -> String) -> String {
    if schema::strip_namespace(id, namespace).is_some() {
        id.to_string()
    } else {
        label(id)
    }
}

fn bare(label: &str) -> String {
    label.split_once(':').map_or(label, |(_, rest)| rest).to_string()
}

pub fn predict(
    cfg: &RunConfig,
    model_path: &Path,
    kg_path: Option<&Path>,
    pipeline: &str,
    queries: &[(String, String)],
) -> Result<()> {
    let model = ComplExModel::load(model_path).with_context(|| format!("reading {}", model_path.display()))?;
    let pipeline: Pipeline = parse_arg("pipeline", pipeline)?;
    let mut resolved = Vec::with_capacity(queries.len());
    for (c, p) in queries {
        let alg = with_namespace(c, "alg", schema::algorithm_label);
        let prob = with_namespace(p, "problem", schema::problem_label);
        resolved.push(TripleQuery {
            algorithm: model.entity(&alg)?,
            problem: model.entity(&prob)?,
        });
    }

    let forest = match pipeline {
        Pipeline::Score => None,
        Pipeline::Rf => {
            let path = kg_path.ok_or_else(|| UsageError("--pipeline rf needs --kg".into()))?;
            let kg = load_kg(path)?;
            let mut x = Vec::new();
            let mut y = Vec::new();
            for t in kg.performance_triples() {
                let query = TripleQuery {
                    algorithm: model.entity(kg.entity_label(t.head))?,
                    problem: model.entity(kg.entity_label(t.tail))?,
                };
                x.push(pair_features(&model, query)?);
                y.push(kg.performance_label(&t).is_some_and(|l| l.is_solved()));
            }
            Some(RandomForest::train(&x, &y, &rf_params(cfg))?)
        }
    };

    let mut rows = Vec::with_capacity(resolved.len());
    for q in resolved {
        let (label, value) = match &forest {
            None => classify_by_score(&model, q)?,
            Some(f) => {
                let x = pair_features(&model, q)?;
                (PerformanceLabel::from_solved(f.predict(&x)?), f.predict_proba(&x)?)
            }
        };
        rows.push(Prediction {
            config_id: bare(model.entities().label(q.algorithm.0).unwrap_or_default()),
            problem_id: bare(model.entities().label(q.problem.0).unwrap_or_default()),
            predicted_label: label,
            score_or_proba: value,
        });
    }
    let stdout = std::io::stdout();
    write_predictions_csv(&rows, stdout.lock())?;
    let mut w = create(&out_path(cfg, "predictions.csv")?)?;
    write_predictions_csv(&rows, &mut w)?;
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kg_names() {
        assert_eq!(kg_file_name(5, 2000, 0.001), "kg_D5_B2000_T0.001.tsv");
        assert_eq!(kg_file_name(30, 50000, 10.0), "kg_D30_B50000_T10.tsv");
    }

    #[test]
    fn namespaces() {
        assert_eq!(with_namespace("modDE_0001", "alg", schema::algorithm_label), "alg:modDE_0001");
        assert_eq!(with_namespace("alg:modDE_0001", "alg", schema::algorithm_label), "alg:modDE_0001");
        assert_eq!(bare("problem:f1_i1_d5"), "f1_i1_d5");
    }
}
