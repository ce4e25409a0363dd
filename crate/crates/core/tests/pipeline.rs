use kgperf_core::benchgen::{collect_performance, modde_configs, problem_suite, subsample, threshold_for_fraction, Function};
use kgperf_core::ela::{bin_features, problem_features, FeatureTable, SampleDesign, N_BINS};
use kgperf_core::embed::{ComplExModel, Loss, TrainConfig};
use kgperf_core::eval::{fold_count, run_scenario, Pipeline, Scenario, SplitSpec, Tuning};
use kgperf_core::kg::{build_kg, read_kg, schema, write_kg, KnowledgeGraph};
use kgperf_core::predict::RfParams;

fn small_graph() -> KnowledgeGraph {
    let configs = subsample(&modde_configs(), 6);
    let problems = problem_suite(&[Function::Sphere, Function::Rastrigin], 3, 2).unwrap();
    let perf = collect_performance(&configs, &problems, &[200, 400], 3, 5).unwrap();
    let mut table = FeatureTable::default();
    for p in &problems {
        table.insert_vector(&p.id(), &problem_features(&SampleDesign::default(), p).unwrap());
    }
    let binned = bin_features(&table).unwrap();
    let crec: Vec<_> = configs.iter().map(|c| c.record()).collect();
    let prec: Vec<_> = problems.iter().map(|p| p.record()).collect();
    let t = threshold_for_fraction(&perf, 400, 0.3, 0.7).expect("a balanced threshold exists");
    build_kg(&crec, &prec, &binned, &perf, 400, t).unwrap()
}

fn quick() -> TrainConfig {
    TrainConfig {
        k: 6,
        learning_rate: 1e-2,
        loss: Loss::Pairwise,
        max_epochs: 40,
        burn_in: 10,
        ..TrainConfig::default()
    }
}

#[test]
fn generated_graph_has_the_expected_shape() {
    let kg = small_graph();
    assert_eq!(kg.performance_triples().len(), 6 * 6);
    let bins = kg.relation(schema::HAS_FEATURE_BIN).unwrap();
    assert_eq!(kg.with_relation(bins).count(), 6 * 7);
    for t in kg.with_relation(bins) {
        let label = kg.entity_label(t.tail);
        let bin: u8 = label.rsplit('_').next().unwrap().parse().unwrap();
        assert!(bin < N_BINS, "{label}");
    }
}

#[test]
fn graph_and_model_survive_files() {
    let dir = tempfile::tempdir().unwrap();
    let kg = small_graph();
    let path = dir.path().join("kg.tsv");
    write_kg(&kg, &path).unwrap();
    let back = read_kg(&path).unwrap();
    assert_eq!(back, kg);

    let model = ComplExModel::init(&back, 4, Loss::Nll, 3).unwrap();
    let mpath = dir.path().join("model.txt");
    model.save(&mpath).unwrap();
    let loaded = ComplExModel::load(&mpath).unwrap();
    for t in back.triples() {
        assert_eq!(model.score_triple(t), loaded.score_triple(t));
    }
}

#[test]
fn every_scenario_runs_both_pipelines() {
    let kg = small_graph();
    for scenario in Scenario::ALL {
        let spec = SplitSpec {
            repeats: 3,
            ..SplitSpec::new(scenario, 2)
        };
        let reports = run_scenario(&kg, &spec, &Tuning::Fixed(quick()), &[Pipeline::Score, Pipeline::Rf], &RfParams::default())
            .unwrap();
        let folds = fold_count(&kg, &spec).unwrap();
        for r in &reports {
            assert_eq!(r.folds.len(), folds, "{}", r.key());
            for f in &r.folds {
                assert_eq!(f.predictions.len(), f.test_labels.len());
                let m = f.metrics;
                assert!((0.0..=1.0).contains(&m.f1_majority));
                assert!(m.baseline_auc.is_nan() || m.baseline_auc == 0.5);
            }
        }
        // the forest's ranking is a probability
        for f in &reports[1].folds {
            assert!(f.predictions.iter().all(|p| (0.0..=1.0).contains(&p.score_or_proba)));
        }
    }
}

#[test]
fn grid_tuning_picks_a_grid_point() {
    let kg = small_graph();
    let grid: Vec<TrainConfig> = [4, 8].iter().map(|&k| TrainConfig { k, ..quick() }).collect();
    let spec = SplitSpec::new(Scenario::RandomStratified, 1);
    let reports = run_scenario(&kg, &spec, &Tuning::Grid(grid), &[Pipeline::Score], &RfParams::default()).unwrap();
    let chosen = reports[0].folds[0].config.k;
    assert!(chosen == 4 || chosen == 8);
}
