//! Adam, the epoch loop with early stopping, and grid search.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{accumulate, sample_negatives_into, Gradients, LossParams};
use super::{ComplExModel, Loss};
use crate::error::{Error, Result};
use crate::eval::f1;
use crate::kg::{schema, EntityId, KnowledgeGraph, PerformanceLabel, RelationId, Triple};
use crate::predict::classify_scores;
use crate::seed::SeedMixer;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub k: usize,
    pub learning_rate: f64,
    pub loss: Loss,
    pub max_epochs: usize,
    pub patience: usize,
    /// Epochs trained before the first validation check.
    pub burn_in: usize,
    /// Negatives per positive.
    pub eta: usize,
    pub batch_size: usize,
    pub margin: f64,
    /// Softmax temperature of the self-adversarial weights.
    pub temperature: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 100,
            learning_rate: 1e-3,
            loss: Loss::Nll,
            max_epochs: 500,
            patience: 10,
            burn_in: 100,
            eta: 10,
            batch_size: 512,
            margin: 1.0,
            temperature: 1.0,
            l2: 0.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.k > 0
            && self.max_epochs > 0
            && self.patience > 0
            && self.eta > 0
            && self.batch_size > 0
            && self.learning_rate > 0.0
            && self.margin > 0.0
            && self.temperature > 0.0;
        if !positive || !(self.l2 >= 0.0) {
            return Err(Error::Config(format!("training parameters must be positive: {self:?}")));
        }
        Ok(())
    }

    pub fn loss_params(&self) -> LossParams {
        LossParams {
            loss: self.loss,
            margin: self.margin,
            temperature: self.temperature,
            l2: self.l2,
        }
    }
}

/// k ∈ {50, 100, 150, 200} × lr ∈ {1e-3, 1e-4} × the three losses, in that
/// nesting order; other fields come from `base`.
pub fn default_grid(base: &TrainConfig) -> Vec<TrainConfig> {
    let mut out = Vec::with_capacity(24);
    for k in [50, 100, 150, 200] {
        for learning_rate in [1e-3, 1e-4] {
            for loss in Loss::ALL {
                out.push(TrainConfig {
                    k,
                    learning_rate,
                    loss,
                    ..base.clone()
                });
            }
        }
    }
    out
}

/// First- and second-moment estimates for both tables. Updates are lazy: only
/// rows with gradient in the current batch move, bias-corrected by the global
/// step count.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_entity: Vec<f64>,
    v_entity: Vec<f64>,
    m_relation: Vec<f64>,
    v_relation: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// One Adam update of `params` at step `t` (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    params: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    t: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    let c1 = 1.0 - beta1.powi(t as i32);
    let c2 = 1.0 - beta2.powi(t as i32);
    for i in 0..params.len() {
        let g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        params[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
    }
}

impl AdamState {
    pub fn new(model: &ComplExModel) -> Self {
        AdamState {
            m_entity: vec![0.0; model.entity_table().len()],
            v_entity: vec![0.0; model.entity_table().len()],
            m_relation: vec![0.0; model.relation_table().len()],
            v_relation: vec![0.0; model.relation_table().len()],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn apply(&mut self, model: &mut ComplExModel, grads: &Gradients, lr: f64) {
        self.step += 1;
        let w = 2 * model.k();
        let (b1, b2, eps, t) = (self.beta1, self.beta2, self.eps, self.step);
        let (et, rt) = model.tables_mut();
        for &e in &grads.touched_entities {
            let span = e as usize * w..(e as usize + 1) * w;
            adam_update(
                &mut et[span.clone()],
                grads.entity_row(e),
                &mut self.m_entity[span.clone()],
                &mut self.v_entity[span],
                lr,
                t,
                b1,
                b2,
                eps,
            );
        }
        for &r in &grads.touched_relations {
            let span = r as usize * w..(r as usize + 1) * w;
            adam_update(
                &mut rt[span.clone()],
                grads.relation_row(r),
                &mut self.m_relation[span.clone()],
                &mut self.v_relation[span],
                lr,
                t,
                b1,
                b2,
                eps,
            );
        }
    }
}

/// Labeled (algorithm, problem) queries scored after every epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub queries: Vec<(EntityId, EntityId)>,
    pub labels: Vec<PerformanceLabel>,
    /// Class treated as positive when computing F1.
    pub positive: PerformanceLabel,
}

impl Validation {
    pub fn empty() -> Self {
        Validation {
            queries: Vec::new(),
            labels: Vec::new(),
            positive: PerformanceLabel::Solved,
        }
    }

    /// Queries and labels of performance triples of `kg`.
    pub fn from_triples(kg: &KnowledgeGraph, triples: &[Triple], positive: PerformanceLabel) -> Result<Self> {
        let mut queries = Vec::with_capacity(triples.len());
        let mut labels = Vec::with_capacity(triples.len());
        for t in triples {
            let label = kg.performance_label(t).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "validation triple uses non-performance relation {}",
                    kg.relation_label(t.relation)
                ))
            })?;
            queries.push((t.head, t.tail));
            labels.push(label);
        }
        Ok(Validation {
            queries,
            labels,
            positive,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// F1 of the score classifier on these queries.
    pub fn f1(&self, model: &ComplExModel, solved: RelationId, not_solved: RelationId) -> f64 {
        let preds: Vec<PerformanceLabel> = self
            .queries
            .iter()
            .map(|&(a, p)| classify_scores(model.score(a, solved, p), model.score(a, not_solved, p)).0)
            .collect();
        f1(&self.labels, &preds, self.positive)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub check_index: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainHistory {
    pub checks: Vec<ValidationCheck>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_f1: f64,
    pub stopped_early: bool,
    pub epochs_run: usize,
}

/// Trains on every triple of `kg`. From epoch `min(burn_in, max_epochs)` on,
/// the validation F1 is recorded after every epoch; training stops once
/// `patience` consecutive checks fail to beat the best F1, and the best
/// check's parameters are returned. With an empty validation set all epochs
/// run and the last parameters are returned.
pub fn train(kg: &KnowledgeGraph, validation: &Validation, cfg: &TrainConfig) -> Result<(ComplExModel, TrainHistory)> {
    cfg.validate()?;
    if kg.is_empty() {
        return Err(Error::InvalidInput("training graph has no triples".into()));
    }
    let solved = kg.relation(schema::SOLVED).expect("schema relation");
    let not_solved = kg.relation(schema::NOT_SOLVED).expect("schema relation");
    for &(a, p) in &validation.queries {
        if a.index() >= kg.entities().len() || p.index() >= kg.entities().len() {
            return Err(Error::Referential("validation query uses an unknown entity".into()));
        }
    }

    let mut model = ComplExModel::init(kg, cfg.k, cfg.loss, cfg.seed)?;
    let mut adam = AdamState::new(&model);
    let mut grads = Gradients::new(&model);
    let params = cfg.loss_params();
    let mut rng = SeedMixer::new(cfg.seed).str("train").rng();
    let mut order: Vec<Triple> = kg.triples().to_vec();
    let mut negatives = Vec::with_capacity(cfg.batch_size * cfg.eta);

    let mut history = TrainHistory {
        checks: Vec::new(),
        best_epoch: 0,
        best_f1: f64::NEG_INFINITY,
        stopped_early: false,
        epochs_run: 0,
    };
    let mut best_tables: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            negatives.clear();
            for t in batch {
                sample_negatives_into(t, kg, cfg.eta, &mut rng, &mut negatives);
            }
            grads.clear();
            epoch_loss += accumulate(&model, batch, &negatives, &params, &mut grads)?;
            adam.apply(&mut model, &grads, cfg.learning_rate);
        }
        history.epochs_run = epoch;
        if epoch < cfg.burn_in.min(cfg.max_epochs) {
            continue;
        }
        let check_index = history.checks.len();
        if validation.is_empty() {
            history.checks.push(ValidationCheck {
                check_index,
                epoch,
                train_loss: epoch_loss,
                val_f1: f64::NAN,
            });
            history.best_epoch = epoch;
            continue;
        }
        let val_f1 = validation.f1(&model, solved, not_solved);
        history.checks.push(ValidationCheck {
            check_index,
            epoch,
            train_loss: epoch_loss,
            val_f1,
        });
        if val_f1 > history.best_f1 {
            history.best_f1 = val_f1;
            history.best_epoch = epoch;
            best_tables = Some((model.entity_table().to_vec(), model.relation_table().to_vec()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = epoch < cfg.max_epochs;
                break;
            }
        }
    }
    if let Some((et, rt)) = best_tables {
        model.set_tables(et, rt);
    }
    if validation.is_empty() {
        history.best_f1 = f64::NAN;
    }
    Ok((model, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub config: TrainConfig,
    pub best_f1: f64,
    pub history: TrainHistory,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_index: usize,
    pub model: ComplExModel,
    pub results: Vec<GridPoint>,
}

impl GridSearchResult {
    pub fn best_config(&self) -> &TrainConfig {
        &self.results[self.best_index].config
    }
}

/// Trains every grid point (in parallel) and keeps the one with the highest
/// validation F1; ties go to the earliest point.
pub fn grid_search(kg: &KnowledgeGraph, validation: &Validation, grid: &[TrainConfig]) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let trained = grid
        .par_iter()
        .map(|cfg| train(kg, validation, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut best_index = 0;
    for (i, (_, h)) in trained.iter().enumerate() {
        if h.best_f1 > trained[best_index].1.best_f1 {
            best_index = i;
        }
    }
    let mut model = None;
    let mut results = Vec::with_capacity(grid.len());
    for (i, (m, history)) in trained.into_iter().enumerate() {
        if i == best_index {
            model = Some(m);
        }
        results.push(GridPoint {
            config: grid[i].clone(),
            best_f1: history.best_f1,
            history,
        });
    }
    Ok(GridSearchResult {
        best_index,
        model: model.expect("best index is in range"),
        results,
    })
}

/// Training log CSV: `check_index,epoch,train_loss,val_f1`.
pub fn write_training_log(history: &TrainHistory, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in &history.checks {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_training_log(input: impl Read) -> Result<Vec<ValidationCheck>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize::<ValidationCheck>()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::parse(i + 2, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Four configurations split by one module flag; flag on solves every
    /// problem, flag off solves none.
    fn separable_kg() -> (KnowledgeGraph, Vec<Triple>) {
        let mut kg = KnowledgeGraph::new();
        for (a, flag) in [("alg:a0", "on"), ("alg:a1", "on"), ("alg:a2", "off"), ("alg:a3", "off")] {
            kg.insert(a, "has_module_setting", &format!("module:flag={flag}")).unwrap();
            for p in ["problem:p0", "problem:p1", "problem:p2", "problem:p3"] {
                let rel = if flag == "on" { "solved" } else { "not_solved" };
                kg.insert(a, rel, p).unwrap();
            }
        }
        let perf = kg.performance_triples();
        (kg, perf)
    }

    #[test]
    fn adam_zero_gradient_is_a_no_op() {
        let mut p = vec![0.3, -1.2];
        let mut m = vec![0.0; 2];
        let mut v = vec![0.0; 2];
        adam_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1e-2, 1, 0.9, 0.999, 1e-8);
        assert_eq!(p, vec![0.3, -1.2]);
    }

    #[test]
    fn adam_step_descends_a_quadratic() {
        for lr in [1e-4, 1e-3, 1e-2] {
            let mut x = [2.0];
            let mut m = [0.0];
            let mut v = [0.0];
            let before = x[0] * x[0];
            let g = [2.0 * x[0]];
            adam_update(&mut x, &g, &mut m, &mut v, lr, 1, 0.9, 0.999, 1e-8);
            assert!(x[0] * x[0] < before);
        }
    }

    #[test]
    fn default_grid_has_24_points() {
        let g = default_grid(&TrainConfig::default());
        assert_eq!(g.len(), 24);
        assert_eq!((g[0].k, g[0].learning_rate, g[0].loss), (50, 1e-3, Loss::Pairwise));
        assert_eq!((g[23].k, g[23].learning_rate, g[23].loss), (200, 1e-4, Loss::SelfAdversarial));
    }

    #[test]
    fn empty_graph_is_an_error() {
        let kg = KnowledgeGraph::new();
        assert!(train(&kg, &Validation::empty(), &TrainConfig::default()).is_err());
    }

    #[test]
    fn one_epoch_records_one_check() {
        let (kg, perf) = separable_kg();
        let val = Validation::from_triples(&kg, &perf, PerformanceLabel::Solved).unwrap();
        let cfg = TrainConfig {
            k: 4,
            max_epochs: 1,
            ..Default::default()
        };
        let (_, h) = train(&kg, &val, &cfg).unwrap();
        assert_eq!(h.checks.len(), 1);
        assert_eq!(h.epochs_run, 1);
        assert!(!h.stopped_early);
    }

    #[test]
    fn separable_graph_is_learned() {
        let (kg, perf) = separable_kg();
        let val = Validation::from_triples(&kg, &perf, PerformanceLabel::Solved).unwrap();
        let cfg = TrainConfig {
            k: 50,
            learning_rate: 1e-3,
            loss: Loss::Nll,
            max_epochs: 200,
            patience: 200,
            ..Default::default()
        };
        let (model, h) = train(&kg, &val, &cfg).unwrap();
        assert_eq!(h.best_f1, 1.0, "{:?}", h.checks.last());
        let solved = kg.relation("solved").unwrap();
        let not_solved = kg.relation("not_solved").unwrap();
        assert_eq!(val.f1(&model, solved, not_solved), 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let (kg, perf) = separable_kg();
        let val = Validation::from_triples(&kg, &perf, PerformanceLabel::Solved).unwrap();
        let cfg = TrainConfig {
            k: 6,
            max_epochs: 15,
            loss: Loss::SelfAdversarial,
            ..Default::default()
        };
        let (a, ha) = train(&kg, &val, &cfg).unwrap();
        let (b, hb) = train(&kg, &val, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
    }

    #[test]
    fn early_stopping_restores_the_best_check() {
        let (kg, perf) = separable_kg();
        // labels inverted on half the queries so F1 plateaus below 1
        let mut val = Validation::from_triples(&kg, &perf, PerformanceLabel::Solved).unwrap();
        for l in val.labels.iter_mut().step_by(2) {
            *l = l.opposite();
        }
        let solved = kg.relation("solved").unwrap();
        let not_solved = kg.relation("not_solved").unwrap();
        for seed in 0..4 {
            let cfg = TrainConfig {
                k: 4,
                max_epochs: 300,
                patience: 5,
                seed,
                ..Default::default()
            };
            let (model, h) = train(&kg, &val, &cfg).unwrap();
            let max = h.checks.iter().map(|c| c.val_f1).fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(h.best_f1, max);
            let first = h.checks.iter().find(|c| c.val_f1 == max).unwrap();
            assert_eq!(first.epoch, h.best_epoch);
            if h.stopped_early {
                assert!(h.epochs_run <= h.best_epoch + cfg.patience);
            }
            assert_eq!(val.f1(&model, solved, not_solved), h.best_f1);
        }
    }

    #[test]
    fn grid_search_picks_the_max() {
        let (kg, perf) = separable_kg();
        let val = Validation::from_triples(&kg, &perf, PerformanceLabel::Solved).unwrap();
        let base = TrainConfig {
            max_epochs: 5,
            ..Default::default()
        };
        let grid: Vec<TrainConfig> = [2, 4, 8]
            .into_iter()
            .map(|k| TrainConfig { k, ..base.clone() })
            .collect();
        let r = grid_search(&kg, &val, &grid).unwrap();
        let max = r.results.iter().map(|p| p.best_f1).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.results[r.best_index].best_f1, max);
        assert!(r.results[..r.best_index].iter().all(|p| p.best_f1 < max));
        assert_eq!(r.model.k(), r.best_config().k);

        let single = grid_search(&kg, &val, &grid[..1]).unwrap();
        assert_eq!(single.best_config(), &grid[0]);
        assert!(grid_search(&kg, &val, &[]).is_err());
    }

    #[test]
    fn training_log_round_trip() {
        let h = TrainHistory {
            checks: vec![
                ValidationCheck { check_index: 0, epoch: 1, train_loss: 12.5, val_f1: 0.25 },
                ValidationCheck { check_index: 1, epoch: 2, train_loss: 0.1 + 0.2, val_f1: 2.0 / 3.0 },
            ],
            best_epoch: 2,
            best_f1: 2.0 / 3.0,
            stopped_early: false,
            epochs_run: 2,
        };
        let mut buf = Vec::new();
        write_training_log(&h, &mut buf).unwrap();
        assert!(buf.starts_with(b"check_index,epoch,train_loss,val_f1\n"));
        assert_eq!(read_training_log(&buf[..]).unwrap(), h.checks);
    }

    #[test]
    fn validation_rejects_descriptive_triples() {
        let (kg, _) = separable_kg();
        let desc: Vec<Triple> = kg.filtered(|t| kg.performance_label(t).is_none()).triples().to_vec();
        assert!(Validation::from_triples(&kg, &desc, PerformanceLabel::Solved).is_err());
    }
}
