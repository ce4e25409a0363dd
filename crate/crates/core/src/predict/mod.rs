//! Triple classification by score comparison, and a random forest over
//! concatenated entity embeddings.

mod forest;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::embed::ComplExModel;
use crate::error::{Error, Result};
use crate::kg::{schema, EntityId, PerformanceLabel};

pub use forest::{gini, DecisionTree, MaxFeatures, Node, RandomForest, RfParams};

/// An (algorithm, problem) pair with an unknown performance relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TripleQuery {
    pub algorithm: EntityId,
    pub problem: EntityId,
}

/// `solved` iff its score is strictly larger; the margin is the difference.
#[inline]
pub fn classify_scores(solved: f64, not_solved: f64) -> (PerformanceLabel, f64) {
    let margin = solved - not_solved;
    (PerformanceLabel::from_solved(margin > 0.0), margin)
}

fn check_entity(model: &ComplExModel, e: EntityId) -> Result<()> {
    if e.index() >= model.entities().len() {
        return Err(Error::Referential(format!("entity handle {} is not in the model", e.0)));
    }
    Ok(())
}

pub fn classify_by_score(model: &ComplExModel, query: TripleQuery) -> Result<(PerformanceLabel, f64)> {
    check_entity(model, query.algorithm)?;
    check_entity(model, query.problem)?;
    let solved = model.relation(schema::SOLVED)?;
    let not_solved = model.relation(schema::NOT_SOLVED)?;
    Ok(classify_scores(
        model.score(query.algorithm, solved, query.problem),
        model.score(query.algorithm, not_solved, query.problem),
    ))
}

/// `[Re(a) ∥ Im(a) ∥ Re(p) ∥ Im(p)]`, length 4k.
pub fn pair_features(model: &ComplExModel, query: TripleQuery) -> Result<Vec<f64>> {
    check_entity(model, query.algorithm)?;
    check_entity(model, query.problem)?;
    let mut out = Vec::with_capacity(4 * model.k());
    out.extend_from_slice(model.entity_row(query.algorithm));
    out.extend_from_slice(model.entity_row(query.problem));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub config_id: String,
    pub problem_id: String,
    pub predicted_label: PerformanceLabel,
    /// Score margin for the score classifier, solved probability for the forest.
    pub score_or_proba: f64,
}

/// Predictions CSV: `config_id,problem_id,predicted_label,score_or_proba`.
pub fn write_predictions_csv(rows: &[Prediction], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_predictions_csv(input: impl Read) -> Result<Vec<Prediction>> {
    let mut rdr = csv::Reader::from_reader(input);
    rdr.deserialize::<Prediction>()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| Error::parse(i + 2, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Vocab;

    fn model(k: usize, rows: &[&[f64]]) -> ComplExModel {
        let mut ents = Vocab::new();
        for i in 0..rows.len() {
            ents.intern(&format!("e{i}")).unwrap();
        }
        let mut rels = Vocab::new();
        rels.intern(schema::SOLVED).unwrap();
        rels.intern(schema::NOT_SOLVED).unwrap();
        let rt = (0..4 * k).map(|i| i as f64 * 0.1 - 0.3).collect();
        ComplExModel::from_tables(k, ents, rels, rows.concat(), rt).unwrap()
    }

    #[test]
    fn score_rule_and_tie_break() {
        assert_eq!(classify_scores(2.0, 1.0), (PerformanceLabel::Solved, 1.0));
        assert_eq!(classify_scores(1.5, 1.5).0, PerformanceLabel::NotSolved);
        for c in [-10.0, 0.0, 3.5, 1e6] {
            assert_eq!(classify_scores(2.0 + c, 1.0 + c).0, PerformanceLabel::Solved);
            assert_eq!(classify_scores(1.0 + c, 2.0 + c).0, PerformanceLabel::NotSolved);
        }
    }

    #[test]
    fn pair_feature_layout() {
        let m = model(1, &[&[1.0, 2.0], &[3.0, 4.0], &[5.0, 6.0]]);
        let q = TripleQuery { algorithm: EntityId(0), problem: EntityId(1) };
        assert_eq!(pair_features(&m, q).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        let q2 = TripleQuery { algorithm: EntityId(0), problem: EntityId(2) };
        let (a, b) = (pair_features(&m, q).unwrap(), pair_features(&m, q2).unwrap());
        assert_eq!(a[..2], b[..2]);
        assert!(a[2..].iter().zip(&b[2..]).all(|(x, y)| x != y));
    }

    #[test]
    fn unknown_entity_is_referential() {
        let m = model(1, &[&[1.0, 2.0]]);
        let q = TripleQuery { algorithm: EntityId(0), problem: EntityId(5) };
        assert!(matches!(classify_by_score(&m, q), Err(Error::Referential(_))));
        assert!(matches!(pair_features(&m, q), Err(Error::Referential(_))));
    }

    #[test]
    fn classify_by_score_uses_both_relations() {
        let m = model(2, &[&[0.3, -0.2, 0.5, 0.1], &[-0.4, 0.9, 0.2, 0.7]]);
        let q = TripleQuery { algorithm: EntityId(0), problem: EntityId(1) };
        let (label, margin) = classify_by_score(&m, q).unwrap();
        let s = m.score_labels("e0", schema::SOLVED, "e1").unwrap();
        let n = m.score_labels("e0", schema::NOT_SOLVED, "e1").unwrap();
        assert_eq!(margin, s - n);
        assert_eq!(label.is_solved(), s > n);
    }

    #[test]
    fn predictions_csv_round_trip() {
        let rows = vec![
            Prediction {
                config_id: "modDE_0001".into(),
                problem_id: "f1_i1_d5".into(),
                predicted_label: PerformanceLabel::Solved,
                score_or_proba: 0.1 + 0.2,
            },
            Prediction {
                config_id: "modDE_0002".into(),
                problem_id: "f1_i2_d5".into(),
                predicted_label: PerformanceLabel::NotSolved,
                score_or_proba: -1.0e-7,
            },
        ];
        let mut buf = Vec::new();
        write_predictions_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("config_id,problem_id,predicted_label,score_or_proba\n"));
        assert!(text.contains(",not_solved,"));
        assert_eq!(read_predictions_csv(&buf[..]).unwrap(), rows);
    }
}
