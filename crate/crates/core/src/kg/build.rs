use std::collections::{HashMap, HashSet};

use super::schema::{self, PerformanceLabel};
use super::KnowledgeGraph;
use crate::benchgen::PerformanceRecord;
use crate::ela::BinnedFeatureTable;
use crate::error::{Error, Result};

/// An algorithm configuration as seen by the graph: an id, the family it
/// instantiates, and one value per module.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigurationRecord {
    pub id: String,
    pub family: String,
    pub settings: Vec<(String, String)>,
}

impl ConfigurationRecord {
    /// Family name inferred from an id like `modDE_0417` (everything before
    /// the last underscore).
    pub fn family_of(id: &str) -> &str {
        id.rsplit_once('_').map_or(id, |(family, _)| family)
    }
}

/// A problem instance as seen by the graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemRecord {
    pub id: String,
    pub function: String,
    pub instance: u32,
    pub class: String,
}

/// Assembles the knowledge graph for one (budget, threshold) setting.
///
/// Every (configuration, problem) pair must have exactly one performance
/// record; it becomes a `solved` edge when the median precision at `budget`
/// is at most `threshold`, otherwise a `not_solved` edge.
pub fn build_kg(
    configs: &[ConfigurationRecord],
    problems: &[ProblemRecord],
    features: &BinnedFeatureTable,
    perf: &[PerformanceRecord],
    budget: u64,
    threshold: f64,
) -> Result<KnowledgeGraph> {
    if budget == 0 {
        return Err(Error::Config("budget must be positive".into()));
    }
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("threshold must be positive, got {threshold}")));
    }

    let config_index: HashMap<&str, usize> =
        configs.iter().enumerate().map(|(i, c)| (c.id.as_str(), i)).collect();
    if config_index.len() != configs.len() {
        return Err(Error::InvalidInput("duplicate configuration id".into()));
    }
    let problem_index: HashMap<&str, usize> =
        problems.iter().enumerate().map(|(i, p)| (p.id.as_str(), i)).collect();
    if problem_index.len() != problems.len() {
        return Err(Error::InvalidInput("duplicate problem id".into()));
    }

    let mut labels: HashMap<(usize, usize), PerformanceLabel> = HashMap::new();
    for rec in perf {
        let c = *config_index.get(rec.config_id.as_str()).ok_or_else(|| {
            Error::Referential(format!("unknown configuration {:?}", rec.config_id))
        })?;
        let p = *problem_index.get(rec.problem_id.as_str()).ok_or_else(|| {
            Error::Referential(format!("unknown problem {:?}", rec.problem_id))
        })?;
        let precision = rec.precision_at(budget).ok_or_else(|| {
            Error::MissingData(format!(
                "no precision at budget {budget} for ({}, {})",
                rec.config_id, rec.problem_id
            ))
        })?;
        let label = PerformanceLabel::from_solved(precision <= threshold);
        if labels.insert((c, p), label).is_some() {
            return Err(Error::InvalidInput(format!(
                "duplicate performance record for ({}, {})",
                rec.config_id, rec.problem_id
            )));
        }
    }

    let mut kg = KnowledgeGraph::new();
    for c in configs {
        let alg = schema::algorithm_label(&c.id);
        kg.insert(&alg, schema::IS_CONFIGURATION_OF, &schema::family_label(&c.family))?;
        let mut seen = HashSet::new();
        for (module, value) in &c.settings {
            if !seen.insert(module) {
                return Err(Error::InvalidInput(format!(
                    "configuration {} sets module {module} twice",
                    c.id
                )));
            }
            kg.insert(&alg, schema::HAS_MODULE_SETTING, &schema::module_label(module, value))?;
        }
    }
    for p in problems {
        let prob = schema::problem_label(&p.id);
        kg.insert(&prob, schema::INSTANCE_OF_PROBLEM, &schema::function_label(&p.function))?;
        kg.insert(&prob, schema::HAS_PROBLEM_CLASS, &schema::class_label(&p.class))?;
        for (feature, bin) in features.bins_for(&p.id) {
            kg.insert(&prob, schema::HAS_FEATURE_BIN, &schema::feature_bin_label(feature, bin))?;
        }
    }
    for (ci, c) in configs.iter().enumerate() {
        let alg = schema::algorithm_label(&c.id);
        for (pi, p) in problems.iter().enumerate() {
            let label = labels.get(&(ci, pi)).ok_or_else(|| {
                Error::MissingData(format!("no performance record for ({}, {})", c.id, p.id))
            })?;
            kg.insert(&alg, label.relation_label(), &schema::problem_label(&p.id))?;
        }
    }
    Ok(kg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn config(id: &str, crossover: &str) -> ConfigurationRecord {
        ConfigurationRecord {
            id: id.into(),
            family: "modDE".into(),
            settings: vec![("crossover".into(), crossover.into())],
        }
    }

    fn problem(id: &str) -> ProblemRecord {
        let (function, instance, _) = schema::parse_problem_id(id).unwrap();
        ProblemRecord {
            id: id.into(),
            function,
            instance,
            class: "separable".into(),
        }
    }

    fn record(c: &str, p: &str, values: &[(u64, f64)]) -> PerformanceRecord {
        PerformanceRecord {
            config_id: c.into(),
            problem_id: p.into(),
            median_precision: values.iter().copied().collect::<BTreeMap<_, _>>(),
        }
    }

    fn solved_pairs(kg: &KnowledgeGraph) -> Vec<(String, String)> {
        let rel = kg.relation(schema::SOLVED).unwrap();
        kg.with_relation(rel)
            .map(|t| (kg.entity_label(t.head).to_string(), kg.entity_label(t.tail).to_string()))
            .collect()
    }

    #[test]
    fn threshold_boundary_counts_as_solved() {
        let configs = [config("modDE_0000", "bin")];
        let problems = [problem("f1_i1_d2"), problem("f1_i2_d2"), problem("f1_i3_d2")];
        let perf = [
            record("modDE_0000", "f1_i1_d2", &[(100, 0.05)]),
            record("modDE_0000", "f1_i2_d2", &[(100, 0.1)]),
            record("modDE_0000", "f1_i3_d2", &[(100, 0.2)]),
        ];
        let kg = build_kg(&configs, &problems, &BinnedFeatureTable::default(), &perf, 100, 0.1).unwrap();
        let solved = solved_pairs(&kg);
        assert_eq!(solved.len(), 2);
        assert!(solved.contains(&("alg:modDE_0000".into(), "problem:f1_i2_d2".into())));
        assert_eq!(kg.performance_triples().len(), 3);
    }

    #[test]
    fn emits_descriptive_edges() {
        let configs = [config("modDE_0000", "bin"), config("modDE_0001", "exp")];
        let problems = [problem("f1_i1_d2")];
        let perf = [
            record("modDE_0000", "f1_i1_d2", &[(100, 1.0)]),
            record("modDE_0001", "f1_i1_d2", &[(100, 1.0)]),
        ];
        let kg = build_kg(&configs, &problems, &BinnedFeatureTable::default(), &perf, 100, 0.1).unwrap();
        let rel = kg.relation(schema::HAS_MODULE_SETTING).unwrap();
        assert_eq!(kg.with_relation(rel).count(), 2);
        let rel = kg.relation(schema::IS_CONFIGURATION_OF).unwrap();
        assert_eq!(kg.with_relation(rel).count(), 2);
        assert!(kg.entity("family:modDE").is_some());
        assert!(kg.entity("class:separable").is_some());
        assert!(kg.entity("function:f1").is_some());
    }

    #[test]
    fn unknown_reference_is_referential_error() {
        let configs = [config("modDE_0000", "bin")];
        let problems = [problem("f1_i1_d2")];
        let perf = [record("modDE_9999", "f1_i1_d2", &[(100, 1.0)])];
        let err = build_kg(&configs, &problems, &BinnedFeatureTable::default(), &perf, 100, 0.1).unwrap_err();
        assert!(matches!(err, Error::Referential(_)));
        let perf = [record("modDE_0000", "f9_i1_d2", &[(100, 1.0)])];
        let err = build_kg(&configs, &problems, &BinnedFeatureTable::default(), &perf, 100, 0.1).unwrap_err();
        assert!(matches!(err, Error::Referential(_)));
    }

    #[test]
    fn missing_budget_is_missing_data() {
        let configs = [config("modDE_0000", "bin")];
        let problems = [problem("f1_i1_d2")];
        let perf = [record("modDE_0000", "f1_i1_d2", &[(100, 1.0)])];
        let err = build_kg(&configs, &problems, &BinnedFeatureTable::default(), &perf, 200, 0.1).unwrap_err();
        assert!(matches!(err, Error::MissingData(_)));
    }

    #[test]
    fn missing_pair_is_missing_data() {
        let configs = [config("modDE_0000", "bin")];
        let problems = [problem("f1_i1_d2"), problem("f1_i2_d2")];
        let perf = [record("modDE_0000", "f1_i1_d2", &[(100, 1.0)])];
        let err = build_kg(&configs, &problems, &BinnedFeatureTable::default(), &perf, 100, 0.1).unwrap_err();
        assert!(matches!(err, Error::MissingData(_)));
    }

    #[test]
    fn family_from_id() {
        assert_eq!(ConfigurationRecord::family_of("modDE_0417"), "modDE");
        assert_eq!(ConfigurationRecord::family_of("modCMA_0003"), "modCMA");
        assert_eq!(ConfigurationRecord::family_of("plain"), "plain");
    }
}
