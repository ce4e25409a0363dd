//! Train/validation/test partitions of the performance triples.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::kg::{schema, EntityId, KnowledgeGraph, PerformanceLabel, Triple};
use crate::seed::SeedMixer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scenario {
    RandomStratified,
    LeaveProblemInstancesOut,
    LeaveAlgorithmConfigsOut,
}

impl Scenario {
    pub const ALL: [Scenario; 3] = [
        Scenario::RandomStratified,
        Scenario::LeaveProblemInstancesOut,
        Scenario::LeaveAlgorithmConfigsOut,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::RandomStratified => "random_stratified",
            Scenario::LeaveProblemInstancesOut => "leave_problem_instances_out",
            Scenario::LeaveAlgorithmConfigsOut => "leave_algorithm_configs_out",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitSpec {
    pub scenario: Scenario,
    /// Train, validation and test percentages.
    pub ratios: [u32; 3],
    pub repeats: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        SplitSpec {
            scenario,
            ratios: [60, 20, 20],
            repeats: match scenario {
                Scenario::RandomStratified => 1,
                _ => 5,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratios.iter().sum::<u32>() != 100 {
            return Err(Error::Config(format!("split ratios {:?} must sum to 100", self.ratios)));
        }
        if self.repeats == 0 {
            return Err(Error::Config("at least one repeat is required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub train: Vec<Triple>,
    pub val: Vec<Triple>,
    pub test: Vec<Triple>,
}

fn labeled(kg: &KnowledgeGraph, triples: &[Triple]) -> Result<Vec<PerformanceLabel>> {
    triples
        .iter()
        .map(|t| {
            kg.performance_label(t).ok_or_else(|| {
                Error::InvalidInput(format!("{} is not a performance relation", kg.relation_label(t.relation)))
            })
        })
        .collect()
}

/// Sizes of the three parts for `n` items: rounded train and validation
/// shares, test takes the rest.
fn part_sizes(n: usize, ratios: [u32; 3]) -> [usize; 3] {
    let share = |r: u32| ((n as f64) * r as f64 / 100.0).round() as usize;
    let train = share(ratios[0]).min(n);
    let val = share(ratios[1]).min(n - train);
    [train, val, n - train - val]
}

/// Shuffles each class separately and cuts it by `ratios`.
pub fn split_random_stratified(kg: &KnowledgeGraph, triples: &[Triple], ratios: [u32; 3], seed: u64) -> Result<Split> {
    let labels = labeled(kg, triples)?;
    let mut split = Split::default();
    for class in [PerformanceLabel::Solved, PerformanceLabel::NotSolved] {
        let mut members: Vec<Triple> = triples
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == class)
            .map(|(t, _)| *t)
            .collect();
        if members.is_empty() {
            return Err(Error::Stratification(format!("no {class} triples to stratify")));
        }
        members.shuffle(&mut SeedMixer::new(seed).str("stratified").str(class.relation_label()).rng());
        let [a, b, _] = part_sizes(members.len(), ratios);
        split.train.extend_from_slice(&members[..a]);
        split.val.extend_from_slice(&members[a..a + b]);
        split.test.extend_from_slice(&members[a + b..]);
    }
    Ok(split)
}

/// Instance position of every problem entity, grouped by function. Every
/// function must have the same number of instances.
fn instance_positions(kg: &KnowledgeGraph, triples: &[Triple]) -> Result<(HashMap<EntityId, usize>, usize)> {
    let mut by_function: BTreeMap<String, BTreeSet<(u32, EntityId)>> = BTreeMap::new();
    for t in triples {
        let label = kg.entity_label(t.tail);
        let id = schema::strip_namespace(label, "problem")
            .ok_or_else(|| Error::InvalidInput(format!("{label:?} is not a problem entity")))?;
        let (function, instance, dim) = schema::parse_problem_id(id)?;
        by_function
            .entry(format!("{function}_d{dim}"))
            .or_default()
            .insert((instance, t.tail));
    }
    let counts: BTreeSet<usize> = by_function
        .values()
        .map(|s| s.iter().map(|(i, _)| *i).collect::<BTreeSet<_>>().len())
        .collect();
    if counts.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "functions have different instance counts: {counts:?}"
        )));
    }
    let m = *counts.iter().next().expect("nonempty");
    let mut positions = HashMap::new();
    for set in by_function.values() {
        let instances: Vec<u32> = set.iter().map(|(i, _)| *i).collect::<BTreeSet<_>>().into_iter().collect();
        for (inst, e) in set {
            let pos = instances.binary_search(inst).expect("present");
            positions.insert(*e, pos);
        }
    }
    Ok((positions, m))
}

/// Fold `f`: test holds instance position f, validation position (f+1) mod m.
pub fn split_leave_problem_instances_out(kg: &KnowledgeGraph, triples: &[Triple], fold: usize) -> Result<Split> {
    if triples.is_empty() {
        return Err(Error::InvalidInput("no performance triples to split".into()));
    }
    let (positions, m) = instance_positions(kg, triples)?;
    if m < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 instances per function, found {m}")));
    }
    if fold >= m {
        return Err(Error::Config(format!("fold {fold} out of range for {m} instances")));
    }
    let mut split = Split::default();
    for t in triples {
        let pos = positions[&t.tail];
        if pos == fold {
            split.test.push(*t);
        } else if pos == (fold + 1) % m {
            split.val.push(*t);
        } else {
            split.train.push(*t);
        }
    }
    Ok(split)
}

/// Number of leave-instances-out folds available for these triples.
pub fn instance_fold_count(kg: &KnowledgeGraph, triples: &[Triple]) -> Result<usize> {
    Ok(instance_positions(kg, triples)?.1)
}

/// Partitions the configurations (not the triples) by `ratios`.
pub fn split_leave_algorithm_configs_out(
    kg: &KnowledgeGraph,
    triples: &[Triple],
    ratios: [u32; 3],
    seed: u64,
) -> Result<Split> {
    let mut configs: Vec<EntityId> = Vec::new();
    let mut seen = BTreeSet::new();
    for t in triples {
        if seen.insert(t.head) {
            configs.push(t.head);
        }
    }
    if configs.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 configurations, found {}",
            configs.len()
        )));
    }
    configs.sort_by(|a, b| kg.entity_label(*a).cmp(kg.entity_label(*b)));
    configs.shuffle(&mut SeedMixer::new(seed).str("configs").rng());
    let [a, b, _] = part_sizes(configs.len(), ratios);
    let part: HashMap<EntityId, usize> = configs
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, if i < a { 0 } else if i < a + b { 1 } else { 2 }))
        .collect();
    let mut split = Split::default();
    for t in triples {
        match part[&t.head] {
            0 => split.train.push(*t),
            1 => split.val.push(*t),
            _ => split.test.push(*t),
        }
    }
    Ok(split)
}
