//! Fixed relation vocabulary and entity-label namespaces.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SOLVED: &str = "solved";
pub const NOT_SOLVED: &str = "not_solved";
pub const HAS_MODULE_SETTING: &str = "has_module_setting";
pub const INSTANCE_OF_PROBLEM: &str = "instance_of_problem";
pub const HAS_PROBLEM_CLASS: &str = "has_problem_class";
pub const HAS_FEATURE_BIN: &str = "has_feature_bin";
pub const IS_CONFIGURATION_OF: &str = "is_configuration_of";

pub const RELATIONS: [&str; 7] = [
    SOLVED,
    NOT_SOLVED,
    HAS_MODULE_SETTING,
    INSTANCE_OF_PROBLEM,
    HAS_PROBLEM_CLASS,
    HAS_FEATURE_BIN,
    IS_CONFIGURATION_OF,
];

pub fn algorithm_label(config_id: &str) -> String {
    format!("alg:{config_id}")
}

pub fn family_label(family: &str) -> String {
    format!("family:{family}")
}

pub fn module_label(module: &str, value: &str) -> String {
    format!("module:{module}={value}")
}

pub fn problem_label(problem_id: &str) -> String {
    format!("problem:{problem_id}")
}

pub fn function_label(function: &str) -> String {
    format!("function:{function}")
}

pub fn class_label(class: &str) -> String {
    format!("class:{class}")
}

pub fn feature_bin_label(feature: &str, bin: u8) -> String {
    format!("feature:{feature}_bin_{bin:02}")
}

/// Strips a `namespace:` prefix, returning the bare id.
pub fn strip_namespace<'a>(label: &'a str, namespace: &str) -> Option<&'a str> {
    label
        .strip_prefix(namespace)
        .and_then(|rest| rest.strip_prefix(':'))
}

/// Parses a problem id of the form `f<function>_i<instance>_d<dim>`.
pub fn parse_problem_id(id: &str) -> Result<(String, u32, u32)> {
    let bad = || Error::InvalidInput(format!("problem id {id:?} is not f<n>_i<n>_d<n>"));
    let mut parts = id.split('_');
    let f = parts.next().filter(|p| p.starts_with('f')).ok_or_else(bad)?;
    let inst = parts
        .next()
        .and_then(|p| p.strip_prefix('i'))
        .and_then(|p| p.parse().ok())
        .ok_or_else(bad)?;
    let dim = parts
        .next()
        .and_then(|p| p.strip_prefix('d'))
        .and_then(|p| p.parse().ok())
        .ok_or_else(bad)?;
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((f.to_string(), inst, dim))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerformanceLabel {
    NotSolved,
    Solved,
}

impl PerformanceLabel {
    pub fn relation_label(self) -> &'static str {
        match self {
            PerformanceLabel::Solved => SOLVED,
            PerformanceLabel::NotSolved => NOT_SOLVED,
        }
    }

    pub fn from_relation(label: &str) -> Option<Self> {
        match label {
            SOLVED => Some(PerformanceLabel::Solved),
            NOT_SOLVED => Some(PerformanceLabel::NotSolved),
            _ => None,
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            PerformanceLabel::Solved => PerformanceLabel::NotSolved,
            PerformanceLabel::NotSolved => PerformanceLabel::Solved,
        }
    }

    pub fn is_solved(self) -> bool {
        self == PerformanceLabel::Solved
    }

    pub fn from_solved(solved: bool) -> Self {
        if solved {
            PerformanceLabel::Solved
        } else {
            PerformanceLabel::NotSolved
        }
    }
}

impl fmt::Display for PerformanceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.relation_label())
    }
}

impl FromStr for PerformanceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_relation(s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown performance label {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_ids_parse() {
        assert_eq!(parse_problem_id("f3_i2_d5").unwrap(), ("f3".into(), 2, 5));
        assert!(parse_problem_id("f3_i2").is_err());
        assert!(parse_problem_id("x3_i2_d5").is_err());
    }

    #[test]
    fn labels_are_namespaced() {
        assert_eq!(feature_bin_label("ela_skewness", 7), "feature:ela_skewness_bin_07");
        assert_eq!(module_label("crossover", "bin"), "module:crossover=bin");
        assert_eq!(strip_namespace("alg:modDE_0417", "alg"), Some("modDE_0417"));
        assert_eq!(strip_namespace("problem:x", "alg"), None);
    }
}
