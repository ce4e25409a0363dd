//! Module spaces and their Cartesian-product enumeration.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kg::ConfigurationRecord;

/// Ordered list of modules, each with its ordered list of values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModuleSpace {
    pub family: String,
    pub modules: Vec<(String, Vec<String>)>,
}

fn owned(family: &str, table: &[(&str, &[&str])]) -> ModuleSpace {
    ModuleSpace {
        family: family.to_string(),
        modules: table
            .iter()
            .map(|(m, vs)| (m.to_string(), vs.iter().map(|v| v.to_string()).collect()))
            .collect(),
    }
}

impl ModuleSpace {
    /// The modular DE space: 3·4·2·2·2·3·2 = 576 configurations.
    pub fn modde() -> Self {
        owned(
            "modDE",
            &[
                ("mutation_base", &["rand", "best", "target"]),
                ("mutation_reference", &["none", "pbest", "best", "rand"]),
                ("mutation_n_comps", &["1", "2"]),
                ("use_archive", &["true", "false"]),
                ("crossover", &["bin", "exp"]),
                ("adaptation_method", &["none", "shade", "jde"]),
                ("lpsr", &["true", "false"]),
            ],
        )
    }

    /// The modular CMA-ES space: 2·3·3·3·3·2 = 324 configurations. Only used
    /// to give ingested external data stable ids.
    pub fn modcma() -> Self {
        owned(
            "modCMA",
            &[
                ("elitist", &["true", "false"]),
                ("mirrored_sampling", &["none", "mirrored", "mirrored_pairwise"]),
                ("base_sampler", &["gaussian", "sobol", "halton"]),
                ("weights_option", &["default", "equal", "1/2^lambda"]),
                ("local_restart", &["none", "ipop", "bipop"]),
                ("step_size_adaptation", &["csa", "psr"]),
            ],
        )
    }

    pub fn size(&self) -> usize {
        self.modules.iter().map(|(_, vs)| vs.len()).product()
    }

    /// Replaces the value list of one module.
    pub fn restrict(&mut self, module: &str, values: Vec<String>) -> Result<()> {
        let slot = self
            .modules
            .iter_mut()
            .find(|(m, _)| m == module)
            .ok_or_else(|| Error::Config(format!("unknown module {module:?}")))?;
        if values.is_empty() {
            return Err(Error::Config(format!("module {module:?} needs at least one value")));
        }
        slot.1 = values;
        Ok(())
    }
}

/// Cartesian product in odometer order (last module varies fastest), ids
/// `<family>_%04d` by position.
pub fn enumerate_configs(space: &ModuleSpace) -> Result<Vec<ConfigurationRecord>> {
    if space.modules.is_empty() || space.modules.iter().any(|(_, vs)| vs.is_empty()) {
        return Err(Error::Config("module value lists must be nonempty".into()));
    }
    let total = space.size();
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0usize; space.modules.len()];
    for n in 0..total {
        let settings = space
            .modules
            .iter()
            .zip(&digits)
            .map(|((m, vs), &d)| (m.clone(), vs[d].clone()))
            .collect();
        out.push(ConfigurationRecord {
            id: format!("{}_{:04}", space.family, n),
            family: space.family.clone(),
            settings,
        });
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < space.modules[pos].1.len() {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(out)
}

macro_rules! module_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::Config(format!(concat!("unknown ", stringify!($name), " {:?}"), s))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

module_enum!(MutationBase { Rand => "rand", Best => "best", Target => "target" });
module_enum!(MutationReference { None => "none", PBest => "pbest", Best => "best", Rand => "rand" });
module_enum!(Crossover { Binomial => "bin", Exponential => "exp" });
module_enum!(Adaptation { None => "none", Shade => "shade", Jde => "jde" });

/// One point of the modular DE space plus its scalar hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmConfiguration {
    pub id: String,
    pub mutation_base: MutationBase,
    pub mutation_reference: MutationReference,
    pub mutation_n_comps: usize,
    pub use_archive: bool,
    pub crossover: Crossover,
    pub adaptation_method: Adaptation,
    pub lpsr: bool,
    pub f0: f64,
    pub cr0: f64,
    /// `None` means 10·D.
    pub pop0: Option<usize>,
    pub pbest_rate: f64,
}

impl Default for AlgorithmConfiguration {
    fn default() -> Self {
        AlgorithmConfiguration {
            id: "modDE_custom".into(),
            mutation_base: MutationBase::Rand,
            mutation_reference: MutationReference::None,
            mutation_n_comps: 1,
            use_archive: false,
            crossover: Crossover::Binomial,
            adaptation_method: Adaptation::None,
            lpsr: false,
            f0: 0.5,
            cr0: 0.9,
            pop0: None,
            pbest_rate: 0.1,
        }
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config(format!("expected true/false, got {s:?}"))),
    }
}

impl AlgorithmConfiguration {
    /// Typed view of a modular DE record. Every module must be set exactly once.
    pub fn from_record(record: &ConfigurationRecord) -> Result<Self> {
        let mut cfg = AlgorithmConfiguration {
            id: record.id.clone(),
            ..Default::default()
        };
        let mut seen = [false; 7];
        for (module, value) in &record.settings {
            let slot = match module.as_str() {
                "mutation_base" => {
                    cfg.mutation_base = value.parse()?;
                    0
                }
                "mutation_reference" => {
                    cfg.mutation_reference = value.parse()?;
                    1
                }
                "mutation_n_comps" => {
                    cfg.mutation_n_comps = match value.as_str() {
                        "1" => 1,
                        "2" => 2,
                        _ => return Err(Error::Config(format!("mutation_n_comps must be 1 or 2, got {value:?}"))),
                    };
                    2
                }
                "use_archive" => {
                    cfg.use_archive = parse_bool(value)?;
                    3
                }
                "crossover" => {
                    cfg.crossover = value.parse()?;
                    4
                }
                "adaptation_method" => {
                    cfg.adaptation_method = value.parse()?;
                    5
                }
                "lpsr" => {
                    cfg.lpsr = parse_bool(value)?;
                    6
                }
                other => return Err(Error::Config(format!("unknown modDE module {other:?}"))),
            };
            if std::mem::replace(&mut seen[slot], true) {
                return Err(Error::Config(format!("module {module:?} set twice")));
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Config(format!("configuration {} is missing modules", record.id)));
        }
        Ok(cfg)
    }

    pub fn record(&self) -> ConfigurationRecord {
        ConfigurationRecord {
            id: self.id.clone(),
            family: "modDE".into(),
            settings: vec![
                ("mutation_base".into(), self.mutation_base.to_string()),
                ("mutation_reference".into(), self.mutation_reference.to_string()),
                ("mutation_n_comps".into(), self.mutation_n_comps.to_string()),
                ("use_archive".into(), self.use_archive.to_string()),
                ("crossover".into(), self.crossover.to_string()),
                ("adaptation_method".into(), self.adaptation_method.to_string()),
                ("lpsr".into(), self.lpsr.to_string()),
            ],
        }
    }

    pub fn initial_population(&self, dimension: usize) -> usize {
        self.pop0.unwrap_or(10 * dimension)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f0 > 0.0 && self.f0 <= 2.0) {
            return Err(Error::Config(format!("F0 must be in (0, 2], got {}", self.f0)));
        }
        if !(0.0..=1.0).contains(&self.cr0) {
            return Err(Error::Config(format!("CR0 must be in [0, 1], got {}", self.cr0)));
        }
        if !(self.pbest_rate > 0.0 && self.pbest_rate <= 1.0) {
            return Err(Error::Config(format!("pbest rate must be in (0, 1], got {}", self.pbest_rate)));
        }
        if self.pop0 == Some(0) {
            return Err(Error::Config("initial population must be positive".into()));
        }
        if !(1..=2).contains(&self.mutation_n_comps) {
            return Err(Error::Config("mutation_n_comps must be 1 or 2".into()));
        }
        Ok(())
    }
}

/// All 576 typed modular DE configurations with default scalars.
pub fn modde_configs() -> Vec<AlgorithmConfiguration> {
    enumerate_configs(&ModuleSpace::modde())
        .expect("static space")
        .iter()
        .map(|r| AlgorithmConfiguration::from_record(r).expect("static space"))
        .collect()
}

/// `count` configurations spread evenly over `all`, keeping order.
pub fn subsample<T: Clone>(all: &[T], count: usize) -> Vec<T> {
    if count >= all.len() {
        return all.to_vec();
    }
    (0..count).map(|i| all[i * all.len() / count].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_sizes() {
        assert_eq!(enumerate_configs(&ModuleSpace::modde()).unwrap().len(), 576);
        assert_eq!(enumerate_configs(&ModuleSpace::modcma()).unwrap().len(), 324);
    }

    #[test]
    fn single_values_give_one_config() {
        let space = owned("x", &[("a", &["1"]), ("b", &["q"])]);
        let all = enumerate_configs(&space).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all[0].id, "x_0000");
    }

    #[test]
    fn odometer_order_and_ids() {
        let all = enumerate_configs(&ModuleSpace::modde()).unwrap();
        assert_eq!(all[0].id, "modDE_0000");
        assert_eq!(all[575].id, "modDE_0575");
        assert_eq!(all[0].settings[6], ("lpsr".into(), "true".into()));
        assert_eq!(all[1].settings[6], ("lpsr".into(), "false".into()));
        assert_eq!(all[575].settings[0], ("mutation_base".into(), "target".into()));
        let unique: std::collections::HashSet<_> = all.iter().map(|c| c.settings.clone()).collect();
        assert_eq!(unique.len(), 576);
    }

    #[test]
    fn empty_list_rejected() {
        let space = owned("x", &[("a", &[])]);
        assert!(enumerate_configs(&space).is_err());
    }

    #[test]
    fn typed_round_trip() {
        for rec in enumerate_configs(&ModuleSpace::modde()).unwrap() {
            let typed = AlgorithmConfiguration::from_record(&rec).unwrap();
            assert_eq!(typed.record(), rec);
        }
    }

    #[test]
    fn subsample_is_deterministic() {
        let all: Vec<u32> = (0..576).collect();
        let s = subsample(&all, 8);
        assert_eq!(s, vec![0, 72, 144, 216, 288, 360, 432, 504]);
        assert_eq!(subsample(&all, 1000).len(), 576);
    }
}
