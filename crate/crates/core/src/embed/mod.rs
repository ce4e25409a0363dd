//! ComplEx embeddings: tables, scoring, training and persistence.
//!
//! Each row of a table holds `2k` reals, the `k` real parts followed by the
//! `k` imaginary parts. Rows are indexed by the dense handles of the graph the
//! model was initialized from.

mod loss;
mod train;

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple, Vocab};
use crate::seed::rng_from;

pub use loss::{loss_and_grad, sample_negatives, softplus, sigmoid, Gradients, LossParams};
pub use train::{
    adam_update, grid_search, read_training_log, default_grid, train, write_training_log, AdamState,
    GridPoint, GridSearchResult, TrainConfig, TrainHistory, Validation, ValidationCheck,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Loss {
    Pairwise,
    Nll,
    SelfAdversarial,
}

impl Loss {
    pub const ALL: [Loss; 3] = [Loss::Pairwise, Loss::Nll, Loss::SelfAdversarial];

    pub fn as_str(self) -> &'static str {
        match self {
            Loss::Pairwise => "pairwise",
            Loss::Nll => "nll",
            Loss::SelfAdversarial => "self_adversarial",
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Loss::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown loss {s:?}")))
    }
}

/// Uniform samples in [−b, b] with b = sqrt(6 / 2k).
pub fn xavier_init(num_rows: usize, k: usize, seed: u64) -> Vec<f64> {
    let bound = xavier_bound(k);
    let mut rng = rng_from(seed);
    (0..num_rows * 2 * k).map(|_| rng.gen_range(-bound..=bound)).collect()
}

pub fn xavier_bound(k: usize) -> f64 {
    (6.0 / (2 * k) as f64).sqrt()
}

/// Σ_j Re(h_j · r_j · conj(t_j)) on rows laid out as `[re.., im..]`.
#[inline]
pub fn complex_score(h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    let k = h.len() / 2;
    let (hr, hi) = h.split_at(k);
    let (rr, ri) = r.split_at(k);
    let (tr, ti) = t.split_at(k);
    let mut s = 0.0;
    for j in 0..k {
        s += hr[j] * rr[j] * tr[j] + hi[j] * rr[j] * ti[j] + hr[j] * ri[j] * ti[j]
            - hi[j] * ri[j] * tr[j];
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplExModel {
    k: usize,
    entities: Vocab,
    relations: Vocab,
    entity_table: Vec<f64>,
    relation_table: Vec<f64>,
    pub loss: Loss,
    pub seed: u64,
}

impl ComplExModel {
    /// Xavier-initialized model over the vocabulary of `kg`.
    pub fn init(kg: &KnowledgeGraph, k: usize, loss: Loss, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        let entity_table = xavier_init(kg.entities().len(), k, crate::seed::SeedMixer::new(seed).str("entities").finish());
        let relation_table = xavier_init(kg.relations().len(), k, crate::seed::SeedMixer::new(seed).str("relations").finish());
        Ok(ComplExModel {
            k,
            entities: kg.entities().clone(),
            relations: kg.relations().clone(),
            entity_table,
            relation_table,
            loss,
            seed,
        })
    }

    /// A model from explicit tables; rows must have `2k` entries.
    pub fn from_tables(
        k: usize,
        entities: Vocab,
        relations: Vocab,
        entity_table: Vec<f64>,
        relation_table: Vec<f64>,
    ) -> Result<Self> {
        let width = 2 * k;
        if k == 0 {
            return Err(Error::Config("embedding dimension must be positive".into()));
        }
        if entity_table.len() != entities.len() * width {
            return Err(Error::DimensionMismatch {
                expected: entities.len() * width,
                got: entity_table.len(),
            });
        }
        if relation_table.len() != relations.len() * width {
            return Err(Error::DimensionMismatch {
                expected: relations.len() * width,
                got: relation_table.len(),
            });
        }
        if entity_table.iter().chain(&relation_table).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("embedding values must be finite".into()));
        }
        Ok(ComplExModel {
            k,
            entities,
            relations,
            entity_table,
            relation_table,
            loss: Loss::Nll,
            seed: 0,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn entities(&self) -> &Vocab {
        &self.entities
    }

    pub fn relations(&self) -> &Vocab {
        &self.relations
    }

    pub fn entity_table(&self) -> &[f64] {
        &self.entity_table
    }

    pub fn relation_table(&self) -> &[f64] {
        &self.relation_table
    }

    pub(crate) fn tables_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.entity_table, &mut self.relation_table)
    }

    pub(crate) fn set_tables(&mut self, entity_table: Vec<f64>, relation_table: Vec<f64>) {
        self.entity_table = entity_table;
        self.relation_table = relation_table;
    }

    #[inline]
    pub fn entity_row(&self, e: EntityId) -> &[f64] {
        let w = 2 * self.k;
        &self.entity_table[e.index() * w..(e.index() + 1) * w]
    }

    #[inline]
    pub fn relation_row(&self, r: RelationId) -> &[f64] {
        let w = 2 * self.k;
        &self.relation_table[r.index() * w..(r.index() + 1) * w]
    }

    pub fn entity(&self, label: &str) -> Result<EntityId> {
        self.entities
            .get(label)
            .map(EntityId)
            .ok_or_else(|| Error::Referential(format!("entity {label:?} is not in the model")))
    }

    pub fn relation(&self, label: &str) -> Result<RelationId> {
        self.relations
            .get(label)
            .map(RelationId)
            .ok_or_else(|| Error::Referential(format!("relation {label:?} is not in the model")))
    }

    /// Handles are trusted; out-of-range handles panic.
    #[inline]
    pub fn score(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        complex_score(self.entity_row(h), self.relation_row(r), self.entity_row(t))
    }

    pub fn score_triple(&self, t: &Triple) -> f64 {
        self.score(t.head, t.relation, t.tail)
    }

    pub fn score_labels(&self, h: &str, r: &str, t: &str) -> Result<f64> {
        Ok(self.score(self.entity(h)?, self.relation(r)?, self.entity(t)?))
    }

    /// Text format: a header line, then one `entity`/`relation` line per row
    /// with the label and `2k` space-separated decimals.
    pub fn write(&self, mut out: impl Write) -> Result<()> {
        writeln!(
            out,
            "complex\tk={}\tentities={}\trelations={}\tloss={}\tseed={}",
            self.k,
            self.entities.len(),
            self.relations.len(),
            self.loss,
            self.seed
        )?;
        let w = 2 * self.k;
        for (kind, vocab, table) in [
            ("entity", &self.entities, &self.entity_table),
            ("relation", &self.relations, &self.relation_table),
        ] {
            for (i, label) in vocab.labels().iter().enumerate() {
                let row: Vec<String> = table[i * w..(i + 1) * w].iter().map(|v| v.to_string()).collect();
                writeln!(out, "{kind}\t{label}\t{}", row.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn read(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty model file"))?;
        let header = header?;
        let mut fields = header.split('\t');
        if fields.next() != Some("complex") {
            return Err(Error::parse(1, "expected a complex model header"));
        }
        let mut get = |key: &str| -> Result<String> {
            let f = fields.next().ok_or_else(|| Error::parse(1, format!("missing {key}")))?;
            f.strip_prefix(&format!("{key}="))
                .map(str::to_string)
                .ok_or_else(|| Error::parse(1, format!("expected {key}=..., got {f:?}")))
        };
        let num = |s: String, key: &str| -> Result<u64> {
            s.parse().map_err(|_| Error::parse(1, format!("bad {key} value {s:?}")))
        };
        let k = num(get("k")?, "k")? as usize;
        let n_ent = num(get("entities")?, "entities")? as usize;
        let n_rel = num(get("relations")?, "relations")? as usize;
        let loss: Loss = get("loss")?.parse().map_err(|e: Error| Error::parse(1, e.to_string()))?;
        let seed = num(get("seed")?, "seed")?;

        let mut entities = Vocab::new();
        let mut relations = Vocab::new();
        let mut entity_table = Vec::with_capacity(n_ent * 2 * k);
        let mut relation_table = Vec::with_capacity(n_rel * 2 * k);
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.splitn(3, '\t');
            let (kind, label, values) = match (parts.next(), parts.next(), parts.next()) {
                (Some(a), Some(b), Some(c)) => (a, b, c),
                _ => return Err(Error::parse(lineno, "expected kind, label and values")),
            };
            let row = values
                .split(' ')
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(lineno, e.to_string()))?;
            if row.len() != 2 * k {
                return Err(Error::parse(lineno, format!("expected {} values, got {}", 2 * k, row.len())));
            }
            let (vocab, table) = match kind {
                "entity" => (&mut entities, &mut entity_table),
                "relation" => (&mut relations, &mut relation_table),
                _ => return Err(Error::parse(lineno, format!("unknown row kind {kind:?}"))),
            };
            let before = vocab.len();
            vocab.intern(label).map_err(|e| Error::parse(lineno, e.to_string()))?;
            if vocab.len() == before {
                return Err(Error::parse(lineno, format!("duplicate label {label:?}")));
            }
            table.extend(row);
        }
        if entities.len() != n_ent || relations.len() != n_rel {
            return Err(Error::MissingData(format!(
                "header announces {n_ent} entities and {n_rel} relations, found {} and {}",
                entities.len(),
                relations.len()
            )));
        }
        let mut model = ComplExModel::from_tables(k, entities, relations, entity_table, relation_table)?;
        model.loss = loss;
        model.seed = seed;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}
