//! Landscape features from a fixed sample design, aggregated over repetitions
//! and discretized into ten equal-width bins per feature.
//!
//! The built-in feature set is compact:
//!
//! | name | definition |
//! |------|------------|
//! | `y_skewness` | standardized third central moment of the values |
//! | `y_kurtosis` | excess kurtosis, m4/m2² − 3 |
//! | `lin_model_r2` | R² of y ~ 1 + x |
//! | `quad_model_r2` | R² of y ~ 1 + x + x² (no interactions) |
//! | `lin_quad_r2_ratio` | lin_model_r2 / quad_model_r2 |
//! | `best_to_mean_ratio` | (mean − min) / (max − min) |
//! | `dispersion_ratio_10pct` | mean pairwise distance of the best 10% ÷ that of all points |
//!
//! When all values are equal, moments are 0, R² values are 1,
//! `best_to_mean_ratio` is 0 and the two remaining ratios are 1.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::benchgen::{median, ProblemInstanceDescriptor, LOWER, UPPER};
use crate::error::{Error, Result};
use crate::seed::SeedMixer;

pub const N_BINS: u8 = 10;

pub const FEATURE_NAMES: [&str; 7] = [
    "y_skewness",
    "y_kurtosis",
    "lin_model_r2",
    "quad_model_r2",
    "lin_quad_r2_ratio",
    "best_to_mean_ratio",
    "dispersion_ratio_10pct",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleStrategy {
    Uniform,
    Halton,
}

impl std::str::FromStr for SampleStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SampleStrategy::Uniform),
            "halton" => Ok(SampleStrategy::Halton),
            _ => Err(Error::Config(format!("unknown sample strategy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleDesign {
    pub strategy: SampleStrategy,
    /// `None` means 100·D.
    pub sample_size: Option<usize>,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for SampleDesign {
    fn default() -> Self {
        SampleDesign {
            strategy: SampleStrategy::Halton,
            sample_size: None,
            repetitions: 5,
            seed: 0,
        }
    }
}

/// Points and their objective values for one repetition.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

const PRIMES: [u64; 40] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173,
];

/// Van der Corput radical inverse of `index` in `base`.
pub fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut scale = inv;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * scale;
        index /= base;
        scale *= inv;
    }
    out
}

fn to_box(u: f64) -> f64 {
    LOWER + (UPPER - LOWER) * u
}

/// One point set per repetition. Halton repetition `r` uses the consecutive
/// sequence indices `1 + r·n ..= (r+1)·n`; uniform repetitions draw from
/// per-repetition seeds.
pub fn sample_points(design: &SampleDesign, problem: &ProblemInstanceDescriptor) -> Result<Vec<Sample>> {
    let dim = problem.dimension;
    let n = design.sample_size.unwrap_or(100 * dim);
    if n == 0 || design.repetitions == 0 {
        return Err(Error::Config("sample size and repetitions must be positive".into()));
    }
    if design.strategy == SampleStrategy::Halton && dim > PRIMES.len() {
        return Err(Error::Config(format!("Halton design supports at most {} dimensions", PRIMES.len())));
    }
    let problem_id = problem.id();
    (0..design.repetitions)
        .map(|rep| {
            let points: Vec<Vec<f64>> = match design.strategy {
                SampleStrategy::Halton => (0..n)
                    .map(|k| {
                        let index = (1 + rep * n + k) as u64;
                        PRIMES[..dim].iter().map(|&b| to_box(radical_inverse(index, b))).collect()
                    })
                    .collect(),
                SampleStrategy::Uniform => {
                    let mut rng = SeedMixer::new(design.seed)
                        .str(&problem_id)
                        .int(rep as u64)
                        .rng();
                    (0..n)
                        .map(|_| (0..dim).map(|_| rng.gen_range(LOWER..=UPPER)).collect())
                        .collect()
                }
            };
            let values = points
                .iter()
                .map(|x| problem.evaluate(x))
                .collect::<Result<Vec<_>>>()?;
            Ok(Sample { points, values })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector {
    pub y_skewness: f64,
    pub y_kurtosis: f64,
    pub lin_model_r2: f64,
    pub quad_model_r2: f64,
    pub lin_quad_r2_ratio: f64,
    pub best_to_mean_ratio: f64,
    pub dispersion_ratio_10pct: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; 7] {
        [
            self.y_skewness,
            self.y_kurtosis,
            self.lin_model_r2,
            self.quad_model_r2,
            self.lin_quad_r2_ratio,
            self.best_to_mean_ratio,
            self.dispersion_ratio_10pct,
        ]
    }

    pub fn from_array(a: [f64; 7]) -> Self {
        FeatureVector {
            y_skewness: a[0],
            y_kurtosis: a[1],
            lin_model_r2: a[2],
            quad_model_r2: a[3],
            lin_quad_r2_ratio: a[4],
            best_to_mean_ratio: a[5],
            dispersion_ratio_10pct: a[6],
        }
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, f64)> {
        FEATURE_NAMES.into_iter().zip(self.to_array())
    }
}

/// Least-squares fit of `y` on the columns of `design`; returns the
/// coefficients and 1 − SSE/SST clamped to [0, 1] (1 when SST = 0).
pub(crate) fn least_squares_r2(design: &DMatrix<f64>, y: &[f64]) -> (DVector<f64>, f64) {
    let yv = DVector::from_column_slice(y);
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&yv, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(design.ncols()));
    let fitted = design * &coef;
    let mean = yv.mean();
    let sse: f64 = (&yv - fitted).iter().map(|r| r * r).sum();
    let sst: f64 = yv.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if sst <= 0.0 { 1.0 } else { (1.0 - sse / sst).clamp(0.0, 1.0) };
    (coef, r2)
}

fn linear_design(points: &[Vec<f64>], quadratic: bool) -> DMatrix<f64> {
    let d = points[0].len();
    let cols = if quadratic { 1 + 2 * d } else { 1 + d };
    DMatrix::from_fn(points.len(), cols, |i, j| match j {
        0 => 1.0,
        j if j <= d => points[i][j - 1],
        j => points[i][j - 1 - d].powi(2),
    })
}

fn mean_pairwise_distance(points: &[&Vec<f64>]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += points[i]
                .iter()
                .zip(points[j].iter())
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt();
        }
    }
    total / (n * (n - 1) / 2) as f64
}

pub fn compute_features(points: &[Vec<f64>], values: &[f64]) -> Result<FeatureVector> {
    if points.len() != values.len() {
        return Err(Error::InvalidInput("points and values differ in length".into()));
    }
    let n = values.len();
    let dim = points.first().map_or(0, Vec::len);
    if dim == 0 || n < dim + 2 {
        return Err(Error::InvalidInput(format!(
            "need at least D+2 = {} samples, got {n}",
            dim + 2
        )));
    }
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidInput("points have inconsistent dimension".into()));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if max - min <= 0.0 {
        return Ok(FeatureVector {
            y_skewness: 0.0,
            y_kurtosis: 0.0,
            lin_model_r2: 1.0,
            quad_model_r2: 1.0,
            lin_quad_r2_ratio: 1.0,
            best_to_mean_ratio: 0.0,
            dispersion_ratio_10pct: 1.0,
        });
    }
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    let m3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
    let (y_skewness, y_kurtosis) = if m2 > 0.0 {
        (m3 / m2.powf(1.5), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };

    let (_, lin) = least_squares_r2(&linear_design(points, false), values);
    let (_, quad) = least_squares_r2(&linear_design(points, true), values);
    let ratio = if quad > 0.0 { lin / quad } else { 1.0 };

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let n_best = ((0.1 * nf).ceil() as usize).clamp(2, n);
    let best: Vec<&Vec<f64>> = order[..n_best].iter().map(|&i| &points[i]).collect();
    let all: Vec<&Vec<f64>> = points.iter().collect();
    let all_dist = mean_pairwise_distance(&all);
    let dispersion = if all_dist > 0.0 {
        mean_pairwise_distance(&best) / all_dist
    } else {
        1.0
    };

    Ok(FeatureVector {
        y_skewness,
        y_kurtosis,
        lin_model_r2: lin,
        quad_model_r2: quad,
        lin_quad_r2_ratio: ratio,
        best_to_mean_ratio: (mean - min) / (max - min),
        dispersion_ratio_10pct: dispersion,
    })
}

pub fn median_features(vectors: &[FeatureVector]) -> Result<FeatureVector> {
    if vectors.is_empty() {
        return Err(Error::InvalidInput("median of zero feature vectors".into()));
    }
    let mut out = [0.0; 7];
    for (k, slot) in out.iter_mut().enumerate() {
        let column: Vec<f64> = vectors.iter().map(|v| v.to_array()[k]).collect();
        *slot = median(&column);
    }
    Ok(FeatureVector::from_array(out))
}

/// Samples, computes and aggregates the built-in features of one problem.
pub fn problem_features(design: &SampleDesign, problem: &ProblemInstanceDescriptor) -> Result<FeatureVector> {
    let per_rep = sample_points(design, problem)?
        .iter()
        .map(|s| compute_features(&s.points, &s.values))
        .collect::<Result<Vec<_>>>()?;
    median_features(&per_rep)
}

/// Raw feature values: problem id → feature name → value.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    pub rows: BTreeMap<String, BTreeMap<String, f64>>,
}

impl FeatureTable {
    pub fn insert_vector(&mut self, problem_id: &str, v: &FeatureVector) {
        let row = self.rows.entry(problem_id.to_string()).or_default();
        for (name, value) in v.named() {
            row.insert(name.to_string(), value);
        }
    }

    pub fn insert(&mut self, problem_id: &str, feature: &str, value: f64) {
        self.rows
            .entry(problem_id.to_string())
            .or_default()
            .insert(feature.to_string(), value);
    }
}

/// Bin index per (problem, feature) plus the per-feature range used.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BinnedFeatureTable {
    pub bins: BTreeMap<(String, String), u8>,
    pub ranges: BTreeMap<String, (f64, f64)>,
}

impl BinnedFeatureTable {
    /// (feature, bin) pairs of one problem in feature-name order.
    pub fn bins_for<'a>(&'a self, problem_id: &'a str) -> impl Iterator<Item = (&'a str, u8)> + 'a {
        self.bins
            .iter()
            .filter(move |((p, _), _)| p == problem_id)
            .map(|((_, f), &b)| (f.as_str(), b))
    }

    pub fn get(&self, problem_id: &str, feature: &str) -> Option<u8> {
        self.bins.get(&(problem_id.to_string(), feature.to_string())).copied()
    }
}

/// ⌊10·(v − min)/(max − min)⌋ clamped to 9; a constant feature maps to bin 0.
pub fn bin_value(v: f64, min: f64, max: f64) -> u8 {
    let span = max - min;
    if !(span > 0.0) {
        return 0;
    }
    let x = N_BINS as f64 * (v - min) / span;
    // Snap values within rounding noise of a bin edge onto the edge.
    let r = x.round();
    let x = if (x - r).abs() < 1e-9 { r } else { x };
    (x.floor().max(0.0) as u8).min(N_BINS - 1)
}

/// Equal-width binning with edges from each feature's range over the whole table.
pub fn bin_features(table: &FeatureTable) -> Result<BinnedFeatureTable> {
    if table.rows.is_empty() {
        return Err(Error::InvalidInput("feature table has no problems".into()));
    }
    let mut ranges: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    for row in table.rows.values() {
        for (name, &v) in row {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("feature {name} has non-finite value {v}")));
            }
            let e = ranges.entry(name.clone()).or_insert((v, v));
            e.0 = e.0.min(v);
            e.1 = e.1.max(v);
        }
    }
    let mut bins = BTreeMap::new();
    for (problem, row) in &table.rows {
        for (name, &v) in row {
            let (lo, hi) = ranges[name];
            bins.insert((problem.clone(), name.clone()), bin_value(v, lo, hi));
        }
    }
    Ok(BinnedFeatureTable { bins, ranges })
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureRow {
    problem_id: String,
    feature_name: String,
    value: f64,
}

/// Features CSV: `problem_id,feature_name,value`.
pub fn write_features_csv(table: &FeatureTable, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (problem, row) in &table.rows {
        for (name, &value) in row {
            w.serialize(FeatureRow {
                problem_id: problem.clone(),
                feature_name: name.clone(),
                value,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_features_csv(input: impl Read) -> Result<FeatureTable> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut table = FeatureTable::default();
    for (i, row) in rdr.deserialize::<FeatureRow>().enumerate() {
        let row = row.map_err(|e| Error::parse(i + 2, e.to_string()))?;
        if row.problem_id.is_empty() || row.feature_name.is_empty() {
            return Err(Error::parse(i + 2, "empty problem id or feature name"));
        }
        if !row.value.is_finite() {
            return Err(Error::parse(i + 2, "feature value must be finite"));
        }
        if table
            .rows
            .get(&row.problem_id)
            .is_some_and(|r| r.contains_key(&row.feature_name))
        {
            return Err(Error::parse(i + 2, "duplicate (problem, feature) row"));
        }
        table.insert(&row.problem_id, &row.feature_name, row.value);
    }
    Ok(table)
}
