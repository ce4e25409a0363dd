//! Modular differential evolution.
//!
//! Per generation, for each target `i` (all donors are built from the
//! generation-start population):
//!
//! ```text
//! v = x_base + F·(x_ref − x_base) + Σ_{c=1..n_comps} F·(x_r_c − x_s_c)
//! ```
//!
//! followed by saturation to the box, binomial or exponential crossover,
//! and greedy selection. The reference term is skipped for
//! `mutation_reference = none`; `s_c` may come from the archive.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Cauchy, Distribution, Normal};

use super::config::{Adaptation, AlgorithmConfiguration, Crossover, MutationBase, MutationReference};
use super::problems::{ProblemInstanceDescriptor, LOWER, UPPER};
use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Smallest population reached by linear population size reduction.
pub const LPSR_MIN_POPULATION: usize = 4;
/// SHADE history length.
pub const SHADE_MEMORY: usize = 6;
const JDE_TAU: f64 = 0.1;
const SHADE_SCALE: f64 = 0.1;

/// Best-so-far precision as a step function of the evaluation count.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `(evaluations, best)` at every strict improvement.
    points: Vec<(u64, f64)>,
}

impl Trajectory {
    pub fn points(&self) -> &[(u64, f64)] {
        &self.points
    }

    /// Best precision after `evaluations` calls, or `None` before the first.
    pub fn at(&self, evaluations: u64) -> Option<f64> {
        let idx = self.points.partition_point(|&(e, _)| e <= evaluations);
        idx.checked_sub(1).map(|i| self.points[i].1)
    }

    pub fn final_best(&self) -> f64 {
        self.points.last().map_or(f64::INFINITY, |p| p.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub evaluations: u64,
    pub initial_best: f64,
    pub final_population: usize,
    pub generations: usize,
    /// Every evaluated point was inside the box.
    pub all_in_bounds: bool,
    /// Observed (min, max) of the F values used for donors.
    pub f_range: (f64, f64),
    /// Observed (min, max) of the CR values used for crossover.
    pub cr_range: (f64, f64),
}

struct Evaluator<'a> {
    problem: &'a ProblemInstanceDescriptor,
    count: u64,
    best: f64,
    points: Vec<(u64, f64)>,
    in_bounds: bool,
}

impl Evaluator<'_> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        self.in_bounds &= x.iter().all(|v| (LOWER..=UPPER).contains(v));
        self.count += 1;
        let f = self.problem.eval_unchecked(x);
        if f < self.best {
            self.best = f;
            self.points.push((self.count, f));
        }
        f
    }
}

struct Shade {
    m_f: [f64; SHADE_MEMORY],
    m_cr: [f64; SHADE_MEMORY],
    next: usize,
}

impl Shade {
    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let r = rng.gen_range(0..SHADE_MEMORY);
        (sample_shade_f(self.m_f[r], rng), sample_shade_cr(self.m_cr[r], rng))
    }

    /// Weighted Lehmer means of the successful values, weights ∝ improvement.
    fn update(&mut self, successes: &[(f64, f64, f64)]) {
        let total: f64 = successes.iter().map(|s| s.2).sum();
        if successes.is_empty() || total <= 0.0 {
            return;
        }
        let lehmer = |pick: fn(&(f64, f64, f64)) -> f64| {
            let num: f64 = successes.iter().map(|s| s.2 / total * pick(s).powi(2)).sum();
            let den: f64 = successes.iter().map(|s| s.2 / total * pick(s)).sum();
            if den > 0.0 {
                num / den
            } else {
                0.0
            }
        };
        self.m_f[self.next] = lehmer(|s| s.0);
        self.m_cr[self.next] = lehmer(|s| s.1);
        self.next = (self.next + 1) % SHADE_MEMORY;
    }
}

/// Cauchy(loc, 0.1), resampled while ≤ 0 and truncated to 1.
pub(crate) fn sample_shade_f(loc: f64, rng: &mut impl Rng) -> f64 {
    let cauchy = Cauchy::new(loc, SHADE_SCALE).expect("positive scale");
    for _ in 0..1000 {
        let f = cauchy.sample(rng);
        if f > 0.0 {
            return f.min(1.0);
        }
    }
    // Only reachable for pathological memories far below zero.
    SHADE_SCALE
}

/// Normal(loc, 0.1) clipped to [0, 1].
pub(crate) fn sample_shade_cr(loc: f64, rng: &mut impl Rng) -> f64 {
    let normal = Normal::new(loc, SHADE_SCALE).expect("positive scale");
    normal.sample(rng).clamp(0.0, 1.0)
}

/// jDE self-adaptation: resample F ~ U(0.1, 1) and CR ~ U(0, 1) with probability 0.1 each.
pub(crate) fn sample_jde(f: f64, cr: f64, rng: &mut impl Rng) -> (f64, f64) {
    let f = if rng.gen::<f64>() < JDE_TAU {
        rng.gen_range(0.1..=1.0)
    } else {
        f
    };
    let cr = if rng.gen::<f64>() < JDE_TAU {
        rng.gen_range(0.0..=1.0)
    } else {
        cr
    };
    (f, cr)
}

/// Uniform index in `0..n` avoiding `used` when possible.
fn pick_distinct(rng: &mut ChaCha8Rng, n: usize, used: &[usize]) -> usize {
    let free = (0..n).filter(|j| !used.contains(j)).count();
    if free == 0 {
        return rng.gen_range(0..n);
    }
    loop {
        let j = rng.gen_range(0..n);
        if !used.contains(&j) {
            return j;
        }
    }
}

fn argmin(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
        .map(|(i, _)| i)
        .expect("nonempty population")
}

fn sorted_by_fitness(fitness: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitness.len()).collect();
    order.sort_by(|&a, &b| fitness[a].total_cmp(&fitness[b]).then(a.cmp(&b)));
    order
}

/// Runs one configuration on one problem for exactly `budget` evaluations.
pub fn run_modde(
    config: &AlgorithmConfiguration,
    problem: &ProblemInstanceDescriptor,
    budget: u64,
    seed: u64,
) -> Result<RunOutcome> {
    config.validate()?;
    let dim = problem.dimension;
    let pop0 = config.initial_population(dim);
    if budget < pop0 as u64 {
        return Err(Error::Config(format!(
            "budget {budget} is smaller than the initial population {pop0}"
        )));
    }
    let mut rng = rng_from(seed);
    let mut ev = Evaluator {
        problem,
        count: 0,
        best: f64::INFINITY,
        points: Vec::new(),
        in_bounds: true,
    };

    let mut pop: Vec<Vec<f64>> = (0..pop0)
        .map(|_| (0..dim).map(|_| rng.gen_range(LOWER..=UPPER)).collect())
        .collect();
    let mut fit: Vec<f64> = pop.iter().map(|x| ev.eval(x)).collect();
    let initial_best = ev.best;

    let adaptive = config.adaptation_method != Adaptation::None;
    let (start_f, start_cr) = if adaptive {
        (config.f0.min(1.0), config.cr0)
    } else {
        (config.f0, config.cr0)
    };
    let mut params: Vec<(f64, f64)> = vec![(start_f, start_cr); pop0];
    let mut shade = Shade {
        m_f: [start_f; SHADE_MEMORY],
        m_cr: [start_cr; SHADE_MEMORY],
        next: 0,
    };
    let mut archive: Vec<Vec<f64>> = Vec::new();
    let mut f_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut cr_range = (f64::INFINITY, f64::NEG_INFINITY);
    let mut generations = 0;

    while ev.count < budget {
        let n = pop.len();
        let best = argmin(&fit);
        let order = sorted_by_fitness(&fit);
        let top = ((config.pbest_rate * n as f64).ceil() as usize).clamp(1, n);

        let mut trials: Vec<(usize, Vec<f64>, f64, f64, f64)> = Vec::with_capacity(n);
        for i in 0..n {
            if ev.count >= budget {
                break;
            }
            let (f, cr) = match config.adaptation_method {
                Adaptation::None => (config.f0, config.cr0),
                Adaptation::Jde => sample_jde(params[i].0, params[i].1, &mut rng),
                Adaptation::Shade => shade.sample(&mut rng),
            };
            f_range = (f_range.0.min(f), f_range.1.max(f));
            cr_range = (cr_range.0.min(cr), cr_range.1.max(cr));

            let mut used = vec![i];
            let base = match config.mutation_base {
                MutationBase::Rand => {
                    let b = pick_distinct(&mut rng, n, &used);
                    used.push(b);
                    b
                }
                MutationBase::Best => {
                    used.push(best);
                    best
                }
                MutationBase::Target => i,
            };
            let mut donor = pop[base].clone();
            let reference = match config.mutation_reference {
                MutationReference::None => None,
                MutationReference::PBest => Some(order[rng.gen_range(0..top)]),
                MutationReference::Best => Some(best),
                MutationReference::Rand => {
                    let r = pick_distinct(&mut rng, n, &used);
                    used.push(r);
                    Some(r)
                }
            };
            if let Some(r) = reference {
                for (d, (xr, xb)) in donor.iter_mut().zip(pop[r].iter().zip(&pop[base])) {
                    *d += f * (xr - xb);
                }
            }
            for _ in 0..config.mutation_n_comps {
                let r = pick_distinct(&mut rng, n, &used);
                used.push(r);
                let pool = if config.use_archive { n + archive.len() } else { n };
                let s = pick_distinct(&mut rng, pool, &used);
                if s < n {
                    used.push(s);
                }
                let xs = if s < n { &pop[s] } else { &archive[s - n] };
                for (d, (xr, xs)) in donor.iter_mut().zip(pop[r].iter().zip(xs)) {
                    *d += f * (xr - xs);
                }
            }
            donor.iter_mut().for_each(|v| *v = v.clamp(LOWER, UPPER));

            let mut trial = pop[i].clone();
            match config.crossover {
                Crossover::Binomial => {
                    let forced = rng.gen_range(0..dim);
                    for j in 0..dim {
                        if j == forced || rng.gen::<f64>() < cr {
                            trial[j] = donor[j];
                        }
                    }
                }
                Crossover::Exponential => {
                    let start = rng.gen_range(0..dim);
                    let mut len = 0;
                    loop {
                        trial[(start + len) % dim] = donor[(start + len) % dim];
                        len += 1;
                        if len >= dim || rng.gen::<f64>() >= cr {
                            break;
                        }
                    }
                }
            }
            let ft = ev.eval(&trial);
            trials.push((i, trial, ft, f, cr));
        }

        let mut successes = Vec::new();
        for (i, trial, ft, f, cr) in trials {
            if ft <= fit[i] {
                if ft < fit[i] {
                    if config.use_archive {
                        if archive.len() >= n {
                            let victim = rng.gen_range(0..archive.len());
                            archive.swap_remove(victim);
                        }
                        archive.push(pop[i].clone());
                    }
                    successes.push((f, cr, fit[i] - ft));
                }
                params[i] = (f, cr);
                pop[i] = trial;
                fit[i] = ft;
            }
        }
        if config.adaptation_method == Adaptation::Shade {
            shade.update(&successes);
        }
        generations += 1;

        if config.lpsr && pop0 > LPSR_MIN_POPULATION {
            let progress = ev.count as f64 / budget as f64;
            let target = (pop0 as f64 + (LPSR_MIN_POPULATION as f64 - pop0 as f64) * progress)
                .round()
                .clamp(LPSR_MIN_POPULATION as f64, pop0 as f64) as usize;
            if target < pop.len() {
                let keep = {
                    let mut k = sorted_by_fitness(&fit);
                    k.truncate(target);
                    k.sort_unstable();
                    k
                };
                pop = keep.iter().map(|&j| pop[j].clone()).collect();
                fit = keep.iter().map(|&j| fit[j]).collect();
                params = keep.iter().map(|&j| params[j]).collect();
                while archive.len() > pop.len() {
                    let victim = rng.gen_range(0..archive.len());
                    archive.swap_remove(victim);
                }
            }
        }
    }

    if f_range.0 > f_range.1 {
        f_range = (start_f, start_f);
        cr_range = (start_cr, start_cr);
    }
    Ok(RunOutcome {
        trajectory: Trajectory { points: ev.points },
        evaluations: ev.count,
        initial_best,
        final_population: pop.len(),
        generations,
        all_in_bounds: ev.in_bounds,
        f_range,
        cr_range,
    })
}
