//! Built-in problem suite on the box [-5, 5]^D.
//!
//! Each function is shifted so that its optimum sits at `optimum_shift` with
//! value 0, so the returned value is directly the target precision.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kg::ProblemRecord;
use crate::seed::SeedMixer;

pub const LOWER: f64 = -5.0;
pub const UPPER: f64 = 5.0;
/// Shifts are drawn from this sub-box so the optimum is strictly interior.
const SHIFT_BOUND: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Function {
    Sphere,
    SeparableEllipsoid,
    AttractiveSector,
    Rosenbrock,
    RotatedEllipsoid,
    Rastrigin,
    Schaffer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemClass {
    Separable,
    LowConditioning,
    HighConditioningUnimodal,
    MultimodalStrong,
    MultimodalWeak,
}

impl ProblemClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ProblemClass::Separable => "separable",
            ProblemClass::LowConditioning => "low_conditioning",
            ProblemClass::HighConditioningUnimodal => "high_conditioning_unimodal",
            ProblemClass::MultimodalStrong => "multimodal_strong",
            ProblemClass::MultimodalWeak => "multimodal_weak",
        }
    }
}

impl Function {
    pub const ALL: [Function; 7] = [
        Function::Sphere,
        Function::SeparableEllipsoid,
        Function::AttractiveSector,
        Function::Rosenbrock,
        Function::RotatedEllipsoid,
        Function::Rastrigin,
        Function::Schaffer,
    ];

    /// 1-based id used in problem ids (`f<id>_i<instance>_d<dim>`).
    pub fn id(self) -> u32 {
        Function::ALL.iter().position(|&f| f == self).unwrap() as u32 + 1
    }

    pub fn from_id(id: u32) -> Option<Function> {
        Function::ALL.get((id as usize).checked_sub(1)?).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Function::Sphere => "sphere",
            Function::SeparableEllipsoid => "separable_ellipsoid",
            Function::AttractiveSector => "attractive_sector",
            Function::Rosenbrock => "rosenbrock",
            Function::RotatedEllipsoid => "rotated_ellipsoid",
            Function::Rastrigin => "rastrigin",
            Function::Schaffer => "schaffer",
        }
    }

    pub fn class(self) -> ProblemClass {
        match self {
            Function::Sphere | Function::SeparableEllipsoid => ProblemClass::Separable,
            Function::AttractiveSector | Function::Rosenbrock => ProblemClass::LowConditioning,
            Function::RotatedEllipsoid => ProblemClass::HighConditioningUnimodal,
            Function::Rastrigin => ProblemClass::MultimodalStrong,
            Function::Schaffer => ProblemClass::MultimodalWeak,
        }
    }
}

impl fmt::Display for Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Function {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(id) = s.trim_start_matches('f').parse::<u32>() {
            if let Some(f) = Function::from_id(id) {
                return Ok(f);
            }
        }
        Function::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown function {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstanceDescriptor {
    pub function: Function,
    pub instance_index: u32,
    pub dimension: usize,
    pub optimum_shift: Vec<f64>,
    /// Orthogonal matrix, row-major, used by the rotated ellipsoid.
    rotation: Option<Vec<f64>>,
}

impl ProblemInstanceDescriptor {
    /// The instance derived deterministically from (function, instance, dimension).
    pub fn new(function: Function, instance_index: u32, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if instance_index == 0 {
            return Err(Error::Config("instance index is 1-based".into()));
        }
        let mut rng = SeedMixer::new(0x6b67_7065_7266)
            .int(function.id() as u64)
            .int(instance_index as u64)
            .int(dimension as u64)
            .rng();
        let optimum_shift = (0..dimension)
            .map(|_| rng.gen_range(-SHIFT_BOUND..SHIFT_BOUND))
            .collect();
        let rotation = (function == Function::RotatedEllipsoid)
            .then(|| random_rotation(dimension, &mut rng));
        Ok(ProblemInstanceDescriptor {
            function,
            instance_index,
            dimension,
            optimum_shift,
            rotation,
        })
    }

    /// An instance with an explicit shift and identity rotation.
    pub fn with_shift(function: Function, shift: Vec<f64>) -> Result<Self> {
        if shift.is_empty() {
            return Err(Error::Config("dimension must be positive".into()));
        }
        if shift.iter().any(|s| !(LOWER < *s && *s < UPPER)) {
            return Err(Error::Config("optimum shift must lie strictly inside the box".into()));
        }
        Ok(ProblemInstanceDescriptor {
            function,
            instance_index: 1,
            dimension: shift.len(),
            optimum_shift: shift,
            rotation: None,
        })
    }

    pub fn id(&self) -> String {
        format!("f{}_i{}_d{}", self.function.id(), self.instance_index, self.dimension)
    }

    pub fn class(&self) -> ProblemClass {
        self.function.class()
    }

    pub fn record(&self) -> ProblemRecord {
        ProblemRecord {
            id: self.id(),
            function: format!("f{}", self.function.id()),
            instance: self.instance_index,
            class: self.class().as_str().to_string(),
        }
    }

    /// Target precision f(x) − f(x*) at `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: x.len(),
            });
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dimension;
        let z: Vec<f64> = x.iter().zip(&self.optimum_shift).map(|(a, s)| a - s).collect();
        match self.function {
            Function::Sphere => z.iter().map(|v| v * v).sum(),
            Function::SeparableEllipsoid => ellipsoid(&z),
            Function::RotatedEllipsoid => {
                let rot = self.rotation.as_deref();
                let rz: Vec<f64> = match rot {
                    Some(m) => (0..d)
                        .map(|i| (0..d).map(|j| m[i * d + j] * z[j]).sum())
                        .collect(),
                    None => z,
                };
                ellipsoid(&rz)
            }
            Function::AttractiveSector => z
                .iter()
                .zip(&self.optimum_shift)
                .map(|(zi, si)| {
                    let s = if zi * si > 0.0 { 100.0 } else { 1.0 };
                    (s * zi) * (s * zi)
                })
                .sum(),
            Function::Rosenbrock => {
                let y: Vec<f64> = z.iter().map(|v| v + 1.0).collect();
                if d == 1 {
                    return (y[0] - 1.0).powi(2);
                }
                y.windows(2)
                    .map(|w| 100.0 * (w[0] * w[0] - w[1]).powi(2) + (w[0] - 1.0).powi(2))
                    .sum()
            }
            Function::Rastrigin => {
                10.0 * d as f64
                    + z.iter()
                        .map(|v| v * v - 10.0 * (2.0 * PI * v).cos())
                        .sum::<f64>()
            }
            Function::Schaffer => {
                let s: Vec<f64> = if d == 1 {
                    vec![z[0].abs()]
                } else {
                    z.windows(2).map(|w| (w[0] * w[0] + w[1] * w[1]).sqrt()).collect()
                };
                let m = s.len() as f64;
                let inner: f64 = s
                    .iter()
                    .map(|&si| si.sqrt() + si.sqrt() * (50.0 * si.powf(0.2)).sin().powi(2))
                    .sum::<f64>()
                    / m;
                inner * inner
            }
        }
    }
}

fn ellipsoid(z: &[f64]) -> f64 {
    let d = z.len();
    z.iter()
        .enumerate()
        .map(|(i, v)| {
            let exp = if d > 1 { 6.0 * i as f64 / (d - 1) as f64 } else { 0.0 };
            10f64.powf(exp) * v * v
        })
        .sum()
}

/// Gram–Schmidt on a Gaussian matrix; rows are orthonormal.
fn random_rotation(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(d);
    while rows.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        for r in &rows {
            let dot: f64 = v.iter().zip(r).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= dot * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            rows.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    rows.concat()
}

/// The instances `1..=instances` of each function at dimension `dim`.
pub fn problem_suite(
    functions: &[Function],
    instances: u32,
    dim: usize,
) -> Result<Vec<ProblemInstanceDescriptor>> {
    let mut out = Vec::with_capacity(functions.len() * instances as usize);
    for &f in functions {
        for i in 1..=instances {
            out.push(ProblemInstanceDescriptor::new(f, i, dim)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_is_zero_at_its_optimum() {
        let p = ProblemInstanceDescriptor::new(Function::Sphere, 3, 5).unwrap();
        assert_eq!(p.evaluate(&p.optimum_shift).unwrap(), 0.0);
    }

    #[test]
    fn sphere_unit_vector() {
        let p = ProblemInstanceDescriptor::with_shift(Function::Sphere, vec![0.0; 4]).unwrap();
        assert_eq!(p.evaluate(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn rastrigin_origin() {
        let p = ProblemInstanceDescriptor::with_shift(Function::Rastrigin, vec![0.0; 3]).unwrap();
        assert_eq!(p.evaluate(&[0.0; 3]).unwrap(), 0.0);
    }

    #[test]
    fn all_functions_vanish_at_the_optimum_and_are_nonnegative() {
        let mut rng = SeedMixer::new(5).rng();
        for f in Function::ALL {
            for d in [1, 2, 5] {
                let p = ProblemInstanceDescriptor::new(f, 2, d).unwrap();
                let at_opt = p.evaluate(&p.optimum_shift).unwrap();
                assert!(at_opt.abs() < 1e-12, "{f} d={d}: {at_opt}");
                for _ in 0..200 {
                    let x: Vec<f64> = (0..d).map(|_| rng.gen_range(LOWER..=UPPER)).collect();
                    assert!(p.evaluate(&x).unwrap() >= 0.0);
                }
            }
        }
    }

    #[test]
    fn shift_is_deterministic_and_interior() {
        let a = ProblemInstanceDescriptor::new(Function::Rastrigin, 4, 5).unwrap();
        let b = ProblemInstanceDescriptor::new(Function::Rastrigin, 4, 5).unwrap();
        let c = ProblemInstanceDescriptor::new(Function::Rastrigin, 5, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.optimum_shift, c.optimum_shift);
        assert!(a.optimum_shift.iter().all(|s| s.abs() < UPPER));
    }

    #[test]
    fn rotation_is_orthonormal() {
        let p = ProblemInstanceDescriptor::new(Function::RotatedEllipsoid, 1, 4).unwrap();
        let m = p.rotation.as_ref().unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|k| m[i * 4 + k] * m[j * 4 + k]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch() {
        let p = ProblemInstanceDescriptor::new(Function::Sphere, 1, 3).unwrap();
        assert!(matches!(
            p.evaluate(&[0.0; 2]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
    }

    #[test]
    fn ids_and_records() {
        let p = ProblemInstanceDescriptor::new(Function::Rosenbrock, 2, 5).unwrap();
        assert_eq!(p.id(), "f4_i2_d5");
        let r = p.record();
        assert_eq!(r.function, "f4");
        assert_eq!(r.instance, 2);
        assert_eq!(r.class, "low_conditioning");
        assert_eq!("f4".parse::<Function>().unwrap(), Function::Rosenbrock);
        assert_eq!("schaffer".parse::<Function>().unwrap(), Function::Schaffer);
    }
}
