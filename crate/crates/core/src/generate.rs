//! Random walk-summable instances.
//!
//! Couplings are sampled on a connected graph and then rescaled so that
//! `ρ(|R|)` hits the requested target. Since `ρ(R) ≤ ρ(|R|) < 1`, the
//! resulting `Γ = I − R` is positive definite.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::spectral_radius;
use crate::error::{Error, Result};
use crate::model::QuadraticProblem;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphModel {
    Path,
    Cycle,
    Grid,
    Erdos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignMode {
    /// Every `Rᵢⱼ > 0`.
    Attractive,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    /// Equal magnitudes before rescaling.
    Unit,
    /// Magnitudes uniform in `[0.5, 1.5]` before rescaling.
    Random,
}

macro_rules! impl_enum_str {
    ($ty:ty, $($variant:ident => $name:literal),+ $(,)?) => {
        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($name => Ok(<$ty>::$variant),)+
                    other => Err(Error::InvalidParams(format!(
                        "unknown {} `{other}`", stringify!($ty)
                    ))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self { $(<$ty>::$variant => $name,)+ })
            }
        }
    };
}

impl_enum_str!(GraphModel, Path => "path", Cycle => "cycle", Grid => "grid", Erdos => "erdos");
impl_enum_str!(SignMode, Attractive => "attractive", Mixed => "mixed");
impl_enum_str!(WeightMode, Unit => "unit", Random => "random");

#[derive(Debug, Clone, PartialEq)]
pub struct GenSpec {
    pub n: usize,
    pub model: GraphModel,
    pub target_rho: f64,
    pub sign: SignMode,
    /// Defaults to `Unit` for path/cycle/grid and `Random` for erdos.
    pub weights: Option<WeightMode>,
    pub seed: u64,
}

impl GenSpec {
    pub fn weights(&self) -> WeightMode {
        self.weights.unwrap_or(match self.model {
            GraphModel::Erdos => WeightMode::Random,
            _ => WeightMode::Unit,
        })
    }
}

/// Tolerance to which the generated `ρ(|R|)` matches the target.
pub const TARGET_TOLERANCE: f64 = 1e-6;

fn structure(model: GraphModel, n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = BTreeSet::new();
    match model {
        GraphModel::Path => edges.extend((1..n).map(|v| (v - 1, v))),
        GraphModel::Cycle => {
            edges.extend((1..n).map(|v| (v - 1, v)));
            if n >= 3 {
                edges.insert((0, n - 1));
            }
        }
        GraphModel::Grid => {
            let width = (n as f64).sqrt().ceil().max(1.0) as usize;
            for v in 0..n {
                if (v + 1) % width != 0 && v + 1 < n {
                    edges.insert((v, v + 1));
                }
                if v + width < n {
                    edges.insert((v, v + width));
                }
            }
        }
        GraphModel::Erdos => {
            // random spanning tree keeps the graph connected
            for v in 1..n {
                let parent = rng.gen_range(0..v);
                edges.insert((parent, v));
            }
            let q = (3.0 / n as f64).min(1.0);
            for i in 0..n {
                for j in i + 1..n {
                    if rng.gen_bool(q) {
                        edges.insert((i, j));
                    }
                }
            }
        }
    }
    edges.into_iter().collect()
}

pub fn generate(spec: &GenSpec) -> Result<QuadraticProblem> {
    if spec.n == 0 {
        return Err(Error::InvalidParams("n must be at least 1".into()));
    }
    if !(spec.target_rho > 0.0 && spec.target_rho < 1.0) {
        return Err(Error::InvalidParams(format!(
            "target_rho must lie in (0, 1), got {}",
            spec.target_rho
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let edges = structure(spec.model, spec.n, &mut rng);
    let weights = spec.weights();
    let mut couplings: Vec<(usize, usize, f64)> = edges
        .iter()
        .map(|&(i, j)| {
            let magnitude = match weights {
                WeightMode::Unit => 1.0,
                WeightMode::Random => rng.gen_range(0.5..1.5),
            };
            let negative_r = match spec.sign {
                SignMode::Attractive => false,
                SignMode::Mixed => rng.gen_bool(0.5),
            };
            // Γᵢⱼ = −Rᵢⱼ
            (i, j, if negative_r { magnitude } else { -magnitude })
        })
        .collect();
    let h: Vec<f64> = (0..spec.n).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let unscaled = QuadraticProblem::new(spec.n, &couplings, h.clone())?;
    if unscaled.num_edges() == 0 {
        return Ok(unscaled);
    }
    let rho = spectral_radius(&unscaled.dense_abs_r(), 1e-12)?;
    let factor = spec.target_rho / rho;
    for c in &mut couplings {
        c.2 *= factor;
    }
    let p = QuadraticProblem::new(spec.n, &couplings, h)?;
    let achieved = spectral_radius(&p.dense_abs_r(), 1e-12)?;
    if (achieved - spec.target_rho).abs() > TARGET_TOLERANCE {
        return Err(Error::InvalidParams(format!(
            "rescaling reached ρ(|R|) = {achieved}, target {}",
            spec.target_rho
        )));
    }
    Ok(p)
}
