#![allow(dead_code)]

use std::path::{Path, PathBuf};

use minsum::analysis::spectral_radius;
use minsum::generate::{generate, GenSpec, GraphModel, SignMode, WeightMode};
use minsum::io::load_problem;
use minsum::model::{normalize, QuadraticProblem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

pub fn fixture_path(name: &str) -> PathBuf {
    fixture_dir().join(name)
}

pub fn fixture(name: &str) -> QuadraticProblem {
    normalize(&load_problem(fixture_path(name)).unwrap()).unwrap().0
}

/// Every shipped instance at the top of the fixture directory. All of them are
/// walk-summable.
pub fn fixtures() -> Vec<(String, QuadraticProblem)> {
    let mut names: Vec<String> = std::fs::read_dir(fixture_dir())
        .unwrap()
        .filter_map(|e| {
            let path = e.unwrap().path();
            (path.extension()? == "txt").then(|| path.file_name().unwrap().to_string_lossy().into_owned())
        })
        .collect();
    names.sort();
    names.into_iter().map(|n| (n.clone(), fixture(&n))).collect()
}

pub fn triangle() -> QuadraticProblem {
    QuadraticProblem::new(3, &[(0, 1, -0.4), (1, 2, -0.4), (0, 2, -0.4)], vec![1.0; 3]).unwrap()
}

pub const MODELS: [GraphModel; 4] = [GraphModel::Path, GraphModel::Cycle, GraphModel::Grid, GraphModel::Erdos];

pub fn generated(n: usize, model: GraphModel, rho: f64, mixed: bool, seed: u64) -> QuadraticProblem {
    generate(&GenSpec {
        n,
        model,
        target_rho: rho,
        sign: if mixed { SignMode::Mixed } else { SignMode::Attractive },
        weights: Some(WeightMode::Random),
        seed,
    })
    .unwrap()
}

/// Random walk-summable instances with up to `max_n` vertices and
/// `ρ(|R|) ≤ max_rho`.
pub fn arb_walk_summable(max_n: usize, max_rho: f64) -> impl Strategy<Value = QuadraticProblem> {
    (2..=max_n, 0..4usize, 0.05..max_rho, any::<bool>(), any::<u64>())
        .prop_map(|(n, m, rho, mixed, seed)| generated(n, MODELS[m], rho, mixed, seed))
}

/// Random tree with couplings scaled to `ρ(|R|) = rho`.
pub fn random_tree(n: usize, rho: f64, seed: u64) -> QuadraticProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut couplings: Vec<(usize, usize, f64)> = (1..n)
        .map(|v| {
            let parent = rng.gen_range(0..v);
            let mag = rng.gen_range(0.5..1.5);
            (parent, v, if rng.gen_bool(0.5) { mag } else { -mag })
        })
        .collect();
    let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let p = QuadraticProblem::new(n, &couplings, h.clone()).unwrap();
    if n > 1 {
        let scale = rho / spectral_radius(&p.dense_abs_r(), 1e-12).unwrap();
        for c in &mut couplings {
            c.2 *= scale;
        }
    }
    QuadraticProblem::new(n, &couplings, h).unwrap()
}

/// Random positive definite instance that need not be walk-summable: couplings
/// scaled so the smallest eigenvalue of `Γ` is `min_eig`.
pub fn random_pd(n: usize, density: f64, min_eig: f64, seed: u64) -> QuadraticProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut couplings = Vec::new();
    for v in 1..n {
        couplings.push((rng.gen_range(0..v), v, rng.gen_range(-1.0..1.0)));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) && !couplings.iter().any(|c| (c.0, c.1) == (i, j)) {
                couplings.push((i, j, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    couplings.retain(|c| c.2 != 0.0);
    let h: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let p = QuadraticProblem::new(n, &couplings, h.clone()).unwrap();
    if n > 1 {
        // Γ = I − R has smallest eigenvalue 1 − λmax(R)
        let lmax = p.dense_r().symmetric_eigenvalues().max();
        if lmax > 1.0 - min_eig {
            let scale = (1.0 - min_eig) / lmax;
            for c in &mut couplings {
                c.2 *= scale;
            }
        }
    }
    QuadraticProblem::new(n, &couplings, h).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
