//! Fixed-point analysis of the min-sum iteration.
//!
//! The quadratic update is the operator
//! `Fᵢⱼ(γ) = 1 / (1 − Σ_{u∈N(i)∖j} Γᵤᵢ²γᵤᵢ)`; with `γ` frozen at its fixed
//! point `γ*` the linear update becomes affine, `z ← −Dy + Az`, over the
//! directed edge space:
//!
//! ```text
//! A[{i,j},{u,i}] = −γ*ᵢⱼΓᵢⱼ   for u ∈ N(i)∖j
//! D[{i,j},{i,j}] = −γ*ᵢⱼΓᵢⱼ
//! y{i,j}         = hᵢ
//! ```

use nalgebra::{DMatrix, DVector};

use crate::decomposition::{check_arc_vector, construct_witness};
use crate::engine::{estimate_unchecked, gamma_step, max_abs_diff};
use crate::error::{Error, Result};
use crate::model::{direct_solve, inf_norm, QuadraticProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationOptions {
    /// Relative tolerance on the Perron value.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        PowerIterationOptions {
            tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

/// Perron value estimate of an entrywise nonnegative matrix.
///
/// `lower` and `upper` are Collatz–Wielandt bounds from the last iterate and
/// hold whether or not the iteration converged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerronEstimate {
    pub estimate: f64,
    pub previous: f64,
    pub lower: f64,
    pub upper: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl PerronEstimate {
    fn exact(value: f64) -> Self {
        PerronEstimate {
            estimate: value,
            previous: value,
            lower: value,
            upper: value,
            iterations: 0,
            converged: true,
        }
    }
}

/// Power iteration from the all-ones vector.
///
/// Iterates with `M/s + I` (`s` the largest row sum): the shift makes the
/// Perron value strictly dominant in modulus, which plain iteration lacks on
/// bipartite and other periodic sparsity patterns. Nilpotent inputs are
/// detected first and return exactly 0.
pub fn power_iteration(m: &DMatrix<f64>, opts: &PowerIterationOptions) -> PerronEstimate {
    let dim = m.nrows();
    assert_eq!(dim, m.ncols(), "power iteration needs a square matrix");
    if dim == 0 {
        return PerronEstimate::exact(0.0);
    }
    let scale = m
        .row_iter()
        .map(|row| row.iter().sum::<f64>())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return PerronEstimate::exact(0.0);
    }

    // Mᵏ𝟙 = 0 for some k ≤ dim iff M is nilpotent (M ≥ 0)
    let mut probe = DVector::from_element(dim, 1.0);
    for _ in 0..dim {
        probe = m * &probe;
        let top = probe.max();
        if top == 0.0 {
            return PerronEstimate::exact(0.0);
        }
        probe /= top;
    }

    let shifted = m / scale + DMatrix::identity(dim, dim);
    let mut x = DVector::from_element(dim, 1.0 / dim as f64);
    let mut prev = f64::NAN;
    let mut prev_diff = f64::NAN;
    let mut out = PerronEstimate {
        estimate: f64::NAN,
        previous: f64::NAN,
        lower: 0.0,
        upper: f64::INFINITY,
        iterations: 0,
        converged: false,
    };

    for k in 1..=opts.max_iter {
        let y = &shifted * &x;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for (yi, xi) in y.iter().zip(x.iter()) {
            if *xi > 0.0 {
                let r = yi / xi;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        let ratio = y.sum() / x.sum();
        let lower = ((lo - 1.0) * scale).max(0.0);
        let upper = (hi - 1.0) * scale;
        let est = ((ratio - 1.0) * scale).clamp(lower, upper);

        out = PerronEstimate {
            estimate: est,
            previous: prev,
            lower: lower.max(out.lower),
            upper: upper.min(out.upper),
            iterations: k,
            converged: false,
        };

        let gap_closed = upper - lower <= opts.tol * upper.max(f64::MIN_POSITIVE);
        let diff = (est - prev).abs();
        // geometric error estimate from two successive differences
        let q = diff / prev_diff;
        let settled = k > 2
            && diff <= opts.tol * est
            && q < 1.0
            && diff * q / (1.0 - q) <= opts.tol * est;
        if gap_closed || settled {
            out.converged = true;
            return out;
        }

        prev_diff = diff;
        prev = est;
        let norm = y.sum();
        x = y / norm;
    }
    out
}

/// Perron value of an entrywise nonnegative matrix.
///
/// Symmetric inputs (such as `|R|`) go through a symmetric eigensolver, whose
/// largest eigenvalue is the Perron value; power iteration can need far more
/// than its iteration cap on long paths, where the spectral gap is tiny. Other
/// inputs use [`power_iteration`].
pub fn spectral_radius(m: &DMatrix<f64>, tol: f64) -> Result<f64> {
    if m.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidParams(
            "spectral_radius expects a finite nonnegative matrix".into(),
        ));
    }
    if m.is_square() && m == &m.transpose() {
        return Ok(symmetric_perron(m));
    }
    let est = power_iteration(
        m,
        &PowerIterationOptions {
            tol,
            ..PowerIterationOptions::default()
        },
    );
    if est.converged {
        Ok(est.estimate)
    } else {
        Err(Error::NoConvergence {
            last: est.estimate,
            previous: est.previous,
        })
    }
}

fn symmetric_perron(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().symmetric_eigenvalues().max().max(0.0)
}

/// `ρ(|R|)`.
pub fn abs_r_radius(p: &QuadraticProblem) -> f64 {
    symmetric_perron(&p.dense_abs_r())
}

/// One application of the quadratic-parameter update.
pub fn operator_f(p: &QuadraticProblem, gamma: &[f64]) -> Result<Vec<f64>> {
    gamma_step(p, gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub gamma_star: Vec<f64>,
    pub iterations: usize,
    pub final_delta: f64,
}

pub const GAMMA_STAR_MAX_ITER: usize = 1_000_000;

/// Iterates `F` from 0 up to the fixed point `γ*`.
pub fn compute_gamma_star(p: &QuadraticProblem, tol: f64) -> Result<FixedPointResult> {
    construct_witness(p)?;
    iterate_f(p, vec![0.0; p.num_arcs()], tol)
}

/// Iterates `F` from an arbitrary start, e.g. a witness (descending to `γ*`).
pub fn compute_gamma_star_from(
    p: &QuadraticProblem,
    start: &[f64],
    tol: f64,
) -> Result<FixedPointResult> {
    check_arc_vector(p, start)?;
    construct_witness(p)?;
    iterate_f(p, start.to_vec(), tol)
}

fn iterate_f(p: &QuadraticProblem, mut gamma: Vec<f64>, tol: f64) -> Result<FixedPointResult> {
    if p.num_arcs() == 0 {
        return Ok(FixedPointResult {
            gamma_star: gamma,
            iterations: 0,
            final_delta: 0.0,
        });
    }
    for it in 1..=GAMMA_STAR_MAX_ITER {
        let next = operator_f(p, &gamma)?;
        let delta = max_abs_diff(&next, &gamma);
        gamma = next;
        if delta <= tol {
            return Ok(FixedPointResult {
                gamma_star: gamma,
                iterations: it,
                final_delta: delta,
            });
        }
    }
    Err(Error::NonConvergence {
        iterations: GAMMA_STAR_MAX_ITER,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeOperatorMatrices {
    pub a: DMatrix<f64>,
    /// Diagonal of `D`.
    pub d: DVector<f64>,
    pub y: DVector<f64>,
}

impl EdgeOperatorMatrices {
    pub fn abs_a(&self) -> DMatrix<f64> {
        self.a.abs()
    }

    /// `−Dy`, the constant term of the affine linear-parameter update.
    pub fn offset(&self) -> DVector<f64> {
        -self.d.component_mul(&self.y)
    }
}

pub fn build_a_d(p: &QuadraticProblem, gamma_star: &[f64]) -> Result<EdgeOperatorMatrices> {
    check_arc_vector(p, gamma_star)?;
    let m = p.num_arcs();
    let mut a = DMatrix::zeros(m, m);
    let mut d = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    for row in 0..m {
        let (i, j) = p.arc(row);
        let value = -gamma_star[row] * p.arc_coupling(row);
        d[row] = value;
        y[row] = p.h()[i];
        for nb in p.neighbors(i) {
            if nb.vertex != j {
                a[(row, p.arc_from(i, nb))] = value;
            }
        }
    }
    Ok(EdgeOperatorMatrices { a, d, y })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZFixed {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    pub rho_abs_a: f64,
    /// `‖x − Γ⁻¹h‖∞`.
    pub exactness_gap: f64,
}

/// Limit of the linear parameters, `z^∞ = −(I − A)⁻¹Dy`, and the estimate it
/// induces.
pub fn z_fixed(p: &QuadraticProblem, gamma_star: &[f64]) -> Result<ZFixed> {
    let ops = build_a_d(p, gamma_star)?;
    let rho = power_iteration(&ops.abs_a(), &PowerIterationOptions::default());
    let rho_abs_a = if rho.converged { rho.estimate } else { rho.upper };
    if !(rho_abs_a < 1.0) {
        return Err(Error::SpectralRadiusTooLarge { rho: rho_abs_a });
    }
    let m = p.num_arcs();
    let system = DMatrix::identity(m, m) - &ops.a;
    let z = system
        .lu()
        .solve(&ops.offset())
        .ok_or(Error::SpectralRadiusTooLarge { rho: rho_abs_a })?;
    let z: Vec<f64> = z.iter().copied().collect();
    let x = estimate_unchecked(p, gamma_star, &z)
        .complete()
        .ok_or_else(|| Error::InvalidParams("estimate undefined at γ*".into()))?;
    let exact = direct_solve(p)?;
    let exactness_gap = max_abs_diff(&x, &exact);
    Ok(ZFixed {
        z,
        x,
        rho_abs_a,
        exactness_gap,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesResult {
    pub z: Vec<f64>,
    pub terms: usize,
}

pub const SERIES_TERM_TOL: f64 = 1e-14;
const SERIES_MAX_TERMS: usize = 10_000_000;

/// `z^∞ = −Σₜ AᵗDy`, truncated once a term drops below `1e-14` (∞-norm).
pub fn z_fixed_series(p: &QuadraticProblem, gamma_star: &[f64]) -> Result<SeriesResult> {
    let ops = build_a_d(p, gamma_star)?;
    let mut term = ops.offset();
    let mut sum = term.clone();
    let mut terms = 1;
    while term.amax() >= SERIES_TERM_TOL {
        if terms >= SERIES_MAX_TERMS {
            return Err(Error::NonConvergence { iterations: terms });
        }
        term = &ops.a * &term;
        sum += &term;
        terms += 1;
    }
    Ok(SeriesResult {
        z: sum.iter().copied().collect(),
        terms,
    })
}

/// Summary used by the `analyze` subcommand.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct AnalysisReport {
    pub walk_summable: bool,
    pub rho_abs_r: f64,
    pub rho_abs_a: Option<f64>,
    pub gamma_star_min: Option<f64>,
    pub gamma_star_max: Option<f64>,
    pub gamma_star_iterations: Option<usize>,
    pub witness_margin: Option<f64>,
    pub x_infinity_residual: Option<f64>,
    pub x_infinity_gap: Option<f64>,
}

pub fn analyze(p: &QuadraticProblem, tol: f64) -> Result<AnalysisReport> {
    let mut report = AnalysisReport {
        walk_summable: false,
        rho_abs_r: abs_r_radius(p),
        rho_abs_a: None,
        gamma_star_min: None,
        gamma_star_max: None,
        gamma_star_iterations: None,
        witness_margin: None,
        x_infinity_residual: None,
        x_infinity_gap: None,
    };
    let witness = match construct_witness(p) {
        Ok(w) => w,
        Err(Error::NotWalkSummable { .. }) => return Ok(report),
        Err(e) => return Err(e),
    };
    report.walk_summable = true;
    report.witness_margin = Some(witness.margin);
    let fp = compute_gamma_star(p, tol)?;
    report.gamma_star_iterations = Some(fp.iterations);
    if !fp.gamma_star.is_empty() {
        report.gamma_star_min = Some(fp.gamma_star.iter().copied().fold(f64::INFINITY, f64::min));
        report.gamma_star_max = Some(fp.gamma_star.iter().copied().fold(0.0, f64::max));
    }
    let zf = z_fixed(p, &fp.gamma_star)?;
    report.rho_abs_a = Some(zf.rho_abs_a);
    report.x_infinity_residual = Some(inf_norm(
        &p.apply(&zf.x)
            .iter()
            .zip(p.h())
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    ));
    report.x_infinity_gap = Some(zf.exactness_gap);
    Ok(report)
}
