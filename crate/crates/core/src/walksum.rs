//! Walk-sum oracles.
//!
//! With `R = I − Γ`, a walk `w = (w₀, …, w_k)` has weight
//! `ρ(w) = R_{w₀w₁}⋯R_{w_{k−1}w_k}` and, when non-backtracking,
//! `ν(w) = γ*_{w₀w₁}R_{w₀w₁}⋯γ*_{w_{k−1}w_k}R_{w_{k−1}w_k}`. Infinite walk
//! sets are truncated by length and every truncation carries an explicit
//! bound on the discarded tail.
//!
//! The bijective walk decompositions behind the identities checked here are
//! not built explicitly; they are verified through their numeric consequences
//! ([`verify_nb_identity`], the `AᵗD` walk identity in the tests).

use nalgebra::{DMatrix, DVector};

use crate::analysis::{self, build_a_d};
use crate::decomposition::check_arc_vector;
use crate::error::{Error, Result};
use crate::model::QuadraticProblem;

/// Hard cap on the number of DFS nodes a single enumeration may visit.
pub const ENUMERATION_BUDGET: u64 = 10_000_000;

/// Extra slack on top of the truncation bounds when comparing walk sums.
pub const IDENTITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Walk {
    pub vertices: Vec<usize>,
}

impl Walk {
    pub fn new(vertices: Vec<usize>) -> Self {
        Walk { vertices }
    }

    /// Number of steps.
    pub fn len(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() <= 1
    }

    pub fn is_nonbacktracking(&self) -> bool {
        self.vertices.windows(3).all(|w| w[0] != w[2])
    }

    pub fn validate(&self, p: &QuadraticProblem) -> Result<()> {
        if self.vertices.is_empty() {
            return Err(Error::InvalidWalk("walk has no vertices".into()));
        }
        if let Some(&v) = self.vertices.iter().find(|&&v| v >= p.n()) {
            return Err(Error::InvalidWalk(format!("vertex {v} out of range")));
        }
        for pair in self.vertices.windows(2) {
            if p.arc_id(pair[0], pair[1]).is_none() {
                return Err(Error::InvalidWalk(format!(
                    "({}, {}) is not an edge",
                    pair[0], pair[1]
                )));
            }
        }
        Ok(())
    }
}

pub fn rho_weight(p: &QuadraticProblem, w: &Walk) -> Result<f64> {
    w.validate(p)?;
    Ok(w.vertices
        .windows(2)
        .map(|s| p.r_entry(s[0], s[1]))
        .product())
}

pub fn nu_weight(p: &QuadraticProblem, gamma_star: &[f64], w: &Walk) -> Result<f64> {
    check_arc_vector(p, gamma_star)?;
    w.validate(p)?;
    if !w.is_nonbacktracking() {
        return Err(Error::BacktrackingWalk(w.vertices.clone()));
    }
    Ok(w.vertices
        .windows(2)
        .map(|s| {
            let id = p.arc_id(s[0], s[1]).expect("validated");
            gamma_star[id] * p.r_entry(s[0], s[1])
        })
        .product())
}

/// Depth-first walk enumeration in lexicographic order.
pub struct WalkIter<'a> {
    p: &'a QuadraticProblem,
    target: usize,
    max_len: usize,
    nonbacktracking: bool,
    path: Vec<usize>,
    cursor: Vec<usize>,
    started: bool,
}

impl Iterator for WalkIter<'_> {
    type Item = Walk;

    fn next(&mut self) -> Option<Walk> {
        if !self.started {
            self.started = true;
            if self.path[0] == self.target {
                return Some(Walk::new(self.path.clone()));
            }
        }
        while let Some(&v) = self.path.last() {
            let depth = self.path.len() - 1;
            if depth < self.max_len {
                let nbrs = self.p.neighbors(v);
                let c = self.cursor.last_mut().expect("cursor tracks path");
                while *c < nbrs.len() {
                    let u = nbrs[*c].vertex;
                    *c += 1;
                    if self.nonbacktracking && depth >= 1 && u == self.path[depth - 1] {
                        continue;
                    }
                    self.path.push(u);
                    self.cursor.push(0);
                    if u == self.target {
                        return Some(Walk::new(self.path.clone()));
                    }
                    break;
                }
                if self.path.len() - 1 > depth {
                    continue;
                }
            }
            self.path.pop();
            self.cursor.pop();
        }
        None
    }
}

/// Upper bound on DFS nodes for walks up to `max_len` steps.
fn enumeration_cost(p: &QuadraticProblem, max_len: usize, nonbacktracking: bool) -> u64 {
    let delta = (0..p.n()).map(|v| p.degree(v)).max().unwrap_or(0) as u64;
    let branching = if nonbacktracking {
        delta.saturating_sub(1)
    } else {
        delta
    };
    let mut total: u64 = 1;
    let mut level: u64 = 1;
    for l in 1..=max_len {
        level = if l == 1 {
            delta
        } else {
            level.saturating_mul(branching)
        };
        total = total.saturating_add(level);
        if level == 0 || total > ENUMERATION_BUDGET {
            break;
        }
    }
    total
}

/// All walks from `i` to `j` with at most `max_len` steps.
pub fn enumerate_walks(
    p: &QuadraticProblem,
    i: usize,
    j: usize,
    max_len: usize,
    nonbacktracking: bool,
) -> Result<WalkIter<'_>> {
    for v in [i, j] {
        if v >= p.n() {
            return Err(Error::VertexOutOfRange { vertex: v, n: p.n() });
        }
    }
    if enumeration_cost(p, max_len, nonbacktracking) > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudgetExceeded {
            budget: ENUMERATION_BUDGET,
        });
    }
    Ok(WalkIter {
        p,
        target: j,
        max_len,
        nonbacktracking,
        path: vec![i],
        cursor: vec![0],
        started: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkReport {
    pub count: usize,
    pub weight_sum: f64,
    /// Bound on the absolute weight of the walks beyond the truncation length.
    pub truncation_bound: f64,
}

/// Upper bound on `ρ(|R|)`, padded for the eigensolver's rounding error.
fn abs_r_radius(p: &QuadraticProblem) -> Result<f64> {
    let rho = analysis::abs_r_radius(p);
    if !(rho < 1.0) {
        return Err(Error::NotWalkSummable { rho });
    }
    Ok(if rho == 0.0 { 0.0 } else { rho + 1e-13 })
}

fn geometric_tail(rho: f64, after: usize) -> f64 {
    if rho >= 1.0 {
        f64::INFINITY
    } else if rho == 0.0 {
        0.0
    } else {
        rho.powi(after as i32 + 1) / (1.0 - rho)
    }
}

/// `Σ ρ(w)` over all walks `i → j` of length at most `max_len`. Because `|R|`
/// is symmetric, each entry of `|R|ᵗ` is at most `ρ(|R|)ᵗ`.
pub fn rho_walk_report(
    p: &QuadraticProblem,
    i: usize,
    j: usize,
    max_len: usize,
) -> Result<WalkReport> {
    let rho = abs_r_radius(p)?;
    let mut count = 0;
    let mut weight_sum = 0.0;
    for w in enumerate_walks(p, i, j, max_len, false)? {
        count += 1;
        weight_sum += rho_weight(p, &w)?;
    }
    Ok(WalkReport {
        count,
        weight_sum,
        truncation_bound: geometric_tail(rho, max_len),
    })
}

/// `Σ ν(w)` over non-backtracking walks `i → r` of length at most `max_len`.
///
/// The tail bound is exact: the absolute ν-weight of length-`t+1` walks
/// between two directed edges is an entry of `|A|ᵗ|D|`, so the tail is
/// `Σ_{t≥max_len} 𝟙_{→r}ᵀ|A|ᵗ|D|𝟙_{i→}`, computed as the full resolvent sum
/// minus the truncated one.
pub fn nu_walk_report(
    p: &QuadraticProblem,
    gamma_star: &[f64],
    i: usize,
    r: usize,
    max_len: usize,
) -> Result<WalkReport> {
    let mut count = 0;
    let mut weight_sum = 0.0;
    for w in enumerate_walks(p, i, r, max_len, true)? {
        count += 1;
        weight_sum += nu_weight(p, gamma_star, &w)?;
    }

    let ops = build_a_d(p, gamma_star)?;
    let abs_a = ops.abs_a();
    let m = p.num_arcs();
    let mut start = DVector::zeros(m);
    for nb in p.neighbors(i) {
        let id = p.arc_to(i, nb);
        start[id] = ops.d[id].abs();
    }
    let into_r: Vec<usize> = p.neighbors(r).iter().map(|nb| p.arc_from(r, nb)).collect();
    let select = |v: &DVector<f64>| into_r.iter().map(|&id| v[id]).sum::<f64>();

    let truncation_bound = if m == 0 {
        0.0
    } else {
        let total = (DMatrix::identity(m, m) - &abs_a)
            .lu()
            .solve(&start)
            .ok_or(Error::SpectralRadiusTooLarge { rho: f64::NAN })?;
        let mut partial = 0.0;
        let mut term = start;
        for _ in 0..max_len {
            partial += select(&term);
            term = &abs_a * &term;
        }
        (select(&total) - partial).max(0.0)
    };

    Ok(WalkReport {
        count,
        weight_sum,
        truncation_bound,
    })
}

/// `Σ_{t≤T} Rᵗrhs`, applying `R = I − Γ` sparsely.
fn series_apply(p: &QuadraticProblem, rhs: &[f64], terms: usize) -> Vec<f64> {
    let mut term = rhs.to_vec();
    let mut sum = term.clone();
    for _ in 0..terms {
        let gx = p.apply(&term);
        term = term.iter().zip(&gx).map(|(x, g)| x - g).collect();
        for (s, t) in sum.iter_mut().zip(&term) {
            *s += t;
        }
    }
    sum
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `Σ_{t≤T} Rᵗh` and a bound `‖h‖₂ρ(|R|)^{T+1}/(1 − ρ(|R|))` on the
/// ∞-norm of the remainder.
pub fn truncated_series_solution(p: &QuadraticProblem, terms: usize) -> Result<(Vec<f64>, f64)> {
    let rho = abs_r_radius(p)?;
    let norm = l2(p.h());
    let bound = if norm == 0.0 {
        0.0
    } else {
        norm * geometric_tail(rho, terms)
    };
    Ok((series_apply(p, p.h(), terms), bound))
}

/// Smallest `T` whose remainder bound for a right-hand side of 2-norm `norm`
/// is at most `tol`.
pub fn series_terms_for(p: &QuadraticProblem, norm: f64, tol: f64) -> Result<usize> {
    let rho = abs_r_radius(p)?;
    if norm == 0.0 || rho == 0.0 {
        return Ok(0);
    }
    let mut t = 0usize;
    while norm * geometric_tail(rho, t) > tol {
        t += 1;
    }
    Ok(t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NbIdentityReport {
    pub i: usize,
    pub r: usize,
    /// `ρ(𝒲ᵢ→ᵣ) = [Σₜ Rᵗ]ᵢᵣ`, from the truncated series.
    pub lhs: f64,
    /// `ν(𝒲ⁿᵇᵢ→ᵣ) / (1 − Σ_{u∈N(r)} Rᵤᵣ²γ*ᵤᵣ)`, from enumeration.
    pub rhs: f64,
    pub discrepancy: f64,
    pub lhs_bound: f64,
    pub rhs_bound: f64,
    pub walks: usize,
    pub passed: bool,
}

const LHS_SERIES_TOL: f64 = 1e-13;

pub fn verify_nb_identity(
    p: &QuadraticProblem,
    gamma_star: &[f64],
    i: usize,
    r: usize,
    depth: usize,
) -> Result<NbIdentityReport> {
    check_arc_vector(p, gamma_star)?;
    let mut unit = vec![0.0; p.n()];
    unit[i] = 1.0;
    let terms = series_terms_for(p, 1.0, LHS_SERIES_TOL)?;
    let lhs = series_apply(p, &unit, terms)[r];
    let lhs_bound = if terms == 0 { 0.0 } else { LHS_SERIES_TOL };

    let nu = nu_walk_report(p, gamma_star, i, r, depth)?;
    let load: f64 = p
        .neighbors(r)
        .iter()
        .map(|nb| {
            let id = p.arc_from(r, nb);
            let rr = p.r_entry(nb.vertex, r);
            rr * rr * gamma_star[id]
        })
        .sum();
    let denom = 1.0 - load;
    let rhs = nu.weight_sum / denom;
    let rhs_bound = nu.truncation_bound / denom;
    let discrepancy = (lhs - rhs).abs();
    Ok(NbIdentityReport {
        i,
        r,
        lhs,
        rhs,
        discrepancy,
        lhs_bound,
        rhs_bound,
        walks: nu.count,
        passed: discrepancy <= lhs_bound + rhs_bound + IDENTITY_SLACK,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfReturnReport {
    pub depth: usize,
    /// `γ⁽ᵈ⁾ᵢⱼ` for `d = 0..=depth`.
    pub history: Vec<f64>,
    /// `|γ⁽ᵈ⁾ᵢⱼ − γ*ᵢⱼ|` at the final depth.
    pub arc_gap: f64,
    /// `max |γ⁽ᵈ⁾ − γ*|` over all directed edges at the final depth.
    pub max_gap: f64,
    /// `None` at depth 0, which is only a baseline.
    pub passed: Option<bool>,
}

/// Self-returning walk weights on the computation tree, bounded to depth `d`:
/// `γ⁽ᵈ⁾ᵢⱼ = 1 / (1 − Σ_{u∈N(i)∖j} Rᵤᵢ²γ⁽ᵈ⁻¹⁾ᵤᵢ)` from `γ⁽⁰⁾ = 𝟙`. Their limit
/// should be `γ*`.
pub fn verify_self_return(
    p: &QuadraticProblem,
    gamma_star: &[f64],
    i: usize,
    j: usize,
    depth: usize,
    tol: f64,
) -> Result<SelfReturnReport> {
    check_arc_vector(p, gamma_star)?;
    let arc = p.arc_id(i, j).ok_or_else(|| Error::InvalidWalk(format!("({i}, {j}) is not an edge")))?;
    let m = p.num_arcs();
    let mut current = vec![1.0; m];
    let mut history = vec![current[arc]];
    for _ in 0..depth {
        let mut next = vec![0.0; m];
        for (id, slot) in next.iter_mut().enumerate() {
            let (a, b) = p.arc(id);
            let load: f64 = p
                .neighbors(a)
                .iter()
                .filter(|nb| nb.vertex != b)
                .map(|nb| {
                    let u = nb.vertex;
                    let rr = p.r_entry(u, a);
                    rr * rr * current[p.arc_id(u, a).expect("neighbor")]
                })
                .sum();
            *slot = 1.0 / (1.0 - load);
        }
        current = next;
        history.push(current[arc]);
    }
    let max_gap = current
        .iter()
        .zip(gamma_star)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(SelfReturnReport {
        depth,
        arc_gap: (current[arc] - gamma_star[arc]).abs(),
        max_gap,
        history,
        passed: (depth > 0).then_some(max_gap <= tol),
    })
}
