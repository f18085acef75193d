//! Problem representation for `min ½xᵀΓx − hᵀx` on a sparse graph.
//!
//! A [`RawProblem`] is whatever the user supplied: an upper-triangular
//! coordinate list plus the linear term. [`normalize`] rescales it to unit
//! diagonal, drops zero couplings and builds the directed-edge index that the
//! message-passing code works on.

use std::collections::{BTreeMap, VecDeque};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Symmetric matrix in upper-triangular coordinate form plus the linear term.
#[derive(Debug, Clone, PartialEq)]
pub struct RawProblem {
    pub n: usize,
    /// `(i, j, value)` with `i <= j`.
    pub entries: Vec<(usize, usize, f64)>,
    pub h: Vec<f64>,
}

/// Original diagonal of a normalized problem.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationRecord {
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Neighbor {
    pub vertex: usize,
    /// Undirected edge index.
    pub edge: usize,
}

/// Normalized problem: `Γᵢᵢ = 1` (implicit), nonzero couplings on a connected
/// graph.
///
/// Every undirected edge `k = (a, b)` with `a < b` owns two directed edges:
/// `2k` is `{a,b}` and `2k + 1` is `{b,a}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProblem {
    n: usize,
    edges: Vec<(usize, usize)>,
    coupling: Vec<f64>,
    h: Vec<f64>,
    neighbors: Vec<Vec<Neighbor>>,
}

impl QuadraticProblem {
    /// Builds a unit-diagonal problem from off-diagonal couplings. Zero
    /// couplings are dropped; self-loops, duplicates and disconnected graphs
    /// are rejected.
    pub fn new(n: usize, couplings: &[(usize, usize, f64)], h: Vec<f64>) -> Result<Self> {
        if h.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                found: h.len(),
            });
        }
        let mut by_pair = BTreeMap::new();
        for &(i, j, value) in couplings {
            for v in [i, j] {
                if v >= n {
                    return Err(Error::VertexOutOfRange { vertex: v, n });
                }
            }
            if i == j {
                return Err(Error::InvalidParams(format!("self-loop at vertex {i}")));
            }
            if !value.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "coupling ({i}, {j}) is not finite"
                )));
            }
            let key = (i.min(j), i.max(j));
            if by_pair.insert(key, value).is_some() {
                return Err(Error::DuplicateEntry { i: key.0, j: key.1 });
            }
        }
        let (edges, coupling): (Vec<_>, Vec<_>) =
            by_pair.into_iter().filter(|&(_, v)| v != 0.0).unzip();

        let mut neighbors = vec![Vec::new(); n];
        for (k, &(a, b)) in edges.iter().enumerate() {
            neighbors[a].push(Neighbor { vertex: b, edge: k });
            neighbors[b].push(Neighbor { vertex: a, edge: k });
        }
        for list in &mut neighbors {
            list.sort_by_key(|nb| nb.vertex);
        }

        let problem = QuadraticProblem {
            n,
            edges,
            coupling,
            h,
            neighbors,
        };
        let components = problem.components();
        if components.len() > 1 {
            return Err(Error::DisconnectedGraph { components });
        }
        Ok(problem)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_arcs(&self) -> usize {
        2 * self.edges.len()
    }

    /// Γ for undirected edge `k`.
    pub fn edge_coupling(&self, k: usize) -> f64 {
        self.coupling[k]
    }

    pub fn neighbors(&self, i: usize) -> &[Neighbor] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Directed edge `{from,to}` as `(from, to)`.
    pub fn arc(&self, id: usize) -> (usize, usize) {
        let (a, b) = self.edges[id / 2];
        if id % 2 == 0 {
            (a, b)
        } else {
            (b, a)
        }
    }

    /// Index of the directed edge `{from,to}`, if `(from,to)` is an edge.
    pub fn arc_id(&self, from: usize, to: usize) -> Option<usize> {
        let list = self.neighbors.get(from)?;
        let pos = list.binary_search_by_key(&to, |nb| nb.vertex).ok()?;
        let k = list[pos].edge;
        Some(if from < to { 2 * k } else { 2 * k + 1 })
    }

    /// Id of the directed edge leaving `from` through neighbor entry `nb`.
    pub fn arc_to(&self, from: usize, nb: &Neighbor) -> usize {
        if from < nb.vertex {
            2 * nb.edge
        } else {
            2 * nb.edge + 1
        }
    }

    /// Id of the directed edge arriving at `to` through neighbor entry `nb`.
    pub fn arc_from(&self, to: usize, nb: &Neighbor) -> usize {
        self.arc_to(to, nb) ^ 1
    }

    pub fn arc_coupling(&self, id: usize) -> f64 {
        self.coupling[id / 2]
    }

    /// Γᵢⱼ, with `Γᵢᵢ = 1` and 0 for non-edges.
    pub fn gamma_entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        self.arc_id(i, j).map_or(0.0, |id| self.arc_coupling(id))
    }

    /// `R = I − Γ` entry.
    pub fn r_entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            -self.gamma_entry(i, j)
        }
    }

    pub fn dense_gamma(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.n, self.n);
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            m[(a, b)] = self.coupling[k];
            m[(b, a)] = self.coupling[k];
        }
        m
    }

    /// `|R|` with `|R|ᵢⱼ = |Γᵢⱼ|` off the diagonal.
    pub fn dense_abs_r(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            m[(a, b)] = self.coupling[k].abs();
            m[(b, a)] = self.coupling[k].abs();
        }
        m
    }

    pub fn dense_r(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n) - self.dense_gamma()
    }

    /// Returns a copy with a different linear term.
    pub fn with_h(&self, h: Vec<f64>) -> Result<Self> {
        if h.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                found: h.len(),
            });
        }
        Ok(QuadraticProblem { h, ..self.clone() })
    }

    pub fn to_raw(&self) -> RawProblem {
        let mut entries: Vec<_> = (0..self.n).map(|i| (i, i, 1.0)).collect();
        entries.extend(
            self.edges
                .iter()
                .zip(&self.coupling)
                .map(|(&(a, b), &g)| (a, b, g)),
        );
        RawProblem {
            n: self.n,
            entries,
            h: self.h.clone(),
        }
    }

    /// `½xᵀΓx − hᵀx`.
    pub fn objective(&self, x: &[f64]) -> f64 {
        let quad: f64 = x.iter().map(|v| v * v).sum::<f64>()
            + 2.0
                * self
                    .edges
                    .iter()
                    .zip(&self.coupling)
                    .map(|(&(a, b), &g)| g * x[a] * x[b])
                    .sum::<f64>();
        0.5 * quad - self.h.iter().zip(x).map(|(h, x)| h * x).sum::<f64>()
    }

    /// `Γx` using the sparse structure.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = x.to_vec();
        for (&(a, b), &g) in self.edges.iter().zip(&self.coupling) {
            out[a] += g * x[b];
            out[b] += g * x[a];
        }
        out
    }

    /// Connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for nb in &self.neighbors[u] {
                    if !seen[nb.vertex] {
                        seen[nb.vertex] = true;
                        comp.push(nb.vertex);
                        queue.push_back(nb.vertex);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Longest shortest-path distance (in edges). 0 for a single vertex.
    pub fn diameter(&self) -> usize {
        let mut best = 0;
        let mut dist = vec![usize::MAX; self.n];
        for s in 0..self.n {
            dist.fill(usize::MAX);
            dist[s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(u) = queue.pop_front() {
                for nb in &self.neighbors[u] {
                    if dist[nb.vertex] == usize::MAX {
                        dist[nb.vertex] = dist[u] + 1;
                        best = best.max(dist[nb.vertex]);
                        queue.push_back(nb.vertex);
                    }
                }
            }
        }
        best
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.n
    }
}

/// Rescales to unit diagonal: `Γ = D^{-1/2} Γ_raw D^{-1/2}`, `h = D^{-1/2} h_raw`.
pub fn normalize(raw: &RawProblem) -> Result<(QuadraticProblem, NormalizationRecord)> {
    let n = raw.n;
    if raw.h.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: raw.h.len(),
        });
    }
    let mut diag: Vec<Option<f64>> = vec![None; n];
    let mut off = Vec::new();
    for &(i, j, value) in &raw.entries {
        for v in [i, j] {
            if v >= n {
                return Err(Error::VertexOutOfRange { vertex: v, n });
            }
        }
        if i == j {
            if diag[i].replace(value).is_some() {
                return Err(Error::DuplicateEntry { i, j });
            }
        } else {
            off.push((i, j, value));
        }
    }
    let mut d = Vec::with_capacity(n);
    for (vertex, entry) in diag.into_iter().enumerate() {
        let value = entry.unwrap_or(0.0);
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositiveDiagonal { vertex, value });
        }
        d.push(value);
    }
    let sqrt_d: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    let couplings: Vec<_> = off
        .into_iter()
        .map(|(i, j, v)| (i, j, v / (sqrt_d[i] * sqrt_d[j])))
        .collect();
    let h = raw.h.iter().zip(&sqrt_d).map(|(h, s)| h / s).collect();
    let problem = QuadraticProblem::new(n, &couplings, h)?;
    Ok((problem, NormalizationRecord { d }))
}

/// Maps a solution of the normalized system back to the original variables.
pub fn denormalize_solution(x_norm: &[f64], rec: &NormalizationRecord) -> Result<Vec<f64>> {
    if x_norm.len() != rec.d.len() {
        return Err(Error::LengthMismatch {
            expected: rec.d.len(),
            found: x_norm.len(),
        });
    }
    Ok(x_norm
        .iter()
        .zip(&rec.d)
        .map(|(x, d)| x / d.sqrt())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub positive_definite: bool,
    pub min_eigenvalue: f64,
    pub connected: bool,
    pub components: Vec<Vec<usize>>,
    pub unit_diagonal: bool,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.positive_definite && self.connected && self.unit_diagonal
    }
}

pub const PD_TOLERANCE: f64 = 1e-12;

pub fn validate(p: &QuadraticProblem) -> ValidationReport {
    let min_eigenvalue = if p.n == 0 {
        f64::INFINITY
    } else {
        p.dense_gamma()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    };
    let components = p.components();
    ValidationReport {
        positive_definite: min_eigenvalue > PD_TOLERANCE,
        min_eigenvalue,
        connected: components.len() <= 1,
        components,
        // the diagonal is implicit, so this holds by construction
        unit_diagonal: true,
    }
}

/// Dense Cholesky solve of `Γx = h` with one step of iterative refinement.
pub fn direct_solve(p: &QuadraticProblem) -> Result<Vec<f64>> {
    solve_dense_spd(&p.dense_gamma(), p.h())
}

pub(crate) fn solve_dense_spd(m: &DMatrix<f64>, rhs: &[f64]) -> Result<Vec<f64>> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let b = DVector::from_column_slice(rhs);
    let mut x = chol.solve(&b);
    let r = &b - m * &x;
    x += chol.solve(&r);
    Ok(x.iter().copied().collect())
}

/// `‖Γx − h‖∞`.
pub fn residual(p: &QuadraticProblem, x: &[f64]) -> Result<f64> {
    if x.len() != p.n {
        return Err(Error::LengthMismatch {
            expected: p.n,
            found: x.len(),
        });
    }
    Ok(p.apply(x)
        .iter()
        .zip(p.h())
        .map(|(gx, h)| (gx - h).abs())
        .fold(0.0, f64::max))
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
