//! Quadratic decompositions `{fᵢ, fᵢⱼ}` parameterized by directed-edge
//! vectors `(γ, z)`:
//!
//! ```text
//! fᵢⱼ(xᵢ,xⱼ) = ½(γⱼᵢΓᵢⱼ²xᵢ² + 2Γᵢⱼxᵢxⱼ + γᵢⱼΓᵢⱼ²xⱼ²) − zⱼᵢxᵢ − zᵢⱼxⱼ
//! fⱼ(xⱼ)     = ½(1 − Σᵢ Γᵢⱼ²γᵢⱼ)xⱼ² − (hⱼ − Σᵢ zᵢⱼ)xⱼ
//! ```
//!
//! Constant offsets are never represented.

use nalgebra::DMatrix;

use crate::analysis::abs_r_radius;
use crate::error::{Error, Result};
use crate::model::QuadraticProblem;

/// Relative slack allowed in `Γᵢⱼ²vᵢⱼvⱼᵢ ≥ 1`. The Perron witness meets the
/// bound with equality, which rounding can push a few ulps below 1.
pub const PAIRWISE_TOLERANCE: f64 = 1e-12;

/// Quadratic (`gamma`) and linear (`z`) parameters, indexed by directed edge id.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeParams {
    pub gamma: Vec<f64>,
    pub z: Vec<f64>,
}

impl EdgeParams {
    pub fn new(p: &QuadraticProblem, gamma: Vec<f64>, z: Vec<f64>) -> Result<Self> {
        let params = EdgeParams { gamma, z };
        params.check(p)?;
        Ok(params)
    }

    /// `γ = z = 0`, the decomposition `fᵢⱼ = Γᵢⱼxᵢxⱼ`.
    pub fn zeros(p: &QuadraticProblem) -> Self {
        EdgeParams {
            gamma: vec![0.0; p.num_arcs()],
            z: vec![0.0; p.num_arcs()],
        }
    }

    pub fn check(&self, p: &QuadraticProblem) -> Result<()> {
        check_arc_vector(p, &self.gamma)?;
        check_arc_vector(p, &self.z)?;
        if let Some(id) = self
            .gamma
            .iter()
            .chain(&self.z)
            .position(|v| !v.is_finite())
        {
            let (from, to) = p.arc(id % p.num_arcs());
            return Err(Error::InvalidParams(format!(
                "non-finite parameter on {{{from},{to}}}"
            )));
        }
        Ok(())
    }
}

pub(crate) fn check_arc_vector(p: &QuadraticProblem, values: &[f64]) -> Result<()> {
    if values.len() < p.num_arcs() {
        let (from, to) = p.arc(values.len());
        return Err(Error::MissingEdgeValue { from, to });
    }
    if values.len() > p.num_arcs() {
        return Err(Error::LengthMismatch {
            expected: p.num_arcs(),
            found: values.len(),
        });
    }
    Ok(())
}

/// The first condition that keeps a `γ` vector out of the convex set.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeGamma { from: usize, to: usize, value: f64 },
    /// `Γᵢⱼ²γᵢⱼγⱼᵢ < 1` on edge `(i, j)`.
    Pairwise { i: usize, j: usize, value: f64 },
    /// `1 − Σ_{i∈N(j)} Γᵢⱼ²γᵢⱼ ≤ 0`.
    Vertex { vertex: usize, value: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityCertificate {
    pub convex: bool,
    pub violation: Option<Violation>,
    /// `min Γᵢⱼ²γᵢⱼγⱼᵢ` over edges (∞ without edges).
    pub min_pairwise: f64,
    /// `min_j 1 − Σ_{i∈N(j)} Γᵢⱼ²γᵢⱼ`.
    pub min_vertex_slack: f64,
}

/// `Σ_{i∈N(j)} Γᵢⱼ²γᵢⱼ` for every vertex `j`.
pub fn incoming_load(p: &QuadraticProblem, gamma: &[f64]) -> Vec<f64> {
    (0..p.n())
        .map(|j| {
            p.neighbors(j)
                .iter()
                .map(|nb| {
                    let id = p.arc_from(j, nb);
                    let g = p.arc_coupling(id);
                    g * g * gamma[id]
                })
                .sum()
        })
        .collect()
}

/// Membership of `gamma` in the set of quadratic parameters of convex
/// decompositions.
pub fn is_convex_decomposition(
    p: &QuadraticProblem,
    gamma: &[f64],
) -> Result<ConvexityCertificate> {
    check_arc_vector(p, gamma)?;
    let mut violation = None;

    for id in 0..p.num_arcs() {
        if gamma[id] < 0.0 {
            let (from, to) = p.arc(id);
            violation = Some(Violation::NegativeGamma {
                from,
                to,
                value: gamma[id],
            });
            break;
        }
    }

    let mut min_pairwise = f64::INFINITY;
    for (k, &(i, j)) in p.edges().iter().enumerate() {
        let g = p.edge_coupling(k);
        let value = g * g * gamma[2 * k] * gamma[2 * k + 1];
        min_pairwise = min_pairwise.min(value);
        if violation.is_none() && value < 1.0 - PAIRWISE_TOLERANCE {
            violation = Some(Violation::Pairwise { i, j, value });
        }
    }

    let mut min_vertex_slack = f64::INFINITY;
    for (vertex, load) in incoming_load(p, gamma).into_iter().enumerate() {
        let slack = 1.0 - load;
        min_vertex_slack = min_vertex_slack.min(slack);
        if violation.is_none() && slack <= 0.0 {
            violation = Some(Violation::Vertex {
                vertex,
                value: slack,
            });
        }
    }

    Ok(ConvexityCertificate {
        convex: violation.is_none(),
        violation,
        min_pairwise,
        min_vertex_slack,
    })
}

/// A point `v` of the convex set, used to certify domination.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub v: Vec<f64>,
    /// `min_j 1 − Σ_{i∈N(j)} Γᵢⱼ²vᵢⱼ`, strictly positive.
    pub margin: f64,
}

impl Witness {
    /// Checks both convexity conditions and records the vertex margin.
    pub fn new(p: &QuadraticProblem, v: Vec<f64>) -> Result<Self> {
        let cert = is_convex_decomposition(p, &v)?;
        if let Some(violation) = cert.violation {
            return Err(Error::InvalidWitness(format!("{violation:?}")));
        }
        Ok(Witness {
            v,
            margin: cert.min_vertex_slack,
        })
    }
}

/// Whether `gamma0 ≤ v` componentwise. The cross terms of the dominated and
/// dominating pairwise functions coincide, so convexity of their difference is
/// exactly this comparison.
pub fn is_convex_dominated(p: &QuadraticProblem, gamma0: &[f64], witness: &Witness) -> Result<bool> {
    check_arc_vector(p, gamma0)?;
    let cert = is_convex_decomposition(p, &witness.v)
        .map_err(|e| Error::InvalidWitness(e.to_string()))?;
    if let Some(violation) = cert.violation {
        return Err(Error::InvalidWitness(format!("{violation:?}")));
    }
    Ok(gamma0.iter().zip(&witness.v).all(|(g, v)| g <= v))
}

/// Perron-scaled witness: solve `(I − |R|)w = 𝟙` and set
/// `vᵢⱼ = wᵢ / (|Γᵢⱼ| wⱼ)`, so that `Γᵢⱼ²vᵢⱼvⱼᵢ = 1` and
/// `Σᵢ Γᵢⱼ²vᵢⱼ = (|R|w)ⱼ / wⱼ = 1 − 1/wⱼ`.
///
/// `I − |R|` is symmetric, so it is positive definite exactly when
/// `ρ(|R|) < 1`; a failed Cholesky factorization means the problem is not
/// walk-summable.
pub fn construct_witness(p: &QuadraticProblem) -> Result<Witness> {
    let abs_r = p.dense_abs_r();
    let system = DMatrix::identity(p.n(), p.n()) - &abs_r;
    let Some(chol) = system.cholesky() else {
        return Err(Error::NotWalkSummable {
            rho: abs_r_radius(p),
        });
    };
    let w = chol.solve(&nalgebra::DVector::from_element(p.n(), 1.0));
    // (I − |R|)⁻¹ = Σ|R|ᵗ ≥ I entrywise
    assert!(
        w.iter().all(|&wi| wi >= 1.0 - 1e-9),
        "Perron solve produced w < 1: {w:?}"
    );
    let v = (0..p.num_arcs())
        .map(|id| {
            let (i, j) = p.arc(id);
            w[i] / (p.arc_coupling(id).abs() * w[j])
        })
        .collect();
    Witness::new(p, v)
}

/// Quadratic initial messages `J⁰ᵢ→ⱼ(xⱼ) = ½aᵢⱼxⱼ² − bᵢⱼxⱼ`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialMessages {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl InitialMessages {
    pub fn zeros(p: &QuadraticProblem) -> Self {
        InitialMessages {
            a: vec![0.0; p.num_arcs()],
            b: vec![0.0; p.num_arcs()],
        }
    }
}

/// Folds initial messages into the pairwise functions:
/// `f⁰ᵢⱼ = fᵢⱼ − J⁰ⱼ→ᵢ − J⁰ᵢ→ⱼ`, i.e. `γ⁰ᵢⱼ = γᵢⱼ − aᵢⱼ/Γᵢⱼ²` and
/// `z⁰ᵢⱼ = zᵢⱼ − bᵢⱼ`.
pub fn from_messages(
    p: &QuadraticProblem,
    base: &EdgeParams,
    msgs: &InitialMessages,
) -> Result<EdgeParams> {
    check_arc_vector(p, &base.gamma)?;
    check_arc_vector(p, &base.z)?;
    check_arc_vector(p, &msgs.a)?;
    check_arc_vector(p, &msgs.b)?;
    let gamma = (0..p.num_arcs())
        .map(|id| {
            let g = p.arc_coupling(id);
            base.gamma[id] - msgs.a[id] / (g * g)
        })
        .collect();
    let z = base.z.iter().zip(&msgs.b).map(|(z, b)| z - b).collect();
    Ok(EdgeParams { gamma, z })
}

/// `fⱼ(x) = ½·quad·x² + linear·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexComponent {
    pub vertex: usize,
    pub quad: f64,
    pub linear: f64,
}

/// `fᵢⱼ(xᵢ,xⱼ) = ½[xᵢ xⱼ] H [xᵢ xⱼ]ᵀ + linear·[xᵢ xⱼ]` with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeComponent {
    pub i: usize,
    pub j: usize,
    pub hessian: [[f64; 2]; 2],
    pub linear: [f64; 2],
}

impl EdgeComponent {
    pub fn eval(&self, xi: f64, xj: f64) -> f64 {
        let [[a, b], [_, c]] = self.hessian;
        0.5 * (a * xi * xi + 2.0 * b * xi * xj + c * xj * xj)
            + self.linear[0] * xi
            + self.linear[1] * xj
    }
}

impl VertexComponent {
    pub fn eval(&self, x: f64) -> f64 {
        0.5 * self.quad * x * x + self.linear * x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentFunctions {
    pub vertices: Vec<VertexComponent>,
    pub edges: Vec<EdgeComponent>,
}

impl ComponentFunctions {
    /// Sum of all pieces at `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.vertices.iter().map(|f| f.eval(x[f.vertex])).sum::<f64>()
            + self.edges.iter().map(|f| f.eval(x[f.i], x[f.j])).sum::<f64>()
    }

    /// Adds the pieces back up into a dense `(Γ, h)`.
    pub fn reconstruct(&self, n: usize) -> (DMatrix<f64>, Vec<f64>) {
        let mut gamma = DMatrix::zeros(n, n);
        let mut h = vec![0.0; n];
        for f in &self.vertices {
            gamma[(f.vertex, f.vertex)] += f.quad;
            h[f.vertex] -= f.linear;
        }
        for f in &self.edges {
            let idx = [f.i, f.j];
            for r in 0..2 {
                for c in 0..2 {
                    gamma[(idx[r], idx[c])] += f.hessian[r][c];
                }
                h[idx[r]] -= f.linear[r];
            }
        }
        (gamma, h)
    }
}

pub fn component_functions(p: &QuadraticProblem, params: &EdgeParams) -> ComponentFunctions {
    let load = incoming_load(p, &params.gamma);
    let vertices = (0..p.n())
        .map(|j| {
            let z_in: f64 = p
                .neighbors(j)
                .iter()
                .map(|nb| params.z[p.arc_from(j, nb)])
                .sum();
            VertexComponent {
                vertex: j,
                quad: 1.0 - load[j],
                linear: -(p.h()[j] - z_in),
            }
        })
        .collect();
    let edges = p
        .edges()
        .iter()
        .enumerate()
        .map(|(k, &(i, j))| {
            let g = p.edge_coupling(k);
            // arc 2k is {i,j}, arc 2k+1 is {j,i}
            let (ij, ji) = (2 * k, 2 * k + 1);
            EdgeComponent {
                i,
                j,
                hessian: [
                    [params.gamma[ji] * g * g, g],
                    [g, params.gamma[ij] * g * g],
                ],
                linear: [-params.z[ji], -params.z[ij]],
            }
        })
        .collect();
    ComponentFunctions { vertices, edges }
}
