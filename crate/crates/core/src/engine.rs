//! Synchronous min-sum iteration on the quadratic/linear parameters.
//!
//! One iteration maps `(γ⁽ᵗ⁾, z⁽ᵗ⁾)` to `(γ⁽ᵗ⁺¹⁾, z⁽ᵗ⁺¹⁾)`:
//!
//! ```text
//! γ'ᵢⱼ = 1 / (1 − Σ_{u∈N(i)∖j} Γᵤᵢ²γᵤᵢ)
//! z'ᵢⱼ = Γᵢⱼ (hᵢ − Σ_{u∈N(i)∖j} zᵤᵢ) / (1 − Σ_{u∈N(i)∖j} Γᵤᵢ²γᵤᵢ)
//! ```
//!
//! Both right-hand sides read the pre-step `γ⁽ᵗ⁾`. When a denominator is not
//! positive the inner minimization is unbounded and the run stops.

use crate::decomposition::{check_arc_vector, incoming_load, EdgeParams};
use crate::error::{Error, Result};
use crate::model::{residual, QuadraticProblem};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub tol_gamma: f64,
    pub tol_z: f64,
    pub tol_residual: f64,
}

impl SolverConfig {
    /// Tolerances of 1e-10 on both parameter vectors and an iteration cap of
    /// `10·n·diameter`, clamped to `[1000, 100000]`.
    pub fn for_problem(p: &QuadraticProblem) -> Self {
        let scaled = 10usize
            .saturating_mul(p.n())
            .saturating_mul(p.diameter());
        SolverConfig {
            max_iter: scaled.clamp(1000, 100_000),
            ..SolverConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidParams("max_iter must be at least 1".into()));
        }
        for (name, v) in [
            ("tol_gamma", self.tol_gamma),
            ("tol_z", self.tol_z),
            ("tol_residual", self.tol_residual),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidParams(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iter: 1000,
            tol_gamma: 1e-10,
            tol_z: 1e-10,
            tol_residual: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Running,
    Converged,
    /// The update of directed edge `{from,to}` at iteration `t` was ill-posed.
    IllPosed { from: usize, to: usize, t: u64 },
    MaxIterReached,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    /// Number of completed updates.
    pub t: u64,
    pub params: EdgeParams,
    /// Running estimate; `None` when some vertex is ill-posed.
    pub x: Option<Vec<f64>>,
    pub residual: Option<f64>,
    pub status: Status,
}

/// Extra trace columns recorded by the asynchronous simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScheduleColumns {
    pub tick: u64,
    pub activated: usize,
    pub max_staleness: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: u64,
    pub delta_gamma: f64,
    pub delta_z: f64,
    /// `‖Γx − h‖∞` of the estimate after this update, NaN when undefined.
    pub residual: f64,
    pub ill_posed: bool,
    pub schedule: Option<ScheduleColumns>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

/// Directed edges whose update is ill-posed, and vertices whose estimate is.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WellPosedness {
    pub arcs: Vec<(usize, usize)>,
    pub vertices: Vec<usize>,
}

impl WellPosedness {
    pub fn is_well_posed(&self) -> bool {
        self.arcs.is_empty()
    }
}

/// `(Σ_{u∈N(i)∖j} Γᵤᵢ²γᵤᵢ, Σ_{u∈N(i)∖j} zᵤᵢ)` for arc `{i,j}`, reading incoming
/// values through the given accessors.
#[inline]
pub(crate) fn arc_sums(
    p: &QuadraticProblem,
    arc: usize,
    gamma_in: impl Fn(usize) -> f64,
    z_in: impl Fn(usize) -> f64,
) -> (f64, f64) {
    let (i, j) = p.arc(arc);
    let mut load = 0.0;
    let mut zsum = 0.0;
    for nb in p.neighbors(i) {
        if nb.vertex == j {
            continue;
        }
        let incoming = p.arc_from(i, nb);
        let g = p.arc_coupling(incoming);
        load += g * g * gamma_in(incoming);
        zsum += z_in(incoming);
    }
    (load, zsum)
}

/// New `(γᵢⱼ, zᵢⱼ)` for one arc, or `None` if the update is ill-posed.
#[inline]
pub(crate) fn update_arc(
    p: &QuadraticProblem,
    arc: usize,
    gamma_in: impl Fn(usize) -> f64,
    z_in: impl Fn(usize) -> f64,
) -> Option<(f64, f64)> {
    let (load, zsum) = arc_sums(p, arc, gamma_in, z_in);
    let denom = 1.0 - load;
    if !(denom > 0.0) {
        return None;
    }
    let (i, _) = p.arc(arc);
    Some((1.0 / denom, p.arc_coupling(arc) * (p.h()[i] - zsum) / denom))
}

fn ill_posed(p: &QuadraticProblem, arc: usize) -> Error {
    let (from, to) = p.arc(arc);
    Error::IllPosed { from, to }
}

pub fn check_well_posed(p: &QuadraticProblem, gamma: &[f64]) -> Result<WellPosedness> {
    check_arc_vector(p, gamma)?;
    let arcs = (0..p.num_arcs())
        .filter(|&id| arc_sums(p, id, |u| gamma[u], |_| 0.0).0 >= 1.0)
        .map(|id| p.arc(id))
        .collect();
    let vertices = incoming_load(p, gamma)
        .into_iter()
        .enumerate()
        .filter(|&(_, load)| load >= 1.0)
        .map(|(j, _)| j)
        .collect();
    Ok(WellPosedness { arcs, vertices })
}

pub fn gamma_step(p: &QuadraticProblem, gamma: &[f64]) -> Result<Vec<f64>> {
    check_arc_vector(p, gamma)?;
    (0..p.num_arcs())
        .map(|id| {
            let (load, _) = arc_sums(p, id, |u| gamma[u], |_| 0.0);
            let denom = 1.0 - load;
            if denom > 0.0 {
                Ok(1.0 / denom)
            } else {
                Err(ill_posed(p, id))
            }
        })
        .collect()
}

/// Linear-parameter update; `gamma` is the pre-step `γ⁽ᵗ⁾`.
pub fn z_step(p: &QuadraticProblem, gamma: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    check_arc_vector(p, gamma)?;
    check_arc_vector(p, z)?;
    (0..p.num_arcs())
        .map(|id| {
            update_arc(p, id, |u| gamma[u], |u| z[u])
                .map(|(_, z)| z)
                .ok_or_else(|| ill_posed(p, id))
        })
        .collect()
}

/// Joint update of both parameter vectors. On failure returns the first
/// ill-posed arc id.
pub(crate) fn step(p: &QuadraticProblem, params: &EdgeParams) -> std::result::Result<EdgeParams, usize> {
    let m = p.num_arcs();
    let mut gamma = Vec::with_capacity(m);
    let mut z = Vec::with_capacity(m);
    for id in 0..m {
        let (g, zz) = update_arc(p, id, |u| params.gamma[u], |u| params.z[u]).ok_or(id)?;
        gamma.push(g);
        z.push(zz);
    }
    Ok(EdgeParams { gamma, z })
}

/// Per-vertex estimate; `None` where `Σ_{i∈N(j)} Γᵢⱼ²γᵢⱼ ≥ 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub values: Vec<Option<f64>>,
}

impl Estimate {
    pub fn complete(&self) -> Option<Vec<f64>> {
        self.values.iter().copied().collect()
    }

    pub fn undefined_vertices(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_none())
            .map(|(j, _)| j)
            .collect()
    }
}

/// `xⱼ = (hⱼ − Σ_{i∈N(j)} zᵢⱼ) / (1 − Σ_{i∈N(j)} Γᵢⱼ²γᵢⱼ)`.
pub fn estimate(p: &QuadraticProblem, gamma: &[f64], z: &[f64]) -> Result<Estimate> {
    check_arc_vector(p, gamma)?;
    check_arc_vector(p, z)?;
    Ok(estimate_unchecked(p, gamma, z))
}

pub(crate) fn estimate_unchecked(p: &QuadraticProblem, gamma: &[f64], z: &[f64]) -> Estimate {
    let values = (0..p.n())
        .map(|j| {
            let mut load = 0.0;
            let mut zsum = 0.0;
            for nb in p.neighbors(j) {
                let id = p.arc_from(j, nb);
                let g = p.arc_coupling(id);
                load += g * g * gamma[id];
                zsum += z[id];
            }
            let denom = 1.0 - load;
            (denom > 0.0).then(|| (p.h()[j] - zsum) / denom)
        })
        .collect();
    Estimate { values }
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub(crate) fn estimate_and_residual(
    p: &QuadraticProblem,
    params: &EdgeParams,
) -> (Option<Vec<f64>>, Option<f64>) {
    let x = estimate_unchecked(p, &params.gamma, &params.z).complete();
    let r = x.as_ref().map(|x| residual(p, x).expect("length checked"));
    (x, r)
}

/// Runs the synchronous iteration from `init` until both parameter deltas are
/// within tolerance, an update is ill-posed, or `max_iter` updates are done.
pub fn run_sync(
    p: &QuadraticProblem,
    init: &EdgeParams,
    cfg: &SolverConfig,
) -> Result<(SolverState, Trace)> {
    cfg.validate()?;
    init.check(p)?;
    let mut trace = Trace::default();
    let mut params = init.clone();
    let (mut x, mut res) = estimate_and_residual(p, &params);
    let mut status = Status::MaxIterReached;
    let mut t = 0u64;

    while (t as usize) < cfg.max_iter {
        match step(p, &params) {
            Err(arc) => {
                let (from, to) = p.arc(arc);
                trace.rows.push(TraceRow {
                    t,
                    delta_gamma: f64::NAN,
                    delta_z: f64::NAN,
                    residual: res.unwrap_or(f64::NAN),
                    ill_posed: true,
                    schedule: None,
                });
                status = Status::IllPosed { from, to, t };
                break;
            }
            Ok(next) => {
                let dg = max_abs_diff(&next.gamma, &params.gamma);
                let dz = max_abs_diff(&next.z, &params.z);
                params = next;
                (x, res) = estimate_and_residual(p, &params);
                trace.rows.push(TraceRow {
                    t,
                    delta_gamma: dg,
                    delta_z: dz,
                    residual: res.unwrap_or(f64::NAN),
                    ill_posed: false,
                    schedule: None,
                });
                t += 1;
                if dg <= cfg.tol_gamma && dz <= cfg.tol_z {
                    status = Status::Converged;
                    break;
                }
            }
        }
    }

    Ok((
        SolverState {
            t,
            params,
            x,
            residual: res,
            status,
        },
        trace,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::direct_solve;
    use approx::assert_abs_diff_eq;

    fn triangle() -> QuadraticProblem {
        QuadraticProblem::new(3, &[(0, 1, -0.4), (1, 2, -0.4), (0, 2, -0.4)], vec![1.0; 3])
            .unwrap()
    }

    fn path() -> QuadraticProblem {
        QuadraticProblem::new(3, &[(0, 1, -0.5), (1, 2, -0.5)], vec![1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn well_posedness_examples() {
        let p = triangle();
        assert!(check_well_posed(&p, &[0.0; 6]).unwrap().is_well_posed());
        let report = check_well_posed(&p, &[7.0; 6]).unwrap();
        assert_eq!(report.arcs.len(), 6);
        assert_eq!(report.vertices, vec![0, 1, 2]);

        // vertex 0 of the path is a leaf: its outgoing arc has an empty sum
        let p = path();
        let report = check_well_posed(&p, &[100.0; 4]).unwrap();
        assert!(!report.arcs.contains(&(0, 1)));
        assert!(!report.arcs.contains(&(2, 1)));
        assert!(report.arcs.contains(&(1, 2)));
    }

    #[test]
    fn gamma_step_examples() {
        let p = triangle();
        assert_eq!(gamma_step(&p, &[0.0; 6]).unwrap(), vec![1.0; 6]);
        for g in gamma_step(&p, &[1.25; 6]).unwrap() {
            assert_abs_diff_eq!(g, 1.25, epsilon = 1e-14);
        }
        let p = path();
        let a12 = p.arc_id(0, 1).unwrap();
        let a23 = p.arc_id(1, 2).unwrap();
        let mut gamma = vec![0.0; 4];
        gamma[a12] = 1.0;
        assert_abs_diff_eq!(gamma_step(&p, &gamma).unwrap()[a23], 4.0 / 3.0, epsilon = 1e-15);

        assert!(matches!(
            gamma_step(&triangle(), &[7.0; 6]),
            Err(Error::IllPosed { .. })
        ));
    }

    #[test]
    fn z_step_examples() {
        let two = QuadraticProblem::new(2, &[(0, 1, -0.5)], vec![1.0, 0.0]).unwrap();
        let z = z_step(&two, &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(z[two.arc_id(0, 1).unwrap()], -0.5);

        let p = path();
        let a12 = p.arc_id(0, 1).unwrap();
        let a23 = p.arc_id(1, 2).unwrap();
        let mut gamma = vec![0.0; 4];
        let mut zz = vec![0.0; 4];
        gamma[a12] = 1.0;
        zz[a12] = -0.5;
        assert_abs_diff_eq!(z_step(&p, &gamma, &zz).unwrap()[a23], -1.0 / 3.0, epsilon = 1e-15);

        for v in z_step(&triangle(), &[1.25; 6], &[-1.0; 6]).unwrap() {
            assert_abs_diff_eq!(v, -1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn estimate_examples() {
        let p = triangle();
        let est = estimate(&p, &[0.0; 6], &[0.0; 6]).unwrap();
        assert_eq!(est.complete().unwrap(), vec![1.0; 3]);
        for v in estimate(&p, &[1.25; 6], &[-1.0; 6]).unwrap().complete().unwrap() {
            assert_abs_diff_eq!(v, 5.0, epsilon = 1e-12);
        }
        let est = estimate(&p, &[7.0; 6], &[0.0; 6]).unwrap();
        assert_eq!(est.undefined_vertices(), vec![0, 1, 2]);
        assert!(est.complete().is_none());

        let p = path();
        let a23 = p.arc_id(1, 2).unwrap();
        let mut gamma = vec![0.0; 4];
        let mut z = vec![0.0; 4];
        gamma[a23] = 4.0 / 3.0;
        z[a23] = -1.0 / 3.0;
        let x3 = estimate(&p, &gamma, &z).unwrap().values[2].unwrap();
        assert_abs_diff_eq!(x3, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn run_sync_path_is_exact() {
        let p = path();
        let cfg = SolverConfig::for_problem(&p);
        let (state, trace) = run_sync(&p, &EdgeParams::zeros(&p), &cfg).unwrap();
        assert_eq!(state.status, Status::Converged);
        assert!(state.t as usize <= p.diameter() + 1);
        let x = state.x.unwrap();
        for (a, b) in x.iter().zip(direct_solve(&p).unwrap()) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-14);
        }
        let ts: Vec<u64> = trace.rows.iter().map(|r| r.t).collect();
        assert_eq!(ts, (0..state.t).collect::<Vec<_>>());
    }

    #[test]
    fn run_sync_triangle() {
        let p = triangle();
        let (state, _) =
            run_sync(&p, &EdgeParams::zeros(&p), &SolverConfig::for_problem(&p)).unwrap();
        assert_eq!(state.status, Status::Converged);
        for v in state.x.unwrap() {
            assert_abs_diff_eq!(v, 5.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn run_sync_reports_ill_posed_start() {
        let p = triangle();
        let init = EdgeParams {
            gamma: vec![7.0; 6],
            z: vec![0.0; 6],
        };
        let (state, trace) = run_sync(&p, &init, &SolverConfig::for_problem(&p)).unwrap();
        assert!(matches!(state.status, Status::IllPosed { t: 0, .. }));
        assert_eq!(trace.rows.len(), 1);
        assert!(trace.rows[0].ill_posed);
    }

    #[test]
    fn run_sync_hits_iteration_cap() {
        let p = triangle();
        let cfg = SolverConfig {
            max_iter: 3,
            ..SolverConfig::default()
        };
        let (state, trace) = run_sync(&p, &EdgeParams::zeros(&p), &cfg).unwrap();
        assert_eq!(state.status, Status::MaxIterReached);
        assert_eq!(trace.rows.len(), 3);
    }

    #[test]
    fn config_validation() {
        let cfg = SolverConfig {
            tol_z: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
