//! Totally asynchronous min-sum, simulated as a deterministic discrete-event
//! loop.
//!
//! Each tick every vertex activates with probability `activation_prob`
//! (seeded). An active vertex `i` recomputes `γᵢⱼ, zᵢⱼ` for all `j ∈ N(i)`
//! from the values it last received from its neighbors, then sends the new
//! values to each neighbor with a delay drawn uniformly from
//! `0..=max_delay`. A message sent at tick `t` with delay `d` is delivered at
//! the end of tick `t + d`. Messages can overtake each other; a receiver keeps
//! only the freshest version it has seen.
//!
//! A vertex that has not activated for a whole window of
//! `⌈2/activation_prob⌉·n` ticks is forced to activate, so every window
//! contains an activation of every vertex.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decomposition::EdgeParams;
use crate::engine::{
    estimate_and_residual, update_arc, ScheduleColumns, SolverState, Status, Trace, TraceRow,
};
use crate::error::{Error, Result};
use crate::model::QuadraticProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsyncConfig {
    pub seed: u64,
    pub activation_prob: f64,
    pub max_delay: u64,
    pub max_ticks: u64,
    pub tol_gamma: f64,
    pub tol_z: f64,
}

impl Default for AsyncConfig {
    fn default() -> Self {
        AsyncConfig {
            seed: 0,
            activation_prob: 0.5,
            max_delay: 3,
            max_ticks: 100_000,
            tol_gamma: 1e-10,
            tol_z: 1e-10,
        }
    }
}

impl AsyncConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.activation_prob > 0.0 && self.activation_prob <= 1.0) {
            return Err(Error::InvalidParams(
                "activation_prob must lie in (0, 1]".into(),
            ));
        }
        if self.max_ticks == 0 {
            return Err(Error::InvalidParams("max_ticks must be at least 1".into()));
        }
        if !(self.tol_gamma > 0.0 && self.tol_z > 0.0) {
            return Err(Error::InvalidParams("tolerances must be positive".into()));
        }
        Ok(())
    }

    /// Length of the window in which every vertex must activate.
    pub fn window(&self, n: usize) -> u64 {
        ((2.0 / self.activation_prob).ceil() as u64).saturating_mul(n.max(1) as u64)
    }
}

/// Freshest value a vertex holds for one incoming directed edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelEntry {
    /// The sender's state index this value belongs to (0 for the initial
    /// parameters, `t + 1` for values computed at tick `t`).
    pub version: u64,
    pub gamma: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Message {
    arc: usize,
    sent: u64,
    entry: ChannelEntry,
}

/// Schedule bookkeeping needed to audit a run after the fact.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScheduleMeta {
    pub window: u64,
    pub max_delay: u64,
    /// Ticks simulated (excluding the final drain).
    pub ticks: u64,
    /// Activation ticks per vertex, increasing.
    pub activations: Vec<Vec<u64>>,
    /// `(tick, vertex)` for activations forced by the window guarantee.
    pub forced: Vec<(u64, usize)>,
    pub messages_sent: u64,
    pub messages_delivered: u64,
    /// Arrivals older than the version already held, which were dropped.
    pub out_of_order_discarded: u64,
    pub max_delivery_delay: u64,
    pub max_staleness: u64,
    /// Ticks needed after termination to deliver the remaining messages.
    pub drain_ticks: u64,
    pub undelivered: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsyncRun {
    pub state: SolverState,
    pub trace: Trace,
    pub meta: ScheduleMeta,
}

pub struct AsyncSimulation<'a> {
    p: &'a QuadraticProblem,
    cfg: AsyncConfig,
    rng: ChaCha8Rng,
    params: EdgeParams,
    channels: Vec<ChannelEntry>,
    in_flight: BTreeMap<(u64, u64), Message>,
    seq: u64,
    tick: u64,
    /// State indices produced by each vertex, increasing.
    versions: Vec<Vec<u64>>,
    round_seen: Vec<bool>,
    round_remaining: usize,
    round_dg: f64,
    round_dz: f64,
    status: Status,
    trace: Trace,
    meta: ScheduleMeta,
}

impl<'a> AsyncSimulation<'a> {
    pub fn new(p: &'a QuadraticProblem, init: &EdgeParams, cfg: &AsyncConfig) -> Result<Self> {
        cfg.validate()?;
        init.check(p)?;
        let channels = (0..p.num_arcs())
            .map(|id| ChannelEntry {
                version: 0,
                gamma: init.gamma[id],
                z: init.z[id],
            })
            .collect();
        Ok(AsyncSimulation {
            p,
            cfg: *cfg,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            params: init.clone(),
            channels,
            in_flight: BTreeMap::new(),
            seq: 0,
            tick: 0,
            versions: vec![Vec::new(); p.n()],
            round_seen: vec![false; p.n()],
            round_remaining: p.n(),
            round_dg: 0.0,
            round_dz: 0.0,
            status: Status::Running,
            trace: Trace::default(),
            meta: ScheduleMeta {
                window: cfg.window(p.n()),
                max_delay: cfg.max_delay,
                activations: vec![Vec::new(); p.n()],
                ..ScheduleMeta::default()
            },
        })
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn params(&self) -> &EdgeParams {
        &self.params
    }

    /// What the head of directed edge `arc` currently holds for it.
    pub fn channel(&self, arc: usize) -> ChannelEntry {
        self.channels[arc]
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn is_finished(&self) -> bool {
        self.status != Status::Running
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight.len()
    }

    /// `t − τ`, where `τ` is the last state index at which the sender still
    /// held the value the receiver is using.
    fn staleness(&self, sender: usize, received: u64, t: u64) -> u64 {
        let produced = &self.versions[sender];
        let idx = produced.partition_point(|&v| v <= received);
        match produced.get(idx) {
            Some(&next) if next <= t => t - (next - 1),
            _ => 0,
        }
    }

    fn activation_set(&mut self) -> Vec<usize> {
        let t = self.tick;
        let window = self.meta.window;
        let mut active = Vec::new();
        for v in 0..self.p.n() {
            let drawn = self.rng.gen_bool(self.cfg.activation_prob);
            let overdue = match self.meta.activations[v].last() {
                Some(&last) => t >= last + window,
                None => t + 1 >= window,
            };
            if drawn || overdue {
                if !drawn {
                    self.meta.forced.push((t, v));
                }
                self.meta.activations[v].push(t);
                active.push(v);
            }
        }
        active
    }

    /// Advances one tick. Returns the trace row, or `None` once finished.
    pub fn step(&mut self) -> Option<TraceRow> {
        if self.is_finished() {
            return None;
        }
        let p = self.p;
        let t = self.tick;
        let active = self.activation_set();

        let mut updates = Vec::new();
        let mut tick_staleness = 0;
        for &i in &active {
            for nb in p.neighbors(i) {
                let incoming = p.arc_from(i, nb);
                let s = self.staleness(nb.vertex, self.channels[incoming].version, t);
                tick_staleness = tick_staleness.max(s);
            }
            for nb in p.neighbors(i) {
                let arc = p.arc_to(i, nb);
                let channels = &self.channels;
                match update_arc(p, arc, |u| channels[u].gamma, |u| channels[u].z) {
                    Some((g, z)) => updates.push((arc, g, z)),
                    None => {
                        let (from, to) = p.arc(arc);
                        self.status = Status::IllPosed { from, to, t };
                        let (_, res) = estimate_and_residual(p, &self.params);
                        let row = TraceRow {
                            t,
                            delta_gamma: f64::NAN,
                            delta_z: f64::NAN,
                            residual: res.unwrap_or(f64::NAN),
                            ill_posed: true,
                            schedule: Some(ScheduleColumns {
                                tick: t,
                                activated: active.len(),
                                max_staleness: tick_staleness,
                            }),
                        };
                        self.meta.max_staleness = self.meta.max_staleness.max(tick_staleness);
                        self.trace.rows.push(row);
                        self.meta.ticks = t + 1;
                        return Some(row);
                    }
                }
            }
        }
        self.meta.max_staleness = self.meta.max_staleness.max(tick_staleness);

        let mut dg = 0.0_f64;
        let mut dz = 0.0_f64;
        for &(arc, g, z) in &updates {
            dg = dg.max((g - self.params.gamma[arc]).abs());
            dz = dz.max((z - self.params.z[arc]).abs());
            self.params.gamma[arc] = g;
            self.params.z[arc] = z;
            let delay = self.rng.gen_range(0..=self.cfg.max_delay);
            self.in_flight.insert(
                (t + delay, self.seq),
                Message {
                    arc,
                    sent: t,
                    entry: ChannelEntry {
                        version: t + 1,
                        gamma: g,
                        z,
                    },
                },
            );
            self.seq += 1;
            self.meta.messages_sent += 1;
        }
        for &i in &active {
            self.versions[i].push(t + 1);
        }
        self.deliver_until(t);

        let (_, res) = estimate_and_residual(p, &self.params);
        let row = TraceRow {
            t,
            delta_gamma: dg,
            delta_z: dz,
            residual: res.unwrap_or(f64::NAN),
            ill_posed: false,
            schedule: Some(ScheduleColumns {
                tick: t,
                activated: active.len(),
                max_staleness: tick_staleness,
            }),
        };
        self.trace.rows.push(row);

        self.round_dg = self.round_dg.max(dg);
        self.round_dz = self.round_dz.max(dz);
        for &i in &active {
            if !self.round_seen[i] {
                self.round_seen[i] = true;
                self.round_remaining -= 1;
            }
        }
        if self.round_remaining == 0 {
            if self.round_dg <= self.cfg.tol_gamma
                && self.round_dz <= self.cfg.tol_z
                && self.channels_consistent()
                && self.at_fixed_point()
            {
                self.status = Status::Converged;
            }
            self.round_seen.fill(false);
            self.round_remaining = p.n();
            self.round_dg = 0.0;
            self.round_dz = 0.0;
        }

        self.tick += 1;
        self.meta.ticks = self.tick;
        if self.status == Status::Running && self.tick >= self.cfg.max_ticks {
            self.status = Status::MaxIterReached;
        }
        Some(row)
    }

    fn channels_consistent(&self) -> bool {
        self.channels.iter().enumerate().all(|(id, c)| {
            (c.gamma - self.params.gamma[id]).abs() <= self.cfg.tol_gamma
                && (c.z - self.params.z[id]).abs() <= self.cfg.tol_z
        })
    }

    /// One synchronous update from the current parameters moves nothing by
    /// more than the tolerance.
    fn at_fixed_point(&self) -> bool {
        let params = &self.params;
        (0..self.p.num_arcs()).all(|id| {
            match update_arc(self.p, id, |u| params.gamma[u], |u| params.z[u]) {
                Some((g, z)) => {
                    (g - params.gamma[id]).abs() <= self.cfg.tol_gamma
                        && (z - params.z[id]).abs() <= self.cfg.tol_z
                }
                None => false,
            }
        })
    }

    fn deliver_until(&mut self, t: u64) {
        while let Some(entry) = self.in_flight.first_entry() {
            if entry.key().0 > t {
                break;
            }
            let ((at, _), msg) = entry.remove_entry();
            self.meta.messages_delivered += 1;
            self.meta.max_delivery_delay = self.meta.max_delivery_delay.max(at - msg.sent);
            let slot = &mut self.channels[msg.arc];
            if msg.entry.version > slot.version {
                *slot = msg.entry;
            } else {
                self.meta.out_of_order_discarded += 1;
            }
        }
    }

    /// Delivers everything still in flight and returns the final state.
    pub fn finish(mut self) -> AsyncRun {
        if let Some((&(last, _), _)) = self.in_flight.last_key_value() {
            self.meta.drain_ticks = (last + 1).saturating_sub(self.tick);
            self.deliver_until(last);
        }
        self.meta.undelivered = self.in_flight.len() as u64;
        let (x, residual) = estimate_and_residual(self.p, &self.params);
        AsyncRun {
            state: SolverState {
                t: self.tick,
                params: self.params,
                x,
                residual,
                status: self.status,
            },
            trace: self.trace,
            meta: self.meta,
        }
    }
}

/// Runs the simulation until quiescence, an ill-posed update or `max_ticks`.
///
/// Quiescence is checked at the end of each round (the shortest run of ticks
/// in which every vertex has activated): nothing moved by more than the
/// tolerance during the round, every receiver holds the sender's current
/// values, and one more update from those values would move nothing by more
/// than the tolerance.
pub fn run_async(p: &QuadraticProblem, init: &EdgeParams, cfg: &AsyncConfig) -> Result<AsyncRun> {
    let mut sim = AsyncSimulation::new(p, init, cfg)?;
    while sim.step().is_some() {}
    Ok(sim.finish())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    /// Every vertex activated in every window of `meta.window` ticks.
    pub windows_ok: bool,
    /// Every message was delivered within `max_delay` ticks.
    pub delivery_ok: bool,
    pub max_staleness: u64,
    pub max_delivery_delay: u64,
    pub forced_activations: usize,
    pub undelivered: u64,
}

impl ScheduleReport {
    pub fn ok(&self) -> bool {
        self.windows_ok && self.delivery_ok && self.undelivered == 0
    }
}

pub fn validate_schedule(meta: &ScheduleMeta) -> ScheduleReport {
    let window = meta.window;
    let windows_ok = meta.activations.iter().all(|ticks| {
        // gaps between activations, counting the run's start and end
        let mut prev: i128 = -1;
        for &t in ticks {
            if t as i128 - prev > window as i128 {
                return false;
            }
            prev = t as i128;
        }
        meta.ticks as i128 - prev <= window as i128
    });
    ScheduleReport {
        windows_ok,
        delivery_ok: meta.max_delivery_delay <= meta.max_delay,
        max_staleness: meta.max_staleness,
        max_delivery_delay: meta.max_delivery_delay,
        forced_activations: meta.forced.len(),
        undelivered: meta.undelivered,
    }
}
