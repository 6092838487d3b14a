//! Finite-N routing game: joint simulation, deviation incentives of a
//! symmetric policy, and external-sampling MCCFR for small N.
//!
//! Two simulators share one interface. Event mode follows the continuous
//! dynamics: the clock jumps to the next time some vehicle finishes its link,
//! every vehicle finishing then moves as one batch, and waiting times are set
//! from the link counts after the batch. Tick mode replays the mean-field tick
//! grid with `N` particles and is what MCCFR and the law-of-large-numbers
//! checks use.

use std::collections::HashMap;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernel::{enumerate_pure_paths, entry_waiting, pick_index, Policy, Scenario};
use crate::net::LinkId;

/// Events closer than this are treated as simultaneous.
const EVENT_TOL: f64 = 1e-9;
/// Largest `(paths per player)^N` accepted by exact enumeration.
pub const EXACT_PROFILE_BUDGET: f64 = 1e7;
/// Largest player count accepted by [`mccfr_solve`].
pub const MCCFR_MAX_PLAYERS: usize = 10;
/// Tree nodes one MCCFR iteration may visit.
pub const MCCFR_NODE_BUDGET: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimMode {
    Event,
    Tick,
}

impl FromStr for SimMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "event" => Ok(SimMode::Event),
            "tick" => Ok(SimMode::Tick),
            other => Err(Error::Config(format!("unknown simulation mode {other:?}"))),
        }
    }
}

/// A player's demand atom and the key of its random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlayerSpec {
    pub atom: usize,
    pub stream: u64,
}

/// Splits `n` players over the demand atoms in proportion to their masses
/// (largest remainder). Player `i` gets stream `i`.
pub fn assign_players(scenario: &Scenario, n: usize) -> Result<Vec<PlayerSpec>> {
    if n == 0 {
        return Err(Error::Config("need at least one player".into()));
    }
    let quotas: Vec<f64> = scenario.atoms.iter().map(|a| a.mass * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut left = n - counts.iter().sum::<usize>().min(n);
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[k] += 1;
        left -= 1;
    }
    let mut players = Vec::with_capacity(n);
    for (atom, &c) in counts.iter().enumerate() {
        for _ in 0..c {
            let stream = players.len() as u64;
            players.push(PlayerSpec { atom, stream });
        }
    }
    Ok(players)
}

/// How a player picks successors.
#[derive(Clone, Copy, Debug)]
pub enum Strategy<'a> {
    Policy(&'a Policy),
    /// A fixed link sequence starting at the origin link.
    Path(&'a [LinkId]),
}

impl Strategy<'_> {
    fn path_next(path: &[LinkId], link: LinkId) -> Result<LinkId> {
        let k = path
            .iter()
            .position(|&l| l == link)
            .ok_or_else(|| Error::Domain(format!("link {link} is not on the player's path")))?;
        path.get(k + 1)
            .copied()
            .ok_or_else(|| Error::Domain(format!("path ends on link {link}")))
    }

    /// Successors with positive probability.
    fn options(&self, tick: usize, link: LinkId, dest: LinkId) -> Result<Vec<(LinkId, f64)>> {
        match self {
            Strategy::Policy(p) => {
                let row = p.require_row(tick, link, dest)?;
                Ok(p.successors(link)
                    .iter()
                    .zip(row)
                    .filter(|(_, &q)| q > 0.0)
                    .map(|(&s, &q)| (s, q))
                    .collect())
            }
            Strategy::Path(path) => Ok(vec![(Self::path_next(path, link)?, 1.0)]),
        }
    }

    fn choose(&self, tick: usize, link: LinkId, dest: LinkId, rng: &mut ChaCha8Rng) -> Result<LinkId> {
        match self {
            Strategy::Policy(p) => p.choose(tick, link, dest, rng.gen()),
            Strategy::Path(path) => Self::path_next(path, link),
        }
    }
}

/// Vehicles that finish their current link together.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// Tick whose policy row the movers consult.
    pub tick: usize,
    pub movers: Vec<usize>,
}

/// Joint state of all players; advanced one batch at a time.
pub trait JointSim: Clone {
    /// Next set of movers, or `None` once the game is over.
    fn next_batch(&mut self) -> Result<Option<Batch>>;
    /// Moves the batch's players to `choices` (same order as `movers`).
    fn apply(&mut self, batch: &Batch, choices: &[LinkId]) -> Result<()>;
    /// `(link, destination)` of player `i`.
    fn position(&self, i: usize) -> (LinkId, LinkId);
    /// Per-player costs; final once `next_batch` has returned `None`.
    fn costs(&self) -> &[f64];
}

#[derive(Clone, Debug)]
struct EventPlayer {
    link: LinkId,
    dest: LinkId,
    /// Absolute time at which the current link is finished.
    exit: f64,
    done: bool,
}

/// Continuous-time simulator.
#[derive(Clone, Debug)]
pub struct EventSim<'a> {
    scenario: &'a Scenario,
    n: f64,
    players: Vec<EventPlayer>,
    counts: Vec<usize>,
    costs: Vec<f64>,
    clock: f64,
    events: usize,
    max_events: usize,
}

impl<'a> EventSim<'a> {
    pub fn new(scenario: &'a Scenario, players: &[PlayerSpec]) -> Result<Self> {
        let net = &scenario.network;
        let mut counts = vec![0; net.n_links()];
        let mut state = Vec::with_capacity(players.len());
        for p in players {
            let atom = scenario
                .atoms
                .get(p.atom)
                .ok_or_else(|| Error::Config(format!("no demand atom {}", p.atom)))?;
            let departure = scenario.grid.time_of(atom.departure_tick);
            let origin = net.link(atom.origin)?;
            counts[atom.origin] += 1;
            state.push(EventPlayer {
                link: atom.origin,
                dest: atom.destination,
                exit: departure + origin.congestion.evaluate(0.0)?,
                done: false,
            });
        }
        let n = players.len();
        Ok(EventSim {
            scenario,
            n: n as f64,
            players: state,
            counts,
            costs: vec![scenario.grid.horizon; n],
            clock: 0.0,
            events: 0,
            max_events: 10 * n * net.n_links(),
        })
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    /// Number of players on each link.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

impl JointSim for EventSim<'_> {
    fn next_batch(&mut self) -> Result<Option<Batch>> {
        let grid = &self.scenario.grid;
        let net = &self.scenario.network;
        loop {
            let next = self
                .players
                .iter()
                .filter(|p| !p.done)
                .map(|p| p.exit)
                .fold(f64::INFINITY, f64::min);
            if !(next < grid.horizon - EVENT_TOL) {
                return Ok(None);
            }
            let movers: Vec<usize> = (0..self.players.len())
                .filter(|&i| !self.players[i].done && self.players[i].exit <= next + EVENT_TOL)
                .collect();
            // vehicles stuck on a dead end stay put until the horizon
            let mut stuck = false;
            for &i in &movers {
                if net.successors(self.players[i].link).is_empty() {
                    self.players[i].exit = f64::INFINITY;
                    stuck = true;
                }
            }
            if stuck {
                continue;
            }
            self.events += 1;
            if self.events > self.max_events {
                return Err(Error::Livelock(self.events));
            }
            self.clock = next;
            let tick = ((next / grid.dt - EVENT_TOL).ceil() as usize)
                .saturating_sub(1)
                .min(grid.n_ticks - 1);
            return Ok(Some(Batch { tick, movers }));
        }
    }

    fn apply(&mut self, batch: &Batch, choices: &[LinkId]) -> Result<()> {
        for (&i, &a) in batch.movers.iter().zip(choices) {
            let p = &mut self.players[i];
            self.counts[p.link] -= 1;
            self.counts[a] += 1;
            p.link = a;
        }
        let net = &self.scenario.network;
        for &i in &batch.movers {
            let p = &mut self.players[i];
            if p.link == p.dest {
                p.done = true;
                self.costs[i] = self.clock.min(self.scenario.grid.horizon);
            } else {
                let f = &net.links()[p.link].congestion;
                p.exit = self.clock + f.evaluate(self.counts[p.link] as f64 / self.n)?;
            }
        }
        Ok(())
    }

    fn position(&self, i: usize) -> (LinkId, LinkId) {
        (self.players[i].link, self.players[i].dest)
    }

    fn costs(&self) -> &[f64] {
        &self.costs
    }
}

#[derive(Clone, Debug)]
struct TickPlayer {
    link: LinkId,
    dest: LinkId,
    waiting: usize,
}

/// Tick-grid simulator: the mean-field dynamics with `N` particles.
#[derive(Clone, Debug)]
pub struct TickSim<'a> {
    scenario: &'a Scenario,
    n: f64,
    players: Vec<TickPlayer>,
    counts: Vec<usize>,
    costs: Vec<f64>,
    tick: usize,
    history: Option<Vec<Vec<usize>>>,
}

impl<'a> TickSim<'a> {
    pub fn new(scenario: &'a Scenario, players: &[PlayerSpec]) -> Result<Self> {
        let mut counts = vec![0; scenario.network.n_links()];
        let mut state = Vec::with_capacity(players.len());
        for p in players {
            let atom = scenario
                .atoms
                .get(p.atom)
                .ok_or_else(|| Error::Config(format!("no demand atom {}", p.atom)))?;
            let s = scenario.initial_state(atom)?;
            counts[s.link] += 1;
            state.push(TickPlayer {
                link: s.link,
                dest: s.destination,
                waiting: s.waiting,
            });
        }
        Ok(TickSim {
            scenario,
            n: players.len() as f64,
            players: state,
            counts,
            costs: vec![0.0; players.len()],
            tick: 0,
            history: None,
        })
    }

    /// Keeps a copy of the link counts at every tick.
    pub fn recording(mut self) -> Self {
        self.history = Some(vec![self.counts.clone()]);
        self
    }

    /// Link counts at ticks `0..=n_ticks` if recording was enabled.
    pub fn history(&self) -> Option<&[Vec<usize>]> {
        self.history.as_deref()
    }

    pub fn tick(&self) -> usize {
        self.tick
    }

    fn movers(&self) -> Vec<usize> {
        (0..self.players.len())
            .filter(|&i| {
                let p = &self.players[i];
                p.waiting == 0 && self.scenario.is_decision_link(p.link, p.dest)
            })
            .collect()
    }

    fn advance(&mut self, movers: &[usize], choices: &[LinkId]) -> Result<()> {
        let dt = self.scenario.grid.dt;
        for (i, p) in self.players.iter_mut().enumerate() {
            if p.link != p.dest {
                self.costs[i] += dt;
                if p.waiting > 0 {
                    p.waiting -= 1;
                }
            }
        }
        for (&i, &a) in movers.iter().zip(choices) {
            let p = &mut self.players[i];
            self.counts[p.link] -= 1;
            self.counts[a] += 1;
            p.link = a;
        }
        self.tick += 1;
        let net = &self.scenario.network;
        for &i in movers {
            let p = &mut self.players[i];
            p.waiting = if p.link == p.dest {
                0
            } else {
                let f = &net.links()[p.link].congestion;
                entry_waiting(f, self.counts[p.link] as f64 / self.n, &self.scenario.grid)?
            };
        }
        if let Some(h) = self.history.as_mut() {
            h.push(self.counts.clone());
        }
        Ok(())
    }
}

impl JointSim for TickSim<'_> {
    fn next_batch(&mut self) -> Result<Option<Batch>> {
        while self.tick < self.scenario.grid.n_ticks {
            let movers = self.movers();
            if !movers.is_empty() {
                return Ok(Some(Batch {
                    tick: self.tick,
                    movers,
                }));
            }
            if self.players.iter().all(|p| p.link == p.dest) {
                // nothing left to pay; keep the recorded history complete
                if let Some(h) = self.history.as_mut() {
                    while h.len() <= self.scenario.grid.n_ticks {
                        h.push(self.counts.clone());
                    }
                }
                self.tick = self.scenario.grid.n_ticks;
                break;
            }
            self.advance(&[], &[])?;
        }
        Ok(None)
    }

    fn apply(&mut self, batch: &Batch, choices: &[LinkId]) -> Result<()> {
        self.advance(&batch.movers, choices)
    }

    fn position(&self, i: usize) -> (LinkId, LinkId) {
        (self.players[i].link, self.players[i].dest)
    }

    fn costs(&self) -> &[f64] {
        &self.costs
    }
}

/// 64-bit mix used to derive per-sample seeds.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Random stream of one player in one Monte Carlo sample.
pub fn player_rng(seed: u64, sample: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(sample)));
    rng.set_stream(stream);
    rng
}

fn play<S: JointSim>(mut sim: S, strategies: &[Strategy], rngs: &mut [ChaCha8Rng]) -> Result<Vec<f64>> {
    let mut choices = Vec::new();
    while let Some(batch) = sim.next_batch()? {
        choices.clear();
        for &i in &batch.movers {
            let (link, dest) = sim.position(i);
            choices.push(strategies[i].choose(batch.tick, link, dest, &mut rngs[i])?);
        }
        sim.apply(&batch, &choices)?;
    }
    Ok(sim.costs().to_vec())
}

/// Plays one game; player `i` uses `strategies[i]` and stream
/// `players[i].stream` of sample `sample`.
pub fn simulate(
    scenario: &Scenario,
    players: &[PlayerSpec],
    strategies: &[Strategy],
    mode: SimMode,
    seed: u64,
    sample: u64,
) -> Result<Vec<f64>> {
    if players.len() != strategies.len() {
        return Err(Error::Config("one strategy per player is required".into()));
    }
    let mut rngs: Vec<ChaCha8Rng> = players.iter().map(|p| player_rng(seed, sample, p.stream)).collect();
    match mode {
        SimMode::Event => play(EventSim::new(scenario, players)?, strategies, &mut rngs),
        SimMode::Tick => play(TickSim::new(scenario, players)?, strategies, &mut rngs),
    }
}

/// Per-tick link counts of a tick-mode game where everyone follows `policy`.
pub fn tick_link_counts(
    scenario: &Scenario,
    players: &[PlayerSpec],
    policy: &Policy,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    let mut rngs: Vec<ChaCha8Rng> = players.iter().map(|p| player_rng(seed, 0, p.stream)).collect();
    let strategies = vec![Strategy::Policy(policy); players.len()];
    let mut sim = TickSim::new(scenario, players)?.recording();
    let mut choices = Vec::new();
    while let Some(batch) = sim.next_batch()? {
        choices.clear();
        for &i in &batch.movers {
            let (link, dest) = sim.position(i);
            choices.push(strategies[i].choose(batch.tick, link, dest, &mut rngs[i])?);
        }
        sim.apply(&batch, &choices)?;
    }
    Ok(sim.history.unwrap_or_default())
}

/// Average deviation incentive of a symmetric policy.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationEstimate {
    pub mean: f64,
    pub half_width_95: f64,
    pub n_samples: usize,
    /// Estimated cost of each pure path for the probe of each atom.
    pub per_path_values: Vec<(Vec<LinkId>, f64)>,
}

/// Probe players: the first player of every atom, with the atom's share.
fn probes(players: &[PlayerSpec]) -> Vec<(usize, f64)> {
    let n = players.len() as f64;
    let mut out: Vec<(usize, f64)> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    for (i, p) in players.iter().enumerate() {
        if !seen.contains(&p.atom) {
            seen.push(p.atom);
            let count = players.iter().filter(|q| q.atom == p.atom).count();
            out.push((i, count as f64 / n));
        }
    }
    out
}

fn probe_paths(scenario: &Scenario, atom: usize) -> Result<Vec<Vec<LinkId>>> {
    let a = &scenario.atoms[atom];
    let paths = enumerate_pure_paths(&scenario.network, a.origin, a.destination, &scenario.grid, scenario.grid.n_ticks)?;
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no path from link {} to link {} within the horizon",
            a.origin, a.destination
        )));
    }
    Ok(paths)
}

/// Monte Carlo estimate of how much one player gains by switching from
/// `policy` to its best pure path while the other `n - 1` keep `policy`.
///
/// Every sample replays the same opponent streams for the policy run and for
/// each candidate path. Samples run in parallel; the result does not depend
/// on the number of worker threads.
pub fn deviation_incentive_mc(
    scenario: &Scenario,
    policy: &Policy,
    n: usize,
    n_samples: usize,
    seed: u64,
    mode: SimMode,
) -> Result<DeviationEstimate> {
    if n_samples == 0 {
        return Err(Error::Config("need at least one sample".into()));
    }
    let players = assign_players(scenario, n)?;
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut per_path_values = Vec::new();
    for (probe, weight) in probes(&players) {
        let paths = probe_paths(scenario, players[probe].atom)?;
        // per sample: [policy cost, cost of path 0, cost of path 1, ...]
        let samples: Vec<Vec<f64>> = (0..n_samples as u64)
            .into_par_iter()
            .map(|s| {
                let mut strategies = vec![Strategy::Policy(policy); n];
                let mut row = Vec::with_capacity(paths.len() + 1);
                row.push(simulate(scenario, &players, &strategies, mode, seed, s)?[probe]);
                for path in &paths {
                    strategies[probe] = Strategy::Path(path);
                    row.push(simulate(scenario, &players, &strategies, mode, seed, s)?[probe]);
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        let ns = n_samples as f64;
        let means: Vec<f64> = (0..=paths.len())
            .map(|k| samples.iter().map(|r| r[k]).sum::<f64>() / ns)
            .collect();
        let mut best = 1;
        for k in 2..means.len() {
            if means[k] < means[best] {
                best = k;
            }
        }
        let gap = means[0] - means[best];
        let sample_var = if n_samples > 1 {
            let diffs = samples.iter().map(|r| r[0] - r[best]);
            diffs.map(|d| (d - gap).powi(2)).sum::<f64>() / (ns - 1.0)
        } else {
            f64::INFINITY
        };
        mean += weight * gap;
        var += weight * weight * sample_var / ns;
        per_path_values.extend(paths.into_iter().zip(means[1..].iter().copied()));
    }
    Ok(DeviationEstimate {
        mean,
        half_width_95: 1.96 * var.sqrt(),
        n_samples,
        per_path_values,
    })
}

/// Expected cost of `probe`, summing over every positive-probability branch.
fn expected_cost<S: JointSim>(
    mut sim: S,
    strategies: &[Strategy],
    probe: usize,
    nodes: &mut usize,
) -> Result<f64> {
    *nodes += 1;
    if *nodes as f64 > EXACT_PROFILE_BUDGET * 10.0 {
        return Err(Error::Size("exact enumeration visited too many branches".into()));
    }
    let Some(batch) = sim.next_batch()? else {
        return Ok(sim.costs()[probe]);
    };
    let options: Vec<Vec<(LinkId, f64)>> = batch
        .movers
        .iter()
        .map(|&i| {
            let (link, dest) = sim.position(i);
            strategies[i].options(batch.tick, link, dest)
        })
        .collect::<Result<_>>()?;
    if options.iter().all(|o| o.len() == 1) {
        let choices: Vec<LinkId> = options.iter().map(|o| o[0].0).collect();
        sim.apply(&batch, &choices)?;
        return expected_cost(sim, strategies, probe, nodes);
    }
    // odometer over the movers' joint choices
    let mut digits = vec![0usize; options.len()];
    let mut total = 0.0;
    loop {
        let mut weight = 1.0;
        let mut choices = Vec::with_capacity(digits.len());
        for (o, &k) in options.iter().zip(&digits) {
            weight *= o[k].1;
            choices.push(o[k].0);
        }
        let mut branch = sim.clone();
        branch.apply(&batch, &choices)?;
        total += weight * expected_cost(branch, strategies, probe, nodes)?;
        let mut pos = 0;
        loop {
            if pos == digits.len() {
                return Ok(total);
            }
            digits[pos] += 1;
            if digits[pos] < options[pos].len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
    }
}

/// Exact deviation incentive by enumerating every joint draw of the players.
/// Only feasible for tiny games; larger ones get a size error.
pub fn deviation_incentive_exact(scenario: &Scenario, policy: &Policy, n: usize, mode: SimMode) -> Result<f64> {
    let players = assign_players(scenario, n)?;
    let mut profiles = 1.0f64;
    for p in &players {
        profiles *= probe_paths(scenario, p.atom)?.len() as f64;
    }
    if profiles > EXACT_PROFILE_BUDGET {
        return Err(Error::Size(format!(
            "{profiles:.3e} pure profiles exceed the exact budget; use the Monte Carlo estimator"
        )));
    }
    let mut incentive = 0.0;
    for (probe, weight) in probes(&players) {
        let paths = probe_paths(scenario, players[probe].atom)?;
        let mut strategies = vec![Strategy::Policy(policy); n];
        let mut nodes = 0;
        let eval = |strategies: &[Strategy], nodes: &mut usize| match mode {
            SimMode::Event => expected_cost(EventSim::new(scenario, &players)?, strategies, probe, nodes),
            SimMode::Tick => expected_cost(TickSim::new(scenario, &players)?, strategies, probe, nodes),
        };
        let on_policy = eval(&strategies, &mut nodes)?;
        let mut best = f64::INFINITY;
        for path in &paths {
            strategies[probe] = Strategy::Path(path);
            best = best.min(eval(&strategies, &mut nodes)?);
        }
        incentive += weight * (on_policy - best);
    }
    Ok(incentive)
}

#[derive(Clone, Debug, Default)]
struct InfoNode {
    regret: Vec<f64>,
    strategy_sum: Vec<f64>,
}

impl InfoNode {
    fn current(&self) -> Vec<f64> {
        let pos: f64 = self.regret.iter().map(|r| r.max(0.0)).sum();
        let k = self.regret.len() as f64;
        if pos > 0.0 {
            self.regret.iter().map(|r| r.max(0.0) / pos).collect()
        } else {
            vec![1.0 / k; self.regret.len()]
        }
    }
}

struct Mccfr<'a> {
    scenario: &'a Scenario,
    nodes: HashMap<(usize, usize, LinkId), InfoNode>,
    rng: ChaCha8Rng,
    visited: usize,
}

impl Mccfr<'_> {
    fn node(&mut self, key: (usize, usize, LinkId)) -> &mut InfoNode {
        let k = self.scenario.network.successors(key.2).len();
        self.nodes.entry(key).or_insert_with(|| InfoNode {
            regret: vec![0.0; k],
            strategy_sum: vec![0.0; k],
        })
    }

    /// Utility (negated cost) of `traverser` below the current state.
    fn traverse(&mut self, mut sim: TickSim, traverser: usize) -> Result<f64> {
        self.visited += 1;
        if self.visited > MCCFR_NODE_BUDGET {
            return Err(Error::Size("MCCFR tree exceeds the node budget".into()));
        }
        let Some(batch) = sim.next_batch()? else {
            return Ok(-sim.costs()[traverser]);
        };
        let mut choices = Vec::with_capacity(batch.movers.len());
        let mut own = None;
        for (slot, &i) in batch.movers.iter().enumerate() {
            let (link, _) = sim.position(i);
            let succ = self.scenario.network.successors(link);
            if i == traverser {
                own = Some((slot, link));
                choices.push(succ[0]);
                continue;
            }
            let node = self.node((i, batch.tick, link));
            let sigma = node.current();
            for (s, p) in node.strategy_sum.iter_mut().zip(&sigma) {
                *s += p;
            }
            let u: f64 = self.rng.gen();
            choices.push(succ[pick_index(&sigma, u)]);
        }
        let Some((slot, link)) = own else {
            sim.apply(&batch, &choices)?;
            return self.traverse(sim, traverser);
        };
        let key = (traverser, batch.tick, link);
        let sigma = self.node(key).current();
        let succ = self.scenario.network.successors(link);
        let mut values = Vec::with_capacity(succ.len());
        for &a in succ {
            let mut branch = sim.clone();
            choices[slot] = a;
            branch.apply(&batch, &choices)?;
            values.push(self.traverse(branch, traverser)?);
        }
        let v: f64 = sigma.iter().zip(&values).map(|(p, x)| p * x).sum();
        let node = self.node(key);
        for (r, x) in node.regret.iter_mut().zip(&values) {
            *r += x - v;
        }
        Ok(v)
    }
}

#[derive(Clone, Debug)]
pub struct MccfrOutcome {
    /// Average strategy of each player; unreached rows are uniform.
    pub policies: Vec<Policy>,
    pub players: Vec<PlayerSpec>,
    pub seconds_per_10_iterations: f64,
}

/// External-sampling Monte Carlo CFR on the tick-mode game. Information sets
/// are a player's own `(tick, link)`; opponents' positions are not observed.
pub fn mccfr_solve(scenario: &Scenario, n: usize, iterations: usize, seed: u64) -> Result<MccfrOutcome> {
    if n > MCCFR_MAX_PLAYERS {
        return Err(Error::Size(format!(
            "MCCFR supports at most {MCCFR_MAX_PLAYERS} players, got {n}"
        )));
    }
    if iterations == 0 {
        return Err(Error::Config("MCCFR needs at least one iteration".into()));
    }
    let players = assign_players(scenario, n)?;
    let root = TickSim::new(scenario, &players)?;
    let mut solver = Mccfr {
        scenario,
        nodes: HashMap::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        visited: 0,
    };
    let start = Instant::now();
    for _ in 0..iterations {
        for traverser in 0..n {
            solver.visited = 0;
            solver.traverse(root.clone(), traverser)?;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();

    let mut policies = Vec::with_capacity(n);
    for (i, p) in players.iter().enumerate() {
        let dest = scenario.atoms[p.atom].destination;
        let mut policy = Policy::uniform(scenario);
        for t in 0..scenario.grid.n_ticks {
            for link in 0..scenario.network.n_links() {
                let Some(node) = solver.nodes.get(&(i, t, link)) else {
                    continue;
                };
                let z: f64 = node.strategy_sum.iter().sum();
                // nobody sampled this node as an opponent (N = 1): use the
                // current regret-matching strategy
                let row: Vec<f64> = if z > 0.0 {
                    node.strategy_sum.iter().map(|s| s / z).collect()
                } else {
                    node.current()
                };
                policy.set_row(t, link, dest, &row)?;
            }
        }
        policies.push(policy);
    }
    Ok(MccfrOutcome {
        policies,
        players,
        seconds_per_10_iterations: elapsed * 10.0 / iterations as f64,
    })
}
