//! Tick grid, agent states, demand, policies and single-agent sampling shared
//! by the mean-field and N-player games.
//!
//! Time is discretised in ticks of length `dt`. An agent that joins a link at
//! tick `s` and is assigned a travel time of `k` ticks occupies the link for
//! ticks `s..s + k`: it enters with `waiting = k - 1`, counts down by one per
//! tick, takes its routing decision at the tick where `waiting == 0`, and is on
//! the chosen successor at the next tick. The per-tick running cost is `dt`
//! whenever the agent is not on its destination link.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{CongestionFn, LinkId, LinkKind, Network};

/// Relative slack so that exact multiples of `dt` round to themselves.
const TICK_SLACK: f64 = 1e-9;
/// Upper bound on the number of paths returned by [`enumerate_pure_paths`].
pub const MAX_ENUMERATED_PATHS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub horizon: f64,
    pub n_ticks: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, horizon: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step must be positive, got {dt}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be positive, got {horizon}")));
        }
        let n_ticks = (horizon / dt).round() as usize;
        if n_ticks == 0 || (n_ticks as f64 * dt - horizon).abs() > 1e-9 * horizon {
            return Err(Error::Config(format!(
                "horizon {horizon} is not a whole number of {dt}-ticks"
            )));
        }
        Ok(TimeGrid {
            dt,
            horizon,
            n_ticks,
        })
    }

    /// Tick containing `time`, rounding down.
    pub fn tick_of(&self, time: f64) -> usize {
        ((time / self.dt) + TICK_SLACK).floor().max(0.0) as usize
    }

    pub fn time_of(&self, tick: usize) -> f64 {
        tick as f64 * self.dt
    }
}

/// Number of ticks spent on a link joined at proportion `mu`; at least one.
pub fn travel_ticks(f: &CongestionFn, mu: f64, grid: &TimeGrid) -> Result<usize> {
    let time = f.evaluate(mu)?;
    Ok(((time / grid.dt - TICK_SLACK).ceil() as usize).max(1))
}

/// `waiting` assigned to an agent joining a link, capped at the horizon.
pub(crate) fn entry_waiting(f: &CongestionFn, mu: f64, grid: &TimeGrid) -> Result<usize> {
    Ok((travel_ticks(f, mu, grid)? - 1).min(grid.n_ticks))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AgentState {
    pub link: LinkId,
    pub waiting: usize,
    pub destination: LinkId,
}

impl AgentState {
    pub fn is_absorbed(&self) -> bool {
        self.link == self.destination
    }
}

/// One point of the initial distribution: `mass` is a population share.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandAtom {
    pub origin: LinkId,
    pub destination: LinkId,
    pub departure_tick: usize,
    pub mass: f64,
}

/// Network, time grid and initial distribution of a routing game.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub network: Network,
    pub grid: TimeGrid,
    pub atoms: Vec<DemandAtom>,
    /// Number of vehicles the congestion functions are tuned for.
    pub n0: f64,
    destinations: Vec<LinkId>,
}

impl Scenario {
    pub fn new(network: Network, grid: TimeGrid, atoms: Vec<DemandAtom>, n0: f64) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Config("scenario has no demand".into()));
        }
        if !(n0 > 0.0) {
            return Err(Error::Config(format!("n0 must be positive, got {n0}")));
        }
        for atom in &atoms {
            let origin = network.link(atom.origin)?;
            let destination = network.link(atom.destination)?;
            if origin.kind != LinkKind::OriginVirtual {
                return Err(Error::Config(format!(
                    "demand origin {} is not an origin link",
                    origin.label
                )));
            }
            if destination.kind != LinkKind::DestinationVirtual {
                return Err(Error::Config(format!(
                    "demand destination {} is not a destination link",
                    destination.label
                )));
            }
            if atom.departure_tick >= grid.n_ticks {
                return Err(Error::Config(format!(
                    "departure tick {} is past the horizon",
                    atom.departure_tick
                )));
            }
            if !(atom.mass > 0.0) {
                return Err(Error::Config(format!("demand mass {} is not positive", atom.mass)));
            }
        }
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("demand masses sum to {total}, expected 1")));
        }
        let mut destinations: Vec<LinkId> = atoms.iter().map(|a| a.destination).collect();
        destinations.sort_unstable();
        destinations.dedup();
        Ok(Scenario {
            network,
            grid,
            atoms,
            n0,
            destinations,
        })
    }

    /// Distinct destination links, ascending.
    pub fn destinations(&self) -> &[LinkId] {
        &self.destinations
    }

    pub fn destination_index(&self, link: LinkId) -> Option<usize> {
        self.destinations.binary_search(&link).ok()
    }

    /// State of an atom's vehicles at tick 0.
    pub fn initial_state(&self, atom: &DemandAtom) -> Result<AgentState> {
        let origin = self.network.link(atom.origin)?;
        let waiting = atom.departure_tick + entry_waiting(&origin.congestion, 0.0, &self.grid)?;
        Ok(AgentState {
            link: atom.origin,
            waiting: waiting.min(self.grid.n_ticks),
            destination: atom.destination,
        })
    }

    /// Whether an agent in `state` chooses a successor when its waiting ends.
    pub fn is_decision_link(&self, link: LinkId, destination: LinkId) -> bool {
        link != destination && !self.network.successors(link).is_empty()
    }
}

/// Per-tick proportion of the population on each link, ticks `0..=n_ticks`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkLoads {
    n_links: usize,
    values: Vec<f64>,
}

impl LinkLoads {
    pub fn zeros(n_ticks: usize, n_links: usize) -> Self {
        LinkLoads {
            n_links,
            values: vec![0.0; (n_ticks + 1) * n_links],
        }
    }

    pub fn get(&self, tick: usize, link: LinkId) -> f64 {
        self.values[tick * self.n_links + link]
    }

    pub fn set(&mut self, tick: usize, link: LinkId, value: f64) {
        self.values[tick * self.n_links + link] = value;
    }

    pub fn tick(&self, tick: usize) -> &[f64] {
        &self.values[tick * self.n_links..(tick + 1) * self.n_links]
    }

    pub fn n_ticks(&self) -> usize {
        self.values.len() / self.n_links - 1
    }

    pub fn n_links(&self) -> usize {
        self.n_links
    }
}

/// `waiting` an agent gets when joining each link at each tick under fixed
/// loads. This is everything a single vehicle needs to know about the crowd.
#[derive(Clone, Debug, PartialEq)]
pub struct EntryTable {
    n_links: usize,
    waits: Vec<usize>,
}

impl EntryTable {
    pub fn from_loads(scenario: &Scenario, loads: &LinkLoads) -> Result<Self> {
        let n_links = scenario.network.n_links();
        let mut waits = Vec::with_capacity(loads.values.len());
        for t in 0..=scenario.grid.n_ticks {
            for link in scenario.network.links() {
                waits.push(entry_waiting(&link.congestion, loads.get(t, link.id), &scenario.grid)?);
            }
        }
        Ok(EntryTable { n_links, waits })
    }

    pub(crate) fn with_capacity(n_ticks: usize, n_links: usize) -> Self {
        EntryTable {
            n_links,
            waits: vec![0; (n_ticks + 1) * n_links],
        }
    }

    pub fn get(&self, tick: usize, link: LinkId) -> usize {
        self.waits[tick * self.n_links + link]
    }

    pub(crate) fn set(&mut self, tick: usize, link: LinkId, waiting: usize) {
        self.waits[tick * self.n_links + link] = waiting;
    }

    /// State reached by joining `link` at `tick` when heading to `destination`.
    pub fn enter(&self, tick: usize, link: LinkId, destination: LinkId) -> AgentState {
        let waiting = if link == destination { 0 } else { self.get(tick, link) };
        AgentState {
            link,
            waiting,
            destination,
        }
    }
}

/// Time-indexed routing policy shared by every agent with the same state.
///
/// Rows are keyed by `(tick, link, destination)`: decisions are only taken
/// when the waiting time has run out, so it is not part of the key.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    n_ticks: usize,
    destinations: Vec<LinkId>,
    successors: Vec<Vec<LinkId>>,
    offsets: Vec<usize>,
    stride: usize,
    probs: Vec<f64>,
    defined: Vec<bool>,
}

impl Policy {
    /// A policy with no rows defined.
    pub fn empty(scenario: &Scenario) -> Self {
        let net = &scenario.network;
        let successors: Vec<Vec<LinkId>> =
            (0..net.n_links()).map(|l| net.successors(l).to_vec()).collect();
        let mut offsets = Vec::with_capacity(successors.len());
        let mut stride = 0;
        for succ in &successors {
            offsets.push(stride);
            stride += succ.len();
        }
        let n_ticks = scenario.grid.n_ticks;
        let n_dest = scenario.destinations().len();
        Policy {
            n_ticks,
            destinations: scenario.destinations().to_vec(),
            offsets,
            stride,
            probs: vec![0.0; n_ticks * n_dest * stride],
            defined: vec![false; n_ticks * n_dest * successors.len()],
            successors,
        }
    }

    /// Uniform over successors at every decision key.
    pub fn uniform(scenario: &Scenario) -> Self {
        let mut policy = Policy::empty(scenario);
        for t in 0..policy.n_ticks {
            for &d in scenario.destinations() {
                for link in 0..policy.successors.len() {
                    if scenario.is_decision_link(link, d) {
                        let n = policy.successors[link].len() as f64;
                        let row = vec![1.0 / n; policy.successors[link].len()];
                        policy.set_row(t, link, d, &row).expect("valid key");
                    }
                }
            }
        }
        policy
    }

    /// Overwrites rows so that an agent heading to `destination` follows
    /// `path` at every tick.
    pub fn with_path(mut self, destination: LinkId, path: &[LinkId]) -> Result<Self> {
        for pair in path.windows(2) {
            let (from, to) = (pair[0], pair[1]);
            let k = self.successors[from]
                .iter()
                .position(|&s| s == to)
                .ok_or_else(|| Error::Config(format!("link {to} does not follow link {from}")))?;
            let mut row = vec![0.0; self.successors[from].len()];
            row[k] = 1.0;
            for t in 0..self.n_ticks {
                self.set_row(t, from, destination, &row)?;
            }
        }
        Ok(self)
    }

    pub fn n_ticks(&self) -> usize {
        self.n_ticks
    }

    pub fn destinations(&self) -> &[LinkId] {
        &self.destinations
    }

    pub fn successors(&self, link: LinkId) -> &[LinkId] {
        &self.successors[link]
    }

    fn dest_index(&self, destination: LinkId) -> Result<usize> {
        self.destinations
            .binary_search(&destination)
            .map_err(|_| Error::UnknownLink(destination))
    }

    fn key(&self, tick: usize, link: LinkId, destination: LinkId) -> Result<(usize, usize)> {
        if tick >= self.n_ticks {
            return Err(Error::Domain(format!("tick {tick} past the horizon")));
        }
        if link >= self.successors.len() {
            return Err(Error::UnknownLink(link));
        }
        let d = self.dest_index(destination)?;
        let block = tick * self.destinations.len() + d;
        Ok((
            block * self.stride + self.offsets[link],
            block * self.successors.len() + link,
        ))
    }

    /// Probabilities over `successors(link)`, if the row is defined.
    pub fn row(&self, tick: usize, link: LinkId, destination: LinkId) -> Option<&[f64]> {
        let (start, flag) = self.key(tick, link, destination).ok()?;
        self.defined[flag].then(|| &self.probs[start..start + self.successors[link].len()])
    }

    pub fn require_row(&self, tick: usize, link: LinkId, destination: LinkId) -> Result<&[f64]> {
        self.row(tick, link, destination)
            .ok_or(Error::IncompletePolicy {
                tick,
                link,
                destination,
            })
    }

    pub fn set_row(
        &mut self,
        tick: usize,
        link: LinkId,
        destination: LinkId,
        probs: &[f64],
    ) -> Result<()> {
        let (start, flag) = self.key(tick, link, destination)?;
        let n = self.successors[link].len();
        if probs.len() != n || n == 0 {
            return Err(Error::Domain(format!(
                "row for link {link} needs {n} probabilities, got {}",
                probs.len()
            )));
        }
        self.probs[start..start + n].copy_from_slice(probs);
        self.defined[flag] = true;
        Ok(())
    }

    /// Checks that every defined row is a distribution within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        for t in 0..self.n_ticks {
            for &d in &self.destinations {
                for link in 0..self.successors.len() {
                    if let Some(row) = self.row(t, link, d) {
                        let sum: f64 = row.iter().sum();
                        if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > tol {
                            return Err(Error::Domain(format!(
                                "row (tick {t}, link {link}, destination {d}) sums to {sum}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Iterates over `(tick, link, destination, row)` for defined rows.
    pub fn rows(&self) -> impl Iterator<Item = (usize, LinkId, LinkId, &[f64])> + '_ {
        (0..self.n_ticks).flat_map(move |t| {
            self.destinations.iter().flat_map(move |&d| {
                (0..self.successors.len())
                    .filter_map(move |l| self.row(t, l, d).map(|row| (t, l, d, row)))
            })
        })
    }

    pub(crate) fn table_len(&self) -> usize {
        self.probs.len()
    }

    /// Index range of a row inside flat tables laid out like this policy.
    pub(crate) fn row_range(
        &self,
        tick: usize,
        link: LinkId,
        destination: LinkId,
    ) -> Result<std::ops::Range<usize>> {
        let (start, _) = self.key(tick, link, destination)?;
        Ok(start..start + self.successors[link].len())
    }

    /// Picks a successor from the row using a uniform draw in `[0, 1)`.
    pub fn choose(&self, tick: usize, link: LinkId, destination: LinkId, u: f64) -> Result<LinkId> {
        let row = self.require_row(tick, link, destination)?;
        Ok(self.successors[link][pick_index(row, u)])
    }
}

/// Inverse-CDF draw; the last positive entry absorbs roundoff.
pub(crate) fn pick_index(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in row.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = k;
            if u < acc {
                return k;
            }
        }
    }
    last
}

/// Every simple path from `origin` to `destination` whose free-flow length is
/// at most `max_ticks`, in lexicographic link-id order.
pub fn enumerate_pure_paths(
    network: &Network,
    origin: LinkId,
    destination: LinkId,
    grid: &TimeGrid,
    max_ticks: usize,
) -> Result<Vec<Vec<LinkId>>> {
    if network.link(origin)?.kind != LinkKind::OriginVirtual {
        return Err(Error::Config(format!("link {origin} is not an origin link")));
    }
    if network.link(destination)?.kind != LinkKind::DestinationVirtual {
        return Err(Error::Config(format!("link {destination} is not a destination link")));
    }
    let free: Vec<usize> = network
        .links()
        .iter()
        .map(|l| travel_ticks(&l.congestion, 0.0, grid))
        .collect::<Result<_>>()?;

    let mut out = Vec::new();
    let mut path = vec![origin];
    let mut on_path = vec![false; network.n_links()];
    on_path[origin] = true;
    // (link, next successor index to try, ticks used before link)
    let mut stack = vec![(origin, 0usize, 0usize)];
    while let Some(&mut (link, ref mut next, used)) = stack.last_mut() {
        let succ = network.successors(link);
        if *next >= succ.len() {
            stack.pop();
            path.pop();
            on_path[link] = false;
            continue;
        }
        let s = succ[*next];
        *next += 1;
        let ticks = used + free[link];
        if on_path[s] || ticks > max_ticks {
            continue;
        }
        if s == destination {
            let mut p = path.clone();
            p.push(s);
            out.push(p);
            if out.len() > MAX_ENUMERATED_PATHS {
                return Err(Error::Size(format!(
                    "more than {MAX_ENUMERATED_PATHS} paths between links {origin} and {destination}"
                )));
            }
            continue;
        }
        if network.link(s)?.kind == LinkKind::DestinationVirtual {
            continue;
        }
        on_path[s] = true;
        path.push(s);
        stack.push((s, 0, ticks));
    }
    Ok(out)
}

/// Ticks and states visited by one sampled agent.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// State at ticks `0..=n_ticks`.
    pub states: Vec<AgentState>,
    pub cost: f64,
}

/// Samples one agent following `policy` while the crowd produces `loads`.
pub fn sample_trajectory(
    scenario: &Scenario,
    policy: &Policy,
    loads: &LinkLoads,
    start: AgentState,
    seed: u64,
) -> Result<Trajectory> {
    let entries = EntryTable::from_loads(scenario, loads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = &scenario.grid;
    let mut state = start;
    let mut states = Vec::with_capacity(grid.n_ticks + 1);
    let mut busy_ticks = 0usize;
    for t in 0..grid.n_ticks {
        states.push(state);
        if state.is_absorbed() {
            continue;
        }
        busy_ticks += 1;
        if state.waiting > 0 {
            state.waiting -= 1;
        } else if scenario.is_decision_link(state.link, state.destination) {
            let next = policy.choose(t, state.link, state.destination, rng.gen())?;
            state = entries.enter(t + 1, next, state.destination);
        }
    }
    states.push(state);
    Ok(Trajectory {
        states,
        cost: busy_ticks as f64 * grid.dt,
    })
}
