//! Mean-field routing game: population flow, policy evaluation, best
//! response, exploitability and Online Mirror Descent.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{AgentState, DemandAtom, EntryTable, LinkLoads, Policy, Scenario};
use crate::net::LinkId;

/// Lower clip applied to reported exploitability so roundoff never shows as a
/// large negative gap.
pub const EXPLOITABILITY_FLOOR: f64 = -1e-6;

/// Population distribution over states at every tick.
///
/// Each demand atom keeps its own layer so per-atom costs can be read back;
/// layers with the same destination add up to the state distribution.
#[derive(Clone, Debug)]
pub struct DistributionFlow {
    n_links: usize,
    width: usize,
    atoms: Vec<DemandAtom>,
    mass: Vec<f64>,
    loads: LinkLoads,
    entries: EntryTable,
    /// Non-absorbed mass per (tick, layer).
    active: Vec<f64>,
    dt: f64,
}

impl DistributionFlow {
    fn index(&self, tick: usize, layer: usize, link: LinkId, waiting: usize) -> usize {
        ((tick * self.atoms.len() + layer) * self.n_links + link) * self.width + waiting
    }

    pub fn n_ticks(&self) -> usize {
        self.loads.n_ticks()
    }

    pub fn loads(&self) -> &LinkLoads {
        &self.loads
    }

    pub fn entries(&self) -> &EntryTable {
        &self.entries
    }

    /// Share of the population on `link` at `tick`.
    pub fn link_proportion(&self, tick: usize, link: LinkId) -> f64 {
        self.loads.get(tick, link)
    }

    /// Mass of one atom's vehicles in a given (link, waiting) cell.
    pub fn atom_mass(&self, tick: usize, atom: usize, link: LinkId, waiting: usize) -> f64 {
        if waiting >= self.width {
            return 0.0;
        }
        self.mass[self.index(tick, atom, link, waiting)]
    }

    /// Population share in `state` at `tick`.
    pub fn state_mass(&self, tick: usize, state: &AgentState) -> f64 {
        (0..self.atoms.len())
            .filter(|&a| self.atoms[a].destination == state.destination)
            .map(|a| self.atom_mass(tick, a, state.link, state.waiting))
            .sum()
    }

    /// Every state with positive mass at `tick`, ascending.
    pub fn support(&self, tick: usize) -> Vec<(AgentState, f64)> {
        let mut out: Vec<(AgentState, f64)> = Vec::new();
        for (a, atom) in self.atoms.iter().enumerate() {
            for link in 0..self.n_links {
                for w in 0..self.width {
                    let m = self.mass[self.index(tick, a, link, w)];
                    if m > 0.0 {
                        out.push((
                            AgentState {
                                link,
                                waiting: w,
                                destination: atom.destination,
                            },
                            m,
                        ));
                    }
                }
            }
        }
        out.sort_by(|x, y| x.0.cmp(&y.0));
        out.dedup_by(|later, earlier| {
            if later.0 == earlier.0 {
                earlier.1 += later.1;
                true
            } else {
                false
            }
        });
        out
    }

    pub fn total_mass(&self, tick: usize) -> f64 {
        let start = self.index(tick, 0, 0, 0);
        let len = self.atoms.len() * self.n_links * self.width;
        self.mass[start..start + len].iter().sum()
    }

    /// Mass of atom `atom` not yet on its destination at `tick`.
    pub fn active_mass(&self, tick: usize, atom: usize) -> f64 {
        self.active[tick * self.atoms.len() + atom]
    }

    /// Expected time an atom's vehicles spend off their destination.
    pub fn atom_cost(&self, atom: usize) -> f64 {
        let n = self.n_ticks();
        let busy: f64 = (0..n).map(|t| self.active_mass(t, atom)).sum();
        self.dt * busy / self.atoms[atom].mass
    }

    /// Population-weighted mean of [`Self::atom_cost`].
    pub fn mean_cost(&self) -> f64 {
        (0..self.atoms.len())
            .map(|a| self.atoms[a].mass * self.atom_cost(a))
            .sum()
    }
}

/// Pushes the initial distribution forward while every agent follows `policy`.
pub fn forward_flow(scenario: &Scenario, policy: &Policy) -> Result<DistributionFlow> {
    let net = &scenario.network;
    let grid = &scenario.grid;
    let n = grid.n_ticks;
    let n_links = net.n_links();
    let width = n + 1;
    let atoms = scenario.atoms.clone();
    let n_layers = atoms.len();
    let layer_len = n_links * width;
    let tick_len = n_layers * layer_len;

    let mut mass = vec![0.0; (n + 1) * tick_len];
    let mut loads = LinkLoads::zeros(n, n_links);
    let mut entries = EntryTable::with_capacity(n, n_links);
    let mut active = vec![0.0; (n + 1) * n_layers];

    for (a, atom) in atoms.iter().enumerate() {
        let s = scenario.initial_state(atom)?;
        mass[a * layer_len + s.link * width + s.waiting] += atom.mass;
    }

    let mut arrivals = vec![0.0; n_layers * n_links];
    for t in 0..=n {
        let (done, rest) = mass.split_at_mut((t + 1) * tick_len);
        let current = &done[t * tick_len..];

        // loads and entry waits for the current tick
        for link in 0..n_links {
            let mut total = 0.0;
            for a in 0..n_layers {
                let base = a * layer_len + link * width;
                total += current[base..base + width].iter().sum::<f64>();
            }
            loads.set(t, link, total);
            let f = &net.links()[link].congestion;
            entries.set(t, link, crate::kernel::entry_waiting(f, total, grid)?);
        }
        for (a, atom) in atoms.iter().enumerate() {
            let base = a * layer_len;
            let len = layer_len;
            let absorbed: f64 = current[base + atom.destination * width..][..width].iter().sum();
            let total: f64 = current[base..base + len].iter().sum();
            active[t * n_layers + a] = (total - absorbed).max(0.0);
        }
        if t == n {
            break;
        }

        let next = &mut rest[..tick_len];
        arrivals.iter_mut().for_each(|x| *x = 0.0);
        for (a, atom) in atoms.iter().enumerate() {
            let d = atom.destination;
            for link in 0..n_links {
                let base = a * layer_len + link * width;
                let succ = net.successors(link);
                for w in 0..width {
                    let m = current[base + w];
                    if m == 0.0 {
                        continue;
                    }
                    if link == d || (w == 0 && succ.is_empty()) {
                        next[base + w] += m;
                    } else if w > 0 {
                        next[base + w - 1] += m;
                    } else {
                        let row = policy.require_row(t, link, d)?;
                        for (k, &s) in succ.iter().enumerate() {
                            arrivals[a * n_links + s] += m * row[k];
                        }
                    }
                }
            }
        }
        // arrivals are counted in the loads of t + 1 that set their waiting
        let mut occupancy = vec![0.0; n_links];
        for link in 0..n_links {
            let mut total = 0.0;
            for a in 0..n_layers {
                let base = a * layer_len + link * width;
                total += next[base..base + width].iter().sum::<f64>();
                total += arrivals[a * n_links + link];
            }
            occupancy[link] = total;
        }
        for (a, atom) in atoms.iter().enumerate() {
            for link in 0..n_links {
                let m = arrivals[a * n_links + link];
                if m == 0.0 {
                    continue;
                }
                let w = if link == atom.destination {
                    0
                } else {
                    let f = &net.links()[link].congestion;
                    crate::kernel::entry_waiting(f, occupancy[link], grid)?
                };
                next[a * layer_len + link * width + w] += m;
            }
        }
    }

    Ok(DistributionFlow {
        n_links,
        width,
        atoms,
        mass,
        loads,
        entries,
        active,
        dt: grid.dt,
    })
}

/// Tick-indexed values at decision points for fixed crowd behaviour.
///
/// `v[t][d][l]` is the cost-to-go of an agent on `l` whose waiting has just
/// run out at tick `t`. Every other state is reduced to one of these.
#[derive(Clone, Debug)]
struct DecisionValues {
    n_ticks: usize,
    n_links: usize,
    n_dest: usize,
    v: Vec<f64>,
}

impl DecisionValues {
    fn new(n_ticks: usize, n_links: usize, n_dest: usize) -> Self {
        DecisionValues {
            n_ticks,
            n_links,
            n_dest,
            v: vec![0.0; (n_ticks + 1) * n_dest * n_links],
        }
    }

    fn at(&self, t: usize, d: usize, link: LinkId) -> f64 {
        self.v[(t * self.n_dest + d) * self.n_links + link]
    }

    fn set(&mut self, t: usize, d: usize, link: LinkId, value: f64) {
        self.v[(t * self.n_dest + d) * self.n_links + link] = value;
    }

    /// Ticks still to pay for an agent on `link` at tick `s` with `w` ticks
    /// of waiting left.
    fn stay(&self, s: usize, link: LinkId, w: usize, d: usize) -> f64 {
        if s + w >= self.n_ticks {
            (self.n_ticks - s) as f64
        } else {
            w as f64 + self.at(s + w, d, link)
        }
    }

    /// Ticks still to pay after joining `a` at tick `s`.
    fn join(&self, entries: &EntryTable, s: usize, a: LinkId, dest: LinkId, d: usize) -> f64 {
        if a == dest {
            0.0
        } else {
            self.stay(s, a, entries.get(s, a), d)
        }
    }
}

/// How a single agent picks successors in [`backward`].
enum Chooser<'a> {
    Follow(&'a Policy),
    Best,
}

struct Backward {
    values: DecisionValues,
    /// Q in ticks, laid out like the policy.
    q: Vec<f64>,
    best: Policy,
}

fn backward(scenario: &Scenario, entries: &EntryTable, chooser: Chooser) -> Result<Backward> {
    let net = &scenario.network;
    let n = scenario.grid.n_ticks;
    let dests = scenario.destinations();
    let mut values = DecisionValues::new(n, net.n_links(), dests.len());
    let mut best = Policy::empty(scenario);
    let mut q = vec![0.0; best.table_len()];
    let mut row = Vec::new();
    for t in (0..n).rev() {
        for (d, &dest) in dests.iter().enumerate() {
            for link in 0..net.n_links() {
                if link == dest {
                    continue;
                }
                let succ = net.successors(link);
                if succ.is_empty() {
                    values.set(t, d, link, (n - t) as f64);
                    continue;
                }
                let range = best.row_range(t, link, dest)?;
                for (k, &a) in succ.iter().enumerate() {
                    q[range.start + k] = 1.0 + values.join(entries, t + 1, a, dest, d);
                }
                let qs = &q[range];
                let v = match chooser {
                    Chooser::Follow(policy) => {
                        let probs = policy.require_row(t, link, dest)?;
                        probs.iter().zip(qs).map(|(p, x)| p * x).sum()
                    }
                    Chooser::Best => {
                        // ties go to the lowest link id; successors are sorted
                        let mut k_best = 0;
                        for k in 1..qs.len() {
                            if qs[k] < qs[k_best] {
                                k_best = k;
                            }
                        }
                        row.clear();
                        row.resize(qs.len(), 0.0);
                        row[k_best] = 1.0;
                        let v = qs[k_best];
                        best.set_row(t, link, dest, &row)?;
                        v
                    }
                };
                values.set(t, d, link, v);
            }
        }
    }
    Ok(Backward { values, q, best })
}

fn atom_values(scenario: &Scenario, values: &DecisionValues) -> Result<Vec<f64>> {
    scenario
        .atoms
        .iter()
        .map(|atom| {
            let s = scenario.initial_state(atom)?;
            let d = scenario.destination_index(atom.destination).expect("atom destination");
            Ok(values.stay(0, s.link, s.waiting, d) * scenario.grid.dt)
        })
        .collect()
}

/// State-action values of a policy played against a fixed flow.
#[derive(Clone, Debug)]
pub struct QTable {
    layout: Policy,
    values: Vec<f64>,
    /// Expected cost of each demand atom from its initial state.
    pub atom_values: Vec<f64>,
}

impl QTable {
    /// Q-values over `successors(link)`, in time units.
    pub fn row(&self, tick: usize, link: LinkId, destination: LinkId) -> Option<&[f64]> {
        self.layout.row(tick, link, destination)?;
        let range = self.layout.row_range(tick, link, destination).ok()?;
        Some(&self.values[range])
    }
}

/// Expected cost-to-go of `policy` for one agent while the crowd is `flow`.
pub fn evaluate_policy(scenario: &Scenario, policy: &Policy, flow: &DistributionFlow) -> Result<QTable> {
    let entries = flow.entries();
    let out = backward(scenario, entries, Chooser::Follow(policy))?;
    let dt = scenario.grid.dt;
    let atom_values = atom_values(scenario, &out.values)?;
    // rows are defined wherever a decision is possible, as in a uniform policy
    let layout = Policy::uniform(scenario);
    Ok(QTable {
        layout,
        values: out.q.into_iter().map(|x| x * dt).collect(),
        atom_values,
    })
}

/// Deterministic best response to a flow and its per-atom optimal costs.
#[derive(Clone, Debug)]
pub struct BestResponse {
    pub policy: Policy,
    pub atom_values: Vec<f64>,
}

/// Optimal single-agent policy against a fixed flow; ties go to the lowest
/// successor link id.
pub fn best_response(scenario: &Scenario, flow: &DistributionFlow) -> Result<BestResponse> {
    let entries = flow.entries();
    let out = backward(scenario, entries, Chooser::Best)?;
    let atom_values = atom_values(scenario, &out.values)?;
    Ok(BestResponse {
        policy: out.best,
        atom_values,
    })
}

#[derive(Clone, Debug)]
pub struct Exploitability {
    /// Population-weighted gain of a unilateral best response, clipped below
    /// at [`EXPLOITABILITY_FLOOR`].
    pub value: f64,
    pub mean_cost: f64,
    pub atom_costs: Vec<f64>,
    pub atom_best: Vec<f64>,
}

pub fn exploitability(scenario: &Scenario, policy: &Policy) -> Result<Exploitability> {
    let flow = forward_flow(scenario, policy)?;
    exploitability_of_flow(scenario, &flow)
}

pub(crate) fn exploitability_of_flow(scenario: &Scenario, flow: &DistributionFlow) -> Result<Exploitability> {
    let br = best_response(scenario, flow)?;
    let atom_costs: Vec<f64> = (0..scenario.atoms.len()).map(|a| flow.atom_cost(a)).collect();
    let gap: f64 = scenario
        .atoms
        .iter()
        .zip(atom_costs.iter().zip(&br.atom_values))
        .map(|(atom, (j, v))| atom.mass * (j - v))
        .sum();
    Ok(Exploitability {
        value: gap.max(EXPLOITABILITY_FLOOR),
        mean_cost: flow.mean_cost(),
        atom_costs,
        atom_best: br.atom_values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmdSegment {
    pub iterations: usize,
    pub learning_rate: f64,
}

/// Piecewise-constant learning-rate schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OmdSchedule {
    pub segments: Vec<OmdSegment>,
}

impl Default for OmdSchedule {
    fn default() -> Self {
        OmdSchedule::new(&[(30, 1.0), (30, 0.1), (40, 0.01)])
    }
}

impl OmdSchedule {
    pub fn new(segments: &[(usize, f64)]) -> Self {
        OmdSchedule {
            segments: segments
                .iter()
                .map(|&(iterations, learning_rate)| OmdSegment {
                    iterations,
                    learning_rate,
                })
                .collect(),
        }
    }

    /// Same learning rate for `iterations` steps.
    pub fn constant(iterations: usize, learning_rate: f64) -> Self {
        OmdSchedule::new(&[(iterations, learning_rate)])
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::Config("learning-rate schedule is empty".into()));
        }
        for s in &self.segments {
            if !(s.learning_rate > 0.0 && s.learning_rate.is_finite()) {
                return Err(Error::Config(format!(
                    "learning rate must be positive, got {}",
                    s.learning_rate
                )));
            }
        }
        Ok(())
    }

    pub fn total_iterations(&self) -> usize {
        self.segments.iter().map(|s| s.iterations).sum()
    }

    /// Learning rate of every iteration in order.
    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.segments
            .iter()
            .flat_map(|s| std::iter::repeat(s.learning_rate).take(s.iterations))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub learning_rate: f64,
    pub exploitability: f64,
    pub mean_travel_time: f64,
}

/// What the OMD observer sees after each iteration.
pub struct OmdStep<'a> {
    pub record: &'a IterationRecord,
    pub policy: &'a Policy,
    pub flow: &'a DistributionFlow,
}

#[derive(Clone, Debug)]
pub struct OmdOutcome {
    pub policy: Policy,
    pub history: Vec<IterationRecord>,
}

/// Online Mirror Descent starting from the uniform policy.
pub fn omd_solve(scenario: &Scenario, schedule: &OmdSchedule) -> Result<OmdOutcome> {
    omd_solve_with(scenario, schedule, |_| {})
}

/// [`omd_solve`] with a callback invoked after every iteration.
pub fn omd_solve_with<F>(scenario: &Scenario, schedule: &OmdSchedule, mut observer: F) -> Result<OmdOutcome>
where
    F: FnMut(&OmdStep),
{
    schedule.validate()?;
    let mut policy = Policy::uniform(scenario);
    let mut history = Vec::with_capacity(schedule.total_iterations());
    if schedule.total_iterations() == 0 {
        return Ok(OmdOutcome { policy, history });
    }
    let mut flow = forward_flow(scenario, &policy)?;
    let mut dual = vec![0.0; policy.table_len()];
    let rows: Vec<(usize, LinkId, LinkId)> = policy.rows().map(|(t, l, d, _)| (t, l, d)).collect();
    let mut probs = Vec::new();

    for (i, lr) in schedule.rates().enumerate() {
        let q = evaluate_policy(scenario, &policy, &flow)?;
        for &(t, link, d) in &rows {
            let range = policy.row_range(t, link, d)?;
            let y = &mut dual[range.clone()];
            for (y, qv) in y.iter_mut().zip(&q.values[range]) {
                *y += lr * qv;
            }
            softmax_neg(y, &mut probs);
            policy.set_row(t, link, d, &probs)?;
        }
        flow = forward_flow(scenario, &policy)?;
        let ex = exploitability_of_flow(scenario, &flow)?;
        let record = IterationRecord {
            iteration: i + 1,
            learning_rate: lr,
            exploitability: ex.value,
            mean_travel_time: ex.mean_cost,
        };
        observer(&OmdStep {
            record: &record,
            policy: &policy,
            flow: &flow,
        });
        history.push(record);
    }
    Ok(OmdOutcome { policy, history })
}

/// `out[k] ∝ exp(-y[k])`, shifted for stability.
fn softmax_neg(y: &[f64], out: &mut Vec<f64>) {
    let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
    out.clear();
    out.extend(y.iter().map(|v| (lo - v).exp()));
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= z);
}

/// Deterministic trip of one atom's vehicle along a fixed path.
#[derive(Clone, Debug, PartialEq)]
pub struct PathOutcome {
    /// Time off the destination, truncated at the horizon.
    pub cost: f64,
    /// Tick at which the first road link is joined.
    pub departure_tick: Option<usize>,
    /// Tick at which the destination link is joined.
    pub arrival_tick: Option<usize>,
    /// `(tick, link, successor)` for every decision taken on the way.
    pub decisions: Vec<(usize, LinkId, LinkId)>,
}

impl PathOutcome {
    /// Time between leaving the origin link and reaching the destination.
    pub fn road_time(&self, dt: f64) -> Option<f64> {
        Some((self.arrival_tick? - self.departure_tick?) as f64 * dt)
    }

    /// Probability that `policy` produces exactly this sequence of choices.
    pub fn probability(&self, policy: &Policy, destination: LinkId) -> f64 {
        self.decisions
            .iter()
            .map(|&(t, link, next)| {
                let Some(row) = policy.row(t, link, destination) else {
                    return 0.0;
                };
                let k = policy.successors(link).iter().position(|&s| s == next);
                k.map_or(0.0, |k| row[k])
            })
            .product()
    }
}

/// Follows `path` (origin link first) for atom `atom` under fixed entry waits.
pub fn follow_path(
    scenario: &Scenario,
    entries: &EntryTable,
    atom: usize,
    path: &[LinkId],
) -> Result<PathOutcome> {
    let a = scenario
        .atoms
        .get(atom)
        .ok_or_else(|| Error::Domain(format!("no demand atom {atom}")))?;
    if path.first() != Some(&a.origin) {
        return Err(Error::Domain("path must start at the atom's origin link".into()));
    }
    let n = scenario.grid.n_ticks;
    let dt = scenario.grid.dt;
    let start = scenario.initial_state(a)?;
    let mut t = start.waiting;
    let mut link = a.origin;
    let mut out = PathOutcome {
        cost: 0.0,
        departure_tick: None,
        arrival_tick: None,
        decisions: Vec::new(),
    };
    for &next in &path[1..] {
        if t >= n {
            break;
        }
        if !scenario.network.successors(link).contains(&next) {
            return Err(Error::Domain(format!("link {next} does not follow link {link}")));
        }
        out.decisions.push((t, link, next));
        let s = t + 1;
        if link == a.origin {
            out.departure_tick = Some(s);
        }
        if next == a.destination {
            out.arrival_tick = Some(s);
            out.cost = s as f64 * dt;
            return Ok(out);
        }
        t = s + entries.get(s, next);
        link = next;
    }
    out.cost = n as f64 * dt;
    Ok(out)
}
