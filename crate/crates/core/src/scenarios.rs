//! Built-in benchmark networks: Pigou, Braess and its augmented variant.

use crate::error::{Error, Result};
use crate::kernel::{DemandAtom, Scenario, TimeGrid};
use crate::net::{CongestionFn, Network, NodeId, RoadSpec};

/// One demand entry expressed on real nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NodeDemand {
    pub origin: NodeId,
    pub destination: NodeId,
    pub departure_time: f64,
    /// Number of vehicles (or any weight; normalised by `n0`).
    pub count: f64,
}

/// Adds origin/destination links for every node used by `demand` and turns
/// counts into population shares of `n0`.
pub fn assemble(roads: Network, grid: TimeGrid, demand: &[NodeDemand], n0: f64) -> Result<Scenario> {
    if !(n0 > 0.0) {
        return Err(Error::Config(format!("n0 must be positive, got {n0}")));
    }
    let mut origins: Vec<NodeId> = demand.iter().map(|d| d.origin).collect();
    let mut destinations: Vec<NodeId> = demand.iter().map(|d| d.destination).collect();
    origins.sort_unstable();
    origins.dedup();
    destinations.sort_unstable();
    destinations.dedup();
    let network = roads.augment_od(&origins, &destinations, grid.dt)?;

    let mut atoms: Vec<DemandAtom> = Vec::new();
    for d in demand {
        if !(d.departure_time >= 0.0 && d.departure_time < grid.horizon) {
            return Err(Error::Config(format!(
                "departure time {} outside [0, {})",
                d.departure_time, grid.horizon
            )));
        }
        let atom = DemandAtom {
            origin: network.origin_link(d.origin)?,
            destination: network.destination_link(d.destination)?,
            departure_tick: grid.tick_of(d.departure_time),
            mass: d.count / n0,
        };
        match atoms.iter_mut().find(|a| {
            (a.origin, a.destination, a.departure_tick)
                == (atom.origin, atom.destination, atom.departure_tick)
        }) {
            Some(existing) => existing.mass += atom.mass,
            None => atoms.push(atom),
        }
    }
    Scenario::new(network, grid, atoms, n0)
}

/// Cost functions of the two-link Pigou network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PigouVariant {
    /// `c(x) = 2` and `c'(x) = 1 + 2x`.
    Classic,
    /// `c(x) = T / 2` and `c'(x) = x T`.
    HorizonScaled { t: f64 },
}

impl PigouVariant {
    pub fn congestion(&self) -> (CongestionFn, CongestionFn) {
        match *self {
            PigouVariant::Classic => (CongestionFn::constant(2.0), CongestionFn::affine(1.0, 2.0)),
            PigouVariant::HorizonScaled { t } => {
                (CongestionFn::constant(0.5 * t), CongestionFn::affine(0.0, t))
            }
        }
    }
}

/// Two parallel links from node 1 to node 2; link 0 is the constant one.
pub fn pigou(variant: PigouVariant, dt: f64, horizon: f64) -> Result<Scenario> {
    let (fixed, congestible) = variant.congestion();
    two_link(fixed, congestible, dt, horizon)
}

pub(crate) fn two_link(
    first: CongestionFn,
    second: CongestionFn,
    dt: f64,
    horizon: f64,
) -> Result<Scenario> {
    let roads = Network::from_roads(vec![
        RoadSpec::new(1, 2, first).labeled("l"),
        RoadSpec::new(1, 2, second).labeled("l'"),
    ])?;
    let demand = [NodeDemand {
        origin: 1,
        destination: 2,
        departure_time: 0.0,
        count: 100.0,
    }];
    assemble(roads, TimeGrid::new(dt, horizon)?, &demand, 100.0)
}

/// A single road from node 1 to node 2.
pub fn single_link(f: CongestionFn, dt: f64, horizon: f64) -> Result<Scenario> {
    let roads = Network::from_roads(vec![RoadSpec::new(1, 2, f)])?;
    let demand = [NodeDemand {
        origin: 1,
        destination: 2,
        departure_time: 0.0,
        count: 1.0,
    }];
    assemble(roads, TimeGrid::new(dt, horizon)?, &demand, 1.0)
}

pub const NODE_A: NodeId = 1;
pub const NODE_B: NodeId = 2;
pub const NODE_C: NodeId = 3;
pub const NODE_D: NodeId = 4;

fn braess_roads() -> Result<Network> {
    Network::from_roads(vec![
        RoadSpec::new(NODE_A, NODE_B, CongestionFn::affine(1.0, 1.0)).labeled("AB"),
        RoadSpec::new(NODE_A, NODE_C, CongestionFn::constant(2.0)).labeled("AC"),
        RoadSpec::new(NODE_B, NODE_C, CongestionFn::constant(0.25)).labeled("BC"),
        RoadSpec::new(NODE_B, NODE_D, CongestionFn::constant(2.0)).labeled("BD"),
        RoadSpec::new(NODE_C, NODE_D, CongestionFn::affine(1.0, 1.0)).labeled("CD"),
    ])
}

/// Braess network with all demand leaving A at time 0 towards D.
pub fn braess(dt: f64, horizon: f64) -> Result<Scenario> {
    let demand = [NodeDemand {
        origin: NODE_A,
        destination: NODE_D,
        departure_time: 0.0,
        count: 100.0,
    }];
    assemble(braess_roads()?, TimeGrid::new(dt, horizon)?, &demand, 100.0)
}

/// Braess network with a second destination at C and staggered departures:
/// 50 vehicles to D at each of 0, 0.5, 1 and 50 to C at each of 0, 1.
pub fn augmented_braess(dt: f64, horizon: f64) -> Result<Scenario> {
    let entry = |destination, departure_time| NodeDemand {
        origin: NODE_A,
        destination,
        departure_time,
        count: 50.0,
    };
    let demand = [
        entry(NODE_D, 0.0),
        entry(NODE_D, 0.5),
        entry(NODE_D, 1.0),
        entry(NODE_C, 0.0),
        entry(NODE_C, 1.0),
    ];
    assemble(braess_roads()?, TimeGrid::new(dt, horizon)?, &demand, 250.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::LinkKind;

    #[test]
    fn braess_shapes() {
        let s = braess(0.05, 5.0).unwrap();
        assert_eq!(s.network.n_links(), 7);
        assert_eq!(s.network.road_links().count(), 5);
        assert_eq!(s.grid.n_ticks, 100);
        assert_eq!(s.atoms.len(), 1);
        assert_eq!(s.atoms[0].mass, 1.0);
    }

    #[test]
    fn augmented_braess_atoms() {
        let s = augmented_braess(0.05, 5.0).unwrap();
        assert_eq!(s.atoms.len(), 5);
        assert_eq!(s.destinations().len(), 2);
        let mut ticks: Vec<usize> = s.atoms.iter().map(|a| a.departure_tick).collect();
        ticks.sort_unstable();
        ticks.dedup();
        assert_eq!(ticks, vec![0, 10, 20]);
        for a in &s.atoms {
            assert_close!(a.mass, 0.2, 1e-15);
        }
        let cf = s.network.destination_link(NODE_C).unwrap();
        assert_eq!(s.network.link(cf).unwrap().kind, LinkKind::DestinationVirtual);
    }

    #[test]
    fn pigou_variants() {
        let s = pigou(PigouVariant::HorizonScaled { t: 2.0 }, 0.01, 2.0).unwrap();
        let l = &s.network.links()[0];
        let lp = &s.network.links()[1];
        assert_eq!(l.congestion.evaluate(0.7).unwrap(), 1.0);
        assert_eq!(lp.congestion.evaluate(0.5).unwrap(), 1.0);
        assert_eq!(s.network.n_links(), 4);
    }

    #[test]
    fn duplicate_demand_entries_merge() {
        let roads = Network::from_roads(vec![RoadSpec::new(1, 2, CongestionFn::constant(1.0))]).unwrap();
        let grid = TimeGrid::new(0.5, 5.0).unwrap();
        let d = NodeDemand {
            origin: 1,
            destination: 2,
            departure_time: 0.2,
            count: 1.0,
        };
        let s = assemble(roads, grid, &[d, NodeDemand { departure_time: 0.0, ..d }], 2.0).unwrap();
        assert_eq!(s.atoms.len(), 1);
        assert_eq!(s.atoms[0].mass, 1.0);
    }
}
