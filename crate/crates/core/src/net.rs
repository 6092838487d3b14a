//! Road graph, volume-delay functions and origin/destination augmentation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type LinkId = usize;
pub type NodeId = u32;

/// Proportions within this distance outside `[0, 1]` are treated as roundoff.
const PROPORTION_SLACK: f64 = 1e-9;

/// Travel time on a link as a function of the proportion of vehicles on it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum CongestionFn {
    /// `t0`, whatever the load.
    Constant { t0: f64 },
    /// `t0 + alpha * mu`.
    Affine { t0: f64, alpha: f64 },
    /// `t0 * (1 + alpha * (mu / rel_capacity)^beta)`.
    Bpr {
        t0: f64,
        alpha: f64,
        beta: f64,
        rel_capacity: f64,
    },
    /// `low` below `threshold` (or at it when `inclusive`), `high` otherwise.
    ///
    /// Discontinuous; only used to exhibit games without an equilibrium.
    Step {
        low: f64,
        high: f64,
        threshold: f64,
        inclusive: bool,
    },
}

impl CongestionFn {
    pub fn constant(t0: f64) -> Self {
        CongestionFn::Constant { t0 }
    }

    pub fn affine(t0: f64, alpha: f64) -> Self {
        CongestionFn::Affine { t0, alpha }
    }

    pub fn bpr(t0: f64, alpha: f64, beta: f64, rel_capacity: f64) -> Self {
        CongestionFn::Bpr {
            t0,
            alpha,
            beta,
            rel_capacity,
        }
    }

    pub fn step(low: f64, high: f64, threshold: f64, inclusive: bool) -> Self {
        CongestionFn::Step {
            low,
            high,
            threshold,
            inclusive,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        let finite_nonneg = |x: f64| x.is_finite() && x >= 0.0;
        let ok = match *self {
            CongestionFn::Constant { t0 } => finite_pos(t0),
            // t0 = 0 is allowed so that `x * T` style costs can be expressed.
            CongestionFn::Affine { t0, alpha } => {
                finite_nonneg(t0) && finite_nonneg(alpha) && t0 + alpha > 0.0
            }
            CongestionFn::Bpr {
                t0,
                alpha,
                beta,
                rel_capacity,
            } => {
                finite_pos(t0)
                    && finite_nonneg(alpha)
                    && finite_nonneg(beta)
                    && finite_pos(rel_capacity)
            }
            CongestionFn::Step {
                low,
                high,
                threshold,
                ..
            } => finite_pos(low) && finite_pos(high) && threshold.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid congestion parameters {self:?}")))
        }
    }

    /// Travel time at proportion `mu`.
    pub fn evaluate(&self, mu: f64) -> Result<f64> {
        let mu = clamp_proportion(mu)?;
        Ok(match *self {
            CongestionFn::Constant { t0 } => t0,
            CongestionFn::Affine { t0, alpha } => t0 + alpha * mu,
            CongestionFn::Bpr {
                t0,
                alpha,
                beta,
                rel_capacity,
            } => t0 * (1.0 + alpha * (mu / rel_capacity).powf(beta)),
            CongestionFn::Step {
                low,
                high,
                threshold,
                inclusive,
            } => {
                if mu < threshold || (inclusive && mu == threshold) {
                    low
                } else {
                    high
                }
            }
        })
    }

    /// Travel time on an empty link.
    pub fn free_flow(&self) -> f64 {
        self.evaluate(0.0).expect("0 is a valid proportion")
    }

    /// Re-expresses the function for a population of `n_vehicles` when it was
    /// tuned for `n0`, so that `scaled(n / n_vehicles) == self(n / n0)`.
    pub fn scale_capacity(&self, n_vehicles: f64, n0: f64) -> Result<Self> {
        if !(n_vehicles > 0.0 && n0 > 0.0 && n_vehicles.is_finite() && n0.is_finite()) {
            return Err(Error::Domain(format!(
                "vehicle counts must be positive, got n_vehicles={n_vehicles}, n0={n0}"
            )));
        }
        let ratio = n0 / n_vehicles;
        Ok(match *self {
            c @ CongestionFn::Constant { .. } => c,
            CongestionFn::Affine { t0, alpha } => CongestionFn::Affine {
                t0,
                alpha: alpha / ratio,
            },
            CongestionFn::Bpr {
                t0,
                alpha,
                beta,
                rel_capacity,
            } => CongestionFn::Bpr {
                t0,
                alpha,
                beta,
                rel_capacity: rel_capacity * ratio,
            },
            CongestionFn::Step {
                low,
                high,
                threshold,
                inclusive,
            } => CongestionFn::Step {
                low,
                high,
                threshold: threshold * ratio,
                inclusive,
            },
        })
    }
}

/// Maps roundoff just outside `[0, 1]` back into the interval.
pub fn clamp_proportion(mu: f64) -> Result<f64> {
    if !(-PROPORTION_SLACK..=1.0 + PROPORTION_SLACK).contains(&mu) {
        return Err(Error::Domain(format!("proportion {mu} outside [0, 1]")));
    }
    debug_assert!(mu.is_finite());
    Ok(mu.clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    Road,
    OriginVirtual,
    DestinationVirtual,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub tail: NodeId,
    pub head: NodeId,
    pub congestion: CongestionFn,
    pub kind: LinkKind,
    pub label: String,
}

/// Input description of a road link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    pub tail: NodeId,
    pub head: NodeId,
    pub congestion: CongestionFn,
    #[serde(default)]
    pub label: Option<String>,
}

impl RoadSpec {
    pub fn new(tail: NodeId, head: NodeId, congestion: CongestionFn) -> Self {
        RoadSpec {
            tail,
            head,
            congestion,
            label: None,
        }
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }
}

/// Virtual links attached to a node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OdLinks {
    pub origin: Option<LinkId>,
    pub destination: Option<LinkId>,
}

/// Directed link graph. Immutable once built.
#[derive(Clone, Debug)]
pub struct Network {
    links: Vec<Link>,
    successors: Vec<Vec<LinkId>>,
    od_map: BTreeMap<NodeId, OdLinks>,
    nodes: BTreeSet<NodeId>,
}

impl Network {
    /// Builds a network of road links only; link ids follow input order.
    pub fn from_roads(roads: impl IntoIterator<Item = RoadSpec>) -> Result<Self> {
        let mut links = Vec::new();
        let mut nodes = BTreeSet::new();
        for (id, road) in roads.into_iter().enumerate() {
            if road.tail == road.head {
                return Err(Error::InvalidNetwork(format!(
                    "road link {id} is a self-loop on node {}",
                    road.tail
                )));
            }
            road.congestion.validate()?;
            nodes.insert(road.tail);
            nodes.insert(road.head);
            links.push(Link {
                id,
                tail: road.tail,
                head: road.head,
                congestion: road.congestion,
                kind: LinkKind::Road,
                label: road
                    .label
                    .unwrap_or_else(|| format!("{}->{}", road.tail, road.head)),
            });
        }
        let mut net = Network {
            links,
            successors: Vec::new(),
            od_map: BTreeMap::new(),
            nodes,
        };
        net.rebuild_successors();
        Ok(net)
    }

    /// Adds an origin link ending at each origin node and an absorbing
    /// destination link leaving each destination node.
    ///
    /// Origin links take exactly one tick (`tick` time units) to traverse.
    pub fn augment_od(
        &self,
        origin_nodes: &[NodeId],
        destination_nodes: &[NodeId],
        tick: f64,
    ) -> Result<Network> {
        for node in origin_nodes.iter().chain(destination_nodes) {
            if !self.nodes.contains(node) {
                return Err(Error::UnknownNode(*node));
            }
        }
        let mut net = self.clone();
        let mut fresh = self
            .links
            .iter()
            .flat_map(|l| [l.tail, l.head])
            .max()
            .map_or(0, |m| m + 1);
        let virtual_fn = CongestionFn::constant(tick);
        virtual_fn.validate()?;

        for &node in origin_nodes {
            if net.od_map.get(&node).and_then(|od| od.origin).is_some() {
                continue;
            }
            let id = net.links.len();
            net.links.push(Link {
                id,
                tail: fresh,
                head: node,
                congestion: virtual_fn,
                kind: LinkKind::OriginVirtual,
                label: format!("origin({node})"),
            });
            fresh += 1;
            net.od_map.entry(node).or_default().origin = Some(id);
        }
        for &node in destination_nodes {
            if net.od_map.get(&node).and_then(|od| od.destination).is_some() {
                continue;
            }
            let id = net.links.len();
            net.links.push(Link {
                id,
                tail: node,
                head: fresh,
                congestion: virtual_fn,
                kind: LinkKind::DestinationVirtual,
                label: format!("destination({node})"),
            });
            fresh += 1;
            net.od_map.entry(node).or_default().destination = Some(id);
        }
        net.rebuild_successors();
        Ok(net)
    }

    fn rebuild_successors(&mut self) {
        let mut by_tail: BTreeMap<NodeId, Vec<LinkId>> = BTreeMap::new();
        for link in &self.links {
            if link.kind != LinkKind::OriginVirtual {
                by_tail.entry(link.tail).or_default().push(link.id);
            }
        }
        self.successors = self
            .links
            .iter()
            .map(|link| match link.kind {
                LinkKind::DestinationVirtual => Vec::new(),
                _ => by_tail.get(&link.head).cloned().unwrap_or_default(),
            })
            .collect();
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn link(&self, id: LinkId) -> Result<&Link> {
        self.links.get(id).ok_or(Error::UnknownLink(id))
    }

    pub fn successors(&self, id: LinkId) -> &[LinkId] {
        &self.successors[id]
    }

    pub fn road_links(&self) -> impl Iterator<Item = &Link> {
        self.links.iter().filter(|l| l.kind == LinkKind::Road)
    }

    /// Real (non-virtual) node ids.
    pub fn nodes(&self) -> &BTreeSet<NodeId> {
        &self.nodes
    }

    pub fn od_links(&self, node: NodeId) -> Option<OdLinks> {
        self.od_map.get(&node).copied()
    }

    pub fn origin_link(&self, node: NodeId) -> Result<LinkId> {
        self.od_links(node)
            .and_then(|od| od.origin)
            .ok_or(Error::UnknownNode(node))
    }

    pub fn destination_link(&self, node: NodeId) -> Result<LinkId> {
        self.od_links(node)
            .and_then(|od| od.destination)
            .ok_or(Error::UnknownNode(node))
    }

    pub fn link_by_label(&self, label: &str) -> Option<LinkId> {
        self.links.iter().position(|l| l.label == label)
    }
}
