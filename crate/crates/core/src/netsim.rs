//! Communication fabric: point-to-point, wireless and satellite links,
//! quake-induced disruption and route selection with satellite fallback.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::engine::RngStream;
use crate::ids::{ActorId, LinkId, MsgId, TimeMs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkKind {
    PointToPoint,
    Wireless,
    Satellite,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Link {
    pub id: LinkId,
    pub a: ActorId,
    pub b: ActorId,
    pub kind: LinkKind,
    pub base_latency_ms: TimeMs,
    pub up: bool,
    pub hardened: bool,
}

impl Link {
    pub fn other(&self, from: ActorId) -> ActorId {
        if from == self.a {
            self.b
        } else {
            self.a
        }
    }

    pub fn joins(&self, x: ActorId, y: ActorId) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }

    pub fn lower_endpoint(&self) -> ActorId {
        self.a.min(self.b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RouteChoice {
    Direct(LinkId),
    Multihop(Vec<LinkId>),
    SatelliteRelay(Vec<LinkId>),
    NoPath,
}

impl RouteChoice {
    pub fn path(&self) -> &[LinkId] {
        match self {
            RouteChoice::Direct(l) => std::slice::from_ref(l),
            RouteChoice::Multihop(p) | RouteChoice::SatelliteRelay(p) => p,
            RouteChoice::NoPath => &[],
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            RouteChoice::Direct(_) => "direct",
            RouteChoice::Multihop(_) => "multihop",
            RouteChoice::SatelliteRelay(_) => "satellite",
            RouteChoice::NoPath => "none",
        }
    }
}

/// Which tiers of the preference order a send may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteMode {
    /// Direct, then wireless, then satellite relay.
    Preferred,
    /// Direct or wireless only.
    Terrestrial,
    /// Satellite relay only.
    SatelliteOnly,
}

/// A message in flight. `msg_id` is shared by the two copies of a dual relay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Envelope<M> {
    pub msg_id: MsgId,
    pub src: ActorId,
    pub dst: ActorId,
    pub body: M,
    pub sent_ms: TimeMs,
    pub path: Vec<LinkId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisruptionParams {
    /// Down probability per unit intensity is `beta_d / 10`.
    pub beta_d: f64,
    pub hardened_factor: f64,
}

impl Default for DisruptionParams {
    fn default() -> Self {
        Self { beta_d: 0.8, hardened_factor: 0.5 }
    }
}

pub fn wireless_down_probability(beta_d: f64, intensity: f64) -> f64 {
    (beta_d * intensity / 10.0).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Default)]
pub struct Network {
    links: Vec<Link>,
    adj: BTreeMap<ActorId, Vec<LinkId>>,
    /// Actors that may not relay traffic (failed nodes).
    excluded: BTreeSet<ActorId>,
    /// Extra down-probability multipliers for wireless links touching an actor.
    wireless_factor: BTreeMap<ActorId, f64>,
}

impl Network {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_link(
        &mut self,
        a: ActorId,
        b: ActorId,
        kind: LinkKind,
        base_latency_ms: TimeMs,
        hardened: bool,
    ) -> LinkId {
        assert!(base_latency_ms > 0, "link latency must be positive");
        assert!(!hardened || kind == LinkKind::PointToPoint, "only point-to-point links can be hardened");
        let id = self.links.len() as LinkId;
        self.links.push(Link { id, a, b, kind, base_latency_ms, up: true, hardened });
        self.adj.entry(a).or_default().push(id);
        if a != b {
            self.adj.entry(b).or_default().push(id);
        }
        id
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id as usize]
    }

    pub fn set_wireless_factor(&mut self, actor: ActorId, factor: f64) {
        self.wireless_factor.insert(actor, factor);
    }

    /// Stop routing through `actor`. It can still be an endpoint.
    pub fn exclude_relay(&mut self, actor: ActorId) {
        self.excluded.insert(actor);
    }

    /// Mark a link down. Satellite links cannot go down; returns whether the state changed.
    pub fn set_down(&mut self, id: LinkId) -> bool {
        let l = &mut self.links[id as usize];
        if l.kind == LinkKind::Satellite || !l.up {
            return false;
        }
        l.up = false;
        true
    }

    pub fn latency(&self, path: &[LinkId]) -> TimeMs {
        path.iter().map(|&l| self.link(l).base_latency_ms).sum()
    }

    /// The actors visited along `path`, starting with `src`.
    pub fn hops(&self, src: ActorId, path: &[LinkId]) -> Vec<ActorId> {
        let mut at = src;
        let mut out = vec![src];
        for &l in path {
            at = self.link(l).other(at);
            out.push(at);
        }
        out
    }

    pub fn route(&self, src: ActorId, dst: ActorId) -> RouteChoice {
        self.route_with(src, dst, RouteMode::Preferred)
    }

    pub fn route_with(&self, src: ActorId, dst: ActorId, mode: RouteMode) -> RouteChoice {
        debug_assert_ne!(src, dst);
        if mode != RouteMode::SatelliteOnly {
            if let Some(l) = self.direct_link(src, dst) {
                return RouteChoice::Direct(l);
            }
            if let Some(path) = self.wireless_path(src, dst) {
                return RouteChoice::Multihop(path);
            }
        }
        if mode != RouteMode::Terrestrial {
            if let Some(path) = self.satellite_path(src, dst) {
                return RouteChoice::SatelliteRelay(path);
            }
        }
        RouteChoice::NoPath
    }

    fn direct_link(&self, src: ActorId, dst: ActorId) -> Option<LinkId> {
        self.adj.get(&src)?.iter().copied().find(|&id| {
            let l = self.link(id);
            l.kind == LinkKind::PointToPoint && l.up && l.joins(src, dst)
        })
    }

    fn satellite_path(&self, src: ActorId, dst: ActorId) -> Option<Vec<LinkId>> {
        if !src.class.satellite_capable() || !dst.class.satellite_capable() {
            return None;
        }
        let hop = |x: ActorId| {
            self.adj.get(&x)?.iter().copied().find(|&id| {
                let l = self.link(id);
                l.kind == LinkKind::Satellite && l.up && l.joins(x, ActorId::SATELLITE)
            })
        };
        Some(vec![hop(src)?, hop(dst)?])
    }

    /// Minimum-latency path over up wireless links; ties go to the
    /// lexicographically smallest link-id sequence.
    fn wireless_path(&self, src: ActorId, dst: ActorId) -> Option<Vec<LinkId>> {
        let usable = |l: &Link| l.kind == LinkKind::Wireless && l.up;
        lexicographic_dijkstra(
            src,
            |n| n == dst,
            |n| {
                if n != src && self.excluded.contains(&n) {
                    return Vec::new();
                }
                self.adj
                    .get(&n)
                    .map(|ids| {
                        ids.iter()
                            .map(|&id| self.link(id))
                            .filter(|l| usable(l))
                            .map(|l| (l.id, l.other(n), l.base_latency_ms))
                            .collect()
                    })
                    .unwrap_or_default()
            },
        )
        .map(|(_, p)| p)
    }

    /// Sample quake disruption. Each non-satellite link (in id order) draws
    /// once; wireless links fail with `min(1, beta_d * I / 10)` where `I` is
    /// the intensity at the lower-id endpoint, scaled by any per-actor
    /// factor; hardened point-to-point links use `hardened_factor` of that.
    /// Returns links newly taken down.
    pub fn apply_disruption<F>(&mut self, intensity_of: F, params: DisruptionParams, rng: &mut RngStream) -> Vec<LinkId>
    where
        F: Fn(ActorId) -> f64,
    {
        let mut down = Vec::new();
        for i in 0..self.links.len() {
            let l = &self.links[i];
            if l.kind == LinkKind::Satellite {
                continue;
            }
            let mut p = wireless_down_probability(params.beta_d, intensity_of(l.lower_endpoint()));
            if l.hardened {
                p *= params.hardened_factor;
            } else if l.kind == LinkKind::Wireless {
                let fa = self.wireless_factor.get(&l.a).copied().unwrap_or(1.0);
                let fb = self.wireless_factor.get(&l.b).copied().unwrap_or(1.0);
                p *= fa.min(fb);
            }
            let id = l.id;
            if rng.chance(p) && self.set_down(id) {
                down.push(id);
            }
        }
        down
    }
}

#[derive(PartialEq, Eq)]
struct Label<N> {
    cost: u64,
    path: Vec<u32>,
    node: N,
}

impl<N: Eq> Ord for Label<N> {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (cost, path)
        (other.cost, &other.path).cmp(&(self.cost, &self.path))
    }
}

impl<N: Eq> PartialOrd for Label<N> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over positive integer weights whose labels carry the whole edge
/// path, ordered by `(cost, path)`. With positive weights the
/// lexicographic tie-break is consistent with subpath optimality, so the
/// first goal node popped carries the optimal `(cost, path)` pair.
///
/// `neighbors(n)` yields `(edge_id, next_node, weight)`.
pub fn lexicographic_dijkstra<N, G, F>(src: N, is_goal: G, mut neighbors: F) -> Option<(u64, Vec<u32>)>
where
    N: Copy + Ord,
    G: Fn(N) -> bool,
    F: FnMut(N) -> Vec<(u32, N, u64)>,
{
    let mut settled: BTreeSet<N> = BTreeSet::new();
    let mut best: BTreeMap<N, (u64, Vec<u32>)> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    best.insert(src, (0, Vec::new()));
    heap.push(Label { cost: 0, path: Vec::new(), node: src });
    while let Some(Label { cost, path, node }) = heap.pop() {
        if !settled.insert(node) {
            continue;
        }
        if is_goal(node) {
            return Some((cost, path));
        }
        for (edge, next, w) in neighbors(node) {
            if settled.contains(&next) {
                continue;
            }
            let cand_cost = cost + w;
            let mut cand_path = path.clone();
            cand_path.push(edge);
            let better = match best.get(&next) {
                None => true,
                Some((c, p)) => (cand_cost, &cand_path) < (*c, p),
            };
            if better {
                best.insert(next, (cand_cost, cand_path.clone()));
                heap.push(Label { cost: cand_cost, path: cand_path, node: next });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(i: u32) -> ActorId {
        ActorId::drone(i)
    }

    #[test]
    fn direct_beats_cheaper_wireless() {
        let mut n = Network::new();
        let p2p = n.add_link(d(0), d(1), LinkKind::PointToPoint, 50, false);
        n.add_link(d(0), d(1), LinkKind::Wireless, 5, false);
        assert_eq!(n.route(d(0), d(1)), RouteChoice::Direct(p2p));
        n.set_down(p2p);
        assert_eq!(n.route(d(0), d(1)), RouteChoice::Multihop(vec![1]));
    }

    #[test]
    fn falls_back_to_satellite_only_when_both_capable() {
        let mut n = Network::new();
        let w = n.add_link(d(0), d(1), LinkKind::Wireless, 40, false);
        n.add_link(d(0), ActorId::SATELLITE, LinkKind::Satellite, 600, false);
        n.add_link(d(1), ActorId::SATELLITE, LinkKind::Satellite, 600, false);
        let s = ActorId::sensor(0);
        let ws = n.add_link(s, d(0), LinkKind::Wireless, 40, false);
        n.set_down(w);
        n.set_down(ws);
        assert_eq!(n.route(d(0), d(1)), RouteChoice::SatelliteRelay(vec![1, 2]));
        assert_eq!(n.route_with(d(0), d(1), RouteMode::Terrestrial), RouteChoice::NoPath);
        assert_eq!(n.route(s, d(0)), RouteChoice::NoPath);
    }

    #[test]
    fn satellite_links_never_go_down() {
        let mut n = Network::new();
        let s = n.add_link(d(0), ActorId::SATELLITE, LinkKind::Satellite, 600, false);
        assert!(!n.set_down(s));
        let mut rng = RngStream::from_key(1, 1);
        let down = n.apply_disruption(|_| 10.0, DisruptionParams { beta_d: 1.0, hardened_factor: 0.5 }, &mut rng);
        assert!(down.is_empty());
        assert!(n.link(s).up);
    }

    #[test]
    fn zero_intensity_keeps_links_up() {
        let mut n = Network::new();
        for i in 0..10 {
            n.add_link(d(i), d(i + 1), LinkKind::Wireless, 40, false);
        }
        let mut rng = RngStream::from_key(9, 9);
        assert!(n.apply_disruption(|_| 0.0, DisruptionParams::default(), &mut rng).is_empty());
    }

    #[test]
    fn failed_nodes_do_not_relay() {
        let mut n = Network::new();
        n.add_link(d(0), d(1), LinkKind::Wireless, 10, false);
        n.add_link(d(1), d(2), LinkKind::Wireless, 10, false);
        n.add_link(d(0), d(2), LinkKind::Wireless, 100, false);
        assert_eq!(n.route(d(0), d(2)), RouteChoice::Multihop(vec![0, 1]));
        n.exclude_relay(d(1));
        assert_eq!(n.route(d(0), d(2)), RouteChoice::Multihop(vec![2]));
        assert_eq!(n.route(d(0), d(1)), RouteChoice::Multihop(vec![0]));
    }

    #[test]
    fn latency_tie_breaks_on_link_ids() {
        let mut n = Network::new();
        // two equal-cost routes 0 -> 3: via 1 uses links [0, 1], via 2 uses [2, 3]
        n.add_link(d(0), d(1), LinkKind::Wireless, 20, false);
        n.add_link(d(1), d(3), LinkKind::Wireless, 30, false);
        n.add_link(d(0), d(2), LinkKind::Wireless, 30, false);
        n.add_link(d(2), d(3), LinkKind::Wireless, 20, false);
        assert_eq!(n.route(d(0), d(3)), RouteChoice::Multihop(vec![0, 1]));
        assert_eq!(n.latency(&[0, 1]), 50);
    }
}
