//! Brute-force oracles, input generators and trace helpers shared by the
//! integration tests and the acceptance target.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use rescuenet::engine::trace::TraceRecord;
use rescuenet::engine::RngStream;
use rescuenet::ids::{ActorId, CellId, EdgeId, LinkId, TimeMs};
use rescuenet::netsim::{LinkKind, Network};
use rescuenet::scenario::Scenario;
use rescuenet::world::{Point, RoadGraph};

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn scenario_path(name: &str) -> PathBuf {
    workspace_root().join("scenarios").join(name)
}

pub fn s1() -> Scenario {
    Scenario::load(&scenario_path("s1.toml")).expect("s1 scenario loads")
}

pub fn records(trace: &str) -> Vec<TraceRecord> {
    trace.lines().map(|l| TraceRecord::parse_line(l).expect("trace line parses")).collect()
}

pub fn of_kind<'a>(recs: &'a [TraceRecord], kind: &str) -> Vec<&'a TraceRecord> {
    recs.iter().filter(|r| r.kind == kind).collect()
}

pub fn str_field<'a>(r: &'a TraceRecord, key: &str) -> &'a str {
    r.data.get(key).and_then(|v| v.as_str()).unwrap_or("")
}

pub fn u64_field(r: &TraceRecord, key: &str) -> Option<u64> {
    r.data.get(key).and_then(|v| v.as_u64())
}

// ---------------------------------------------------------------- routing

/// Every simple path from `src`, as (cost, edge ids, end node), over
/// `edges` given as (id, u, v, weight).
fn simple_paths(
    src: u32,
    edges: &[(u32, u32, u32, u64)],
    allow_through: &dyn Fn(u32) -> bool,
) -> Vec<(u64, Vec<u32>, u32)> {
    fn walk(
        at: u32,
        cost: u64,
        path: &mut Vec<u32>,
        seen: &mut BTreeSet<u32>,
        edges: &[(u32, u32, u32, u64)],
        allow_through: &dyn Fn(u32) -> bool,
        out: &mut Vec<(u64, Vec<u32>, u32)>,
    ) {
        out.push((cost, path.clone(), at));
        if !path.is_empty() && !allow_through(at) {
            return;
        }
        for &(id, u, v, w) in edges {
            let next = if u == at {
                v
            } else if v == at {
                u
            } else {
                continue;
            };
            if seen.contains(&next) {
                continue;
            }
            seen.insert(next);
            path.push(id);
            walk(next, cost + w, path, seen, edges, allow_through, out);
            path.pop();
            seen.remove(&next);
        }
    }
    let mut out = Vec::new();
    let mut seen = BTreeSet::from([src]);
    walk(src, 0, &mut Vec::new(), &mut seen, edges, allow_through, &mut out);
    out
}

fn best(candidates: impl Iterator<Item = (u64, Vec<u32>)>) -> Option<(u64, Vec<u32>)> {
    candidates.min()
}

/// Exhaustive shortest safe route: minimum (length, edge-id sequence) over
/// all simple paths to any target using unblocked, unavoided edges.
pub fn brute_safe_route(
    g: &RoadGraph,
    src: CellId,
    targets: &BTreeSet<CellId>,
    avoid: &BTreeSet<EdgeId>,
) -> Option<(u64, Vec<EdgeId>)> {
    let usable: Vec<(u32, u32, u32, u64)> =
        g.edges.iter().filter(|e| !e.blocked && !avoid.contains(&e.id)).map(|e| (e.id, e.u, e.v, e.length_m)).collect();
    best(
        simple_paths(src, &usable, &|_| true)
            .into_iter()
            .filter(|(_, _, end)| targets.contains(end))
            .map(|(c, p, _)| (c, p)),
    )
}

#[derive(Debug, Clone)]
pub struct RoadCase {
    pub graph: RoadGraph,
    pub src: CellId,
    pub targets: BTreeSet<CellId>,
    pub avoid: BTreeSet<EdgeId>,
}

/// Random road graph with at most 10 nodes. Small integer lengths make
/// equal-length alternatives common so the tie-break is exercised.
pub fn random_road_case(rng: &mut RngStream) -> RoadCase {
    let n = rng.below(2, 11) as u32;
    let m = rng.below(1, 2 * n as u64 + 1) as usize;
    let mut edges = Vec::new();
    for _ in 0..m {
        let u = rng.below(0, n as u64) as u32;
        let mut v = rng.below(0, n as u64) as u32;
        if v == u {
            v = (u + 1) % n;
        }
        edges.push((u, v, rng.below(1, 4), 10));
    }
    let mut graph = RoadGraph::new(n, &edges);
    for e in &mut graph.edges {
        e.blocked = rng.chance(0.15);
    }
    let avoid = (0..edges.len() as u32).filter(|_| rng.chance(0.1)).collect();
    let targets = (0..n).filter(|_| rng.chance(0.25)).collect();
    RoadCase { graph, src: rng.below(0, n as u64) as u32, targets, avoid }
}

#[derive(Debug, Clone)]
pub struct NetLink {
    pub a: ActorId,
    pub b: ActorId,
    pub kind: LinkKind,
    pub latency: TimeMs,
    pub up: bool,
}

#[derive(Debug, Clone)]
pub struct NetCase {
    pub nodes: Vec<ActorId>,
    /// In link-id order, satellite uplinks included.
    pub links: Vec<NetLink>,
    pub excluded: BTreeSet<ActorId>,
}

impl NetCase {
    pub fn build(&self) -> Network {
        let mut net = Network::new();
        for l in &self.links {
            let id = net.add_link(l.a, l.b, l.kind, l.latency, false);
            if !l.up {
                net.set_down(id);
            }
        }
        for &x in &self.excluded {
            net.exclude_relay(x);
        }
        net
    }
}

/// Random topology of at most 10 actors (drones can reach the satellite,
/// sensors cannot) with a mix of point-to-point and wireless links.
pub fn random_net_case(rng: &mut RngStream) -> NetCase {
    let n = rng.below(2, 11) as u32;
    let nodes: Vec<ActorId> =
        (0..n).map(|i| if rng.chance(0.7) { ActorId::drone(i) } else { ActorId::sensor(i) }).collect();
    let mut links = Vec::new();
    for _ in 0..rng.below(1, 2 * n as u64 + 1) {
        let i = rng.below(0, n as u64) as usize;
        let mut j = rng.below(0, n as u64) as usize;
        if i == j {
            j = (i + 1) % n as usize;
        }
        let kind = if rng.chance(0.2) { LinkKind::PointToPoint } else { LinkKind::Wireless };
        links.push(NetLink { a: nodes[i], b: nodes[j], kind, latency: rng.below(1, 4), up: rng.chance(0.8) });
    }
    for &x in &nodes {
        if x.class.satellite_capable() {
            links.push(NetLink { a: x, b: ActorId::SATELLITE, kind: LinkKind::Satellite, latency: 600, up: true });
        }
    }
    let excluded = nodes.iter().copied().filter(|_| rng.chance(0.15)).collect();
    NetCase { nodes, links, excluded }
}

/// Expected route as (tier label, link ids) following the preference
/// order: up point-to-point link, cheapest wireless path that relays only
/// through non-excluded actors, satellite relay, nothing.
pub fn brute_net_route(case: &NetCase, src: ActorId, dst: ActorId) -> (&'static str, Vec<LinkId>) {
    if let Some(id) = case.links.iter().position(|l| {
        l.kind == LinkKind::PointToPoint && l.up && ((l.a == src && l.b == dst) || (l.a == dst && l.b == src))
    }) {
        return ("direct", vec![id as LinkId]);
    }
    let index: BTreeMap<ActorId, u32> = case.nodes.iter().enumerate().map(|(i, &a)| (a, i as u32)).collect();
    let wireless: Vec<(u32, u32, u32, u64)> = case
        .links
        .iter()
        .enumerate()
        .filter(|(_, l)| l.kind == LinkKind::Wireless && l.up)
        .map(|(id, l)| (id as u32, index[&l.a], index[&l.b], l.latency))
        .collect();
    let (s, d) = (index[&src], index[&dst]);
    let relay_ok = |n: u32| n == s || (n != d && !case.excluded.contains(&case.nodes[n as usize]));
    let found = best(
        simple_paths(s, &wireless, &relay_ok)
            .into_iter()
            .filter(|(_, p, end)| *end == d && !p.is_empty())
            .map(|(c, p, _)| (c, p)),
    );
    if let Some((_, p)) = found {
        return ("multihop", p);
    }
    let uplink = |x: ActorId| {
        case.links.iter().position(|l| l.kind == LinkKind::Satellite && (l.a == x || l.b == x)).map(|i| i as LinkId)
    };
    if let (Some(a), Some(b)) = (uplink(src), uplink(dst)) {
        return ("satellite", vec![a, b]);
    }
    ("none", Vec::new())
}

// ------------------------------------------------------------- assignment

/// Nearest spare by Euclidean distance; among all spares at exactly the
/// minimum distance, the lowest index. `None` stands for helicopter beta.
pub fn brute_assign(centroid: Point, spares: &BTreeMap<ActorId, Point>) -> Option<ActorId> {
    let dists: Vec<(ActorId, f64)> = spares.iter().map(|(&id, &p)| (id, p.dist(centroid))).collect();
    let min = dists.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    dists.iter().filter(|d| d.1 == min).map(|d| d.0).min_by_key(|id| id.index)
}

pub fn random_fleet(rng: &mut RngStream) -> (Point, BTreeMap<ActorId, Point>) {
    let fleet = rng.below(0, 13) as u32;
    let grid = |rng: &mut RngStream| rng.below(0, 5) as f64 * 500.0;
    let mut spares = BTreeMap::new();
    for i in 0..fleet {
        if rng.chance(0.5) {
            spares.insert(ActorId::drone(i), Point::new(grid(rng), grid(rng)));
        }
    }
    (Point::new(grid(rng), grid(rng)), spares)
}

// ------------------------------------------------------------- statistics

/// Observed sample mean against its analytic expectation.
#[derive(Debug, Clone, Copy)]
pub struct Sweep {
    pub observed: f64,
    pub expected: f64,
    /// Standard error of the observed mean.
    pub sigma: f64,
}

impl Sweep {
    pub fn within(&self, k: f64) -> bool {
        (self.observed - self.expected).abs() <= k * self.sigma + 1e-12
    }
}

fn bernoulli_sweep(hits: u64, trials: u64, p: f64) -> Sweep {
    Sweep { observed: hits as f64 / trials as f64, expected: p, sigma: (p * (1.0 - p) / trials as f64).sqrt() }
}

/// Wireless link failure rate at several intensities, one fresh network per
/// seed. Returns one sweep per intensity.
pub fn link_down_sweep(seeds: u64, beta_d: f64, intensities: &[f64]) -> Vec<Sweep> {
    use rescuenet::engine::WorldStream;
    use rescuenet::netsim::DisruptionParams;
    const PER_LEVEL: u32 = 5;
    let mut down = vec![0u64; intensities.len()];
    for seed in 0..seeds {
        let mut net = Network::new();
        for k in 0..intensities.len() as u32 * PER_LEVEL {
            net.add_link(ActorId::drone(2 * k), ActorId::drone(2 * k + 1), LinkKind::Wireless, 40, false);
        }
        let level = |a: ActorId| intensities[(a.index / 2 / PER_LEVEL) as usize];
        let params = DisruptionParams { beta_d, hardened_factor: 0.5 };
        let mut rng = RngStream::world(seed, WorldStream::Links);
        for id in net.apply_disruption(level, params, &mut rng) {
            down[(id / PER_LEVEL) as usize] += 1;
        }
    }
    intensities
        .iter()
        .zip(down)
        .map(|(&i, d)| bernoulli_sweep(d, seeds * PER_LEVEL as u64, (beta_d * i / 10.0).min(1.0)))
        .collect()
}

fn logistic(i: f64, mid: f64, scale: f64) -> f64 {
    1.0 / (1.0 + (-(i - mid) / scale).exp())
}

/// Total survivors seeded over a fixed town, per seed, against the sum of
/// per-cell binomial means.
pub fn survivor_sweep(seeds: u64) -> Sweep {
    use rescuenet::world::{seed_survivors, CollapseCurve, IntensityField};
    let scenario = Scenario::from_toml_str(
        r#"
        [world]
        width = 3
        height = 2
        fault = [[0.9, 0.5, 0.1], [0.9, 0.5, 0.1]]
        population = [[120, 80, 40], [200, 10, 0]]
        zones = [{ rect = [0, 0, 2, 1] }]
        "#,
    )
    .expect("inline town parses");
    let zm = scenario.zone_map().expect("inline town builds");
    let intensity = vec![7.5, 5.0, 3.0, 6.2, 4.4, 9.0];
    let pops = [120u32, 80, 40, 200, 10, 0];
    let trap_rate = 0.1;
    let (mut mean, mut var) = (0.0, 0.0);
    for (&n, &i) in pops.iter().zip(&intensity) {
        let p = trap_rate * logistic(i, 5.0, 0.8);
        mean += n as f64 * p;
        var += n as f64 * p * (1.0 - p);
    }
    let field = IntensityField::from_values(intensity);
    let mut total = 0u64;
    for seed in 0..seeds {
        let mut rng = RngStream::from_key(seed, 0x5eed);
        let sites = seed_survivors(&zm, &field, trap_rate, CollapseCurve::default(), &mut rng).expect("valid inputs");
        total += sites.iter().map(|s| s.total as u64).sum::<u64>();
    }
    Sweep { observed: total as f64 / seeds as f64, expected: mean, sigma: (var / seeds as f64).sqrt() }
}

/// Scans needed to find each survivor at one site with detection
/// probability `q`, against the geometric mean `1/q`.
pub fn detection_sweep(seeds: u64, q: f64) -> Sweep {
    use rescuenet::postquake::scan_for_survivors;
    use rescuenet::world::SurvivorSite;
    const SURVIVORS: u32 = 20;
    let in_range = BTreeSet::from([0]);
    let (mut sum, mut count) = (0u64, 0u64);
    for seed in 0..seeds {
        let mut rng = RngStream::from_key(seed, 0xdec7);
        let mut sites =
            vec![SurvivorSite { cell: 0, total: SURVIVORS, detected: 0, rescued: 0, first_detected_ms: None }];
        let mut scan = 0u64;
        while sites[0].detected < SURVIVORS {
            scan += 1;
            for hit in scan_for_survivors(&in_range, q, &mut sites, scan, &mut rng) {
                sum += scan * hit.new as u64;
                count += hit.new as u64;
            }
        }
    }
    Sweep {
        observed: sum as f64 / count as f64,
        expected: 1.0 / q,
        sigma: ((1.0 - q).sqrt() / q) / (count as f64).sqrt(),
    }
}

// -------------------------------------------------------------- scenarios

pub fn run(s: Scenario, check: bool) -> Result<String, rescuenet::sim::SimError> {
    rescuenet::sim::run_scenario(s, None, check).map_err(|(e, _)| e)
}

pub fn with_kill(mut s: Scenario, drone: u32, t_ms: TimeMs) -> Scenario {
    s.faults.kills.push(rescuenet::scenario::KillSpec { drone, t_ms });
    s
}

/// Remove every spare drone. S1 lists spares after all coverage drones and
/// sensors only pair with coverage drones, so earlier indices are unchanged.
pub fn without_spares(mut s: Scenario) -> Scenario {
    use rescuenet::scenario::DroneRoleSpec;
    s.actors.drones.retain(|d| d.role != DroneRoleSpec::Spare);
    s
}

pub fn drone_index(s: &Scenario, role: rescuenet::scenario::DroneRoleSpec) -> Vec<u32> {
    s.actors.drones.iter().enumerate().filter(|(_, d)| d.role == role).map(|(i, _)| i as u32).collect()
}

/// Flight time a drone at `station` needs to reach `zone`, derived from
/// the grid geometry: cell `(x, y)` is centred at `(x, y) * cell_size`.
pub fn expected_eta_ms(s: &Scenario, station_cell: CellId, zone: u32) -> TimeMs {
    let zm = s.zone_map().expect("scenario builds");
    let w = s.world.width;
    let size = s.world.cell_size_m;
    let xy = |c: CellId| ((c % w) as f64 * size, (c / w) as f64 * size);
    let cells = &zm.zones[zone as usize].cells;
    let (sx, sy) = cells.iter().map(|&c| xy(c)).fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (cx, cy) = (sx / cells.len() as f64, sy / cells.len() as f64);
    let (px, py) = xy(station_cell);
    let d = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt();
    (d * 1000.0 / s.actors.protocol.drone_speed_mps).ceil() as TimeMs
}
