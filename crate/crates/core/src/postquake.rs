//! After-quake procedures: survivor scanning, congestion detection, secure
//! areas, safe exit routes, rescue prioritization and population flow.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::engine::RngStream;
use crate::ids::{CellId, EdgeId, TimeMs};
use crate::netsim::lexicographic_dijkstra;
use crate::world::{collapse_probability, CollapseCurve, IntensityField, RoadGraph, SurvivorSite, ZoneMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanHit {
    pub cell: CellId,
    pub new: u32,
}

/// Each undetected survivor at an in-range site is found with probability
/// `q`. Sites are visited in the order given; only sites with new
/// detections are reported.
pub fn scan_for_survivors(
    in_range: &BTreeSet<CellId>,
    q: f64,
    sites: &mut [SurvivorSite],
    now: TimeMs,
    rng: &mut RngStream,
) -> Vec<ScanHit> {
    let mut hits = Vec::new();
    for site in sites.iter_mut().filter(|s| in_range.contains(&s.cell)) {
        let new = rng.binomial(site.undetected(), q);
        if new > 0 {
            site.detected += new;
            site.first_detected_ms.get_or_insert(now);
            hits.push(ScanHit { cell: site.cell, new });
        }
    }
    hits
}

/// Edges among `candidates` whose load strictly exceeds capacity.
pub fn detect_congestion(g: &RoadGraph, candidates: &[EdgeId], loads: &BTreeMap<EdgeId, u32>) -> Vec<EdgeId> {
    candidates.iter().copied().filter(|&e| loads.get(&e).copied().unwrap_or(0) > g.edge(e).capacity).collect()
}

/// Edges with at least one endpoint in `cells`, ascending.
pub fn edges_touching(g: &RoadGraph, cells: &BTreeSet<CellId>) -> Vec<EdgeId> {
    g.edges.iter().filter(|e| cells.contains(&e.u) || cells.contains(&e.v)).map(|e| e.id).collect()
}

pub fn designate_secure_areas(
    zm: &ZoneMap,
    field: &IntensityField,
    congested_cells: &BTreeSet<CellId>,
    i_safe: f64,
) -> BTreeSet<CellId> {
    zm.cells
        .iter()
        .filter(|c| {
            c.predefined_secure || (c.open_space && field.get(c.id) < i_safe && !congested_cells.contains(&c.id))
        })
        .map(|c| c.id)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteAdvisory {
    pub origin: CellId,
    pub dest: CellId,
    pub path: Vec<EdgeId>,
    pub length_m: u64,
    pub issued_ms: TimeMs,
}

/// Shortest path by total length from `src` to the nearest cell of
/// `targets`, avoiding blocked and `avoid` edges. Ties go to the
/// lexicographically smallest edge-id sequence. `None` means no route.
pub fn compute_safe_route(
    g: &RoadGraph,
    src: CellId,
    targets: &BTreeSet<CellId>,
    avoid: &BTreeSet<EdgeId>,
    issued_ms: TimeMs,
) -> Option<RouteAdvisory> {
    let (length_m, path) = lexicographic_dijkstra(
        src,
        |n| targets.contains(&n),
        |n| {
            g.incident(n)
                .iter()
                .map(|&e| g.edge(e))
                .filter(|e| !e.blocked && !avoid.contains(&e.id))
                .map(|e| (e.id, e.other(n), e.length_m))
                .collect()
        },
    )?;
    let mut dest = src;
    for &e in &path {
        dest = g.edge(e).other(dest);
    }
    Some(RouteAdvisory { origin: src, dest, path, length_m, issued_ms })
}

/// What the crisis center knows about one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteView {
    pub cell: CellId,
    pub detected: u32,
    pub rescued: u32,
    pub first_detected_ms: TimeMs,
    pub intensity: f64,
}

pub fn priority_score(site: &SiteView, curve: CollapseCurve) -> f64 {
    site.detected.saturating_sub(site.rescued) as f64 * collapse_probability(site.intensity, curve)
}

/// Rank sites with detections: score descending, then earlier first
/// detection, then lower cell id. Sites with nothing detected are dropped.
pub fn rank_sites(sites: &[SiteView], curve: CollapseCurve) -> Vec<CellId> {
    let mut eligible: Vec<(f64, TimeMs, CellId)> = sites
        .iter()
        .filter(|s| s.detected > 0)
        .map(|s| (priority_score(s, curve), s.first_detected_ms, s.cell))
        .collect();
    eligible.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    eligible.into_iter().map(|(_, _, c)| c).collect()
}

/// Fleeing agents grouped by position and remaining advisory route.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FleeingPopulation {
    groups: BTreeMap<(CellId, Vec<EdgeId>), u32>,
    pub sheltered: u64,
    pub initial: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FlowOutcome {
    pub loads: BTreeMap<EdgeId, u32>,
    pub sheltered_now: BTreeMap<CellId, u32>,
    pub moved: u64,
}

impl FleeingPopulation {
    pub fn new(agents: impl IntoIterator<Item = (CellId, u32)>) -> Self {
        let mut groups = BTreeMap::new();
        let mut initial = 0;
        for (cell, n) in agents {
            if n > 0 {
                *groups.entry((cell, Vec::new())).or_insert(0) += n;
                initial += n as u64;
            }
        }
        Self { groups, sheltered: 0, initial }
    }

    pub fn fleeing(&self) -> u64 {
        self.groups.values().map(|&n| n as u64).sum()
    }

    pub fn at(&self, cell: CellId) -> u32 {
        self.groups.iter().filter(|((c, _), _)| *c == cell).map(|(_, &n)| n).sum()
    }

    pub fn occupied_cells(&self) -> BTreeSet<CellId> {
        self.groups.keys().map(|(c, _)| *c).collect()
    }

    /// Everyone at `advisory.origin` adopts the advisory path.
    pub fn apply_advisory(&mut self, advisory: &RouteAdvisory) {
        let here: Vec<_> = self.groups.keys().filter(|(c, _)| *c == advisory.origin).cloned().collect();
        let mut n = 0;
        for k in here {
            n += self.groups.remove(&k).unwrap_or(0);
        }
        if n > 0 {
            *self.groups.entry((advisory.origin, advisory.path.clone())).or_insert(0) += n;
        }
    }

    fn shelter(&mut self, secure: &BTreeSet<CellId>, out: &mut FlowOutcome) {
        let arrived: Vec<_> = self.groups.keys().filter(|(c, _)| secure.contains(c)).cloned().collect();
        for k in arrived {
            let n = self.groups.remove(&k).unwrap_or(0);
            self.sheltered += n as u64;
            *out.sheltered_now.entry(k.0).or_insert(0) += n;
        }
    }
}

/// Advance every agent by one edge. Agents follow their advisory path while
/// its next edge is usable; otherwise they step along the greedy shortest
/// route to the nearest secure cell over unblocked edges. Agents with no
/// route stay put.
pub fn population_flow_step(pop: &mut FleeingPopulation, g: &RoadGraph, secure: &BTreeSet<CellId>) -> FlowOutcome {
    let mut out = FlowOutcome::default();
    pop.shelter(secure, &mut out);
    let mut greedy_cache: BTreeMap<CellId, Option<EdgeId>> = BTreeMap::new();
    let mut next = BTreeMap::new();
    for ((cell, route), n) in std::mem::take(&mut pop.groups) {
        let advised = route
            .first()
            .map(|&e| g.edge(e))
            .filter(|e| !e.blocked && e.touches(cell))
            .map(|e| (e.id, route[1..].to_vec()));
        let step = advised.or_else(|| {
            let first = *greedy_cache.entry(cell).or_insert_with(|| {
                compute_safe_route(g, cell, secure, &BTreeSet::new(), 0).and_then(|r| r.path.first().copied())
            });
            first.map(|e| (e, Vec::new()))
        });
        match step {
            Some((edge, rest)) => {
                *out.loads.entry(edge).or_insert(0) += n;
                out.moved += n as u64;
                *next.entry((g.edge(edge).other(cell), rest)).or_insert(0) += n;
            }
            None => *next.entry((cell, Vec::new())).or_insert(0) += n,
        }
    }
    pop.groups = next;
    pop.shelter(secure, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: u32) -> RoadGraph {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 100, 10)).collect();
        RoadGraph::new(n, &edges)
    }

    #[test]
    fn certain_detection_finds_everyone_in_range() {
        let mut sites = vec![
            SurvivorSite { cell: 1, total: 4, detected: 0, rescued: 0, first_detected_ms: None },
            SurvivorSite { cell: 9, total: 2, detected: 0, rescued: 0, first_detected_ms: None },
        ];
        let range: BTreeSet<_> = [0, 1, 2].into();
        let mut rng = RngStream::from_key(0, 0);
        let hits = scan_for_survivors(&range, 1.0, &mut sites, 700, &mut rng);
        assert_eq!(hits, vec![ScanHit { cell: 1, new: 4 }]);
        assert_eq!(sites[0].detected, 4);
        assert_eq!(sites[0].first_detected_ms, Some(700));
        assert_eq!(sites[1].detected, 0);
        assert!(scan_for_survivors(&range, 1.0, &mut sites, 800, &mut rng).is_empty());
        assert_eq!(sites[0].first_detected_ms, Some(700));
    }

    #[test]
    fn congestion_is_strict() {
        let g = line(3);
        let mut loads = BTreeMap::new();
        loads.insert(0, 10);
        loads.insert(1, 11);
        assert_eq!(detect_congestion(&g, &[0, 1], &loads), vec![1]);
    }

    #[test]
    fn congestion_hand_snapshot() {
        // six edges, capacities 5,5,0,3,8,2 ; loads 5,6,1,3,9,-
        let g = RoadGraph::new(
            5,
            &[(0, 1, 10, 5), (1, 2, 10, 5), (2, 3, 10, 0), (3, 4, 10, 3), (0, 4, 10, 8), (1, 3, 10, 2)],
        );
        let loads: BTreeMap<_, _> = [(0, 5), (1, 6), (2, 1), (3, 3), (4, 9)].into();
        assert_eq!(detect_congestion(&g, &[0, 1, 2, 3, 4, 5], &loads), vec![1, 2, 4]);
    }

    #[test]
    fn safe_route_basics() {
        let mut g = line(4);
        let secure: BTreeSet<_> = [3].into();
        let r = compute_safe_route(&g, 0, &secure, &BTreeSet::new(), 5).unwrap();
        assert_eq!(r.path, vec![0, 1, 2]);
        assert_eq!((r.dest, r.length_m, r.issued_ms), (3, 300, 5));
        g.edges[0].blocked = true;
        assert!(compute_safe_route(&g, 0, &secure, &BTreeSet::new(), 5).is_none());
        let avoid: BTreeSet<_> = [1].into();
        assert!(compute_safe_route(&g, 1, &secure, &avoid, 5).is_none());
        let here = compute_safe_route(&g, 3, &secure, &BTreeSet::new(), 5).unwrap();
        assert!(here.path.is_empty());
    }

    #[test]
    fn ranking_tie_breaks() {
        let c = CollapseCurve::default();
        let site =
            |cell, detected, first| SiteView { cell, detected, rescued: 0, first_detected_ms: first, intensity: 5.0 };
        let sites = vec![site(4, 2, 20_000), site(7, 2, 10_000), site(1, 0, 0), site(2, 2, 10_000)];
        assert_eq!(rank_sites(&sites, c), vec![2, 7, 4]);
    }

    #[test]
    fn no_quake_no_flow() {
        let g = line(3);
        let mut pop = FleeingPopulation::new(Vec::new());
        let out = population_flow_step(&mut pop, &g, &[2].into());
        assert!(out.loads.is_empty());
        assert_eq!(pop.fleeing(), 0);
    }

    #[test]
    fn five_cell_line_shelters_within_diameter() {
        let g = line(5);
        let secure: BTreeSet<_> = [4].into();
        let mut pop = FleeingPopulation::new([(0, 3), (1, 2), (2, 5), (3, 1)]);
        for tick in 1..=4 {
            population_flow_step(&mut pop, &g, &secure);
            assert_eq!(pop.fleeing() + pop.sheltered, 11);
            if tick == 4 {
                assert_eq!(pop.sheltered, 11);
            }
        }
    }

    #[test]
    fn advisory_route_is_followed() {
        // square 0-1-3, 0-2-3 ; greedy would take edge 0 (0-1), advisory says 0-2-3
        let g = RoadGraph::new(4, &[(0, 1, 100, 9), (1, 3, 100, 9), (0, 2, 100, 9), (2, 3, 100, 9)]);
        let secure: BTreeSet<_> = [3].into();
        let mut pop = FleeingPopulation::new([(0, 4)]);
        pop.apply_advisory(&RouteAdvisory { origin: 0, dest: 3, path: vec![2, 3], length_m: 200, issued_ms: 0 });
        let out = population_flow_step(&mut pop, &g, &secure);
        assert_eq!(out.loads, [(2, 4)].into());
        let out = population_flow_step(&mut pop, &g, &secure);
        assert_eq!(out.loads, [(3, 4)].into());
        assert_eq!(pop.sheltered, 4);
    }
}
