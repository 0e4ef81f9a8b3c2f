//! Synthetic city: grid cells zoned by fault strength, the quake intensity
//! field, trapped-survivor seeding and the road network.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::RngStream;
use crate::ids::{CellId, EdgeId, TimeMs, ZoneId};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WorldError {
    #[error("fault strength {0} outside [0, 1]")]
    FaultStrength(f64),
    #[error("attenuation length must be positive, got {0}")]
    Attenuation(f64),
    #[error("{what} {value} outside [0, 1]")]
    Ratio { what: &'static str, value: f64 },
    #[error("magnitude {0} outside [0, 10]")]
    Magnitude(f64),
    #[error("cell {0} does not exist")]
    NoSuchCell(CellId),
    #[error("cell {cell} belongs to {count} zones (must be exactly one)")]
    ZonePartition { cell: CellId, count: usize },
    #[error("station {station} references nonexistent cell {cell}")]
    StationCell { station: u32, cell: CellId },
    #[error("grid data has {got} entries, expected {expected}")]
    GridShape { got: usize, expected: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskLevel {
    Low,
    Medium,
    High,
}

impl RiskLevel {
    pub fn letter(self) -> char {
        match self {
            RiskLevel::High => 'H',
            RiskLevel::Medium => 'M',
            RiskLevel::Low => 'L',
        }
    }
}

/// Inclusive lower bounds of the High and Medium classes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskThresholds {
    pub high: f64,
    pub medium: f64,
}

impl Default for RiskThresholds {
    fn default() -> Self {
        Self { high: 0.7, medium: 0.3 }
    }
}

pub fn classify_risk(fault_strength: f64, th: RiskThresholds) -> Result<RiskLevel, WorldError> {
    if !(0.0..=1.0).contains(&fault_strength) {
        return Err(WorldError::FaultStrength(fault_strength));
    }
    Ok(if fault_strength >= th.high {
        RiskLevel::High
    } else if fault_strength >= th.medium {
        RiskLevel::Medium
    } else {
        RiskLevel::Low
    })
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cell {
    pub id: CellId,
    pub x: u32,
    pub y: u32,
    pub fault_strength: f64,
    pub population: u32,
    pub open_space: bool,
    pub risk: RiskLevel,
    pub predefined_secure: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Zone {
    pub id: ZoneId,
    pub cells: Vec<CellId>,
    /// Highest risk class among member cells.
    pub risk: RiskLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Station {
    pub id: u32,
    pub cell: CellId,
}

/// Raw inputs for [`ZoneMap::build`]; grids are row-major (`y * width + x`).
#[derive(Debug, Clone)]
pub struct ZoneMapSpec {
    pub width: u32,
    pub height: u32,
    pub cell_size_m: f64,
    pub fault: Vec<f64>,
    pub population: Vec<u32>,
    pub open_space: Vec<CellId>,
    pub predefined_secure: Vec<CellId>,
    pub zones: Vec<Vec<CellId>>,
    pub stations: Vec<Station>,
    pub thresholds: RiskThresholds,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZoneMap {
    pub width: u32,
    pub height: u32,
    pub cell_size_m: f64,
    pub cells: Vec<Cell>,
    pub zones: Vec<Zone>,
    pub stations: Vec<Station>,
    zone_of: Vec<ZoneId>,
}

impl ZoneMap {
    pub fn build(spec: &ZoneMapSpec) -> Result<Self, WorldError> {
        let n = (spec.width * spec.height) as usize;
        if spec.fault.len() != n {
            return Err(WorldError::GridShape { got: spec.fault.len(), expected: n });
        }
        if spec.population.len() != n {
            return Err(WorldError::GridShape { got: spec.population.len(), expected: n });
        }
        let check = |c: CellId| if (c as usize) < n { Ok(c) } else { Err(WorldError::NoSuchCell(c)) };
        let open: BTreeSet<CellId> = spec.open_space.iter().map(|&c| check(c)).collect::<Result<_, _>>()?;
        let secure: BTreeSet<CellId> = spec.predefined_secure.iter().map(|&c| check(c)).collect::<Result<_, _>>()?;

        let mut cells = Vec::with_capacity(n);
        for id in 0..n as u32 {
            let fs = spec.fault[id as usize];
            cells.push(Cell {
                id,
                x: id % spec.width,
                y: id / spec.width,
                fault_strength: fs,
                population: spec.population[id as usize],
                open_space: open.contains(&id),
                risk: classify_risk(fs, spec.thresholds)?,
                predefined_secure: secure.contains(&id),
            });
        }

        let mut membership = vec![Vec::new(); n];
        for (z, members) in spec.zones.iter().enumerate() {
            for &c in members {
                check(c)?;
                membership[c as usize].push(z as ZoneId);
            }
        }
        let mut zone_of = Vec::with_capacity(n);
        for (c, zs) in membership.iter().enumerate() {
            if zs.len() != 1 {
                return Err(WorldError::ZonePartition { cell: c as CellId, count: zs.len() });
            }
            zone_of.push(zs[0]);
        }
        let zones = spec
            .zones
            .iter()
            .enumerate()
            .map(|(z, members)| {
                let mut m = members.clone();
                m.sort_unstable();
                let risk = m.iter().map(|&c| cells[c as usize].risk).max().unwrap_or(RiskLevel::Low);
                Zone { id: z as ZoneId, cells: m, risk }
            })
            .collect();
        for s in &spec.stations {
            if s.cell as usize >= n {
                return Err(WorldError::StationCell { station: s.id, cell: s.cell });
            }
        }
        Ok(Self {
            width: spec.width,
            height: spec.height,
            cell_size_m: spec.cell_size_m,
            cells,
            zones,
            stations: spec.stations.clone(),
            zone_of,
        })
    }

    pub fn cell(&self, id: CellId) -> &Cell {
        &self.cells[id as usize]
    }

    pub fn zone_of(&self, cell: CellId) -> ZoneId {
        self.zone_of[cell as usize]
    }

    pub fn cell_at(&self, x: u32, y: u32) -> CellId {
        y * self.width + x
    }

    /// Cell center in meters. Cell `(x, y)` is centered on grid coordinate `(x, y)`.
    pub fn center(&self, cell: CellId) -> Point {
        let c = self.cell(cell);
        Point::new(c.x as f64 * self.cell_size_m, c.y as f64 * self.cell_size_m)
    }

    pub fn zone_centroid(&self, zone: ZoneId) -> Point {
        let z = &self.zones[zone as usize];
        let k = z.cells.len() as f64;
        let (sx, sy) = z.cells.iter().fold((0.0, 0.0), |(sx, sy), &c| {
            let p = self.center(c);
            (sx + p.x, sy + p.y)
        });
        Point::new(sx / k, sy / k)
    }

    /// Member cell closest to the zone centroid (ties to the lower id).
    pub fn zone_anchor(&self, zone: ZoneId) -> CellId {
        let centroid = self.zone_centroid(zone);
        let z = &self.zones[zone as usize];
        let mut best = z.cells[0];
        let mut best_d = f64::INFINITY;
        for &c in &z.cells {
            let d = self.center(c).dist(centroid);
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        best
    }

    /// Cells whose centers lie within `radius_cells` grid units of `center`.
    pub fn cells_within(&self, center: CellId, radius_cells: f64) -> Vec<CellId> {
        let o = self.cell(center);
        self.cells
            .iter()
            .filter(|c| {
                let dx = c.x as f64 - o.x as f64;
                let dy = c.y as f64 - o.y as f64;
                (dx * dx + dy * dy).sqrt() <= radius_cells
            })
            .map(|c| c.id)
            .collect()
    }

    pub fn station(&self, id: u32) -> Option<&Station> {
        self.stations.iter().find(|s| s.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarthquakeEvent {
    /// Epicenter in grid coordinates.
    pub epicenter: (f64, f64),
    pub magnitude: f64,
    pub t_ms: TimeMs,
}

impl EarthquakeEvent {
    pub fn validate(&self) -> Result<(), WorldError> {
        if !(0.0..=10.0).contains(&self.magnitude) {
            return Err(WorldError::Magnitude(self.magnitude));
        }
        Ok(())
    }

    pub fn epicenter_m(&self, cell_size_m: f64) -> Point {
        Point::new(self.epicenter.0 * cell_size_m, self.epicenter.1 * cell_size_m)
    }
}

/// Exponential attenuation `M * exp(-d / lambda)` with `d` in meters.
pub fn intensity_at_distance(magnitude: f64, distance_m: f64, lambda_m: f64) -> Result<f64, WorldError> {
    if lambda_m <= 0.0 || lambda_m.is_nan() {
        return Err(WorldError::Attenuation(lambda_m));
    }
    Ok(magnitude * (-distance_m / lambda_m).exp())
}

pub fn intensity_at(q: &EarthquakeEvent, zm: &ZoneMap, cell: CellId, lambda_m: f64) -> Result<f64, WorldError> {
    let d = q.epicenter_m(zm.cell_size_m).dist(zm.center(cell));
    intensity_at_distance(q.magnitude, d, lambda_m)
}

/// Per-cell intensity, indexed by cell id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityField {
    values: Vec<f64>,
}

impl IntensityField {
    pub fn compute(q: &EarthquakeEvent, zm: &ZoneMap, lambda_m: f64) -> Result<Self, WorldError> {
        let values =
            (0..zm.cells.len() as CellId).map(|c| intensity_at(q, zm, c, lambda_m)).collect::<Result<_, _>>()?;
        Ok(Self { values })
    }

    pub fn uniform(n_cells: usize, value: f64) -> Self {
        Self { values: vec![value; n_cells] }
    }

    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn get(&self, cell: CellId) -> f64 {
        self.values[cell as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Pointwise maximum; used when an aftershock overlaps the main shock.
    pub fn max_with(&self, other: &IntensityField) -> IntensityField {
        IntensityField { values: self.values.iter().zip(&other.values).map(|(a, b)| a.max(*b)).collect() }
    }

    pub fn zone_max(&self, zm: &ZoneMap, zone: ZoneId) -> f64 {
        zm.zones[zone as usize].cells.iter().map(|&c| self.get(c)).fold(0.0, f64::max)
    }
}

/// Logistic damage curve parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseCurve {
    pub midpoint: f64,
    pub scale: f64,
}

impl Default for CollapseCurve {
    fn default() -> Self {
        Self { midpoint: 5.0, scale: 0.8 }
    }
}

pub fn collapse_probability(intensity: f64, curve: CollapseCurve) -> f64 {
    1.0 / (1.0 + (-(intensity - curve.midpoint) / curve.scale).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivorSite {
    pub cell: CellId,
    pub total: u32,
    pub detected: u32,
    pub rescued: u32,
    pub first_detected_ms: Option<TimeMs>,
}

impl SurvivorSite {
    pub fn undetected(&self) -> u32 {
        self.total - self.detected
    }

    pub fn awaiting_rescue(&self) -> u32 {
        self.detected - self.rescued
    }
}

fn check_ratio(what: &'static str, value: f64) -> Result<(), WorldError> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(WorldError::Ratio { what, value })
    }
}

/// Draw trapped survivors per cell; cells with none are omitted.
pub fn seed_survivors(
    zm: &ZoneMap,
    field: &IntensityField,
    trap_rate: f64,
    curve: CollapseCurve,
    rng: &mut RngStream,
) -> Result<Vec<SurvivorSite>, WorldError> {
    check_ratio("trap_rate", trap_rate)?;
    let mut sites = Vec::new();
    for cell in &zm.cells {
        let p = collapse_probability(field.get(cell.id), curve) * trap_rate;
        let total = rng.binomial(cell.population, p);
        if total > 0 {
            sites.push(SurvivorSite { cell: cell.id, total, detected: 0, rescued: 0, first_detected_ms: None });
        }
    }
    Ok(sites)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoadEdge {
    pub id: EdgeId,
    pub u: CellId,
    pub v: CellId,
    pub length_m: u64,
    pub capacity: u32,
    pub blocked: bool,
}

impl RoadEdge {
    pub fn other(&self, from: CellId) -> CellId {
        if from == self.u {
            self.v
        } else {
            self.u
        }
    }

    pub fn touches(&self, c: CellId) -> bool {
        self.u == c || self.v == c
    }
}

/// Undirected road network over cell ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoadGraph {
    pub n_nodes: u32,
    pub edges: Vec<RoadEdge>,
    #[serde(skip)]
    adj: Vec<Vec<EdgeId>>,
}

impl RoadGraph {
    /// Edges are `(u, v, length_m, capacity)`; ids follow input order.
    pub fn new(n_nodes: u32, edges: &[(CellId, CellId, u64, u32)]) -> Self {
        let edges: Vec<RoadEdge> = edges
            .iter()
            .enumerate()
            .map(|(i, &(u, v, length_m, capacity))| {
                assert!(u < n_nodes && v < n_nodes, "road endpoint out of range");
                assert!(length_m > 0, "road length must be positive");
                RoadEdge { id: i as EdgeId, u, v, length_m, capacity, blocked: false }
            })
            .collect();
        let mut adj = vec![Vec::new(); n_nodes as usize];
        for e in &edges {
            adj[e.u as usize].push(e.id);
            if e.v != e.u {
                adj[e.v as usize].push(e.id);
            }
        }
        Self { n_nodes, edges, adj }
    }

    /// 4-connected grid; for each cell in id order, the east edge then the south edge.
    pub fn grid4(width: u32, height: u32, length_m: u64, capacity: u32) -> Self {
        let mut edges = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let c = y * width + x;
                if x + 1 < width {
                    edges.push((c, c + 1, length_m, capacity));
                }
                if y + 1 < height {
                    edges.push((c, c + width, length_m, capacity));
                }
            }
        }
        Self::new(width * height, &edges)
    }

    pub fn incident(&self, node: CellId) -> &[EdgeId] {
        &self.adj[node as usize]
    }

    pub fn edge(&self, id: EdgeId) -> &RoadEdge {
        &self.edges[id as usize]
    }

    pub fn blocked_ids(&self) -> Vec<EdgeId> {
        self.edges.iter().filter(|e| e.blocked).map(|e| e.id).collect()
    }
}

/// Block each edge independently with probability
/// `collapse(max(I(u), I(v))) * block_factor`. Every edge consumes one draw;
/// edges already blocked stay blocked. Returns the newly blocked edge ids.
pub fn block_roads(
    g: &mut RoadGraph,
    field: &IntensityField,
    block_factor: f64,
    curve: CollapseCurve,
    rng: &mut RngStream,
) -> Result<Vec<EdgeId>, WorldError> {
    check_ratio("block_factor", block_factor)?;
    let mut newly = Vec::new();
    for e in &mut g.edges {
        let i = field.get(e.u).max(field.get(e.v));
        let hit = rng.chance(collapse_probability(i, curve) * block_factor);
        if hit && !e.blocked {
            e.blocked = true;
            newly.push(e.id);
        }
    }
    Ok(newly)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_map(w: u32, h: u32, pop: u32) -> ZoneMap {
        let n = (w * h) as usize;
        ZoneMap::build(&ZoneMapSpec {
            width: w,
            height: h,
            cell_size_m: 500.0,
            fault: vec![0.5; n],
            population: vec![pop; n],
            open_space: vec![],
            predefined_secure: vec![],
            zones: vec![(0..n as u32).collect()],
            stations: vec![Station { id: 0, cell: 0 }],
            thresholds: RiskThresholds::default(),
        })
        .unwrap()
    }

    #[test]
    fn risk_classes_at_defaults() {
        let th = RiskThresholds::default();
        assert_eq!(classify_risk(0.9, th).unwrap(), RiskLevel::High);
        assert_eq!(classify_risk(0.7, th).unwrap(), RiskLevel::High);
        assert_eq!(classify_risk(0.3, th).unwrap(), RiskLevel::Medium);
        assert_eq!(classify_risk(0.0, th).unwrap(), RiskLevel::Low);
        assert!(classify_risk(1.1, th).is_err());
        assert!(classify_risk(-0.1, th).is_err());
        assert!(RiskLevel::High > RiskLevel::Medium && RiskLevel::Medium > RiskLevel::Low);
    }

    #[test]
    fn intensity_examples() {
        assert_eq!(intensity_at_distance(7.0, 0.0, 1000.0).unwrap(), 7.0);
        // 7 / e, evaluated independently: 2.575156...
        let v = intensity_at_distance(7.0, 1000.0, 1000.0).unwrap();
        assert!((v - 2.575_156_088_200_096).abs() < 1e-12);
        assert_eq!(intensity_at_distance(0.0, 1234.0, 1000.0).unwrap(), 0.0);
        assert!(intensity_at_distance(7.0, 1.0, 0.0).is_err());
        assert!(intensity_at_distance(7.0, 1.0, -3.0).is_err());
    }

    #[test]
    fn collapse_examples() {
        let c = CollapseCurve::default();
        assert!((collapse_probability(5.0, c) - 0.5).abs() < 1e-15);
        // 1 / (1 + e^2.5) = 0.0758581800212435...
        assert!((collapse_probability(3.0, c) - 0.075_858_180_021_243_5).abs() < 1e-12);
        // I = 0: 1 / (1 + e^6.25) = 0.00192673...
        assert!((collapse_probability(0.0, c) - 0.001_926_734_4).abs() < 1e-9);
        assert!(collapse_probability(2.0, c) < collapse_probability(2.1, c));
    }

    #[test]
    fn field_peaks_at_epicenter_and_is_radial() {
        let zm = flat_map(6, 6, 0);
        let q = EarthquakeEvent { epicenter: (2.0, 3.0), magnitude: 6.0, t_ms: 0 };
        let f = IntensityField::compute(&q, &zm, 900.0).unwrap();
        assert_eq!(f.get(zm.cell_at(2, 3)), 6.0);
        let epi = q.epicenter_m(zm.cell_size_m);
        for a in 0..36 {
            for b in 0..36 {
                if zm.center(a).dist(epi) <= zm.center(b).dist(epi) {
                    assert!(f.get(a) >= f.get(b));
                }
            }
        }
    }

    #[test]
    fn seeding_degenerate_cases() {
        let mut rng = RngStream::from_key(1, 1);
        let empty = flat_map(3, 3, 0);
        let f = IntensityField::uniform(9, 9.0);
        assert!(seed_survivors(&empty, &f, 1.0, CollapseCurve::default(), &mut rng).unwrap().is_empty());
        let populated = flat_map(3, 3, 10);
        let zero = IntensityField::uniform(9, 0.0);
        assert!(seed_survivors(&populated, &zero, 0.0, CollapseCurve::default(), &mut rng).unwrap().is_empty());
        assert!(seed_survivors(&populated, &zero, 1.5, CollapseCurve::default(), &mut rng).is_err());
    }

    #[test]
    fn zone_partition_is_enforced() {
        let mut spec = ZoneMapSpec {
            width: 2,
            height: 1,
            cell_size_m: 100.0,
            fault: vec![0.1, 0.9],
            population: vec![0, 0],
            open_space: vec![],
            predefined_secure: vec![],
            zones: vec![vec![0], vec![0, 1]],
            stations: vec![],
            thresholds: RiskThresholds::default(),
        };
        assert_eq!(ZoneMap::build(&spec).unwrap_err(), WorldError::ZonePartition { cell: 0, count: 2 });
        spec.zones = vec![vec![0], vec![1]];
        let zm = ZoneMap::build(&spec).unwrap();
        assert_eq!(zm.zones[1].risk, RiskLevel::High);
        spec.stations = vec![Station { id: 4, cell: 9 }];
        assert_eq!(ZoneMap::build(&spec).unwrap_err(), WorldError::StationCell { station: 4, cell: 9 });
    }

    #[test]
    fn no_blocking_at_zero_factor_and_idempotent() {
        let mut g = RoadGraph::grid4(4, 4, 500, 10);
        let f = IntensityField::uniform(16, 10.0);
        let mut rng = RngStream::from_key(3, 3);
        assert!(block_roads(&mut g, &f, 0.0, CollapseCurve::default(), &mut rng).unwrap().is_empty());
        let first = block_roads(&mut g, &f, 1.0, CollapseCurve::default(), &mut rng).unwrap();
        assert!(!first.is_empty());
        let again = block_roads(&mut g, &f, 1.0, CollapseCurve::default(), &mut rng).unwrap();
        assert!(again.iter().all(|e| !first.contains(e)));
        assert!(first.iter().all(|&e| g.edge(e).blocked));
    }

    #[test]
    fn grid4_shape() {
        let g = RoadGraph::grid4(3, 2, 500, 5);
        assert_eq!(g.edges.len(), 7);
        assert_eq!((g.edges[0].u, g.edges[0].v), (0, 1));
        assert_eq!((g.edges[1].u, g.edges[1].v), (0, 3));
        assert_eq!(g.incident(4).len(), 3);
    }
}
