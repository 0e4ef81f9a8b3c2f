//! Scenario files: TOML documents with `run`, `world`, `actors`, `network`,
//! `quake` and `faults` sections. Every omitted field takes the default
//! listed in `docs/scenario-format.md`; the resolved scenario is echoed into
//! the trace header.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::actors::ProtocolParams;
use crate::ids::{CellId, TimeMs, ZoneId};
use crate::netsim::{DisruptionParams, LinkKind};
use crate::world::{
    CollapseCurve, EarthquakeEvent, RiskLevel, RiskThresholds, Station, WorldError, ZoneMap, ZoneMapSpec,
};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario [{invariant}]: {detail}")]
    Invalid { invariant: &'static str, detail: String },
}

fn invalid(invariant: &'static str, detail: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { invariant, detail: detail.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub t_end_ms: TimeMs,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { seed: 0, t_end_ms: 600_000 }
    }
}

/// A zone given as explicit cells, an inclusive rectangle `[x0, y0, x1, y1]`, or both.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZoneSpec {
    pub cells: Vec<CellId>,
    pub rect: Option<[u32; 4]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSpec {
    pub id: u32,
    pub cell: CellId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSection {
    pub width: u32,
    pub height: u32,
    pub cell_size_m: f64,
    /// Fault strength rows, top row first.
    pub fault: Vec<Vec<f64>>,
    /// Population rows; empty means nobody lives anywhere.
    pub population: Vec<Vec<u32>>,
    pub open_space: Vec<CellId>,
    pub secure: Vec<CellId>,
    pub zones: Vec<ZoneSpec>,
    pub stations: Vec<StationSpec>,
    pub high_threshold: f64,
    pub medium_threshold: f64,
    pub lambda_m: f64,
    pub collapse_mid: f64,
    pub collapse_scale: f64,
    pub trap_rate: f64,
    pub block_factor: f64,
    pub i_safe: f64,
    /// Road edge length; 0 means one cell side.
    pub road_length_m: u64,
    pub road_capacity: u32,
    pub flee_fraction: f64,
    pub flow_tick_ms: TimeMs,
}

impl Default for WorldSection {
    fn default() -> Self {
        let th = RiskThresholds::default();
        let curve = CollapseCurve::default();
        Self {
            width: 0,
            height: 0,
            cell_size_m: 500.0,
            fault: Vec::new(),
            population: Vec::new(),
            open_space: Vec::new(),
            secure: Vec::new(),
            zones: Vec::new(),
            stations: Vec::new(),
            high_threshold: th.high,
            medium_threshold: th.medium,
            lambda_m: 1000.0,
            collapse_mid: curve.midpoint,
            collapse_scale: curve.scale,
            trap_rate: 0.1,
            block_factor: 0.5,
            i_safe: 2.0,
            road_length_m: 0,
            road_capacity: 20,
            flee_fraction: 0.2,
            flow_tick_ms: 5000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DroneRoleSpec {
    Coverage,
    Spare,
    Nursing,
    Gateway,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DroneSpec {
    pub station: u32,
    pub role: DroneRoleSpec,
    #[serde(default)]
    pub zone: Option<ZoneId>,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub cell: CellId,
    #[serde(default)]
    pub edge: u32,
    /// Index into the drone list; required in high-risk zones only.
    #[serde(default)]
    pub paired_drone: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensingParams {
    pub threshold_high: f64,
    pub threshold_medium: f64,
    pub threshold_low: f64,
    pub noise_high: f64,
    pub noise_medium: f64,
    pub noise_low: f64,
    /// Station intensity at which a docked drone launches on its own.
    pub local_sense_threshold: f64,
    pub wave_speed_mps: f64,
    pub samples: u32,
    pub sample_spacing_ms: TimeMs,
}

impl Default for SensingParams {
    fn default() -> Self {
        Self {
            threshold_high: 3.0,
            threshold_medium: 3.0,
            threshold_low: 3.0,
            noise_high: 0.3,
            noise_medium: 0.3,
            noise_low: 0.1,
            local_sense_threshold: 6.0,
            wave_speed_mps: 3000.0,
            samples: 3,
            sample_spacing_ms: 250,
        }
    }
}

impl SensingParams {
    pub fn threshold(&self, risk: RiskLevel) -> f64 {
        match risk {
            RiskLevel::High => self.threshold_high,
            RiskLevel::Medium => self.threshold_medium,
            RiskLevel::Low => self.threshold_low,
        }
    }

    pub fn noise(&self, risk: RiskLevel) -> f64 {
        match risk {
            RiskLevel::High => self.noise_high,
            RiskLevel::Medium => self.noise_medium,
            RiskLevel::Low => self.noise_low,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActorsSection {
    /// Cell of each edge server.
    pub edge_servers: Vec<CellId>,
    /// Cell of each ground station.
    pub ground_stations: Vec<CellId>,
    /// Start cell of each rescue team.
    pub rescue_teams: Vec<CellId>,
    pub alpha_cell: CellId,
    pub beta_cell: CellId,
    pub crisis_cell: CellId,
    pub seismic_cell: CellId,
    pub police_cell: CellId,
    pub sensors: Vec<SensorSpec>,
    pub drones: Vec<DroneSpec>,
    pub protocol: ProtocolParams,
    pub sensing: SensingParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub p2p_latency_ms: TimeMs,
    pub wireless_latency_ms: TimeMs,
    /// Per satellite link; a relay crosses two.
    pub satellite_latency_ms: TimeMs,
    pub beta_d: f64,
    pub hardened_factor: f64,
    /// Wireless-down multiplier for sensors in medium-risk zones.
    pub m_zone_factor: f64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let d = DisruptionParams::default();
        Self {
            p2p_latency_ms: 20,
            wireless_latency_ms: 40,
            satellite_latency_ms: 600,
            beta_d: d.beta_d,
            hardened_factor: d.hardened_factor,
            m_zone_factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AftershockSpec {
    pub t_ms: TimeMs,
    pub epicenter: [f64; 2],
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuakeSection {
    pub epicenter: [f64; 2],
    pub magnitude: f64,
    pub t_ms: TimeMs,
    /// Seismic-center early warning this long before the quake.
    #[serde(default)]
    pub early_warning_lead_ms: Option<TimeMs>,
    #[serde(default)]
    pub aftershocks: Vec<AftershockSpec>,
}

impl QuakeSection {
    pub fn event(&self) -> EarthquakeEvent {
        EarthquakeEvent {
            epicenter: (self.epicenter[0], self.epicenter[1]),
            magnitude: self.magnitude,
            t_ms: self.t_ms,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KillSpec {
    /// Index into the drone list.
    pub drone: u32,
    pub t_ms: TimeMs,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FaultsSection {
    pub kills: Vec<KillSpec>,
    pub hazard_per_tick: f64,
    /// Link kinds forced down when the quake hits.
    pub force_down_kinds: Vec<LinkKind>,
    /// Individual links forced down when the quake hits, by endpoint names.
    pub force_down_links: Vec<[String; 2]>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub run: RunSection,
    pub world: WorldSection,
    pub actors: ActorsSection,
    pub network: NetworkSection,
    pub quake: Option<QuakeSection>,
    pub faults: FaultsSection,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_value(value.clone()).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn thresholds(&self) -> RiskThresholds {
        RiskThresholds { high: self.world.high_threshold, medium: self.world.medium_threshold }
    }

    pub fn curve(&self) -> CollapseCurve {
        CollapseCurve { midpoint: self.world.collapse_mid, scale: self.world.collapse_scale }
    }

    pub fn disruption(&self) -> DisruptionParams {
        DisruptionParams { beta_d: self.network.beta_d, hardened_factor: self.network.hardened_factor }
    }

    pub fn road_length_m(&self) -> u64 {
        if self.world.road_length_m > 0 {
            self.world.road_length_m
        } else {
            self.world.cell_size_m.round().max(1.0) as u64
        }
    }

    fn grid<T: Copy + Default>(&self, rows: &[Vec<T>], what: &'static str) -> Result<Vec<T>, ScenarioError> {
        let (w, h) = (self.world.width as usize, self.world.height as usize);
        if rows.is_empty() {
            return Ok(vec![T::default(); w * h]);
        }
        if rows.len() != h || rows.iter().any(|r| r.len() != w) {
            return Err(invalid("grid-shape", format!("{what} must be {h} rows of {w} values")));
        }
        Ok(rows.concat())
    }

    fn zone_cells(&self) -> Result<Vec<Vec<CellId>>, ScenarioError> {
        let w = self.world.width;
        self.world
            .zones
            .iter()
            .enumerate()
            .map(|(z, spec)| {
                let mut cells: BTreeSet<CellId> = spec.cells.iter().copied().collect();
                if let Some([x0, y0, x1, y1]) = spec.rect {
                    if x0 > x1 || y0 > y1 || x1 >= w || y1 >= self.world.height {
                        return Err(invalid(
                            "zone-rect",
                            format!("zone {z} rectangle {:?} is outside the grid", spec.rect),
                        ));
                    }
                    for y in y0..=y1 {
                        for x in x0..=x1 {
                            cells.insert(y * w + x);
                        }
                    }
                }
                if cells.is_empty() {
                    return Err(invalid("zone-nonempty", format!("zone {z} has no cells")));
                }
                Ok(cells.into_iter().collect())
            })
            .collect()
    }

    pub fn zone_map_spec(&self) -> Result<ZoneMapSpec, ScenarioError> {
        if self.world.width == 0 || self.world.height == 0 {
            return Err(invalid("grid-shape", "world width and height must be positive"));
        }
        if self.world.fault.is_empty() {
            return Err(invalid("grid-shape", "world.fault is required"));
        }
        Ok(ZoneMapSpec {
            width: self.world.width,
            height: self.world.height,
            cell_size_m: self.world.cell_size_m,
            fault: self.grid(&self.world.fault, "world.fault")?,
            population: self.grid(&self.world.population, "world.population")?,
            open_space: self.world.open_space.clone(),
            predefined_secure: self.world.secure.clone(),
            zones: self.zone_cells()?,
            stations: self.world.stations.iter().map(|s| Station { id: s.id, cell: s.cell }).collect(),
            thresholds: self.thresholds(),
        })
    }

    pub fn zone_map(&self) -> Result<ZoneMap, ScenarioError> {
        ZoneMap::build(&self.zone_map_spec()?).map_err(world_error)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let w = &self.world;
        if w.cell_size_m <= 0.0 {
            return Err(invalid("positive-parameter", "world.cell_size_m must be positive"));
        }
        if w.lambda_m <= 0.0 {
            return Err(invalid("positive-parameter", "world.lambda_m must be positive"));
        }
        if w.collapse_scale <= 0.0 {
            return Err(invalid("positive-parameter", "world.collapse_scale must be positive"));
        }
        if !matches!(
            w.medium_threshold.partial_cmp(&w.high_threshold),
            Some(std::cmp::Ordering::Less | std::cmp::Ordering::Equal)
        ) {
            return Err(invalid("risk-thresholds", "medium_threshold must not exceed high_threshold"));
        }
        for (what, v) in [
            ("world.trap_rate", w.trap_rate),
            ("world.block_factor", w.block_factor),
            ("world.flee_fraction", w.flee_fraction),
            ("network.beta_d", self.network.beta_d),
            ("network.hardened_factor", self.network.hardened_factor),
            ("network.m_zone_factor", self.network.m_zone_factor),
            ("faults.hazard_per_tick", self.faults.hazard_per_tick),
            ("actors.protocol.detect_prob", self.actors.protocol.detect_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid("ratio-range", format!("{what} = {v} outside [0, 1]")));
            }
        }
        let p = &self.actors.protocol;
        for (what, v) in [
            ("actors.protocol.heartbeat_ms", p.heartbeat_ms),
            ("actors.protocol.scan_ms", p.scan_ms),
            ("actors.protocol.team_tick_ms", p.team_tick_ms),
            ("world.flow_tick_ms", w.flow_tick_ms),
            ("network.p2p_latency_ms", self.network.p2p_latency_ms),
            ("network.wireless_latency_ms", self.network.wireless_latency_ms),
            ("network.satellite_latency_ms", self.network.satellite_latency_ms),
        ] {
            if v == 0 {
                return Err(invalid("positive-parameter", format!("{what} must be positive")));
            }
        }
        if p.miss_limit == 0 || p.edge_k == 0 {
            return Err(invalid("positive-parameter", "miss_limit and edge_k must be at least 1"));
        }
        if p.drone_speed_mps <= 0.0 {
            return Err(invalid("positive-parameter", "actors.protocol.drone_speed_mps must be positive"));
        }
        if self.actors.sensing.wave_speed_mps <= 0.0 {
            return Err(invalid("positive-parameter", "actors.sensing.wave_speed_mps must be positive"));
        }

        let zm = self.zone_map()?;
        let n_cells = zm.cells.len() as u32;
        let n_zones = zm.zones.len() as u32;
        let mut station_ids = BTreeSet::new();
        for s in &w.stations {
            if !station_ids.insert(s.id) {
                return Err(invalid("station-unique", format!("station {} is declared twice", s.id)));
            }
        }

        let drones = &self.actors.drones;
        let mut nurses = 0;
        let mut labels = BTreeSet::new();
        let mut covered = BTreeSet::new();
        for (i, d) in drones.iter().enumerate() {
            if !station_ids.contains(&d.station) {
                return Err(invalid("drone-station", format!("drone {i} uses undeclared station {}", d.station)));
            }
            match d.role {
                DroneRoleSpec::Coverage => {
                    let Some(z) = d.zone else {
                        return Err(invalid("coverage-zone", format!("coverage drone {i} has no zone")));
                    };
                    if z >= n_zones {
                        return Err(invalid("coverage-zone", format!("drone {i} covers nonexistent zone {z}")));
                    }
                    if !covered.insert(z) {
                        return Err(invalid(
                            "one-drone-per-zone",
                            format!("zone {z} has more than one coverage drone"),
                        ));
                    }
                }
                DroneRoleSpec::Nursing => nurses += 1,
                DroneRoleSpec::Gateway => {
                    let label = d.label.clone().unwrap_or_default();
                    if !["A", "B", "C", "D"].contains(&label.as_str()) {
                        return Err(invalid(
                            "gateway-label",
                            format!("drone {i} gateway label {label:?} is not one of A-D"),
                        ));
                    }
                    if !labels.insert(label.clone()) {
                        return Err(invalid("gateway-labels-unique", format!("gateway label {label} used twice")));
                    }
                }
                DroneRoleSpec::Spare => {}
            }
            if d.role != DroneRoleSpec::Coverage && d.zone.is_some() {
                return Err(invalid("coverage-zone", format!("drone {i} is not a coverage drone but names a zone")));
            }
        }
        if !drones.is_empty() && nurses != 1 {
            return Err(invalid("single-nurse", format!("exactly one nursing drone required, found {nurses}")));
        }

        if !self.actors.sensors.is_empty() && self.actors.edge_servers.is_empty() {
            return Err(invalid("sensor-edge", "sensors need at least one edge server"));
        }
        for (i, s) in self.actors.sensors.iter().enumerate() {
            if s.cell >= n_cells {
                return Err(invalid("sensor-cell", format!("sensor {i} references nonexistent cell {}", s.cell)));
            }
            if s.edge as usize >= self.actors.edge_servers.len() {
                return Err(invalid(
                    "sensor-edge",
                    format!("sensor {i} references nonexistent edge server {}", s.edge),
                ));
            }
            let risk = zm.zones[zm.zone_of(s.cell) as usize].risk;
            match (risk, s.paired_drone) {
                (RiskLevel::High, None) => {
                    return Err(invalid("h-sensor-paired", format!("high-risk sensor {i} has no paired drone")));
                }
                (RiskLevel::High, Some(d)) => {
                    if drones.get(d as usize).map(|d| d.role) != Some(DroneRoleSpec::Coverage) {
                        return Err(invalid(
                            "h-sensor-paired",
                            format!("sensor {i} pairs with {d}, not a coverage drone"),
                        ));
                    }
                }
                (_, Some(_)) => {
                    return Err(invalid(
                        "h-sensor-paired",
                        format!("sensor {i} is not in a high-risk zone but is paired"),
                    ));
                }
                (_, None) => {}
            }
        }
        let a = &self.actors;
        let placed = [
            ("edge server", &a.edge_servers),
            ("ground station", &a.ground_stations),
            ("rescue team", &a.rescue_teams),
        ];
        for (what, cells) in placed {
            for (i, &c) in cells.iter().enumerate() {
                if c >= n_cells {
                    return Err(invalid("actor-cell", format!("{what} {i} placed in nonexistent cell {c}")));
                }
            }
        }
        for (what, c) in [
            ("alpha", a.alpha_cell),
            ("beta", a.beta_cell),
            ("crisis", a.crisis_cell),
            ("seismic", a.seismic_cell),
            ("police", a.police_cell),
        ] {
            if c >= n_cells {
                return Err(invalid("actor-cell", format!("{what} placed in nonexistent cell {c}")));
            }
        }

        if let Some(q) = &self.quake {
            q.event().validate().map_err(world_error)?;
            if q.t_ms == 0 {
                return Err(invalid("quake-time", "quake.t_ms must be at least 1"));
            }
            if let Some(lead) = q.early_warning_lead_ms {
                if lead >= q.t_ms {
                    return Err(invalid("quake-time", "early warning must fall at t >= 1"));
                }
            }
            for a in &q.aftershocks {
                if a.t_ms <= q.t_ms || !(0.0..=10.0).contains(&a.magnitude) {
                    return Err(invalid(
                        "aftershock",
                        format!("aftershock at {} must follow the main shock with magnitude in [0, 10]", a.t_ms),
                    ));
                }
            }
        }
        for k in &self.faults.kills {
            if k.drone as usize >= drones.len() {
                return Err(invalid("kill-target", format!("kill references nonexistent drone {}", k.drone)));
            }
        }
        if self.faults.force_down_kinds.contains(&LinkKind::Satellite) {
            return Err(invalid("satellite-immune", "satellite links cannot be forced down"));
        }
        Ok(())
    }
}

fn world_error(e: WorldError) -> ScenarioError {
    let invariant = match e {
        WorldError::StationCell { .. } => "station-cell",
        WorldError::ZonePartition { .. } => "zone-partition",
        WorldError::GridShape { .. } => "grid-shape",
        WorldError::NoSuchCell(_) => "cell-exists",
        WorldError::FaultStrength(_) => "fault-range",
        WorldError::Magnitude(_) => "magnitude-range",
        WorldError::Ratio { .. } => "ratio-range",
        WorldError::Attenuation(_) => "positive-parameter",
    };
    invalid(invariant, e.to_string())
}
