//! The simulation: builds world, network and actors from a scenario, runs
//! the event loop, routes messages and applies actor effects.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};

use crate::actors::alpha::Alpha;
use crate::actors::beta::Beta;
use crate::actors::crisis::Crisis;
use crate::actors::drone::{Drone, DroneRole, DroneState, DroneTiming, Roster, Trigger};
use crate::actors::edge::{AlertWindow, EdgeServer};
use crate::actors::nurse::FleetGeometry;
use crate::actors::rescue::RescueTeam;
use crate::actors::sensor::SensorState;
use crate::actors::{AlarmLevel, Effect, Msg, Outbox, ScanSighting, Timer};
use crate::engine::trace::TRACE_FORMAT;
use crate::engine::{actor_rng, EngineError, EventQueue, RngStream, SimEvent, Target, Tracer, WorldStream};
use crate::ids::{ActorClass, ActorId, CellId, EdgeId, MsgId, TimeMs};
use crate::netsim::{Envelope, LinkKind, Network, RouteMode};
use crate::postquake::{
    compute_safe_route, designate_secure_areas, detect_congestion, edges_touching, population_flow_step,
    scan_for_survivors, FleeingPopulation,
};
use crate::scenario::{DroneRoleSpec, Scenario, ScenarioError};
use crate::world::{
    block_roads, seed_survivors, EarthquakeEvent, IntensityField, RiskLevel, RoadGraph, SurvivorSite, WorldError,
    ZoneMap,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invariant {invariant} violated at t={t_ms}: {detail}")]
    Invariant { invariant: &'static str, t_ms: TimeMs, detail: String },
}

#[derive(Debug, Clone)]
pub enum Payload {
    Deliver {
        env: Envelope<Msg>,
        route: &'static str,
        copy: Option<&'static str>,
    },
    Timer(Timer),
    /// Index 0 is the main shock, then aftershocks in order.
    Quake(usize),
    Sample {
        amplitude: f64,
    },
    LocalShake,
    EarlyWarning,
    Kill,
    FlowTick,
}

/// World stream indices into `Simulation::world_rng`.
const SURVIVORS: usize = 0;
const ROADS: usize = 1;
const LINKS: usize = 2;

pub struct Simulation {
    queue: EventQueue<Payload>,
    state: State,
}

struct State {
    scenario: Scenario,
    zm: ZoneMap,
    roads: RoadGraph,
    /// Highest intensity felt so far at each cell.
    field: IntensityField,
    zone_intensity: Vec<f64>,
    sites: Vec<SurvivorSite>,
    pop: FleeingPopulation,
    loads: BTreeMap<EdgeId, u32>,
    congested: BTreeSet<EdgeId>,
    secure: BTreeSet<CellId>,
    last_advisory: BTreeMap<CellId, Vec<EdgeId>>,
    net: Network,
    tracer: Tracer,
    next_msg_id: MsgId,
    world_rng: Vec<RngStream>,
    rngs: BTreeMap<ActorId, RngStream>,
    positions: BTreeMap<ActorId, CellId>,
    sensors: Vec<SensorState>,
    edges: Vec<EdgeServer>,
    drones: Vec<Drone>,
    alpha: Alpha,
    beta: Beta,
    crisis: Crisis,
    teams: Vec<RescueTeam>,
    delivered: BTreeMap<ActorId, BTreeSet<MsgId>>,
    failed: BTreeSet<ActorId>,
    check: Option<Checker>,
}

/// Snapshot-based runtime invariant checks.
#[derive(Default)]
struct Checker {
    sites: BTreeMap<CellId, (u32, u32)>,
}

impl Simulation {
    pub fn new(scenario: Scenario, check_invariants: bool) -> Result<Self, SimError> {
        scenario.validate()?;
        let zm = scenario.zone_map()?;
        let s = &scenario;
        let seed = s.run.seed;
        let n_cells = zm.cells.len();
        let roads = RoadGraph::grid4(zm.width, zm.height, s.road_length_m(), s.world.road_capacity);

        let station_cell = |st: u32| zm.station(st).map(|x| x.cell).unwrap_or(0);
        let drone_ids: Vec<ActorId> = (0..s.actors.drones.len() as u32).map(ActorId::drone).collect();
        let mut positions = BTreeMap::new();
        for (i, d) in s.actors.drones.iter().enumerate() {
            positions.insert(drone_ids[i], station_cell(d.station));
        }
        for (i, sp) in s.actors.sensors.iter().enumerate() {
            positions.insert(ActorId::sensor(i as u32), sp.cell);
        }
        for (i, &c) in s.actors.edge_servers.iter().enumerate() {
            positions.insert(ActorId::edge(i as u32), c);
        }
        for (i, &c) in s.actors.ground_stations.iter().enumerate() {
            positions.insert(ActorId::ground(i as u32), c);
        }
        for (i, &c) in s.actors.rescue_teams.iter().enumerate() {
            positions.insert(ActorId::team(i as u32), c);
        }
        positions.insert(ActorId::ALPHA, s.actors.alpha_cell);
        positions.insert(ActorId::BETA, s.actors.beta_cell);
        positions.insert(ActorId::CRISIS, s.actors.crisis_cell);
        positions.insert(ActorId::SEISMIC, s.actors.seismic_cell);
        positions.insert(ActorId::POLICE, s.actors.police_cell);

        let p = &s.actors.protocol;
        let geometry = FleetGeometry {
            zone_centroids: (0..zm.zones.len() as u32).map(|z| zm.zone_centroid(z)).collect(),
            stations: drone_ids.iter().map(|&d| (d, zm.center(positions[&d]))).collect(),
            speed_mps: p.drone_speed_mps,
        };
        let mut roster = Roster::default();
        let mut nursing = ActorId::BETA;
        for (i, d) in s.actors.drones.iter().enumerate() {
            match d.role {
                DroneRoleSpec::Coverage => roster.coverage.push((drone_ids[i], d.zone.unwrap_or(0))),
                DroneRoleSpec::Spare => roster.spares.push(drone_ids[i]),
                DroneRoleSpec::Gateway => roster.gateways.push(drone_ids[i]),
                DroneRoleSpec::Nursing => nursing = drone_ids[i],
            }
        }
        let ground_ids: Vec<ActorId> = (0..s.actors.ground_stations.len() as u32).map(ActorId::ground).collect();
        let team_ids: Vec<ActorId> = (0..s.actors.rescue_teams.len() as u32).map(ActorId::team).collect();

        let zone_risk = |c: CellId| zm.zones[zm.zone_of(c) as usize].risk;
        let sensors: Vec<SensorState> = s
            .actors
            .sensors
            .iter()
            .enumerate()
            .map(|(i, sp)| {
                let risk = zone_risk(sp.cell);
                SensorState {
                    id: ActorId::sensor(i as u32),
                    cell: sp.cell,
                    risk,
                    threshold: s.actors.sensing.threshold(risk),
                    noise_sigma: s.actors.sensing.noise(risk),
                    edge: ActorId::edge(sp.edge),
                    paired_drone: sp.paired_drone.map(ActorId::drone),
                    alerted: false,
                }
            })
            .collect();
        let edges = (0..s.actors.edge_servers.len() as u32)
            .map(|i| EdgeServer {
                id: ActorId::edge(i),
                window: AlertWindow::new(p.edge_k, p.edge_window_ms),
                alarm: AlarmLevel::Green,
                ground_stations: ground_ids.clone(),
            })
            .collect();
        let timing = DroneTiming {
            heartbeat_ms: p.heartbeat_ms,
            miss_limit: p.miss_limit,
            scan_ms: p.scan_ms,
            hazard_per_tick: s.faults.hazard_per_tick,
        };
        let drones: Vec<Drone> = s
            .actors
            .drones
            .iter()
            .enumerate()
            .map(|(i, d)| Drone {
                id: drone_ids[i],
                role: match d.role {
                    DroneRoleSpec::Coverage | DroneRoleSpec::Spare => DroneRole::Coverage,
                    DroneRoleSpec::Nursing => DroneRole::Nursing,
                    DroneRoleSpec::Gateway => DroneRole::Gateway(d.label.clone().unwrap_or_default()),
                },
                zone: d.zone,
                state: DroneState::Docked,
                nurse: nursing,
                geometry: geometry.clone(),
                timing,
                roster: if d.role == DroneRoleSpec::Nursing { roster.clone() } else { Roster::default() },
                ledger: None,
                last_heartbeat_sent_ms: None,
            })
            .collect();
        let alpha = Alpha::new(roster, nursing, zm.zones.len() as u32, geometry.clone(), p.heartbeat_ms, p.miss_limit);
        let beta = Beta::new(geometry, p.heartbeat_ms, p.miss_limit, p.scan_ms);
        let crisis = Crisis::new(p.red_threshold, s.curve(), &team_ids, vec![ActorId::POLICE], ground_ids.clone());
        let teams = team_ids
            .iter()
            .zip(&s.actors.rescue_teams)
            .map(|(&id, &c)| RescueTeam::new(id, c, p.rescue_rate, p.team_tick_ms))
            .collect();

        let net = build_network(s, &sensors, &drones, &ground_ids, &team_ids, zone_risk);

        let mut tracer = Tracer::new();
        tracer.emit(
            0,
            "sim",
            "header",
            json!({
                "format": TRACE_FORMAT,
                "zone_count": zm.zones.len(),
                "scenario": serde_json::to_value(s).expect("scenario serializes"),
            }),
        );

        let mut queue = EventQueue::new();
        if let Some(q) = &s.quake {
            if let Some(lead) = q.early_warning_lead_ms {
                queue.schedule(q.t_ms - lead, Target::Actor(ActorId::SEISMIC), Payload::EarlyWarning)?;
            }
            queue.schedule(q.t_ms, Target::World, Payload::Quake(0))?;
            for (i, a) in q.aftershocks.iter().enumerate() {
                queue.schedule(a.t_ms, Target::World, Payload::Quake(i + 1))?;
            }
        }
        for k in &s.faults.kills {
            queue.schedule(k.t_ms, Target::Actor(ActorId::drone(k.drone)), Payload::Kill)?;
        }

        let world_rng = [WorldStream::Survivors, WorldStream::Roads, WorldStream::Links]
            .into_iter()
            .map(|w| RngStream::world(seed, w))
            .collect();
        let state = State {
            zone_intensity: vec![0.0; zm.zones.len()],
            field: IntensityField::uniform(n_cells, 0.0),
            secure: zm.cells.iter().filter(|c| c.predefined_secure).map(|c| c.id).collect(),
            scenario: scenario.clone(),
            zm,
            roads,
            sites: Vec::new(),
            pop: FleeingPopulation::default(),
            loads: BTreeMap::new(),
            congested: BTreeSet::new(),
            last_advisory: BTreeMap::new(),
            net,
            tracer,
            next_msg_id: 0,
            world_rng,
            rngs: BTreeMap::new(),
            positions,
            sensors,
            edges,
            drones,
            alpha,
            beta,
            crisis,
            teams,
            delivered: BTreeMap::new(),
            failed: BTreeSet::new(),
            check: check_invariants.then(Checker::default),
        };
        Ok(Self { queue, state })
    }

    pub fn clock(&self) -> TimeMs {
        self.queue.clock()
    }

    pub fn run_until(&mut self, t_end: TimeMs) -> Result<u64, SimError> {
        let state = &mut self.state;
        self.queue.run_until(t_end, |q, ev| state.dispatch(q, ev))
    }

    pub fn trace(&self) -> &str {
        self.state.tracer.as_str()
    }

    pub fn into_trace(self) -> String {
        self.state.tracer.into_string()
    }

    pub fn sites(&self) -> &[SurvivorSite] {
        &self.state.sites
    }

    pub fn network(&self) -> &Network {
        &self.state.net
    }
}

/// Run a scenario to `until` (or its own `t_end_ms`). On failure the partial
/// trace is returned alongside the error so it can still be written out.
pub fn run_scenario(
    scenario: Scenario,
    until: Option<TimeMs>,
    check_invariants: bool,
) -> Result<String, (SimError, Option<String>)> {
    let t_end = until.unwrap_or(scenario.run.t_end_ms);
    let mut sim = Simulation::new(scenario, check_invariants).map_err(|e| (e, None))?;
    match sim.run_until(t_end) {
        Ok(_) => Ok(sim.into_trace()),
        Err(e) => Err((e, Some(sim.into_trace()))),
    }
}

fn build_network(
    s: &Scenario,
    sensors: &[SensorState],
    drones: &[Drone],
    ground: &[ActorId],
    teams: &[ActorId],
    risk_of: impl Fn(CellId) -> RiskLevel,
) -> Network {
    let n = &s.network;
    let mut net = Network::new();
    let wl = |net: &mut Network, a, b| {
        net.add_link(a, b, LinkKind::Wireless, n.wireless_latency_ms, false);
    };
    for sensor in sensors {
        wl(&mut net, sensor.id, sensor.edge);
        if let Some(d) = sensor.paired_drone {
            net.add_link(sensor.id, d, LinkKind::PointToPoint, n.p2p_latency_ms, true);
        }
        if risk_of(sensor.cell) == RiskLevel::Medium {
            net.set_wireless_factor(sensor.id, n.m_zone_factor);
        }
    }
    for e in 0..s.actors.edge_servers.len() as u32 {
        wl(&mut net, ActorId::edge(e), ActorId::ALPHA);
        for &g in ground {
            wl(&mut net, ActorId::edge(e), g);
        }
    }
    for d in drones {
        wl(&mut net, d.id, ActorId::ALPHA);
    }
    for (i, a) in drones.iter().enumerate() {
        for b in &drones[i + 1..] {
            wl(&mut net, a.id, b.id);
        }
    }
    for d in drones.iter().filter(|d| matches!(d.role, DroneRole::Gateway(_))) {
        wl(&mut net, d.id, ActorId::CRISIS);
        for &g in ground {
            wl(&mut net, d.id, g);
        }
        wl(&mut net, d.id, ActorId::POLICE);
        for &t in teams {
            wl(&mut net, d.id, t);
        }
    }
    wl(&mut net, ActorId::ALPHA, ActorId::BETA);
    for &g in ground {
        wl(&mut net, ActorId::ALPHA, g);
        wl(&mut net, g, ActorId::CRISIS);
        wl(&mut net, ActorId::SEISMIC, g);
    }
    wl(&mut net, ActorId::CRISIS, ActorId::POLICE);
    for &t in teams {
        wl(&mut net, ActorId::CRISIS, t);
    }
    let mut capable: Vec<ActorId> = drones.iter().map(|d| d.id).collect();
    capable.extend([ActorId::ALPHA, ActorId::BETA]);
    capable.extend(ground.iter().copied());
    capable.extend([ActorId::SEISMIC, ActorId::CRISIS]);
    capable.sort();
    for a in capable {
        net.add_link(a, ActorId::SATELLITE, LinkKind::Satellite, n.satellite_latency_ms, false);
    }
    net
}

impl State {
    fn rng(&mut self, id: ActorId) -> &mut RngStream {
        let seed = self.scenario.run.seed;
        self.rngs.entry(id).or_insert_with(|| actor_rng(seed, id))
    }

    fn violation(&mut self, t: TimeMs, invariant: &'static str, detail: String) -> SimError {
        self.tracer.emit(t, "sim", "invariant_violation", json!({ "invariant": invariant, "detail": detail }));
        SimError::Invariant { invariant, t_ms: t, detail }
    }

    fn dispatch(&mut self, q: &mut EventQueue<Payload>, ev: SimEvent<Payload>) -> Result<(), SimError> {
        let now = ev.t_ms;
        match (ev.target, ev.payload) {
            (Target::World, Payload::Quake(i)) => self.on_quake(q, now, i)?,
            (Target::World, Payload::FlowTick) => self.on_flow_tick(q, now)?,
            (Target::Actor(dst), Payload::Deliver { env, route, copy }) => {
                self.deliver(q, now, dst, env, route, copy)?
            }
            (Target::Actor(a), Payload::Timer(t)) => self.on_timer(q, now, a, t)?,
            (Target::Actor(a), Payload::Sample { amplitude }) => {
                let i = a.index as usize;
                let mut out = Outbox::new();
                let mut rng = self.rng(a).clone();
                self.sensors[i].on_sample(amplitude, &mut rng, &mut out);
                self.rngs.insert(a, rng);
                self.apply(q, now, a, out)?;
            }
            (Target::Actor(a), Payload::LocalShake) => {
                let mut out = Outbox::new();
                self.drones[a.index as usize].on_trigger(now, Trigger::LocalQuakeSensed, &mut out);
                self.apply(q, now, a, out)?;
            }
            (Target::Actor(a), Payload::EarlyWarning) => {
                self.tracer.emit(now, a, "early_warning", json!({ "quake_ms": now + self.lead_ms() }));
                let mut out = Outbox::new();
                for d in &self.drones {
                    if !(d.role == DroneRole::Coverage && d.zone.is_none()) {
                        out.send(d.id, Msg::EarlyWarning);
                    }
                }
                self.apply(q, now, a, out)?;
            }
            (Target::Actor(a), Payload::Kill) => {
                let mut out = Outbox::new();
                self.drones[a.index as usize].fail("injected", &mut out);
                self.apply(q, now, a, out)?;
                self.note_failures();
            }
            (target, payload) => unreachable!("unroutable event {payload:?} for {target}"),
        }
        if self.check.is_some() {
            self.check_invariants(now)?;
        }
        Ok(())
    }

    fn lead_ms(&self) -> TimeMs {
        self.scenario.quake.as_ref().and_then(|q| q.early_warning_lead_ms).unwrap_or(0)
    }

    fn note_failures(&mut self) {
        for d in &self.drones {
            if d.is_failed() && self.failed.insert(d.id) {
                self.net.exclude_relay(d.id);
            }
        }
    }

    fn on_quake(&mut self, q: &mut EventQueue<Payload>, now: TimeMs, index: usize) -> Result<(), SimError> {
        let spec = self.scenario.quake.clone().expect("quake event without quake section");
        let event = if index == 0 {
            spec.event()
        } else {
            let a = spec.aftershocks[index - 1];
            EarthquakeEvent { epicenter: (a.epicenter[0], a.epicenter[1]), magnitude: a.magnitude, t_ms: a.t_ms }
        };
        let w = self.scenario.world.clone();
        let shock = IntensityField::compute(&event, &self.zm, w.lambda_m)?;
        self.field = self.field.max_with(&shock);
        self.zone_intensity = (0..self.zm.zones.len() as u32).map(|z| self.field.zone_max(&self.zm, z)).collect();
        let max_i = shock.values().iter().copied().fold(0.0, f64::max);
        self.tracer.emit(
            now,
            "world",
            "quake",
            json!({ "shock": index, "epicenter": event.epicenter, "magnitude": event.magnitude, "max_intensity": max_i }),
        );

        let curve = self.scenario.curve();
        if index == 0 {
            let mut rng = self.world_rng[SURVIVORS].clone();
            self.sites = seed_survivors(&self.zm, &shock, w.trap_rate, curve, &mut rng)?;
            self.world_rng[SURVIVORS] = rng;
            let listed: Vec<Value> = self.sites.iter().map(|s| json!({ "cell": s.cell, "total": s.total })).collect();
            let total: u64 = self.sites.iter().map(|s| s.total as u64).sum();
            self.tracer.emit(now, "world", "survivors", json!({ "sites": listed, "total": total }));
        }

        let mut rng = self.world_rng[ROADS].clone();
        let blocked = block_roads(&mut self.roads, &shock, w.block_factor, curve, &mut rng)?;
        self.world_rng[ROADS] = rng;
        if !blocked.is_empty() {
            self.tracer.emit(now, "world", "road_blocked", json!({ "edges": blocked }));
        }

        let mut rng = self.world_rng[LINKS].clone();
        let positions = &self.positions;
        let down = self.net.apply_disruption(
            |a| positions.get(&a).map(|&c| shock.get(c)).unwrap_or(0.0),
            self.scenario.disruption(),
            &mut rng,
        );
        self.world_rng[LINKS] = rng;
        for id in down {
            self.trace_link_down(now, id, "disruption");
        }
        if index == 0 {
            let f = &self.scenario.faults;
            let mut forced = Vec::new();
            for l in self.net.links() {
                let by_kind = f.force_down_kinds.contains(&l.kind);
                let by_name = f.force_down_links.iter().any(|[a, b]| {
                    let (sa, sb) = (l.a.to_string(), l.b.to_string());
                    (*a == sa && *b == sb) || (*a == sb && *b == sa)
                });
                if by_kind || by_name {
                    forced.push(l.id);
                }
            }
            for id in forced {
                if self.net.set_down(id) {
                    self.trace_link_down(now, id, "forced");
                }
            }

            let fleeing: Vec<(CellId, u32)> =
                self.zm.cells.iter().map(|c| (c.id, (c.population as f64 * w.flee_fraction).floor() as u32)).collect();
            self.pop = FleeingPopulation::new(fleeing);
            self.tracer.emit(now, "world", "flee", json!({ "agents": self.pop.initial }));
            if self.pop.initial > 0 {
                q.schedule_after(w.flow_tick_ms, Target::World, Payload::FlowTick)?;
            }

            let sensing = self.scenario.actors.sensing.clone();
            let epicenter = event.epicenter_m(self.zm.cell_size_m);
            let arrival = |c: CellId| {
                now + (epicenter.dist(self.zm.center(c)) / sensing.wave_speed_mps * 1000.0).ceil() as TimeMs
            };
            for s in &self.sensors {
                let t0 = arrival(s.cell);
                for k in 0..sensing.samples as u64 {
                    q.schedule(
                        t0 + k * sensing.sample_spacing_ms,
                        Target::Actor(s.id),
                        Payload::Sample { amplitude: shock.get(s.cell) },
                    )?;
                }
            }
            for d in &self.drones {
                let cell = self.positions[&d.id];
                if d.state == DroneState::Docked && shock.get(cell) >= sensing.local_sense_threshold {
                    q.schedule(arrival(cell), Target::Actor(d.id), Payload::LocalShake)?;
                }
            }
        }
        Ok(())
    }

    fn trace_link_down(&mut self, now: TimeMs, id: u32, cause: &str) {
        let l = self.net.link(id).clone();
        self.tracer.emit(
            now,
            "world",
            "link_down",
            json!({ "link": id, "a": l.a, "b": l.b, "kind": l.kind, "cause": cause }),
        );
    }

    fn on_flow_tick(&mut self, q: &mut EventQueue<Payload>, now: TimeMs) -> Result<(), SimError> {
        let out = population_flow_step(&mut self.pop, &self.roads, &self.secure);
        let all: Vec<EdgeId> = self.roads.edges.iter().map(|e| e.id).collect();
        self.congested = detect_congestion(&self.roads, &all, &out.loads).into_iter().collect();
        self.loads = out.loads;
        for (cell, n) in &out.sheltered_now {
            self.tracer.emit(now, "world", "sheltered", json!({ "cell": cell, "n": n }));
        }
        self.tracer.emit(
            now,
            "world",
            "flow",
            json!({
                "moved": out.moved,
                "fleeing": self.pop.fleeing(),
                "sheltered": self.pop.sheltered,
                "congested": self.congested,
            }),
        );
        if self.pop.fleeing() > 0 {
            q.schedule_after(self.scenario.world.flow_tick_ms, Target::World, Payload::FlowTick)?;
        }
        Ok(())
    }

    fn on_timer(&mut self, q: &mut EventQueue<Payload>, now: TimeMs, a: ActorId, timer: Timer) -> Result<(), SimError> {
        let mut out = Outbox::new();
        match a.class {
            ActorClass::Drone => {
                let mut rng = self.rng(a).clone();
                self.drones[a.index as usize].on_timer(now, timer, &self.zone_intensity, &mut rng, &mut out);
                self.rngs.insert(a, rng);
            }
            ActorClass::HelicopterAlpha => self.alpha.on_tick(now, &mut out),
            ActorClass::HelicopterBeta => self.beta.on_timer(now, timer, &self.zone_intensity, &mut out),
            ActorClass::RescueTeam => {
                let team = &mut self.teams[a.index as usize];
                team.on_tick(now, &self.roads, &self.congested, &mut self.sites, &mut out);
            }
            _ => {}
        }
        self.apply(q, now, a, out)?;
        self.note_failures();
        Ok(())
    }

    fn deliver(
        &mut self,
        q: &mut EventQueue<Payload>,
        now: TimeMs,
        dst: ActorId,
        env: Envelope<Msg>,
        route: &'static str,
        copy: Option<&'static str>,
    ) -> Result<(), SimError> {
        let base = json!({
            "msg_id": env.msg_id,
            "src": env.src,
            "msg": env.body.kind(),
            "route": route,
            "path": self.net.hops(env.src, &env.path),
            "latency": now - env.sent_ms,
            "sent_ms": env.sent_ms,
            "copy": copy,
        });
        if self.failed.contains(&dst) {
            let mut data = base;
            data["reason"] = json!("dst_failed");
            self.tracer.emit(now, dst, "msg_drop", data);
            return Ok(());
        }
        if !self.delivered.entry(dst).or_default().insert(env.msg_id) {
            self.tracer.emit(now, dst, "msg_dedup", base);
            return Ok(());
        }
        self.tracer.emit(now, dst, "msg_deliver", base);

        let src = env.src;
        let msg = env.body;
        let mut out = Outbox::new();
        match dst.class {
            ActorClass::EdgeServer => self.edges[dst.index as usize].on_message(now, &msg, &mut out),
            ActorClass::Drone => self.drones[dst.index as usize].on_message(now, &msg, &mut out),
            ActorClass::HelicopterAlpha => self.alpha.on_message(now, src, &msg, &mut out),
            ActorClass::HelicopterBeta => self.beta.on_message(now, &msg, &self.zone_intensity, &mut out),
            ActorClass::CrisisCenter => self.crisis.on_message(now, &msg, &mut out),
            ActorClass::RescueTeam => self.teams[dst.index as usize].on_message(&msg, &mut out),
            ActorClass::Police => {
                if let Msg::Notify { level } = msg {
                    out.trace("notified", json!({ "level": level }));
                }
            }
            _ => {}
        }
        self.apply(q, now, dst, out)
    }

    fn apply(
        &mut self,
        q: &mut EventQueue<Payload>,
        now: TimeMs,
        actor: ActorId,
        mut out: Outbox,
    ) -> Result<(), SimError> {
        for effect in out.drain() {
            match effect {
                Effect::Send { dst, msg } => {
                    let id = self.new_msg_id();
                    self.send(q, now, actor, dst, msg, id, RouteMode::Preferred, None)?;
                }
                Effect::DualRelay { dst, msg } => {
                    let id = self.new_msg_id();
                    self.send(q, now, actor, dst, msg.clone(), id, RouteMode::Terrestrial, Some("terrestrial"))?;
                    self.send(q, now, actor, dst, msg, id, RouteMode::SatelliteOnly, Some("satellite"))?;
                }
                Effect::Timer { delay_ms, timer } => {
                    q.schedule_after(delay_ms, Target::Actor(actor), Payload::Timer(timer))?;
                }
                Effect::Survey { zone } => self.survey(q, now, actor, zone)?,
                Effect::Trace { kind, data } => self.tracer.emit(now, actor, kind, data),
            }
        }
        Ok(())
    }

    fn new_msg_id(&mut self) -> MsgId {
        let id = self.next_msg_id;
        self.next_msg_id += 1;
        id
    }

    #[allow(clippy::too_many_arguments)]
    fn send(
        &mut self,
        q: &mut EventQueue<Payload>,
        now: TimeMs,
        src: ActorId,
        dst: ActorId,
        msg: Msg,
        msg_id: MsgId,
        mode: RouteMode,
        copy: Option<&'static str>,
    ) -> Result<(), SimError> {
        if self.failed.contains(&src) && self.check.is_some() {
            return Err(self.violation(now, "dead-actor-silence", format!("{src} sent {} after failing", msg.kind())));
        }
        let choice = self.net.route_with(src, dst, mode);
        let path = choice.path().to_vec();
        let latency = self.net.latency(&path);
        let route = choice.label();
        self.tracer.emit(
            now,
            src,
            "msg_send",
            json!({
                "msg_id": msg_id,
                "dst": dst,
                "msg": msg.kind(),
                "route": route,
                "path": self.net.hops(src, &path),
                "latency": latency,
                "copy": copy,
                "body": msg.body(),
            }),
        );
        if path.is_empty() {
            self.tracer.emit(
                now,
                src,
                "msg_drop",
                json!({ "msg_id": msg_id, "dst": dst, "msg": msg.kind(), "reason": "no_path", "copy": copy }),
            );
            return Ok(());
        }
        let env = Envelope { msg_id, src, dst, body: msg, sent_ms: now, path };
        q.schedule(now + latency, Target::Actor(dst), Payload::Deliver { env, route, copy })?;
        Ok(())
    }

    /// Post-quake duties of a coverer over one zone: survivor scan,
    /// congestion check, secure-area detection and route advisories.
    fn survey(
        &mut self,
        q: &mut EventQueue<Payload>,
        now: TimeMs,
        scanner: ActorId,
        zone: u32,
    ) -> Result<(), SimError> {
        let p = self.scenario.actors.protocol.clone();
        let anchor = self.zm.zone_anchor(zone);
        let in_range: BTreeSet<CellId> = self.zm.cells_within(anchor, p.scan_radius_cells).into_iter().collect();
        let mut out = Outbox::new();

        let mut rng = self.rng(scanner).clone();
        let hits = scan_for_survivors(&in_range, p.detect_prob, &mut self.sites, now, &mut rng);
        self.rngs.insert(scanner, rng);
        out.trace("scan", json!({ "zone": zone, "hits": hits }));
        if !hits.is_empty() {
            let sites = hits.iter().map(|&h| ScanSighting::from_hit(h, self.field.get(h.cell))).collect();
            out.send(ActorId::ALPHA, Msg::ScanReport { scanner, sites });
        }

        let nearby = edges_touching(&self.roads, &in_range);
        let jammed = detect_congestion(&self.roads, &nearby, &self.loads);
        if !jammed.is_empty() {
            out.trace("congestion", json!({ "zone": zone, "edges": jammed }));
            out.send(ActorId::ALPHA, Msg::CongestionReport { scanner, edges: jammed.clone() });
        }

        let jammed_cells: BTreeSet<CellId> = self
            .congested
            .iter()
            .flat_map(|&e| {
                let e = self.roads.edge(e);
                [e.u, e.v]
            })
            .collect();
        let found: Vec<CellId> =
            designate_secure_areas(&self.zm, &self.field, &jammed_cells, self.scenario.world.i_safe)
                .into_iter()
                .filter(|c| in_range.contains(c) && !self.secure.contains(c))
                .collect();
        if !found.is_empty() {
            self.secure.extend(found.iter().copied());
            out.trace("secure_area", json!({ "zone": zone, "cells": found }));
        }

        if !self.secure.is_empty() {
            let occupied: Vec<CellId> = self
                .pop
                .occupied_cells()
                .into_iter()
                .filter(|c| in_range.contains(c) && !self.secure.contains(c))
                .collect();
            for origin in occupied {
                let Some(adv) = compute_safe_route(&self.roads, origin, &self.secure, &self.congested, now) else {
                    continue;
                };
                if self.last_advisory.get(&origin) == Some(&adv.path) {
                    continue;
                }
                if let Some(&bad) =
                    adv.path.iter().find(|&&e| self.roads.edge(e).blocked || self.congested.contains(&e))
                {
                    if self.check.is_some() {
                        return Err(self.violation(
                            now,
                            "advisory-safety",
                            format!("advisory from {origin} uses edge {bad}"),
                        ));
                    }
                }
                self.last_advisory.insert(origin, adv.path.clone());
                self.pop.apply_advisory(&adv);
                out.trace(
                    "advisory",
                    json!({ "origin": origin, "dest": adv.dest, "path": adv.path, "length_m": adv.length_m }),
                );
                out.send(ActorId::ALPHA, Msg::Advisory { scanner, origin, dest: adv.dest, path: adv.path });
            }
        }
        self.apply(q, now, scanner, out)
    }

    fn check_invariants(&mut self, now: TimeMs) -> Result<(), SimError> {
        let mut problems: Vec<(&'static str, String)> = Vec::new();
        let checker = self.check.as_mut().expect("checker enabled");
        for s in &self.sites {
            if !(s.rescued <= s.detected && s.detected <= s.total) {
                problems
                    .push(("survivor-bounds", format!("site {} has {}/{}/{}", s.cell, s.rescued, s.detected, s.total)));
            }
            let prev = checker.sites.insert(s.cell, (s.detected, s.rescued)).unwrap_or((0, 0));
            if s.detected < prev.0 || s.rescued < prev.1 {
                problems.push(("survivor-monotonic", format!("site {} counters decreased", s.cell)));
            }
        }
        if self.pop.fleeing() + self.pop.sheltered != self.pop.initial {
            problems.push((
                "population-conservation",
                format!("{} fleeing + {} sheltered != {}", self.pop.fleeing(), self.pop.sheltered, self.pop.initial),
            ));
        }
        let mut nurses: Vec<ActorId> =
            self.drones.iter().filter(|d| !d.is_failed() && d.ledger.is_some()).map(|d| d.id).collect();
        if self.beta.is_nurse() {
            nurses.push(ActorId::BETA);
        }
        if nurses.len() > 1 {
            problems.push(("single-nurse", format!("live nurses {nurses:?}")));
        }
        let mut coverers: BTreeMap<u32, Vec<ActorId>> = BTreeMap::new();
        for d in self.drones.iter().filter(|d| !d.is_failed()) {
            if let DroneState::OnStation { zone: Some(z) } = d.state {
                coverers.entry(z).or_default().push(d.id);
            }
        }
        for &z in &self.beta.zones {
            coverers.entry(z).or_default().push(ActorId::BETA);
        }
        for (z, c) in coverers {
            if c.len() > 1 {
                problems.push(("coverage-exclusive", format!("zone {z} covered by {c:?}")));
            }
        }
        if let Some((inv, detail)) = problems.into_iter().next() {
            return Err(self.violation(now, inv, detail));
        }
        Ok(())
    }
}
