//! Drone state machine: coverage, nursing and gateway roles.

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::nurse::{nurse_tick, reassign_zone, Assignment, FleetGeometry, Handover, NurseLedger};
use super::{Msg, Outbox, Timer};
use crate::engine::RngStream;
use crate::ids::{ActorId, TimeMs, ZoneId};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "role", content = "label", rename_all = "snake_case")]
pub enum DroneRole {
    /// Covers its assigned zone; without a zone it is a docked spare.
    Coverage,
    Nursing,
    Gateway(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum DroneState {
    Docked,
    Enroute { zone: Option<ZoneId>, eta_ms: TimeMs },
    OnStation { zone: Option<ZoneId> },
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    LocalQuakeSensed,
    PairedSensorAlert,
    LaunchCmd,
    EarlyWarning,
    Assigned,
}

impl Trigger {
    pub fn name(self) -> &'static str {
        match self {
            Trigger::LocalQuakeSensed => "local_quake",
            Trigger::PairedSensorAlert => "paired_alert",
            Trigger::LaunchCmd => "launch_cmd",
            Trigger::EarlyWarning => "early_warning",
            Trigger::Assigned => "assign_cmd",
        }
    }
}

/// Launch transition. Only a docked drone moves; every other state is kept.
pub fn drone_on_trigger(state: DroneState, zone: Option<ZoneId>, flight_ms: TimeMs, now: TimeMs) -> DroneState {
    match state {
        DroneState::Docked => DroneState::Enroute { zone, eta_ms: now + flight_ms },
        other => other,
    }
}

/// Timing parameters a drone needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneTiming {
    pub heartbeat_ms: TimeMs,
    pub miss_limit: u32,
    pub scan_ms: TimeMs,
    pub hazard_per_tick: f64,
}

/// Deployment plan known to the nursing drone at activation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Roster {
    pub coverage: Vec<(ActorId, ZoneId)>,
    pub gateways: Vec<ActorId>,
    pub spares: Vec<ActorId>,
}

#[derive(Debug, Clone)]
pub struct Drone {
    pub id: ActorId,
    pub role: DroneRole,
    pub zone: Option<ZoneId>,
    pub state: DroneState,
    pub nurse: ActorId,
    pub geometry: FleetGeometry,
    pub timing: DroneTiming,
    pub roster: Roster,
    pub ledger: Option<NurseLedger>,
    pub last_heartbeat_sent_ms: Option<TimeMs>,
}

impl Drone {
    pub fn is_failed(&self) -> bool {
        self.state == DroneState::Failed
    }

    pub fn is_spare(&self) -> bool {
        self.role == DroneRole::Coverage && self.zone.is_none()
    }

    fn flight_to(&self, zone: Option<ZoneId>) -> TimeMs {
        match (&self.role, zone) {
            (DroneRole::Coverage, Some(z)) => self.geometry.eta_ms(self.id, z),
            _ => 0,
        }
    }

    pub fn on_trigger(&mut self, now: TimeMs, trigger: Trigger, out: &mut Outbox) {
        if self.is_spare() && trigger != Trigger::Assigned {
            return;
        }
        let next = drone_on_trigger(self.state, self.zone, self.flight_to(self.zone), now);
        if next == self.state {
            return;
        }
        self.state = next;
        if let DroneState::Enroute { zone, eta_ms } = next {
            out.trace("launch", json!({ "trigger": trigger.name(), "zone": zone, "eta_ms": eta_ms }));
            out.after(eta_ms - now, Timer::Arrive);
        }
    }

    pub fn on_message(&mut self, now: TimeMs, msg: &Msg, out: &mut Outbox) {
        if self.is_failed() {
            return;
        }
        match msg {
            Msg::Alert { .. } => self.on_trigger(now, Trigger::PairedSensorAlert, out),
            Msg::LaunchCmd => self.on_trigger(now, Trigger::LaunchCmd, out),
            Msg::EarlyWarning => self.on_trigger(now, Trigger::EarlyWarning, out),
            Msg::AssignCmd { zone } => {
                if self.state == DroneState::Docked && self.role == DroneRole::Coverage {
                    self.zone = Some(*zone);
                    self.on_trigger(now, Trigger::Assigned, out);
                }
            }
            Msg::Heartbeat { drone, sent_ms } => {
                if let Some(l) = &mut self.ledger {
                    l.on_heartbeat(*drone, *sent_ms);
                }
            }
            Msg::CoverageUp { coverer, zone, sent_ms, .. } => {
                if let Some(l) = &mut self.ledger {
                    l.on_coverage_up(*coverer, *zone, *sent_ms);
                }
            }
            Msg::PromoteNurse { handover } => self.promote(now, handover, out),
            Msg::NurseChanged { nurse } => self.nurse = *nurse,
            _ => {}
        }
    }

    fn promote(&mut self, now: TimeMs, handover: &Handover, out: &mut Outbox) {
        let mut vacated = None;
        if let DroneState::OnStation { zone: Some(z) } = self.state {
            out.trace("coverage_down", json!({ "zone": z, "reason": "promoted" }));
            self.state = DroneState::OnStation { zone: None };
            vacated = Some(z);
        }
        self.zone = None;
        self.role = DroneRole::Nursing;
        self.nurse = self.id;
        let mut ledger = NurseLedger::from_handover(
            self.timing.heartbeat_ms,
            self.timing.miss_limit,
            self.geometry.clone(),
            handover,
        );
        ledger.entries.remove(&self.id);
        out.trace("nurse_promote", json!({ "monitored": ledger.entries.len(), "spares": ledger.spares.len() }));
        if let Some(z) = vacated {
            let a =
                reassign_zone(self.geometry.zone_centroids[z as usize], &ledger.geometry.spare_points(&ledger.spares));
            if let Assignment::Spare(s) = a {
                ledger.spares.remove(&s);
                ledger.expect(s, Some(z), now + self.geometry.eta_ms(s, z));
            }
            out.trace("assign", json!({ "zone": z, "to": a.coverer(), "replacing": self.id }));
            out.send(a.coverer(), Msg::AssignCmd { zone: z });
        }
        self.ledger = Some(ledger);
        self.run_nurse_tick(now, out);
    }

    fn activate_nurse(&mut self, now: TimeMs, out: &mut Outbox) {
        let mut ledger = NurseLedger::new(self.timing.heartbeat_ms, self.timing.miss_limit, self.geometry.clone());
        for &(d, z) in &self.roster.coverage {
            ledger.expect(d, Some(z), now + self.geometry.eta_ms(d, z));
        }
        for &g in &self.roster.gateways {
            ledger.expect(g, None, now);
        }
        ledger.spares = self.roster.spares.iter().copied().collect();
        out.trace("nurse_active", json!({ "monitored": ledger.entries.len(), "spares": ledger.spares.len() }));
        self.ledger = Some(ledger);
        self.run_nurse_tick(now, out);
    }

    fn run_nurse_tick(&mut self, now: TimeMs, out: &mut Outbox) {
        if let Some(l) = &mut self.ledger {
            nurse_tick(l, self.id, now, out);
            out.after(self.timing.heartbeat_ms, Timer::NurseTick);
        }
    }

    fn on_arrive(&mut self, now: TimeMs, zone_intensity: &[f64], out: &mut Outbox) {
        let DroneState::Enroute { zone, eta_ms } = self.state else { return };
        if eta_ms != now {
            return;
        }
        self.state = DroneState::OnStation { zone };
        out.trace("arrive", json!({ "zone": zone, "role": self.role }));
        match self.role {
            DroneRole::Nursing => self.activate_nurse(now, out),
            DroneRole::Gateway(_) => out.after(self.timing.heartbeat_ms, Timer::Heartbeat),
            DroneRole::Coverage => {
                let Some(z) = zone else { return };
                let intensity = zone_intensity.get(z as usize).copied().unwrap_or(0.0);
                out.trace("coverage_up", json!({ "zone": z, "intensity": intensity }));
                let up = Msg::CoverageUp { coverer: self.id, zone: z, intensity, sent_ms: now };
                out.send(ActorId::ALPHA, up.clone());
                if self.nurse != self.id {
                    out.send(self.nurse, up);
                }
                out.after(self.timing.heartbeat_ms, Timer::Heartbeat);
                out.after(self.timing.scan_ms, Timer::ScanTick);
            }
        }
    }

    /// Injected or hazard failure.
    pub fn fail(&mut self, cause: &str, out: &mut Outbox) {
        if self.is_failed() {
            return;
        }
        if let DroneState::OnStation { zone: Some(z) } = self.state {
            out.trace("coverage_down", json!({ "zone": z, "reason": "failed" }));
        }
        self.state = DroneState::Failed;
        out.trace("fail", json!({ "cause": cause }));
    }

    fn hazard(&mut self, rng: &mut RngStream, out: &mut Outbox) -> bool {
        if self.timing.hazard_per_tick > 0.0 && rng.chance(self.timing.hazard_per_tick) {
            self.fail("hazard", out);
            return true;
        }
        false
    }

    pub fn on_timer(
        &mut self,
        now: TimeMs,
        timer: Timer,
        zone_intensity: &[f64],
        rng: &mut RngStream,
        out: &mut Outbox,
    ) {
        if self.is_failed() {
            return;
        }
        match timer {
            Timer::Arrive => self.on_arrive(now, zone_intensity, out),
            Timer::Heartbeat => {
                if self.role == DroneRole::Nursing || !matches!(self.state, DroneState::OnStation { .. }) {
                    return;
                }
                if self.hazard(rng, out) {
                    return;
                }
                out.trace("heartbeat", json!({ "nurse": self.nurse }));
                out.send(self.nurse, Msg::Heartbeat { drone: self.id, sent_ms: now });
                self.last_heartbeat_sent_ms = Some(now);
                out.after(self.timing.heartbeat_ms, Timer::Heartbeat);
            }
            Timer::NurseTick => {
                if self.hazard(rng, out) {
                    return;
                }
                self.run_nurse_tick(now, out);
            }
            Timer::ScanTick => {
                if let (DroneRole::Coverage, DroneState::OnStation { zone: Some(z) }) = (&self.role, self.state) {
                    out.survey(z);
                    out.after(self.timing.scan_ms, Timer::ScanTick);
                }
            }
            Timer::AlphaTick | Timer::TeamTick => {}
        }
    }
}
