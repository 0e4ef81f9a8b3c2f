//! Helicopter alpha: activation, dual relay to the crisis center and the
//! watchdog over the nursing role.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use super::drone::Roster;
use super::nurse::{FleetGeometry, Handover, Monitored};
use super::{Msg, Outbox, Timer};
use crate::ids::{ActorId, TimeMs, ZoneId};

#[derive(Debug, Clone)]
pub struct Alpha {
    pub roster: Roster,
    pub nursing: ActorId,
    pub zone_count: u32,
    pub geometry: FleetGeometry,
    pub heartbeat_ms: TimeMs,
    pub miss_limit: u32,
    pub activated: bool,
    pub nurse_last_ms: TimeMs,
    /// Latest coverer reported per zone.
    pub coverers: BTreeMap<ZoneId, ActorId>,
    /// Drones known to be on station over a zone.
    pub on_station: BTreeSet<ActorId>,
    pub failed: BTreeSet<ActorId>,
    pub spares: BTreeSet<ActorId>,
}

impl Alpha {
    pub fn new(
        roster: Roster,
        nursing: ActorId,
        zone_count: u32,
        geometry: FleetGeometry,
        heartbeat_ms: TimeMs,
        miss_limit: u32,
    ) -> Self {
        let spares = roster.spares.iter().copied().collect();
        Self {
            roster,
            nursing,
            zone_count,
            geometry,
            heartbeat_ms,
            miss_limit,
            activated: false,
            nurse_last_ms: 0,
            coverers: BTreeMap::new(),
            on_station: BTreeSet::new(),
            failed: BTreeSet::new(),
            spares,
        }
    }

    fn fleet(&self) -> impl Iterator<Item = ActorId> + '_ {
        let mut all: Vec<ActorId> = self.roster.coverage.iter().map(|&(d, _)| d).collect();
        all.extend(self.roster.gateways.iter().copied());
        all.extend(self.roster.spares.iter().copied());
        all.push(self.nursing);
        all.sort();
        all.dedup();
        all.into_iter()
    }

    pub fn on_message(&mut self, now: TimeMs, src: ActorId, msg: &Msg, out: &mut Outbox) {
        if msg.is_report() {
            out.relay_dual(ActorId::CRISIS, Msg::Forward { origin: src, report: Box::new(msg.clone()) });
        }
        match msg {
            Msg::EdgeReport { edge, intensity, .. } if !self.activated => self.activate(now, *edge, *intensity, out),
            Msg::CoverageUp { coverer, zone, .. } => {
                self.coverers.insert(*zone, *coverer);
                if coverer.class == crate::ids::ActorClass::Drone {
                    self.on_station.insert(*coverer);
                }
                self.spares.remove(coverer);
            }
            Msg::FailureNotice { drone, zone, assigned } => {
                self.failed.insert(*drone);
                self.on_station.remove(drone);
                if let Some(z) = zone {
                    if self.coverers.get(z) == Some(drone) {
                        self.coverers.remove(z);
                    }
                }
                if let Some(a) = assigned {
                    self.spares.remove(a);
                }
            }
            Msg::NurseSummary { nurse, sent_ms, .. } if *nurse == self.nursing => {
                self.nurse_last_ms = self.nurse_last_ms.max(*sent_ms);
            }
            _ => {}
        }
    }

    fn activate(&mut self, now: TimeMs, edge: ActorId, intensity: f64, out: &mut Outbox) {
        self.activated = true;
        self.nurse_last_ms = now;
        out.trace("activate", json!({ "edge": edge, "intensity": intensity }));
        let spares = self.spares.clone();
        for d in self.fleet().filter(|d| *d != ActorId::BETA && !spares.contains(d)).collect::<Vec<_>>() {
            out.send(d, Msg::LaunchCmd);
        }
        let planned: BTreeSet<ZoneId> = self.roster.coverage.iter().map(|&(_, z)| z).collect();
        for zone in (0..self.zone_count).filter(|z| !planned.contains(z)) {
            out.trace("assign", json!({ "zone": zone, "to": ActorId::BETA, "replacing": null }));
            out.send(ActorId::BETA, Msg::AssignCmd { zone });
        }
        out.after(self.heartbeat_ms, Timer::AlphaTick);
    }

    /// Nurse watchdog: the same strict m-miss rule the nurse applies to drones.
    pub fn on_tick(&mut self, now: TimeMs, out: &mut Outbox) {
        if now.saturating_sub(self.nurse_last_ms) > self.miss_limit as u64 * self.heartbeat_ms {
            self.failover(now, out);
        }
        out.after(self.heartbeat_ms, Timer::AlphaTick);
    }

    fn failover(&mut self, now: TimeMs, out: &mut Outbox) {
        let dead = self.nursing;
        self.failed.insert(dead);
        self.on_station.remove(&dead);
        let promoted = self.on_station.iter().copied().find(|d| !self.failed.contains(d));
        let mut monitored: Vec<Monitored> = Vec::new();
        for (&zone, &d) in &self.coverers {
            if d.class == crate::ids::ActorClass::Drone && Some(d) != promoted && !self.failed.contains(&d) {
                monitored.push(Monitored { drone: d, zone: Some(zone), last_seen_ms: now });
            }
        }
        for &g in &self.roster.gateways {
            if !self.failed.contains(&g) {
                monitored.push(Monitored { drone: g, zone: None, last_seen_ms: now });
            }
        }
        // The promoted drone hands its own zone to a spare once it has left
        // it, so the zone never has two coverers.
        let new_nurse = match promoted {
            Some(p) => {
                self.on_station.remove(&p);
                self.coverers.retain(|_, c| *c != p);
                p
            }
            None => ActorId::BETA,
        };
        monitored.sort_by_key(|m| m.drone);
        let handover = Handover { monitored, spares: self.spares.iter().copied().collect() };
        out.trace("nurse_failover", json!({ "failed": dead, "promoted": new_nurse }));
        out.send(new_nurse, Msg::PromoteNurse { handover });
        for d in self.fleet().filter(|d| !self.failed.contains(d) && *d != new_nurse).collect::<Vec<_>>() {
            out.send(d, Msg::NurseChanged { nurse: new_nurse });
        }
        self.nursing = new_nurse;
        self.nurse_last_ms = now;
    }
}
