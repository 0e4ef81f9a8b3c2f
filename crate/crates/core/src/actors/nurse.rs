//! Nursing-role health monitoring and zone reassignment.
//!
//! The nurse keeps the time of the most recent heartbeat *sent* by each
//! monitored drone. A drone is declared failed on the first tick where
//! `now - last_seen > miss_limit * h` (strict). Because ticks come every
//! `h`, detection happens no later than `miss_limit * h + h` after the
//! last heartbeat the drone managed to send.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use serde_json::json;

use super::{flight_ms, Msg, Outbox};
use crate::ids::{ActorId, TimeMs, ZoneId};
use crate::world::Point;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum Assignment {
    Spare(ActorId),
    Beta,
}

impl Assignment {
    pub fn coverer(self) -> ActorId {
        match self {
            Assignment::Spare(id) => id,
            Assignment::Beta => ActorId::BETA,
        }
    }
}

/// Nearest docked spare to the zone centroid, ties to the smaller index;
/// helicopter beta when no spare is left.
pub fn reassign_zone(centroid: Point, spares: &BTreeMap<ActorId, Point>) -> Assignment {
    spares
        .iter()
        .map(|(&id, &station)| (station.dist(centroid), id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, id)| Assignment::Spare(id))
        .unwrap_or(Assignment::Beta)
}

/// Static geometry every fleet manager knows from the deployment plan.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FleetGeometry {
    pub zone_centroids: Vec<Point>,
    pub stations: BTreeMap<ActorId, Point>,
    pub speed_mps: f64,
}

impl FleetGeometry {
    pub fn eta_ms(&self, drone: ActorId, zone: ZoneId) -> TimeMs {
        let from = self.stations.get(&drone).copied().unwrap_or(Point::new(0.0, 0.0));
        flight_ms(from.dist(self.zone_centroids[zone as usize]), self.speed_mps)
    }

    pub fn spare_points(&self, spares: &BTreeSet<ActorId>) -> BTreeMap<ActorId, Point> {
        spares.iter().filter_map(|id| self.stations.get(id).map(|&p| (*id, p))).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Monitored {
    pub drone: ActorId,
    pub zone: Option<ZoneId>,
    pub last_seen_ms: TimeMs,
}

/// State handed to a newly promoted nurse.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Handover {
    pub monitored: Vec<Monitored>,
    pub spares: Vec<ActorId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailureNotice {
    pub drone: ActorId,
    pub zone: Option<ZoneId>,
    pub assigned: Option<Assignment>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NurseLedger {
    pub h_ms: TimeMs,
    pub miss_limit: u32,
    pub entries: BTreeMap<ActorId, Monitored>,
    pub spares: BTreeSet<ActorId>,
    pub declared_failed: BTreeSet<ActorId>,
    pub geometry: FleetGeometry,
}

impl NurseLedger {
    pub fn new(h_ms: TimeMs, miss_limit: u32, geometry: FleetGeometry) -> Self {
        Self {
            h_ms,
            miss_limit,
            entries: BTreeMap::new(),
            spares: BTreeSet::new(),
            declared_failed: BTreeSet::new(),
            geometry,
        }
    }

    pub fn from_handover(h_ms: TimeMs, miss_limit: u32, geometry: FleetGeometry, handover: &Handover) -> Self {
        let mut l = Self::new(h_ms, miss_limit, geometry);
        for m in &handover.monitored {
            l.entries.insert(m.drone, *m);
        }
        l.spares = handover.spares.iter().copied().collect();
        l
    }

    /// Register a drone expected to check in by `expected_ms` unless it already did.
    pub fn expect(&mut self, drone: ActorId, zone: Option<ZoneId>, expected_ms: TimeMs) {
        if self.declared_failed.contains(&drone) {
            return;
        }
        let e = self.entries.entry(drone).or_insert(Monitored { drone, zone, last_seen_ms: expected_ms });
        e.last_seen_ms = e.last_seen_ms.max(expected_ms);
    }

    pub fn on_heartbeat(&mut self, drone: ActorId, sent_ms: TimeMs) {
        if let Some(e) = self.entries.get_mut(&drone) {
            e.last_seen_ms = e.last_seen_ms.max(sent_ms);
        }
    }

    pub fn on_coverage_up(&mut self, drone: ActorId, zone: ZoneId, sent_ms: TimeMs) {
        if self.declared_failed.contains(&drone) {
            return;
        }
        let e = self.entries.entry(drone).or_insert(Monitored { drone, zone: Some(zone), last_seen_ms: sent_ms });
        e.zone = Some(zone);
        e.last_seen_ms = e.last_seen_ms.max(sent_ms);
    }

    pub fn is_expired(&self, m: &Monitored, now: TimeMs) -> bool {
        now.saturating_sub(m.last_seen_ms) > self.miss_limit as u64 * self.h_ms
    }

    /// Declare expired drones failed and reassign their zones.
    pub fn tick(&mut self, now: TimeMs) -> Vec<FailureNotice> {
        let expired: Vec<Monitored> = self.entries.values().filter(|m| self.is_expired(m, now)).copied().collect();
        let mut notices = Vec::new();
        for m in expired {
            self.entries.remove(&m.drone);
            self.declared_failed.insert(m.drone);
            self.spares.remove(&m.drone);
            let assigned = m.zone.map(|zone| {
                let a = reassign_zone(
                    self.geometry.zone_centroids[zone as usize],
                    &self.geometry.spare_points(&self.spares),
                );
                if let Assignment::Spare(s) = a {
                    self.spares.remove(&s);
                    let eta = self.geometry.eta_ms(s, zone);
                    self.entries.insert(s, Monitored { drone: s, zone: Some(zone), last_seen_ms: now + eta });
                }
                a
            });
            notices.push(FailureNotice { drone: m.drone, zone: m.zone, assigned });
        }
        notices
    }
}

/// One nurse tick: send a failure notice to alpha for every expired drone,
/// command the chosen replacement, and report the summary. Zones that fall
/// to helicopter beta are returned instead of commanded when beta itself is
/// the nurse.
pub fn nurse_tick(ledger: &mut NurseLedger, me: ActorId, now: TimeMs, out: &mut Outbox) -> Vec<ZoneId> {
    let mut own = Vec::new();
    for n in ledger.tick(now) {
        let assigned = n.assigned.map(Assignment::coverer);
        out.trace("failure_notice", json!({ "drone": n.drone, "zone": n.zone, "assigned": assigned }));
        out.send(ActorId::ALPHA, Msg::FailureNotice { drone: n.drone, zone: n.zone, assigned });
        if let (Some(zone), Some(to)) = (n.zone, assigned) {
            out.trace("assign", json!({ "zone": zone, "to": to, "replacing": n.drone }));
            if to == me {
                own.push(zone);
            } else {
                out.send(to, Msg::AssignCmd { zone });
            }
        }
    }
    out.send(ActorId::ALPHA, Msg::NurseSummary { nurse: me, sent_ms: now, monitored: ledger.entries.len() as u32 });
    own
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geometry() -> FleetGeometry {
        let mut stations = BTreeMap::new();
        stations.insert(ActorId::drone(4), Point::new(0.0, 100.0));
        stations.insert(ActorId::drone(7), Point::new(0.0, -100.0));
        FleetGeometry { zone_centroids: vec![Point::new(0.0, 0.0)], stations, speed_mps: 20.0 }
    }

    #[test]
    fn single_spare_is_chosen() {
        let mut spares = BTreeMap::new();
        spares.insert(ActorId::drone(7), Point::new(50.0, 0.0));
        assert_eq!(reassign_zone(Point::new(0.0, 0.0), &spares), Assignment::Spare(ActorId::drone(7)));
        assert_eq!(reassign_zone(Point::new(0.0, 0.0), &BTreeMap::new()), Assignment::Beta);
    }

    #[test]
    fn equidistant_spares_prefer_lower_index() {
        let g = geometry();
        assert_eq!(reassign_zone(Point::new(0.0, 0.0), &g.stations), Assignment::Spare(ActorId::drone(4)));
    }

    #[test]
    fn miss_rule_is_strict() {
        let mut l = NurseLedger::new(5000, 3, geometry());
        l.spares = [ActorId::drone(4), ActorId::drone(7)].into();
        l.expect(ActorId::drone(1), Some(0), 1000);
        assert!(l.tick(16_000).is_empty());
        // one missed heartbeat is nothing
        l.on_heartbeat(ActorId::drone(1), 16_000);
        assert!(l.tick(26_000).is_empty());
        assert!(l.tick(31_000).is_empty());
        let n = l.tick(31_001);
        assert_eq!(n.len(), 1);
        assert_eq!(n[0].assigned, Some(Assignment::Spare(ActorId::drone(4))));
        // spare now monitored with its expected arrival
        assert_eq!(l.entries[&ActorId::drone(4)].last_seen_ms, 31_001 + 5000);
        assert!(l.declared_failed.contains(&ActorId::drone(1)));
    }

    #[test]
    fn cascade_reaches_beta() {
        let mut l = NurseLedger::new(1000, 1, geometry());
        l.spares = [ActorId::drone(4)].into();
        l.expect(ActorId::drone(1), Some(0), 0);
        l.expect(ActorId::drone(2), Some(0), 0);
        let n = l.tick(1001);
        assert_eq!(n[0].assigned, Some(Assignment::Spare(ActorId::drone(4))));
        assert_eq!(n[1].assigned, Some(Assignment::Beta));
    }

    #[test]
    fn failed_drones_are_not_readmitted() {
        let mut l = NurseLedger::new(1000, 1, geometry());
        l.expect(ActorId::drone(1), None, 0);
        assert_eq!(l.tick(2000).len(), 1);
        l.on_coverage_up(ActorId::drone(1), 0, 2100);
        assert!(l.entries.is_empty());
    }

    #[test]
    fn tick_commands_replacement_and_reports() {
        let mut l = NurseLedger::new(1000, 1, geometry());
        l.spares = [ActorId::drone(7)].into();
        l.expect(ActorId::drone(1), Some(0), 0);
        let mut out = Outbox::new();
        let own = nurse_tick(&mut l, ActorId::drone(9), 1001, &mut out);
        assert!(own.is_empty());
        let sends: Vec<_> = out.sends().map(|(d, m)| (d, m.kind())).collect();
        assert_eq!(
            sends,
            vec![
                (ActorId::ALPHA, "failure_notice"),
                (ActorId::drone(7), "assign_cmd"),
                (ActorId::ALPHA, "nurse_summary")
            ]
        );
    }

    #[test]
    fn beta_nurse_keeps_zones_for_itself() {
        let mut l = NurseLedger::new(1000, 1, geometry());
        l.expect(ActorId::drone(1), Some(0), 0);
        let mut out = Outbox::new();
        assert_eq!(nurse_tick(&mut l, ActorId::BETA, 1001, &mut out), vec![0]);
        assert!(out.sends().all(|(d, _)| d == ActorId::ALPHA));
    }
}
