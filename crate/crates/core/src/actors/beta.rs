//! Helicopter beta: many-zone surveillance and last-resort nurse.

use std::collections::BTreeSet;

use serde_json::json;

use super::nurse::{nurse_tick, FleetGeometry, NurseLedger};
use super::{Msg, Outbox, Timer};
use crate::ids::{ActorId, TimeMs, ZoneId};

#[derive(Debug, Clone)]
pub struct Beta {
    pub zones: BTreeSet<ZoneId>,
    pub ledger: Option<NurseLedger>,
    pub geometry: FleetGeometry,
    pub heartbeat_ms: TimeMs,
    pub miss_limit: u32,
    pub scan_ms: TimeMs,
    scanning: bool,
}

impl Beta {
    pub fn new(geometry: FleetGeometry, heartbeat_ms: TimeMs, miss_limit: u32, scan_ms: TimeMs) -> Self {
        Self { zones: BTreeSet::new(), ledger: None, geometry, heartbeat_ms, miss_limit, scan_ms, scanning: false }
    }

    pub fn is_nurse(&self) -> bool {
        self.ledger.is_some()
    }

    /// Surveillance starts immediately: beta does not fly to a zone.
    pub fn cover(&mut self, now: TimeMs, zone: ZoneId, zone_intensity: &[f64], out: &mut Outbox) {
        if !self.zones.insert(zone) {
            return;
        }
        let intensity = zone_intensity.get(zone as usize).copied().unwrap_or(0.0);
        out.trace("beta_cover", json!({ "zone": zone }));
        out.trace("coverage_up", json!({ "zone": zone, "intensity": intensity }));
        out.send(ActorId::ALPHA, Msg::CoverageUp { coverer: ActorId::BETA, zone, intensity, sent_ms: now });
        if !self.scanning {
            self.scanning = true;
            out.after(self.scan_ms, Timer::ScanTick);
        }
    }

    pub fn on_message(&mut self, now: TimeMs, msg: &Msg, zone_intensity: &[f64], out: &mut Outbox) {
        match msg {
            Msg::AssignCmd { zone } => self.cover(now, *zone, zone_intensity, out),
            Msg::PromoteNurse { handover } => {
                if self.ledger.is_some() {
                    return;
                }
                let l = NurseLedger::from_handover(self.heartbeat_ms, self.miss_limit, self.geometry.clone(), handover);
                out.trace("nurse_promote", json!({ "monitored": l.entries.len(), "spares": l.spares.len() }));
                self.ledger = Some(l);
                self.nurse_tick(now, zone_intensity, out);
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
            _ => {}
        }
    }

    fn nurse_tick(&mut self, now: TimeMs, zone_intensity: &[f64], out: &mut Outbox) {
        let Some(l) = &mut self.ledger else { return };
        let own = nurse_tick(l, ActorId::BETA, now, out);
        out.after(self.heartbeat_ms, Timer::NurseTick);
        for zone in own {
            self.cover(now, zone, zone_intensity, out);
        }
    }

    pub fn on_timer(&mut self, now: TimeMs, timer: Timer, zone_intensity: &[f64], out: &mut Outbox) {
        match timer {
            Timer::NurseTick => self.nurse_tick(now, zone_intensity, out),
            Timer::ScanTick => {
                for &z in &self.zones {
                    out.survey(z);
                }
                out.after(self.scan_ms, Timer::ScanTick);
            }
            _ => {}
        }
    }
}
