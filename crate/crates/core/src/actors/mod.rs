//! Protocol state machines for every node class of the rescue network.
//!
//! Handlers take their own state, the incoming event and (when they need
//! randomness) their own RNG stream, and push effects into an [`Outbox`].
//! The simulation applies those effects in order: sends go through the
//! network, timers go on the event queue, trace entries go to the trace.
//! No actor reads another actor's state.

pub mod alpha;
pub mod beta;
pub mod crisis;
pub mod drone;
pub mod edge;
pub mod nurse;
pub mod rescue;
pub mod sensor;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ids::{ActorId, CellId, EdgeId, TimeMs, ZoneId};
use crate::postquake::ScanHit;

pub use nurse::{reassign_zone, Assignment, Handover};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmLevel {
    Green,
    Yellow,
    Red,
}

impl AlarmLevel {
    /// Permitted transitions: one step up, or all-clear back to Green.
    pub fn can_become(self, next: AlarmLevel) -> bool {
        matches!(
            (self, next),
            (AlarmLevel::Green, AlarmLevel::Yellow) | (AlarmLevel::Yellow, AlarmLevel::Red) | (_, AlarmLevel::Green)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TeamReport {
    Complete { site: CellId, rescued_total: u32 },
    Blocked { site: CellId, at: CellId },
}

/// Every message kind carried by the network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Msg {
    Alert { sensor: ActorId, cell: CellId, measured: f64 },
    EdgeReport { edge: ActorId, intensity: f64, cells: Vec<CellId> },
    LaunchCmd,
    EarlyWarning,
    CoverageUp { coverer: ActorId, zone: ZoneId, intensity: f64, sent_ms: TimeMs },
    Heartbeat { drone: ActorId, sent_ms: TimeMs },
    NurseSummary { nurse: ActorId, sent_ms: TimeMs, monitored: u32 },
    FailureNotice { drone: ActorId, zone: Option<ZoneId>, assigned: Option<ActorId> },
    AssignCmd { zone: ZoneId },
    PromoteNurse { handover: Handover },
    NurseChanged { nurse: ActorId },
    ScanReport { scanner: ActorId, sites: Vec<ScanSighting> },
    CongestionReport { scanner: ActorId, edges: Vec<EdgeId> },
    Advisory { scanner: ActorId, origin: CellId, dest: CellId, path: Vec<EdgeId> },
    Forward { origin: ActorId, report: Box<Msg> },
    Dispatch { site: CellId },
    Retry,
    TeamStatus { team: ActorId, report: TeamReport },
    Notify { level: AlarmLevel },
}

/// A scan hit plus the intensity the scanner measured at that cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanSighting {
    pub cell: CellId,
    pub new: u32,
    pub intensity: f64,
}

impl ScanSighting {
    pub fn from_hit(hit: ScanHit, intensity: f64) -> Self {
        Self { cell: hit.cell, new: hit.new, intensity }
    }
}

impl Msg {
    pub fn kind(&self) -> &'static str {
        match self {
            Msg::Alert { .. } => "alert",
            Msg::EdgeReport { .. } => "edge_report",
            Msg::LaunchCmd => "launch_cmd",
            Msg::EarlyWarning => "early_warning",
            Msg::CoverageUp { .. } => "coverage_up",
            Msg::Heartbeat { .. } => "heartbeat",
            Msg::NurseSummary { .. } => "nurse_summary",
            Msg::FailureNotice { .. } => "failure_notice",
            Msg::AssignCmd { .. } => "assign_cmd",
            Msg::PromoteNurse { .. } => "promote_nurse",
            Msg::NurseChanged { .. } => "nurse_changed",
            Msg::ScanReport { .. } => "scan_report",
            Msg::CongestionReport { .. } => "congestion_report",
            Msg::Advisory { .. } => "advisory",
            Msg::Forward { .. } => "forward",
            Msg::Dispatch { .. } => "dispatch",
            Msg::Retry => "retry",
            Msg::TeamStatus { .. } => "team_status",
            Msg::Notify { .. } => "notify",
        }
    }

    /// Reports that helicopter alpha relays to the crisis center.
    pub fn is_report(&self) -> bool {
        matches!(
            self,
            Msg::EdgeReport { .. }
                | Msg::CoverageUp { .. }
                | Msg::FailureNotice { .. }
                | Msg::ScanReport { .. }
                | Msg::CongestionReport { .. }
                | Msg::Advisory { .. }
        )
    }

    pub fn body(&self) -> Value {
        serde_json::to_value(self).expect("messages always serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Timer {
    Arrive,
    Heartbeat,
    NurseTick,
    AlphaTick,
    ScanTick,
    TeamTick,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Send {
        dst: ActorId,
        msg: Msg,
    },
    /// Same message twice under one msg_id: terrestrial copy, then satellite copy.
    DualRelay {
        dst: ActorId,
        msg: Msg,
    },
    Timer {
        delay_ms: TimeMs,
        timer: Timer,
    },
    /// Ask the environment to run the post-quake duties over one zone.
    Survey {
        zone: ZoneId,
    },
    Trace {
        kind: &'static str,
        data: Value,
    },
}

#[derive(Debug, Default)]
pub struct Outbox {
    effects: Vec<Effect>,
}

impl Outbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn send(&mut self, dst: ActorId, msg: Msg) {
        self.effects.push(Effect::Send { dst, msg });
    }

    pub fn relay_dual(&mut self, dst: ActorId, msg: Msg) {
        self.effects.push(Effect::DualRelay { dst, msg });
    }

    pub fn after(&mut self, delay_ms: TimeMs, timer: Timer) {
        self.effects.push(Effect::Timer { delay_ms, timer });
    }

    pub fn survey(&mut self, zone: ZoneId) {
        self.effects.push(Effect::Survey { zone });
    }

    pub fn trace(&mut self, kind: &'static str, data: Value) {
        self.effects.push(Effect::Trace { kind, data });
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn drain(&mut self) -> std::vec::Drain<'_, Effect> {
        self.effects.drain(..)
    }

    pub fn sends(&self) -> impl Iterator<Item = (ActorId, &Msg)> {
        self.effects.iter().filter_map(|e| match e {
            Effect::Send { dst, msg } | Effect::DualRelay { dst, msg } => Some((*dst, msg)),
            _ => None,
        })
    }

    pub fn timers(&self) -> impl Iterator<Item = (TimeMs, Timer)> + '_ {
        self.effects.iter().filter_map(|e| match e {
            Effect::Timer { delay_ms, timer } => Some((*delay_ms, *timer)),
            _ => None,
        })
    }

    pub fn traced(&self, kind: &str) -> usize {
        self.effects.iter().filter(|e| matches!(e, Effect::Trace { kind: k, .. } if *k == kind)).count()
    }
}

/// Protocol parameters shared by the actors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    pub heartbeat_ms: TimeMs,
    pub miss_limit: u32,
    pub edge_k: usize,
    pub edge_window_ms: TimeMs,
    pub drone_speed_mps: f64,
    pub red_threshold: f64,
    pub scan_ms: TimeMs,
    pub scan_radius_cells: f64,
    pub detect_prob: f64,
    pub rescue_rate: u32,
    pub team_tick_ms: TimeMs,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            heartbeat_ms: 5000,
            miss_limit: 3,
            edge_k: 3,
            edge_window_ms: 2000,
            drone_speed_mps: 20.0,
            red_threshold: 4.0,
            scan_ms: 5000,
            scan_radius_cells: 2.0,
            detect_prob: 0.3,
            rescue_rate: 5,
            team_tick_ms: 10_000,
        }
    }
}

/// Flight time in whole milliseconds, rounded up.
pub fn flight_ms(distance_m: f64, speed_mps: f64) -> TimeMs {
    (distance_m * 1000.0 / speed_mps).ceil() as TimeMs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alarm_transitions() {
        use AlarmLevel::*;
        assert!(Green.can_become(Yellow));
        assert!(Yellow.can_become(Red));
        assert!(Red.can_become(Green));
        assert!(!Green.can_become(Red));
        assert!(!Red.can_become(Yellow));
    }

    #[test]
    fn message_bodies_are_tagged() {
        let m = Msg::Heartbeat { drone: ActorId::drone(2), sent_ms: 10 };
        assert_eq!(m.body(), serde_json::json!({"type": "heartbeat", "drone": "drone:2", "sent_ms": 10}));
        let back: Msg = serde_json::from_value(m.body()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn flight_time_rounds_up() {
        assert_eq!(flight_ms(1000.0, 20.0), 50_000);
        assert_eq!(flight_ms(0.0, 20.0), 0);
        assert_eq!(flight_ms(1.0, 3.0), 334);
    }
}
