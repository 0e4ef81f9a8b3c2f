//! Crisis management center: alarm escalation, world picture and team
//! dispatch. Duplicate deliveries are filtered before this handler runs.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use super::{AlarmLevel, Msg, Outbox, TeamReport};
use crate::ids::{ActorId, CellId, EdgeId, TimeMs};
use crate::postquake::{priority_score, rank_sites, SiteView};
use crate::world::CollapseCurve;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeamTask {
    Idle,
    Busy(CellId),
    Blocked(CellId),
}

impl TeamTask {
    fn site(self) -> Option<CellId> {
        match self {
            TeamTask::Idle => None,
            TeamTask::Busy(s) | TeamTask::Blocked(s) => Some(s),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Crisis {
    pub alarm: AlarmLevel,
    pub red_threshold: f64,
    pub curve: CollapseCurve,
    /// Reporting actors that confirmed intensity at or above the red threshold.
    pub confirmations: BTreeSet<ActorId>,
    pub sites: BTreeMap<CellId, SiteView>,
    pub congested: BTreeSet<EdgeId>,
    pub teams: BTreeMap<ActorId, TeamTask>,
    pub police: Vec<ActorId>,
    pub ground_stations: Vec<ActorId>,
}

impl Crisis {
    pub fn new(
        red_threshold: f64,
        curve: CollapseCurve,
        teams: &[ActorId],
        police: Vec<ActorId>,
        ground_stations: Vec<ActorId>,
    ) -> Self {
        Self {
            alarm: AlarmLevel::Green,
            red_threshold,
            curve,
            confirmations: BTreeSet::new(),
            sites: BTreeMap::new(),
            congested: BTreeSet::new(),
            teams: teams.iter().map(|&t| (t, TeamTask::Idle)).collect(),
            police,
            ground_stations,
        }
    }

    fn raise(&mut self, level: AlarmLevel, out: &mut Outbox) {
        while self.alarm < level {
            let next = if self.alarm == AlarmLevel::Green { AlarmLevel::Yellow } else { AlarmLevel::Red };
            debug_assert!(self.alarm.can_become(next));
            self.alarm = next;
            if next == AlarmLevel::Red {
                out.trace("red", json!({ "sources": self.confirmations }));
                for &d in self.police.iter().chain(&self.ground_stations) {
                    out.trace("notify", json!({ "to": d, "level": AlarmLevel::Red }));
                    out.send(d, Msg::Notify { level: AlarmLevel::Red });
                }
            } else {
                out.trace("alarm", json!({ "level": next }));
            }
        }
    }

    pub fn on_message(&mut self, now: TimeMs, msg: &Msg, out: &mut Outbox) {
        match msg {
            Msg::Forward { report, .. } => self.on_report(now, report, out),
            Msg::TeamStatus { team, report } => match *report {
                TeamReport::Complete { site, rescued_total } => {
                    if let Some(v) = self.sites.get_mut(&site) {
                        v.rescued = v.rescued.max(rescued_total);
                    }
                    self.teams.insert(*team, TeamTask::Idle);
                }
                TeamReport::Blocked { site, .. } => {
                    self.teams.insert(*team, TeamTask::Blocked(site));
                }
            },
            _ => {}
        }
        if self.alarm == AlarmLevel::Red {
            self.dispatch(out);
        }
    }

    fn on_report(&mut self, now: TimeMs, report: &Msg, out: &mut Outbox) {
        match report {
            Msg::EdgeReport { .. } => self.raise(AlarmLevel::Yellow, out),
            Msg::CoverageUp { coverer, intensity, .. } => {
                if *intensity >= self.red_threshold {
                    self.confirmations.insert(*coverer);
                }
                if self.confirmations.len() >= 2 {
                    self.raise(AlarmLevel::Red, out);
                }
            }
            Msg::ScanReport { sites, .. } => {
                for s in sites {
                    let v = self.sites.entry(s.cell).or_insert(SiteView {
                        cell: s.cell,
                        detected: 0,
                        rescued: 0,
                        first_detected_ms: now,
                        intensity: s.intensity,
                    });
                    v.detected += s.new;
                    v.intensity = s.intensity;
                }
            }
            Msg::CongestionReport { edges, .. } => self.congested.extend(edges.iter().copied()),
            Msg::Advisory { .. } => {
                for (&team, task) in self.teams.iter_mut() {
                    if let TeamTask::Blocked(site) = *task {
                        *task = TeamTask::Busy(site);
                        out.send(team, Msg::Retry);
                    }
                }
            }
            _ => {}
        }
    }

    fn dispatch(&mut self, out: &mut Outbox) {
        let taken: BTreeSet<CellId> = self.teams.values().filter_map(|t| t.site()).collect();
        let open: Vec<SiteView> =
            self.sites.values().filter(|v| !taken.contains(&v.cell) && v.detected > v.rescued).cloned().collect();
        let mut ranked = rank_sites(&open, self.curve).into_iter();
        let idle: Vec<ActorId> = self.teams.iter().filter(|(_, t)| **t == TeamTask::Idle).map(|(&id, _)| id).collect();
        for team in idle {
            let Some(site) = ranked.next() else { break };
            let score = priority_score(&self.sites[&site], self.curve);
            out.trace("dispatch", json!({ "team": team, "site": site, "score": score }));
            out.send(team, Msg::Dispatch { site });
            self.teams.insert(team, TeamTask::Busy(site));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actors::ScanSighting;

    fn crisis(teams: u32) -> Crisis {
        let teams: Vec<_> = (0..teams).map(ActorId::team).collect();
        Crisis::new(4.0, CollapseCurve::default(), &teams, vec![ActorId::POLICE], vec![ActorId::ground(0)])
    }

    fn fwd(report: Msg) -> Msg {
        Msg::Forward { origin: ActorId::ALPHA, report: Box::new(report) }
    }

    fn up(d: u32, intensity: f64) -> Msg {
        fwd(Msg::CoverageUp { coverer: ActorId::drone(d), zone: d, intensity, sent_ms: 0 })
    }

    #[test]
    fn one_source_is_not_enough() {
        let mut c = crisis(0);
        let mut out = Outbox::new();
        c.on_message(0, &fwd(Msg::EdgeReport { edge: ActorId::edge(0), intensity: 9.0, cells: vec![] }), &mut out);
        assert_eq!(c.alarm, AlarmLevel::Yellow);
        c.on_message(0, &up(1, 5.0), &mut out);
        c.on_message(0, &up(1, 6.0), &mut out);
        c.on_message(0, &up(2, 3.9), &mut out);
        assert_eq!(c.alarm, AlarmLevel::Yellow);
        c.on_message(0, &up(3, 4.0), &mut out);
        assert_eq!(c.alarm, AlarmLevel::Red);
        c.on_message(0, &up(4, 8.0), &mut out);
        assert_eq!(out.traced("red"), 1);
        assert_eq!(out.traced("notify"), 2);
    }

    #[test]
    fn red_from_green_passes_through_yellow() {
        let mut c = crisis(0);
        let mut out = Outbox::new();
        c.on_message(0, &up(1, 5.0), &mut out);
        c.on_message(0, &up(2, 5.0), &mut out);
        assert_eq!(out.traced("alarm"), 1);
        assert_eq!(out.traced("red"), 1);
    }

    #[test]
    fn teams_take_top_sites_in_order() {
        let mut c = crisis(3);
        let mut out = Outbox::new();
        let sites: Vec<_> = [(10, 1), (11, 5), (12, 3), (13, 4), (14, 2)]
            .into_iter()
            .map(|(cell, new)| ScanSighting { cell, new, intensity: 6.0 })
            .collect();
        c.on_message(0, &fwd(Msg::ScanReport { scanner: ActorId::drone(0), sites }), &mut out);
        c.on_message(0, &up(1, 5.0), &mut out);
        let mut out = Outbox::new();
        c.on_message(0, &up(2, 5.0), &mut out);
        let dispatched: Vec<_> = out
            .sends()
            .filter_map(|(d, m)| if let Msg::Dispatch { site } = m { Some((d, *site)) } else { None })
            .collect();
        assert_eq!(dispatched, vec![(ActorId::team(0), 11), (ActorId::team(1), 13), (ActorId::team(2), 12)]);
    }
}
