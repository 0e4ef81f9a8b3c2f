//! Ground rescue teams: follow a safe route one road edge per tick, then
//! dig out detected survivors at a fixed rate.

use std::collections::BTreeSet;

use serde_json::json;

use super::{Msg, Outbox, TeamReport, Timer};
use crate::ids::{ActorId, CellId, EdgeId, TimeMs};
use crate::postquake::compute_safe_route;
use crate::world::{RoadGraph, SurvivorSite};

#[derive(Debug, Clone, PartialEq)]
pub struct RescueTeam {
    pub id: ActorId,
    pub at: CellId,
    pub target: Option<CellId>,
    pub blocked: bool,
    pub rescue_rate: u32,
    pub tick_ms: TimeMs,
    ticking: bool,
}

impl RescueTeam {
    pub fn new(id: ActorId, at: CellId, rescue_rate: u32, tick_ms: TimeMs) -> Self {
        Self { id, at, target: None, blocked: false, rescue_rate, tick_ms, ticking: false }
    }

    fn arm(&mut self, out: &mut Outbox) {
        if !self.ticking {
            self.ticking = true;
            out.after(self.tick_ms, Timer::TeamTick);
        }
    }

    pub fn on_message(&mut self, msg: &Msg, out: &mut Outbox) {
        match msg {
            Msg::Dispatch { site } => {
                self.target = Some(*site);
                self.blocked = false;
                self.arm(out);
            }
            Msg::Retry if self.blocked => {
                self.blocked = false;
                self.arm(out);
            }
            _ => {}
        }
    }

    /// One movement tick. The team only ever steps onto an edge that is
    /// unblocked and not congested right now.
    pub fn on_tick(
        &mut self,
        now: TimeMs,
        g: &RoadGraph,
        congested: &BTreeSet<EdgeId>,
        sites: &mut [SurvivorSite],
        out: &mut Outbox,
    ) {
        self.ticking = false;
        let Some(target) = self.target else { return };
        if self.blocked {
            return;
        }
        if self.at != target {
            let goal = BTreeSet::from([target]);
            let Some(route) = compute_safe_route(g, self.at, &goal, congested, now) else {
                self.blocked = true;
                out.trace("blocked", json!({ "site": target, "at": self.at }));
                out.send(
                    ActorId::CRISIS,
                    Msg::TeamStatus { team: self.id, report: TeamReport::Blocked { site: target, at: self.at } },
                );
                return;
            };
            let edge = route.path[0];
            self.at = g.edge(edge).other(self.at);
            out.trace("team_move", json!({ "edge": edge, "to": self.at, "remaining": route.path.len() - 1 }));
        }
        if self.at == target {
            let Some(site) = sites.iter_mut().find(|s| s.cell == target) else {
                self.finish(target, 0, out);
                return;
            };
            let n = self.rescue_rate.min(site.awaiting_rescue());
            if n > 0 {
                site.rescued += n;
                out.trace("rescue", json!({ "site": target, "n": n, "rescued": site.rescued }));
            }
            if site.awaiting_rescue() == 0 {
                let total = site.rescued;
                self.finish(target, total, out);
                return;
            }
        }
        self.arm(out);
    }

    fn finish(&mut self, site: CellId, rescued_total: u32, out: &mut Outbox) {
        self.target = None;
        out.trace("complete", json!({ "site": site, "rescued": rescued_total }));
        out.send(
            ActorId::CRISIS,
            Msg::TeamStatus { team: self.id, report: TeamReport::Complete { site, rescued_total } },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(cell: CellId, total: u32, detected: u32) -> SurvivorSite {
        SurvivorSite { cell, total, detected, rescued: 0, first_detected_ms: Some(0) }
    }

    fn run_ticks(team: &mut RescueTeam, g: &RoadGraph, sites: &mut [SurvivorSite], n: usize) -> Vec<Outbox> {
        (0..n)
            .map(|i| {
                let mut out = Outbox::new();
                team.on_tick(i as TimeMs, g, &BTreeSet::new(), sites, &mut out);
                out
            })
            .collect()
    }

    #[test]
    fn adjacent_site_cleared_in_one_tick() {
        let g = RoadGraph::new(2, &[(0, 1, 100, 10)]);
        let mut team = RescueTeam::new(ActorId::team(0), 0, 5, 1000);
        let mut sites = vec![site(1, 4, 3)];
        let mut out = Outbox::new();
        team.on_message(&Msg::Dispatch { site: 1 }, &mut out);
        let outs = run_ticks(&mut team, &g, &mut sites, 1);
        assert_eq!(sites[0].rescued, 3);
        assert_eq!(outs[0].traced("complete"), 1);
        assert!(outs[0].sends().any(|(d, _)| d == ActorId::CRISIS));
    }

    #[test]
    fn four_edges_take_four_ticks() {
        let g = RoadGraph::new(5, &[(0, 1, 100, 10), (1, 2, 100, 10), (2, 3, 100, 10), (3, 4, 100, 10)]);
        let mut team = RescueTeam::new(ActorId::team(0), 0, 5, 1000);
        let mut sites = vec![site(4, 2, 2)];
        team.on_message(&Msg::Dispatch { site: 4 }, &mut Outbox::new());
        let outs = run_ticks(&mut team, &g, &mut sites, 4);
        let moves: usize = outs.iter().map(|o| o.traced("team_move")).sum();
        assert_eq!(moves, 4);
        assert_eq!(outs[3].traced("complete"), 1);
        assert_eq!(outs[2].traced("complete"), 0);
    }

    #[test]
    fn blocked_route_reports_and_idles_until_retry() {
        let mut g = RoadGraph::new(2, &[(0, 1, 100, 10)]);
        g.edges[0].blocked = true;
        let mut team = RescueTeam::new(ActorId::team(0), 0, 5, 1000);
        let mut sites = vec![site(1, 1, 1)];
        team.on_message(&Msg::Dispatch { site: 1 }, &mut Outbox::new());
        let outs = run_ticks(&mut team, &g, &mut sites, 1);
        assert_eq!(outs[0].traced("blocked"), 1);
        assert_eq!(outs[0].timers().count(), 0);
        assert_eq!(team.at, 0);
        let mut out = Outbox::new();
        team.on_message(&Msg::Retry, &mut out);
        assert_eq!(out.timers().count(), 1);
    }
}
