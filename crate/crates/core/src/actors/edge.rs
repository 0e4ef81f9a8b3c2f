//! Edge (fog) servers: sliding-window aggregation of sensor alerts into a
//! one-time yellow alarm.

use std::collections::{BTreeMap, VecDeque};

use serde_json::json;

use super::{AlarmLevel, Msg, Outbox};
use crate::ids::{ActorId, CellId, TimeMs};

#[derive(Debug, Clone, PartialEq)]
pub struct AlertSeen {
    pub t_ms: TimeMs,
    pub sensor: ActorId,
    pub cell: CellId,
    pub measured: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeReportBody {
    pub intensity: f64,
    pub cells: Vec<CellId>,
}

/// Sliding window over alerts with inclusive bounds `[now - w, now]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlertWindow {
    pub k: usize,
    pub window_ms: TimeMs,
    recent: VecDeque<AlertSeen>,
    fired: bool,
}

impl AlertWindow {
    pub fn new(k: usize, window_ms: TimeMs) -> Self {
        Self { k, window_ms, recent: VecDeque::new(), fired: false }
    }

    pub fn fired(&self) -> bool {
        self.fired
    }

    /// Feed one alert (in arrival order). Returns the report the first time
    /// `k` distinct sensors fall inside the window, and never again.
    pub fn on_alert(&mut self, alert: AlertSeen) -> Option<EdgeReportBody> {
        let now = alert.t_ms;
        self.recent.push_back(alert);
        while self.recent.front().is_some_and(|a| a.t_ms + self.window_ms < now) {
            self.recent.pop_front();
        }
        if self.fired {
            return None;
        }
        // latest reading per sensor
        let mut latest: BTreeMap<ActorId, &AlertSeen> = BTreeMap::new();
        for a in &self.recent {
            latest.insert(a.sensor, a);
        }
        if latest.len() < self.k {
            return None;
        }
        self.fired = true;
        let intensity = latest.values().map(|a| a.measured).sum::<f64>() / latest.len() as f64;
        let mut cells: Vec<CellId> = latest.values().map(|a| a.cell).collect();
        cells.sort_unstable();
        cells.dedup();
        Some(EdgeReportBody { intensity, cells })
    }
}

#[derive(Debug, Clone)]
pub struct EdgeServer {
    pub id: ActorId,
    pub window: AlertWindow,
    pub alarm: AlarmLevel,
    pub ground_stations: Vec<ActorId>,
}

impl EdgeServer {
    pub fn on_message(&mut self, now: TimeMs, msg: &Msg, out: &mut Outbox) {
        let Msg::Alert { sensor, cell, measured } = *msg else { return };
        let seen = AlertSeen { t_ms: now, sensor, cell, measured };
        if let Some(report) = self.window.on_alert(seen) {
            self.alarm = AlarmLevel::Yellow;
            out.trace("yellow", json!({ "intensity": report.intensity, "cells": report.cells }));
            let msg = Msg::EdgeReport { edge: self.id, intensity: report.intensity, cells: report.cells };
            out.send(ActorId::ALPHA, msg.clone());
            for &g in &self.ground_stations {
                out.send(g, msg.clone());
            }
        }
    }
}
