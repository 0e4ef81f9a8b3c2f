//! Post-hoc metrics computed from a trace in one pass.
//!
//! Definitions:
//! - `first_full_coverage_ms`: earliest time at which every zone (count from
//!   the header) has at least one live coverer, tracking `coverage_up` and
//!   `coverage_down` records per (actor, zone).
//! - `failover_latency_ms`: for each `fail` record, the time until the first
//!   `failure_notice` naming that drone (or `nurse_failover` naming it as the
//!   failed nurse). Failures never noticed are listed without a value.
//! - `detection_latency_ms`: per detected survivor, the time of the `scan`
//!   hit that found it minus the main-shock `quake` time. Reported as min,
//!   lower median, max and count.
//! - `rescued_fraction`: survivors rescued (`rescue` records) over survivors
//!   seeded (`survivors` record); 0 when nobody was trapped.
//! - `satellite_fallback_count`: deliveries whose path crosses the satellite
//!   and that had no terrestrial alternative: either a single-copy send routed
//!   by satellite, or the satellite copy of a dual relay whose terrestrial
//!   copy was dropped.
//! - `dropped_message_count`: number of `msg_drop` records.
//! - `red_alarm_ms`: time of the first `red` record.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde_json::Value;

use crate::engine::trace::TraceRecord;
use crate::ids::TimeMs;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("trace line {line}: {detail}")]
    Malformed { line: usize, detail: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LatencyStats {
    pub min: TimeMs,
    pub median: TimeMs,
    pub max: TimeMs,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub first_full_coverage_ms: Option<TimeMs>,
    /// (failed actor, latency) in order of failure.
    pub failover_latency_ms: Vec<(String, Option<TimeMs>)>,
    pub detection_latency_ms: Option<LatencyStats>,
    pub rescued_fraction: f64,
    pub satellite_fallback_count: u64,
    pub dropped_message_count: u64,
    pub red_alarm_ms: Option<TimeMs>,
}

pub const CSV_HEADER: &str = "metric,key,value";

fn opt(v: Option<TimeMs>) -> String {
    v.map(|t| t.to_string()).unwrap_or_default()
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{CSV_HEADER}\n");
        let mut row = |metric: &str, key: &str, value: String| {
            writeln!(s, "{metric},{key},{value}").expect("write to string");
        };
        row("first_full_coverage_ms", "", opt(self.first_full_coverage_ms));
        for (actor, lat) in &self.failover_latency_ms {
            row("failover_latency_ms", actor, opt(*lat));
        }
        if let Some(d) = &self.detection_latency_ms {
            row("detection_latency_ms", "min", d.min.to_string());
            row("detection_latency_ms", "median", d.median.to_string());
            row("detection_latency_ms", "max", d.max.to_string());
            row("detection_latency_ms", "count", d.count.to_string());
        }
        row("rescued_fraction", "", self.rescued_fraction.to_string());
        row("satellite_fallback_count", "", self.satellite_fallback_count.to_string());
        row("dropped_message_count", "", self.dropped_message_count.to_string());
        row("red_alarm_ms", "", opt(self.red_alarm_ms));
        s
    }

    pub fn summary(&self) -> String {
        let show = |v: Option<TimeMs>| v.map(|t| format!("{t} ms")).unwrap_or_else(|| "never".into());
        let mut s = String::new();
        let _ = writeln!(s, "first full coverage:   {}", show(self.first_full_coverage_ms));
        let _ = writeln!(s, "red alarm:             {}", show(self.red_alarm_ms));
        for (actor, lat) in &self.failover_latency_ms {
            let _ = writeln!(s, "failover of {actor}: {}", show(*lat));
        }
        match &self.detection_latency_ms {
            Some(d) => {
                let _ = writeln!(
                    s,
                    "detection latency:     min {} / median {} / max {} ms over {} survivors",
                    d.min, d.median, d.max, d.count
                );
            }
            None => {
                let _ = writeln!(s, "detection latency:     no detections");
            }
        }
        let _ = writeln!(s, "rescued fraction:      {}", self.rescued_fraction);
        let _ = writeln!(s, "satellite fallbacks:   {}", self.satellite_fallback_count);
        let _ = writeln!(s, "dropped messages:      {}", self.dropped_message_count);
        s
    }
}

fn u64_of(v: Option<&Value>) -> Option<u64> {
    v.and_then(Value::as_u64)
}

fn str_of(v: Option<&Value>) -> Option<&str> {
    v.and_then(Value::as_str)
}

fn crosses_satellite(data: &Value) -> bool {
    data.get("path")
        .and_then(Value::as_array)
        .is_some_and(|p| p.iter().filter_map(Value::as_str).any(|a| a.starts_with("satellite:")))
}

pub fn report(trace: &str) -> Result<MetricsReport, ReportError> {
    let mut m = MetricsReport::default();
    let mut zone_count: Option<u64> = None;
    let mut coverers: BTreeMap<u64, BTreeSet<String>> = BTreeMap::new();
    let mut pending_fail: BTreeMap<String, (usize, TimeMs)> = BTreeMap::new();
    let mut quake_ms: Option<TimeMs> = None;
    let mut detections: Vec<TimeMs> = Vec::new();
    let mut seeded = 0u64;
    let mut rescued = 0u64;
    let mut single_sat = 0u64;
    let mut dual_sat_delivered: BTreeSet<u64> = BTreeSet::new();
    let mut terrestrial_dropped: BTreeSet<u64> = BTreeSet::new();

    for (i, line) in trace.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec =
            TraceRecord::parse_line(line).map_err(|e| ReportError::Malformed { line: i + 1, detail: e.to_string() })?;
        let d = &rec.data;
        match rec.kind.as_str() {
            "header" => zone_count = u64_of(d.get("zone_count")),
            "coverage_up" | "coverage_down" => {
                let Some(zone) = u64_of(d.get("zone")) else { continue };
                let set = coverers.entry(zone).or_default();
                if rec.kind == "coverage_up" {
                    set.insert(rec.actor.clone());
                } else {
                    set.remove(&rec.actor);
                }
                if m.first_full_coverage_ms.is_none() {
                    if let Some(n) = zone_count {
                        if (0..n).all(|z| coverers.get(&z).is_some_and(|s| !s.is_empty())) {
                            m.first_full_coverage_ms = Some(rec.t);
                        }
                    }
                }
            }
            "fail" => {
                pending_fail.insert(rec.actor.clone(), (m.failover_latency_ms.len(), rec.t));
                m.failover_latency_ms.push((rec.actor.clone(), None));
            }
            "failure_notice" | "nurse_failover" => {
                let key = if rec.kind == "failure_notice" { "drone" } else { "failed" };
                if let Some((idx, t_fail)) = str_of(d.get(key)).and_then(|a| pending_fail.remove(a)) {
                    m.failover_latency_ms[idx].1 = Some(rec.t - t_fail);
                }
            }
            "quake" => {
                if u64_of(d.get("shock")) == Some(0) {
                    quake_ms = Some(rec.t);
                }
            }
            "scan" => {
                for hit in d.get("hits").and_then(Value::as_array).into_iter().flatten() {
                    let n = u64_of(hit.get("new")).unwrap_or(0);
                    let lat = rec.t.saturating_sub(quake_ms.unwrap_or(0));
                    detections.extend(std::iter::repeat_n(lat, n as usize));
                }
            }
            "survivors" => seeded = u64_of(d.get("total")).unwrap_or(0),
            "rescue" => rescued += u64_of(d.get("n")).unwrap_or(0),
            "msg_drop" => {
                m.dropped_message_count += 1;
                if str_of(d.get("copy")) == Some("terrestrial") {
                    if let Some(id) = u64_of(d.get("msg_id")) {
                        terrestrial_dropped.insert(id);
                    }
                }
            }
            "msg_deliver" if crosses_satellite(d) => match str_of(d.get("copy")) {
                None => single_sat += 1,
                Some("satellite") => {
                    if let Some(id) = u64_of(d.get("msg_id")) {
                        dual_sat_delivered.insert(id);
                    }
                }
                Some(_) => {}
            },
            "red" => {
                m.red_alarm_ms.get_or_insert(rec.t);
            }
            _ => {}
        }
    }

    if !detections.is_empty() {
        detections.sort_unstable();
        m.detection_latency_ms = Some(LatencyStats {
            min: detections[0],
            median: detections[(detections.len() - 1) / 2],
            max: detections[detections.len() - 1],
            count: detections.len(),
        });
    }
    m.rescued_fraction = if seeded == 0 { 0.0 } else { rescued as f64 / seeded as f64 };
    m.satellite_fallback_count = single_sat + dual_sat_delivered.intersection(&terrestrial_dropped).count() as u64;
    Ok(m)
}
