//! Append-only JSON Lines trace.
//!
//! Each line is one [`TraceRecord`] with top-level keys in the fixed order
//! `t`, `seq`, `actor`, `kind`, `data`. Keys inside `data` are sorted, so two
//! equal records always serialize to identical bytes.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::ids::TimeMs;

pub const TRACE_FORMAT: &str = "rescuenet-trace/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: TimeMs,
    pub seq: u64,
    pub actor: String,
    pub kind: String,
    pub data: Value,
}

impl TraceRecord {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("trace records always serialize")
    }

    pub fn parse_line(line: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(line)
    }

    pub fn field(&self, key: &str) -> Option<&Value> {
        self.data.get(key)
    }
}

/// In-memory trace writer. Sequence numbers are contiguous from 0 (the header).
#[derive(Debug, Default)]
pub struct Tracer {
    out: String,
    next_seq: u64,
    count: usize,
}

impl Tracer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn emit(&mut self, t: TimeMs, actor: impl ToString, kind: &str, data: Value) {
        let rec = TraceRecord { t, seq: self.next_seq, actor: actor.to_string(), kind: kind.to_string(), data };
        self.next_seq += 1;
        self.count += 1;
        self.out.push_str(&rec.to_line());
        self.out.push('\n');
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn as_str(&self) -> &str {
        &self.out
    }

    pub fn into_string(self) -> String {
        self.out
    }
}

/// Parse a whole trace, reporting the 1-based line number of the first bad line.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, (usize, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| TraceRecord::parse_line(l).map_err(|e| (i + 1, e.to_string())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn key_order_is_fixed() {
        let mut t = Tracer::new();
        t.emit(5, "drone:1", "arrive", json!({"zone": 2, "a": 1}));
        assert_eq!(
            t.as_str(),
            "{\"t\":5,\"seq\":0,\"actor\":\"drone:1\",\"kind\":\"arrive\",\"data\":{\"a\":1,\"zone\":2}}\n"
        );
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "{\"t\":0,\"seq\":0,\"actor\":\"sim\",\"kind\":\"header\",\"data\":{}}\nnot json\n";
        assert_eq!(parse_trace(text).unwrap_err().0, 2);
    }
}
