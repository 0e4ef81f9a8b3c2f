//! Zoned ground-motion sensors.

use serde_json::json;

use super::{Msg, Outbox};
use crate::engine::RngStream;
use crate::ids::{ActorId, CellId};
use crate::world::RiskLevel;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorState {
    pub id: ActorId,
    pub cell: CellId,
    pub risk: RiskLevel,
    pub threshold: f64,
    pub noise_sigma: f64,
    pub edge: ActorId,
    /// Point-to-point partner; present only in high-risk zones.
    pub paired_drone: Option<ActorId>,
    /// Set after the first alert; one alert per quake.
    pub alerted: bool,
}

impl SensorState {
    /// Measured amplitude, or `None` below threshold (the bound is inclusive).
    pub fn measure(&self, amplitude: f64, rng: &mut RngStream) -> Option<f64> {
        let noise = if self.noise_sigma > 0.0 { rng.gaussian(0.0, self.noise_sigma) } else { 0.0 };
        let measured = amplitude + noise;
        (measured >= self.threshold).then_some(measured)
    }

    pub fn on_sample(&mut self, amplitude: f64, rng: &mut RngStream, out: &mut Outbox) {
        if self.alerted {
            return;
        }
        let Some(measured) = self.measure(amplitude, rng) else { return };
        self.alerted = true;
        out.trace("alert", json!({ "cell": self.cell, "measured": measured, "amplitude": amplitude }));
        let alert = Msg::Alert { sensor: self.id, cell: self.cell, measured };
        out.send(self.edge, alert.clone());
        if let Some(d) = self.paired_drone {
            out.send(d, alert);
        }
    }
}
