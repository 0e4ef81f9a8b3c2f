//! Deterministic discrete-event simulator of a UAV-assisted earthquake
//! rescue network.

pub mod actors;
pub mod engine;
pub mod ids;
pub mod metrics;
pub mod netsim;
pub mod postquake;
pub mod scenario;
pub mod sim;
pub mod world;
