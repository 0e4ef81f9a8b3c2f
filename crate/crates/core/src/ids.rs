//! Identifier newtypes shared by every module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Simulation time in integer milliseconds.
pub type TimeMs = u64;
pub type CellId = u32;
pub type ZoneId = u32;
pub type EdgeId = u32;
pub type LinkId = u32;
pub type MsgId = u64;

/// Node classes of the rescue network. Declaration order is the ordering
/// used whenever "lower id" matters (link disruption, tie-breaks).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActorClass {
    Sensor,
    EdgeServer,
    Drone,
    HelicopterAlpha,
    HelicopterBeta,
    Satellite,
    GroundStation,
    SeismicCenter,
    CrisisCenter,
    Police,
    RescueTeam,
}

impl ActorClass {
    pub const ALL: [ActorClass; 11] = [
        ActorClass::Sensor,
        ActorClass::EdgeServer,
        ActorClass::Drone,
        ActorClass::HelicopterAlpha,
        ActorClass::HelicopterBeta,
        ActorClass::Satellite,
        ActorClass::GroundStation,
        ActorClass::SeismicCenter,
        ActorClass::CrisisCenter,
        ActorClass::Police,
        ActorClass::RescueTeam,
    ];

    /// Stable numeric tag; part of the RNG derivation contract.
    pub fn tag(self) -> u8 {
        match self {
            ActorClass::Sensor => 1,
            ActorClass::EdgeServer => 2,
            ActorClass::Drone => 3,
            ActorClass::HelicopterAlpha => 4,
            ActorClass::HelicopterBeta => 5,
            ActorClass::Satellite => 6,
            ActorClass::GroundStation => 7,
            ActorClass::SeismicCenter => 8,
            ActorClass::CrisisCenter => 9,
            ActorClass::Police => 10,
            ActorClass::RescueTeam => 11,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActorClass::Sensor => "sensor",
            ActorClass::EdgeServer => "edge",
            ActorClass::Drone => "drone",
            ActorClass::HelicopterAlpha => "alpha",
            ActorClass::HelicopterBeta => "beta",
            ActorClass::Satellite => "satellite",
            ActorClass::GroundStation => "ground",
            ActorClass::SeismicCenter => "seismic",
            ActorClass::CrisisCenter => "crisis",
            ActorClass::Police => "police",
            ActorClass::RescueTeam => "team",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        ActorClass::ALL.into_iter().find(|c| c.name() == s)
    }

    /// Whether nodes of this class can reach the satellite directly.
    pub fn satellite_capable(self) -> bool {
        matches!(
            self,
            ActorClass::Drone
                | ActorClass::HelicopterAlpha
                | ActorClass::HelicopterBeta
                | ActorClass::GroundStation
                | ActorClass::CrisisCenter
                | ActorClass::SeismicCenter
        )
    }
}

/// Class tag plus index. Displayed and serialized as `class:index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActorId {
    pub class: ActorClass,
    pub index: u32,
}

impl ActorId {
    pub const fn new(class: ActorClass, index: u32) -> Self {
        Self { class, index }
    }

    pub fn sensor(i: u32) -> Self {
        Self::new(ActorClass::Sensor, i)
    }
    pub fn edge(i: u32) -> Self {
        Self::new(ActorClass::EdgeServer, i)
    }
    pub fn drone(i: u32) -> Self {
        Self::new(ActorClass::Drone, i)
    }
    pub fn ground(i: u32) -> Self {
        Self::new(ActorClass::GroundStation, i)
    }
    pub fn team(i: u32) -> Self {
        Self::new(ActorClass::RescueTeam, i)
    }

    pub const ALPHA: ActorId = ActorId::new(ActorClass::HelicopterAlpha, 0);
    pub const BETA: ActorId = ActorId::new(ActorClass::HelicopterBeta, 0);
    pub const SATELLITE: ActorId = ActorId::new(ActorClass::Satellite, 0);
    pub const SEISMIC: ActorId = ActorId::new(ActorClass::SeismicCenter, 0);
    pub const CRISIS: ActorId = ActorId::new(ActorClass::CrisisCenter, 0);
    pub const POLICE: ActorId = ActorId::new(ActorClass::Police, 0);

    /// Stable 64-bit encoding used for RNG stream derivation.
    pub fn encode(self) -> u64 {
        ((self.class.tag() as u64) << 32) | self.index as u64
    }
}

impl fmt::Display for ActorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.class.name(), self.index)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("malformed actor id `{0}`")]
pub struct ParseActorIdError(String);

impl FromStr for ActorId {
    type Err = ParseActorIdError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (class, index) = s.split_once(':').ok_or_else(|| ParseActorIdError(s.to_string()))?;
        let class = ActorClass::from_name(class).ok_or_else(|| ParseActorIdError(s.to_string()))?;
        let index = index.parse().map_err(|_| ParseActorIdError(s.to_string()))?;
        Ok(ActorId::new(class, index))
    }
}

impl Serialize for ActorId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActorId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
