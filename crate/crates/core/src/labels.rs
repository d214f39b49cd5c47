//! Label schemas: binary presence/absence and the ordered 7-class frequency scheme.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Binary occupancy label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Presence {
    Absent = 0,
    Present = 1,
}

impl Presence {
    pub fn as_i8(self) -> i8 {
        self as i8
    }

    pub fn from_i64(v: i64) -> Option<Self> {
        match v {
            0 => Some(Presence::Absent),
            1 => Some(Presence::Present),
            _ => None,
        }
    }
}

impl Serialize for Presence {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.as_i8())
    }
}

impl<'de> Deserialize<'de> for Presence {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Presence::from_i64(v)
            .ok_or_else(|| serde::de::Error::custom(format!("binary label {v} not in {{0, 1}}")))
    }
}

/// Ordered species-frequency classes, from `Extinct (-1)` to `Abundant (5)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FrequencyClass {
    Extinct = -1,
    Absent = 0,
    VeryRare = 1,
    Rare = 2,
    CommonToRare = 3,
    Common = 4,
    Abundant = 5,
}

impl FrequencyClass {
    /// All classes in ascending order.
    pub const ALL: [FrequencyClass; 7] = [
        FrequencyClass::Extinct,
        FrequencyClass::Absent,
        FrequencyClass::VeryRare,
        FrequencyClass::Rare,
        FrequencyClass::CommonToRare,
        FrequencyClass::Common,
        FrequencyClass::Abundant,
    ];

    pub fn code(self) -> i8 {
        self as i8
    }

    pub fn from_code(v: i64) -> Option<Self> {
        Some(match v {
            -1 => FrequencyClass::Extinct,
            0 => FrequencyClass::Absent,
            1 => FrequencyClass::VeryRare,
            2 => FrequencyClass::Rare,
            3 => FrequencyClass::CommonToRare,
            4 => FrequencyClass::Common,
            5 => FrequencyClass::Abundant,
            _ => return None,
        })
    }

    /// Display name as used in the classification prompt.
    pub fn name(self) -> &'static str {
        match self {
            FrequencyClass::Extinct => "Extinct",
            FrequencyClass::Absent => "Absent",
            FrequencyClass::VeryRare => "Very Rare",
            FrequencyClass::Rare => "Rare",
            FrequencyClass::CommonToRare => "Common to Rare",
            FrequencyClass::Common => "Common",
            FrequencyClass::Abundant => "Abundant",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        let lower = name.trim().to_lowercase();
        FrequencyClass::ALL
            .into_iter()
            .find(|c| c.name().to_lowercase() == lower)
    }

    /// Extinct and Absent imply `Presence::Absent`.
    pub fn presence(self) -> Presence {
        match self {
            FrequencyClass::Extinct | FrequencyClass::Absent => Presence::Absent,
            _ => Presence::Present,
        }
    }
}

impl fmt::Display for FrequencyClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.name(), self.code())
    }
}

impl FromStr for FrequencyClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Ok(v) = s.trim().parse::<i64>() {
            return FrequencyClass::from_code(v).ok_or_else(|| format!("class {v} not in [-1, 5]"));
        }
        FrequencyClass::from_name(s).ok_or_else(|| format!("unknown class {s:?}"))
    }
}

impl Serialize for FrequencyClass {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_i8(self.code())
    }
}

impl<'de> Deserialize<'de> for FrequencyClass {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        FrequencyClass::from_code(v)
            .ok_or_else(|| serde::de::Error::custom(format!("class {v} not in [-1, 5]")))
    }
}
