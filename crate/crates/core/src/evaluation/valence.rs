//! Emotional valence labels and the change classification between a
//! poster's original post and their first follow-up comment.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Coded valence: +1 positive, 0 neutral, -1 negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum ValenceLabel {
    Negative,
    Neutral,
    Positive,
}

impl ValenceLabel {
    pub const ALL: [ValenceLabel; 3] = [Self::Negative, Self::Neutral, Self::Positive];

    pub fn score(self) -> i8 {
        match self {
            Self::Negative => -1,
            Self::Neutral => 0,
            Self::Positive => 1,
        }
    }
}

impl TryFrom<i8> for ValenceLabel {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            -1 => Ok(Self::Negative),
            0 => Ok(Self::Neutral),
            1 => Ok(Self::Positive),
            other => Err(format!("valence must be -1, 0 or 1, got {other}")),
        }
    }
}

impl From<ValenceLabel> for i8 {
    fn from(v: ValenceLabel) -> i8 {
        v.score()
    }
}

impl fmt::Display for ValenceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.score())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValenceChange {
    Raise,
    Drop,
    NoChange,
}

impl ValenceChange {
    pub fn reversed(self) -> Self {
        match self {
            Self::Raise => Self::Drop,
            Self::Drop => Self::Raise,
            Self::NoChange => Self::NoChange,
        }
    }
}

pub fn valence_change(orig: ValenceLabel, updated: ValenceLabel) -> ValenceChange {
    use std::cmp::Ordering::*;
    match updated.score().cmp(&orig.score()) {
        Greater => ValenceChange::Raise,
        Less => ValenceChange::Drop,
        Equal => ValenceChange::NoChange,
    }
}

#[cfg(test)]
mod tests {
    use super::ValenceLabel::*;
    use super::*;

    #[test]
    fn enumerated_transitions() {
        assert_eq!(valence_change(Negative, Positive), ValenceChange::Raise);
        assert_eq!(valence_change(Neutral, Neutral), ValenceChange::NoChange);
        assert_eq!(valence_change(Positive, Neutral), ValenceChange::Drop);
    }

    #[test]
    fn antisymmetric() {
        for a in ValenceLabel::ALL {
            for b in ValenceLabel::ALL {
                assert_eq!(valence_change(a, b), valence_change(b, a).reversed());
            }
        }
    }

    #[test]
    fn serde_as_integer() {
        assert_eq!(serde_json::to_string(&Negative).unwrap(), "-1");
        assert_eq!(serde_json::from_str::<ValenceLabel>("1").unwrap(), Positive);
        assert!(serde_json::from_str::<ValenceLabel>("2").is_err());
    }
}
