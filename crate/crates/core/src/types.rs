//! Small vocabulary types shared by every module.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Side of the book a queue (or an event) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Bid,
    Ask,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Bid, Side::Ask];

    pub fn opposite(self) -> Side {
        match self {
            Side::Bid => Side::Ask,
            Side::Ask => Side::Bid,
        }
    }

    /// +1 for the ask side (prices above the reference), -1 for the bid side.
    pub fn sign(self) -> i64 {
        match self {
            Side::Bid => -1,
            Side::Ask => 1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Side::Bid => 0,
            Side::Ask => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Bid => "bid",
            Side::Ask => "ask",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Side {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bid" | "b" | "buy" => Ok(Side::Bid),
            "ask" | "a" | "sell" | "offer" => Ok(Side::Ask),
            other => Err(format!("unknown side '{other}'")),
        }
    }
}

/// Order-flow event type.
///
/// `CancelAll` and `MarketAll` consume the whole queue they target; they only
/// appear as distinct types in the five-type model, the other variants fold
/// them into `Cancel` / `Market`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventType {
    #[serde(rename = "L")]
    Limit,
    #[serde(rename = "C")]
    Cancel,
    #[serde(rename = "M")]
    Market,
    #[serde(rename = "C_ALL")]
    CancelAll,
    #[serde(rename = "M_ALL")]
    MarketAll,
}

impl EventType {
    pub const BASE: [EventType; 3] = [EventType::Limit, EventType::Cancel, EventType::Market];
    pub const ALL: [EventType; 5] = [
        EventType::Limit,
        EventType::Cancel,
        EventType::Market,
        EventType::CancelAll,
        EventType::MarketAll,
    ];

    /// True for every type that removes volume from a queue.
    pub fn is_consuming(self) -> bool {
        !matches!(self, EventType::Limit)
    }

    /// True for trade-like types (`M`, `M_ALL`).
    pub fn is_market(self) -> bool {
        matches!(self, EventType::Market | EventType::MarketAll)
    }

    /// Folds the full-consumption types onto their three-type counterpart.
    pub fn base(self) -> EventType {
        match self {
            EventType::CancelAll => EventType::Cancel,
            EventType::MarketAll => EventType::Market,
            other => other,
        }
    }

    /// Index into [`EventType::BASE`].
    pub fn base_index(self) -> usize {
        match self.base() {
            EventType::Limit => 0,
            EventType::Cancel => 1,
            _ => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Limit => "L",
            EventType::Cancel => "C",
            EventType::Market => "M",
            EventType::CancelAll => "C_ALL",
            EventType::MarketAll => "M_ALL",
        }
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "L" | "LIMIT" => Ok(EventType::Limit),
            "C" | "CANCEL" => Ok(EventType::Cancel),
            "M" | "T" | "MARKET" | "TRADE" => Ok(EventType::Market),
            "C_ALL" | "CANCEL_ALL" => Ok(EventType::CancelAll),
            "M_ALL" | "MARKET_ALL" => Ok(EventType::MarketAll),
            other => Err(format!("unknown event type '{other}'")),
        }
    }
}
