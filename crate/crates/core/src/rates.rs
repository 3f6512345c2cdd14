//! Communication and key rates as exact rationals.
//!
//! All four rates count symbols per input symbol: upload per user `R_X`,
//! upload per relay `R_Y`, individual key `R_Z` and source key `R_ZΣ`.

use std::fmt;

use num_rational::Ratio;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::protocol::Transcript;

pub type Rate = Ratio<u64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RateError {
    #[error("invalid parameters K={k}, B={b}; need 1 <= B <= K and K >= 2")]
    InvalidParams { k: usize, b: usize },
    #[error("transcript is empty or inconsistent")]
    InconsistentTranscript,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct RateTuple {
    #[serde(serialize_with = "ser_ratio")]
    pub x: Rate,
    #[serde(serialize_with = "ser_ratio")]
    pub y: Rate,
    #[serde(serialize_with = "ser_ratio")]
    pub z: Rate,
    #[serde(serialize_with = "ser_ratio")]
    pub zs: Rate,
}

fn ser_ratio<S: Serializer>(r: &Rate, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&fmt_ratio(r))
}

/// `n` for integers, `n/d` otherwise.
pub fn fmt_ratio(r: &Rate) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

impl RateTuple {
    pub fn new(x: Rate, y: Rate, z: Rate, zs: Rate) -> Self {
        RateTuple { x, y, z, zs }
    }

    pub fn components(&self) -> [Rate; 4] {
        [self.x, self.y, self.z, self.zs]
    }

    /// Componentwise `≥`.
    pub fn dominates(&self, other: &RateTuple) -> bool {
        self.components()
            .iter()
            .zip(other.components().iter())
            .all(|(a, b)| a >= b)
    }
}

impl fmt::Display for RateTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}, {}, {})",
            fmt_ratio(&self.x),
            fmt_ratio(&self.y),
            fmt_ratio(&self.z),
            fmt_ratio(&self.zs)
        )
    }
}

fn check(k: usize, b: usize) -> Result<(u64, u64), RateError> {
    if k < 2 || b == 0 || b > k {
        return Err(RateError::InvalidParams { k, b });
    }
    Ok((k as u64, b as u64))
}

fn r(n: u64, d: u64) -> Rate {
    Ratio::new(n, d)
}

/// `max{1, K/B − 1}`.
fn source_key_rate(k: u64, b: u64) -> Rate {
    let one = Rate::from_integer(1);
    if k >= 2 * b {
        r(k - b, b)
    } else {
        one
    }
}

/// Rates achieved by the construction.
pub fn achievable_rates(k: usize, b: usize) -> Result<RateTuple, RateError> {
    let (k, b) = check(k, b)?;
    let one = Rate::from_integer(1);
    Ok(if b == k {
        RateTuple::new(one, r(1, k - 1), r(1, k - 1), one)
    } else {
        RateTuple::new(one, r(1, b), r(1, b), source_key_rate(k, b))
    })
}

/// Componentwise lower bounds for any secure scheme.
pub fn converse_bounds(k: usize, b: usize) -> Result<RateTuple, RateError> {
    let (k, b) = check(k, b)?;
    let one = Rate::from_integer(1);
    Ok(RateTuple::new(
        one,
        r(1, b).max(r(1, k - 1)),
        r(1, b),
        source_key_rate(k, b),
    ))
}

/// Rates realized by one round.
pub fn measured_rates(t: &Transcript) -> Result<RateTuple, RateError> {
    if t.input_len == 0 || t.users == 0 || !t.is_consistent() {
        return Err(RateError::InconsistentTranscript);
    }
    let l = t.input_len as u64;
    let y_total: usize = t.l_y.iter().sum();
    Ok(RateTuple::new(
        r(t.l_x as u64, l),
        r(y_total as u64, t.users as u64 * l),
        r(t.l_z as u64, l),
        r(t.l_zs as u64, l),
    ))
}

/// Which coordinates of the achievable tuple exceed the bound, as a
/// `;`-joined list of `RX`, `RY`, `RZ`, `RZS` (empty when tight).
pub fn gap_flags(achievable: &RateTuple, bound: &RateTuple) -> String {
    ["RX", "RY", "RZ", "RZS"]
        .iter()
        .zip(
            achievable
                .components()
                .iter()
                .zip(bound.components().iter()),
        )
        .filter(|(_, (a, b))| a > b)
        .map(|(name, _)| *name)
        .collect::<Vec<_>>()
        .join(";")
}
