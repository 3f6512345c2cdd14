//! Cyclic wrap-around user–relay association.
//!
//! There are `K` users and `K` relays. User `k` uploads to the `B` relays
//! `k, k+1, …, k+B-1` (indices taken cyclically). All indices in this module's
//! public API are 1-based.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("association number B={b} must satisfy 1 <= B <= K={k}")]
    InvalidParams { k: usize, b: usize },
    #[error("index {index} outside 1..={k}")]
    InvalidIndex { index: usize, k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Topology {
    k: usize,
    b: usize,
}

impl Topology {
    pub fn new(k: usize, b: usize) -> Result<Self, TopologyError> {
        if b == 0 || b > k {
            return Err(TopologyError::InvalidParams { k, b });
        }
        Ok(Topology { k, b })
    }

    /// Number of users (equal to the number of relays).
    pub fn users(&self) -> usize {
        self.k
    }

    /// Association number.
    pub fn association(&self) -> usize {
        self.b
    }

    fn check(&self, index: usize) -> Result<(), TopologyError> {
        if index == 0 || index > self.k {
            Err(TopologyError::InvalidIndex { index, k: self.k })
        } else {
            Ok(())
        }
    }

    /// Relays user `k` uploads to, in cyclic order starting at `k`.
    pub fn relays_of_user(&self, k: usize) -> Result<Vec<usize>, TopologyError> {
        self.check(k)?;
        Ok((0..self.b).map(|s| (k - 1 + s) % self.k + 1).collect())
    }

    /// Users associated with relay `i`, ascending.
    pub fn users_of_relay(&self, i: usize) -> Result<Vec<usize>, TopologyError> {
        self.check(i)?;
        let mut users: Vec<usize> = (0..self.b)
            .map(|s| (i - 1 + self.k - s) % self.k + 1)
            .collect();
        users.sort_unstable();
        Ok(users)
    }

    /// Whether user `k` is associated with relay `i`. Out-of-range indices
    /// are never associated.
    pub fn is_associated(&self, k: usize, i: usize) -> bool {
        if self.check(k).is_err() || self.check(i).is_err() {
            return false;
        }
        // Relay i is s steps after k for some s < B.
        (i + self.k - k) % self.k < self.b
    }

    /// All `(user, relay)` links, users ascending, relays in cyclic order.
    pub fn links(&self) -> Vec<(usize, usize)> {
        (1..=self.k)
            .flat_map(|k| {
                self.relays_of_user(k)
                    .expect("index in range")
                    .into_iter()
                    .map(move |i| (k, i))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relays_of_user_examples() {
        let t = Topology::new(3, 2).unwrap();
        assert_eq!(t.relays_of_user(1).unwrap(), vec![1, 2]);
        assert_eq!(t.relays_of_user(3).unwrap(), vec![3, 1]);
        let t = Topology::new(5, 3).unwrap();
        assert_eq!(t.relays_of_user(4).unwrap(), vec![4, 5, 1]);
    }

    #[test]
    fn users_of_relay_examples() {
        let t = Topology::new(3, 2).unwrap();
        assert_eq!(t.users_of_relay(1).unwrap(), vec![1, 3]);
        assert_eq!(t.users_of_relay(2).unwrap(), vec![1, 2]);
        assert_eq!(t.users_of_relay(3).unwrap(), vec![2, 3]);
        let t = Topology::new(5, 3).unwrap();
        assert_eq!(t.users_of_relay(2).unwrap(), vec![1, 2, 5]);
    }

    #[test]
    fn index_errors() {
        let t = Topology::new(4, 2).unwrap();
        assert_eq!(
            t.relays_of_user(0),
            Err(TopologyError::InvalidIndex { index: 0, k: 4 })
        );
        assert!(t.users_of_relay(5).is_err());
        assert!(Topology::new(3, 0).is_err());
        assert!(Topology::new(3, 4).is_err());
    }

    #[test]
    fn full_association_covers_everything() {
        let t = Topology::new(5, 5).unwrap();
        for k in 1..=5 {
            let mut r = t.relays_of_user(k).unwrap();
            r.sort_unstable();
            assert_eq!(r, vec![1, 2, 3, 4, 5]);
        }
    }

    /// Literal transcription of the interval formulas for the index sets.
    fn relays_by_formula(i: usize, k: usize, b: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (i..=k.min(i + b - 1)).collect();
        // [1 : B-K+i-1], empty when the upper end is below 1.
        let upper = (b + i) as isize - k as isize - 1;
        out.extend(1..=upper.max(0) as usize);
        out
    }

    fn users_by_formula(i: usize, k: usize, b: usize) -> Vec<usize> {
        let lo = (i as isize - b as isize + 1).max(1) as usize;
        let mut out: Vec<usize> = (lo..=i).collect();
        out.extend(k + i + 1 - b.min(k + i)..=k);
        out.retain(|&u| u >= 1);
        out.sort_unstable();
        out.dedup();
        out
    }

    #[test]
    fn matches_interval_formulas() {
        for k in 1..=12 {
            for b in 1..=k {
                let t = Topology::new(k, b).unwrap();
                for i in 1..=k {
                    assert_eq!(t.relays_of_user(i).unwrap(), relays_by_formula(i, k, b));
                    assert_eq!(t.users_of_relay(i).unwrap(), users_by_formula(i, k, b));
                }
            }
        }
    }
}
