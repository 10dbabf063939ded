//! On/off scheduling actions.
//!
//! Action indices are zero based: index `j` activates link `k` iff bit `k`
//! of `j` is set. (The one-based action `j + 1` of the literature maps to
//! the same bit pattern.) The textual form lists `a_1 a_2 ... a_K` left to
//! right, e.g. `"101"` is links 1 and 3 active.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Largest K for which an action still has a `u64` index.
pub const MAX_INDEXED_LINKS: usize = 63;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SchedulingAction {
    bits: Vec<bool>,
}

impl SchedulingAction {
    pub fn new(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn all_off(links: usize) -> Self {
        Self::new(vec![false; links])
    }

    pub fn all_on(links: usize) -> Self {
        Self::new(vec![true; links])
    }

    pub fn from_index(index: u64, links: usize) -> Self {
        assert!(links <= MAX_INDEXED_LINKS, "too many links for an indexed action");
        Self::new((0..links).map(|k| (index >> k) & 1 == 1).collect())
    }

    pub fn index(&self) -> Option<u64> {
        (self.bits.len() <= MAX_INDEXED_LINKS).then(|| {
            self.bits
                .iter()
                .enumerate()
                .fold(0u64, |acc, (k, &b)| acc | ((b as u64) << k))
        })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn is_active(&self, k: usize) -> bool {
        self.bits[k]
    }

    pub fn set(&mut self, k: usize, on: bool) {
        self.bits[k] = on;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Activity probabilities (0 or 1) for the expectation-based evaluators.
    pub fn as_activity(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }

    /// Writes `sub` (indexed over `members`) into this full-length action.
    pub fn assign(&mut self, members: &[usize], sub: &SchedulingAction) {
        debug_assert_eq!(members.len(), sub.len());
        for (&link, &bit) in members.iter().zip(sub.bits()) {
            self.bits[link] = bit;
        }
    }

    /// Restriction to the links in `members`, in that order.
    pub fn restrict(&self, members: &[usize]) -> SchedulingAction {
        SchedulingAction::new(members.iter().map(|&i| self.bits[i]).collect())
    }
}

impl fmt::Display for SchedulingAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for SchedulingAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Parse(format!("invalid action character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(SchedulingAction::new)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn index_bit_layout() {
        let a = SchedulingAction::from_index(0b101, 3);
        assert_eq!(a.bits(), &[true, false, true]);
        assert_eq!(a.to_string(), "101");
        assert_eq!(SchedulingAction::from_index(0b011, 3).to_string(), "110");
    }

    #[test]
    fn parse_rejects_garbage() {
        assert!("10x".parse::<SchedulingAction>().is_err());
        assert_eq!("".parse::<SchedulingAction>().unwrap().len(), 0);
    }

    proptest! {
        #[test]
        fn index_and_text_are_bijective(links in 1usize..=20, raw in any::<u64>()) {
            let index = raw & ((1u64 << links) - 1);
            let action = SchedulingAction::from_index(index, links);
            prop_assert_eq!(action.index(), Some(index));
            let parsed: SchedulingAction = action.to_string().parse().unwrap();
            prop_assert_eq!(parsed, action);
        }
    }
}
