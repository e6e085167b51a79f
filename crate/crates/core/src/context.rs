//! Smart context detection.
//!
//! Each goal starts blind to the obstacle configuration and only learns to
//! look at an obstacle slot after a competent policy for that goal bumps
//! into it. The per-goal context is the obstacle mask projected onto the
//! slots the goal has learned to care about.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goals::GoalId;
use crate::world::{ObstacleMask, TouchEvent, TouchKind, WorldState, OBSTACLES};

/// Obstacle slots that proved relevant for one goal, in discovery order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsefulFeatures {
    order: Vec<u8>,
    bits: u16,
}

impl UsefulFeatures {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Every slot, as used by variants that key on the raw mask.
    pub fn all() -> Self {
        Self {
            order: (0..OBSTACLES as u8).collect(),
            bits: ObstacleMask::FULL.bits(),
        }
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, slot: usize) -> bool {
        slot < OBSTACLES && self.bits & (1 << slot) != 0
    }

    pub fn slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.order.iter().map(|&s| s as usize)
    }

    pub fn bits(&self) -> u16 {
        self.bits
    }

    fn insert(&mut self, slot: usize) -> bool {
        if self.contains(slot) {
            return false;
        }
        self.order.push(slot as u8);
        self.bits |= 1 << slot;
        true
    }
}

/// A goal's view of the obstacle configuration: which slots it considers
/// and their presence bits. The blank context considers nothing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ContextKey {
    slots: u16,
    bits: u16,
}

impl ContextKey {
    pub const BLANK: ContextKey = ContextKey { slots: 0, bits: 0 };

    pub fn is_blank(self) -> bool {
        self.slots == 0
    }

    pub fn considered_slots(self) -> u16 {
        self.slots
    }

    pub fn presence_bits(self) -> u16 {
        self.bits
    }
}

/// Nine characters, slot 0 first: `1`/`0` for a considered slot's
/// presence, `x` for a slot the goal ignores.
impl fmt::Display for ContextKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in 0..OBSTACLES {
            let c = if self.slots & (1 << j) == 0 {
                'x'
            } else if self.bits & (1 << j) != 0 {
                '1'
            } else {
                '0'
            };
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for ContextKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != OBSTACLES {
            return Err(Error::contract(format!("context key `{s}` must have {OBSTACLES} characters")));
        }
        let mut key = ContextKey::BLANK;
        for (j, c) in s.chars().enumerate() {
            match c {
                'x' => {}
                '0' => key.slots |= 1 << j,
                '1' => {
                    key.slots |= 1 << j;
                    key.bits |= 1 << j;
                }
                _ => return Err(Error::contract(format!("context key `{s}` has invalid character `{c}`"))),
            }
        }
        Ok(key)
    }
}

/// Context matching: projects the mask onto the goal's useful slots.
pub fn filter_context(mask: ObstacleMask, ucf: &UsefulFeatures) -> ContextKey {
    ContextKey {
        slots: ucf.bits,
        bits: mask.bits() & ucf.bits,
    }
}

/// Known contexts per goal with the trial each was first seen.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextRegistry {
    per_goal: Vec<IndexMap<ContextKey, u64>>,
}

impl ContextRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `key` for goal `g`; true when it was not known before.
    pub fn register_context(&mut self, g: GoalId, key: ContextKey, trial: u64) -> bool {
        if self.per_goal.len() <= g.0 {
            self.per_goal.resize_with(g.0 + 1, IndexMap::new);
        }
        let known = &mut self.per_goal[g.0];
        if known.contains_key(&key) {
            return false;
        }
        known.insert(key, trial);
        true
    }

    pub fn contains(&self, g: GoalId, key: ContextKey) -> bool {
        self.per_goal.get(g.0).is_some_and(|m| m.contains_key(&key))
    }

    /// Known contexts of `g` in discovery order, with discovery trials.
    pub fn contexts(&self, g: GoalId) -> impl Iterator<Item = (ContextKey, u64)> + '_ {
        self.per_goal
            .get(g.0)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, t)| (*k, *t)))
    }

    pub fn count(&self, g: GoalId) -> usize {
        self.per_goal.get(g.0).map_or(0, IndexMap::len)
    }

    pub fn total(&self) -> usize {
        self.per_goal.iter().map(IndexMap::len).sum()
    }
}

/// The failure-related features: only the slot of the obstacle the
/// effector is inside.
pub fn extract_failure_features(event: &TouchEvent, state: &WorldState) -> Result<Vec<usize>> {
    match event.kind {
        TouchKind::Obstacle(j) if state.obstacle_mask.is_present(j) => Ok(vec![j]),
        TouchKind::Obstacle(j) => Err(Error::contract(format!(
            "obstacle {j} reported as touched but absent from mask {}",
            state.obstacle_mask
        ))),
        other => Err(Error::contract(format!(
            "failure features requested for a non-obstacle event ({other})"
        ))),
    }
}

/// Adds `f_fail` to the goal's useful features when the pre-trial
/// competence estimate exceeded `threshold`; returns whether it grew.
pub fn record_failure(ucf: &mut UsefulFeatures, f_fail: &[usize], prior_prob: f64, threshold: f64) -> bool {
    if prior_prob <= threshold {
        return false;
    }
    let mut changed = false;
    for &slot in f_fail {
        if slot < OBSTACLES {
            changed |= ucf.insert(slot);
        }
    }
    changed
}
