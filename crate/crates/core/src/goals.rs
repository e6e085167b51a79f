//! Goal discovery from visual change, the goal-representation map, and
//! goal matching.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{Frame, FRAME_PIXELS};

/// Dense index of a discovered goal; also its goal-selector slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GoalId(pub usize);

impl std::fmt::Display for GoalId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Unit-norm change image. Only the support is stored since every nonzero
/// pixel carries the same weight `1/sqrt(n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventImage {
    support: Vec<u32>,
    weight: f64,
}

impl EventImage {
    /// Normalizes a binary pixel map; `None` when no pixel is set.
    pub fn from_binary(pixels: &[u8]) -> Option<Self> {
        let support: Vec<u32> = pixels
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0)
            .map(|(i, _)| i as u32)
            .collect();
        if support.is_empty() {
            return None;
        }
        let weight = 1.0 / (support.len() as f64).sqrt();
        Some(Self { support, weight })
    }

    pub fn support(&self) -> &[u32] {
        &self.support
    }

    /// Dense 80x60 view.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; FRAME_PIXELS];
        for &i in &self.support {
            out[i as usize] = self.weight;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        (self.support.len() as f64 * self.weight * self.weight).sqrt()
    }

    pub fn inner(&self, other: &EventImage) -> f64 {
        // Both supports are sorted ascending.
        let (mut i, mut j, mut shared) = (0, 0, 0usize);
        while i < self.support.len() && j < other.support.len() {
            match self.support[i].cmp(&other.support[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    shared += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        shared as f64 * self.weight * other.weight
    }
}

/// Pixel-wise change between two frames, ignoring any pixel covered by an
/// arm in either frame.
pub fn detect_change(prev: &Frame, curr: &Frame) -> Option<EventImage> {
    let diff: Vec<u8> = (0..FRAME_PIXELS)
        .map(|i| {
            let masked = prev.arm_mask[i] != 0 || curr.arm_mask[i] != 0;
            u8::from(!masked && prev.pixels[i] != curr.pixels[i])
        })
        .collect();
    EventImage::from_binary(&diff)
}

/// Stored goal images in discovery order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalMap {
    goals: Vec<EventImage>,
    capacity: usize,
    match_threshold: f64,
}

impl GoalMap {
    pub fn new(capacity: usize, match_threshold: f64) -> Self {
        Self {
            goals: Vec::new(),
            capacity,
            match_threshold,
        }
    }

    pub fn len(&self) -> usize {
        self.goals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.goals.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn ids(&self) -> impl Iterator<Item = GoalId> {
        (0..self.goals.len()).map(GoalId)
    }

    pub fn image(&self, g: GoalId) -> Result<&EventImage> {
        self.goals.get(g.0).ok_or(Error::UnknownGoal(g.0))
    }

    /// Returns the id of the matching stored goal, or binds `img` to the
    /// first free selector slot.
    pub fn store_goal(&mut self, img: EventImage) -> Result<(GoalId, bool)> {
        if let Some(g) = self.find(&img) {
            return Ok((g, false));
        }
        if self.goals.len() >= self.capacity {
            return Err(Error::CapacityExceeded {
                capacity: self.capacity,
            });
        }
        self.goals.push(img);
        Ok((GoalId(self.goals.len() - 1), true))
    }

    pub fn find(&self, img: &EventImage) -> Option<GoalId> {
        self.goals
            .iter()
            .position(|stored| stored.inner(img) >= self.match_threshold)
            .map(GoalId)
    }

    /// Binary goal-matching reward for `img` against goal `g`.
    pub fn match_goal(&self, img: &EventImage, g: GoalId) -> Result<u8> {
        let stored = self.image(g)?;
        Ok(u8::from(stored.inner(img) >= self.match_threshold))
    }
}
