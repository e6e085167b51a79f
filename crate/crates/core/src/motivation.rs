//! Competence prediction and the competence-improvement signal.
//!
//! For every (goal, context) pair the predictor keeps an exponential moving
//! average of goal achievement. Each trial records the magnitude of the
//! prediction error made before the update; the intrinsic signal is the
//! mean error over the older half of the recent window minus the mean over
//! the newer half, so it is positive while predictions are getting better
//! and fades once they stop improving.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::context::ContextKey;
use crate::goals::GoalId;

pub type PairKey = (GoalId, ContextKey);

/// Competence estimates `chi(g, phi)`, all starting at 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompetenceTable {
    estimates: BTreeMap<PairKey, f64>,
    ema_rate: f64,
}

impl CompetenceTable {
    pub fn new(ema_rate: f64) -> Self {
        Self {
            estimates: BTreeMap::new(),
            ema_rate,
        }
    }

    pub fn ema_rate(&self) -> f64 {
        self.ema_rate
    }

    pub fn predict(&self, g: GoalId, key: ContextKey) -> f64 {
        self.estimates.get(&(g, key)).copied().unwrap_or(0.0)
    }

    /// Records `|outcome - chi|` into `history`, then moves the estimate
    /// toward the outcome. Returns the recorded value.
    pub fn update(&mut self, g: GoalId, key: ContextKey, success: bool, history: &mut CpHistory) -> f64 {
        let outcome = if success { 1.0 } else { 0.0 };
        let chi = self.estimates.entry((g, key)).or_insert(0.0);
        let cp = (outcome - *chi).abs();
        history.push(g, key, cp);
        *chi += self.ema_rate * (outcome - *chi);
        cp
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PairKey, &f64)> {
        self.estimates.iter()
    }
}

/// Rolling windows of the last `2 * period` prediction errors per pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpHistory {
    windows: BTreeMap<PairKey, VecDeque<f64>>,
    period: usize,
}

impl CpHistory {
    pub fn new(period: usize) -> Self {
        Self {
            windows: BTreeMap::new(),
            period,
        }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn push(&mut self, g: GoalId, key: ContextKey, cp: f64) {
        let cap = 2 * self.period;
        let buf = self
            .windows
            .entry((g, key))
            .or_insert_with(|| VecDeque::with_capacity(cap));
        if buf.len() == cap {
            buf.pop_front();
        }
        buf.push_back(cp);
    }

    pub fn window(&self, g: GoalId, key: ContextKey) -> Option<&VecDeque<f64>> {
        self.windows.get(&(g, key))
    }

    /// Competence improvement: mean of the older half of the window minus
    /// mean of the newer half. Fewer than two entries give 0; a partial
    /// window is split with the extra element in the older half.
    pub fn delta_c(&self, g: GoalId, key: ContextKey) -> f64 {
        let Some(buf) = self.windows.get(&(g, key)) else {
            return 0.0;
        };
        let k = buf.len();
        if k < 2 {
            return 0.0;
        }
        let older_len = k.div_ceil(2);
        let older: f64 = buf.iter().take(older_len).map(|v| v.abs()).sum();
        let newer: f64 = buf.iter().skip(older_len).map(|v| v.abs()).sum();
        older / older_len as f64 - newer / (k - older_len) as f64
    }
}
