//! Goal and expert selection: softmax bandits over exponentially averaged
//! values.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context::ContextKey;
use crate::error::{Error, Result};
use crate::goals::GoalId;
use crate::world::Arm;

/// Softmax distribution of `values` at temperature `tau`, computed after
/// subtracting the maximum.
pub fn softmax_probabilities(values: &[f64], tau: f64) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::contract("softmax over an empty value list"));
    }
    if !(tau > 0.0) {
        return Err(Error::contract(format!("softmax temperature must be positive, got {tau}")));
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = values.iter().map(|v| ((v - max) / tau).exp()).collect();
    let z: f64 = p.iter().sum();
    for x in &mut p {
        *x /= z;
    }
    Ok(p)
}

/// Draws an index from the softmax distribution with one uniform variate.
pub fn softmax_sample<R: Rng + ?Sized>(values: &[f64], tau: f64, rng: &mut R) -> Result<usize> {
    let p = softmax_probabilities(values, tau)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, pi) in p.iter().enumerate() {
        acc += pi;
        if u < acc {
            return Ok(i);
        }
    }
    // Rounding can leave `acc` a hair below 1.
    Ok(p.iter().rposition(|&pi| pi > 0.0).unwrap_or(p.len() - 1))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectionParams {
    pub goal_temperature: f64,
    pub goal_value_rate: f64,
    pub expert_temperature: f64,
    pub expert_value_rate: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            goal_temperature: 0.01,
            goal_value_rate: 0.3,
            expert_temperature: 0.05,
            expert_value_rate: 0.3,
        }
    }
}

/// Values of the goal-selector (per goal and context) and of the
/// expert-selector (per goal, context and arm). Unseen entries read 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectorState {
    pub params: SelectionParams,
    goal_values: BTreeMap<(GoalId, ContextKey), f64>,
    expert_values: BTreeMap<(GoalId, ContextKey, Arm), f64>,
}

impl SelectorState {
    pub fn new(params: SelectionParams) -> Self {
        Self {
            params,
            goal_values: BTreeMap::new(),
            expert_values: BTreeMap::new(),
        }
    }

    pub fn goal_value(&self, g: GoalId, key: ContextKey) -> f64 {
        self.goal_values.get(&(g, key)).copied().unwrap_or(0.0)
    }

    pub fn expert_value(&self, g: GoalId, key: ContextKey, arm: Arm) -> f64 {
        self.expert_values.get(&(g, key, arm)).copied().unwrap_or(0.0)
    }

    /// Goal-selection probabilities, each goal valued under its own context.
    pub fn goal_probabilities(&self, candidates: &[(GoalId, ContextKey)]) -> Result<Vec<f64>> {
        let values: Vec<f64> = candidates.iter().map(|&(g, k)| self.goal_value(g, k)).collect();
        softmax_probabilities(&values, self.params.goal_temperature)
    }

    /// Picks the goal to practice; `candidates` pairs each known goal with
    /// its current context.
    pub fn select_goal<R: Rng + ?Sized>(
        &self,
        candidates: &[(GoalId, ContextKey)],
        rng: &mut R,
    ) -> Result<(GoalId, ContextKey)> {
        if candidates.is_empty() {
            return Err(Error::EmptyRepertoire);
        }
        let values: Vec<f64> = candidates.iter().map(|&(g, k)| self.goal_value(g, k)).collect();
        let i = softmax_sample(&values, self.params.goal_temperature, rng)?;
        Ok(candidates[i])
    }

    /// `Q <- Q + rate * (dC - Q)`; returns the new value.
    pub fn update_goal_value(&mut self, g: GoalId, key: ContextKey, delta_c: f64) -> f64 {
        let rate = self.params.goal_value_rate;
        let q = self.goal_values.entry((g, key)).or_insert(0.0);
        *q += rate * (delta_c - *q);
        *q
    }

    pub fn expert_probabilities(&self, g: GoalId, key: ContextKey) -> Vec<f64> {
        let values = Arm::ALL.map(|a| self.expert_value(g, key, a));
        softmax_probabilities(&values, self.params.expert_temperature).expect("two arms, positive temperature")
    }

    pub fn select_expert<R: Rng + ?Sized>(&self, g: GoalId, key: ContextKey, rng: &mut R) -> Result<Arm> {
        let values = Arm::ALL.map(|a| self.expert_value(g, key, a));
        let i = softmax_sample(&values, self.params.expert_temperature, rng)?;
        Ok(Arm::ALL[i])
    }

    /// EMA of the goal-matching reward obtained with `arm`.
    pub fn update_expert_value(&mut self, g: GoalId, key: ContextKey, arm: Arm, reward: f64) -> f64 {
        let rate = self.params.expert_value_rate;
        let v = self.expert_values.entry((g, key, arm)).or_insert(0.0);
        *v += rate * (reward - *v);
        *v
    }
}
