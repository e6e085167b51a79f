//! Success-gated policy transfer between contexts of the same goal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::context::{ContextKey, ContextRegistry};
use crate::error::{Error, Result};
use crate::expert::ExpertNet;
use crate::goals::GoalId;
use crate::motivation::CompetenceTable;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransferPolicy {
    /// Below this competence the target expert is still considered untrained.
    pub learning_threshold: f64,
    /// A source must be at least this competent.
    pub transfer_threshold: f64,
    pub transfer_probability: f64,
}

impl Default for TransferPolicy {
    fn default() -> Self {
        Self {
            learning_threshold: 0.4,
            transfer_threshold: 0.7,
            transfer_probability: 0.5,
        }
    }
}

impl TransferPolicy {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("learning_threshold", self.learning_threshold),
            ("transfer_threshold", self.transfer_threshold),
            ("transfer_probability", self.transfer_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Who controls the arm in the coming trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialPlan {
    OwnPolicy,
    TransferFrom(ContextKey),
}

/// Other known contexts of `g` whose competence reaches the transfer
/// threshold, in discovery order.
pub fn candidate_sources(
    g: GoalId,
    target: ContextKey,
    policy: &TransferPolicy,
    competence: &CompetenceTable,
    registry: &ContextRegistry,
) -> Vec<ContextKey> {
    registry
        .contexts(g)
        .map(|(k, _)| k)
        .filter(|&k| k != target && competence.predict(g, k) >= policy.transfer_threshold)
        .collect()
}

/// Decides whether this trial is run by a competent sibling policy. No
/// random numbers are drawn when the target is already learning or when no
/// source qualifies.
pub fn plan_trial<R: Rng + ?Sized>(
    g: GoalId,
    target: ContextKey,
    policy: &TransferPolicy,
    competence: &CompetenceTable,
    registry: &ContextRegistry,
    rng: &mut R,
) -> TrialPlan {
    if competence.predict(g, target) >= policy.learning_threshold {
        return TrialPlan::OwnPolicy;
    }
    let sources = candidate_sources(g, target, policy, competence, registry);
    if sources.is_empty() {
        return TrialPlan::OwnPolicy;
    }
    if rng.random::<f64>() >= policy.transfer_probability {
        return TrialPlan::OwnPolicy;
    }
    TrialPlan::TransferFrom(sources[rng.random_range(0..sources.len())])
}

/// Copies `source` into `target` when the trial it controlled succeeded.
pub fn commit_transfer(source: &ExpertNet, target: &mut ExpertNet, trial_success: bool) -> bool {
    if trial_success {
        target.clone_from(source);
    }
    trial_success
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motivation::CpHistory;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const G: GoalId = GoalId(0);

    fn key(s: &str) -> ContextKey {
        s.parse().unwrap()
    }

    /// Drives chi(g, k) to the first value reachable at or above `target`.
    fn train(t: &mut CompetenceTable, k: ContextKey, target: f64) {
        let mut h = CpHistory::new(20);
        while t.predict(G, k) < target {
            t.update(G, k, true, &mut h);
        }
    }

    fn setup(levels: &[(&str, f64)]) -> (CompetenceTable, ContextRegistry) {
        let mut t = CompetenceTable::new(0.01);
        let mut reg = ContextRegistry::new();
        for (i, (k, chi)) in levels.iter().enumerate() {
            reg.register_context(G, key(k), i as u64);
            train(&mut t, key(k), *chi);
        }
        (t, reg)
    }

    #[test]
    fn singleton_registry_has_no_sources() {
        let (t, reg) = setup(&[("0xxxxxxxx", 0.9)]);
        assert!(candidate_sources(G, key("0xxxxxxxx"), &TransferPolicy::default(), &t, &reg).is_empty());
    }

    #[test]
    fn threshold_filter() {
        let (t, reg) = setup(&[
            ("00xxxxxxx", 0.9),
            ("01xxxxxxx", 0.69),
            ("10xxxxxxx", 0.705),
            ("11xxxxxxx", 0.0),
        ]);
        assert!(t.predict(G, key("01xxxxxxx")) < 0.7);
        let got = candidate_sources(G, key("11xxxxxxx"), &TransferPolicy::default(), &t, &reg);
        assert_eq!(got, vec![key("00xxxxxxx"), key("10xxxxxxx")]);
    }

    #[test]
    fn target_is_excluded_even_when_competent() {
        let (t, reg) = setup(&[("0xxxxxxxx", 0.9), ("1xxxxxxxx", 0.9)]);
        let got = candidate_sources(G, key("0xxxxxxxx"), &TransferPolicy::default(), &t, &reg);
        assert_eq!(got, vec![key("1xxxxxxxx")]);
    }

    #[test]
    fn competent_target_keeps_its_own_policy() {
        let (t, reg) = setup(&[("0xxxxxxxx", 0.5), ("1xxxxxxxx", 0.9)]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let plan = plan_trial(G, key("0xxxxxxxx"), &TransferPolicy::default(), &t, &reg, &mut rng);
            assert_eq!(plan, TrialPlan::OwnPolicy);
        }
    }

    #[test]
    fn transfer_probability_is_honoured() {
        let (t, reg) = setup(&[("0xxxxxxxx", 0.0), ("1xxxxxxxx", 0.9)]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 10_000;
        let transfers = (0..n)
            .filter(|_| {
                plan_trial(G, key("0xxxxxxxx"), &TransferPolicy::default(), &t, &reg, &mut rng)
                    == TrialPlan::TransferFrom(key("1xxxxxxxx"))
            })
            .count();
        let f = transfers as f64 / n as f64;
        assert!((f - 0.5).abs() <= 0.02, "{f}");
    }

    #[test]
    fn no_sources_means_own_policy_and_no_draws() {
        let (t, reg) = setup(&[("0xxxxxxxx", 0.0), ("1xxxxxxxx", 0.3)]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let before = rng.clone();
        for _ in 0..100 {
            assert_eq!(
                plan_trial(G, key("0xxxxxxxx"), &TransferPolicy::default(), &t, &reg, &mut rng),
                TrialPlan::OwnPolicy
            );
        }
        assert_eq!(rng, before);
    }

    #[test]
    fn several_sources_are_picked_uniformly() {
        let (t, reg) = setup(&[("00xxxxxxx", 0.0), ("01xxxxxxx", 0.9), ("10xxxxxxx", 0.9)]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = [0usize; 2];
        for _ in 0..10_000 {
            match plan_trial(G, key("00xxxxxxx"), &TransferPolicy::default(), &t, &reg, &mut rng) {
                TrialPlan::TransferFrom(k) if k == key("01xxxxxxx") => counts[0] += 1,
                TrialPlan::TransferFrom(_) => counts[1] += 1,
                TrialPlan::OwnPolicy => {}
            }
        }
        let share = counts[0] as f64 / (counts[0] + counts[1]) as f64;
        assert!((share - 0.5).abs() < 0.03, "{share}");
    }

    fn random_net(seed: u64) -> ExpertNet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = ExpertNet::zeros(625);
        net.critic_weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        net.actor_weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        net.critic_bias = 0.3;
        net.actor_biases = [0.1, -0.2, 0.3, -0.4];
        net
    }

    #[test]
    fn success_copies_bit_exactly() {
        let source = random_net(4);
        let mut target = ExpertNet::zeros(625);
        assert!(commit_transfer(&source, &mut target, true));
        assert_eq!(target, source);
    }

    #[test]
    fn failure_leaves_target_untouched() {
        let source = random_net(5);
        let mut target = random_net(6);
        let before = target.clone();
        assert!(!commit_transfer(&source, &mut target, false));
        assert_eq!(target, before);
    }

    #[test]
    fn copied_policy_replays_the_same_actions() {
        use crate::expert::{actor_output, apply_noise, NoiseParams, NoiseState, RbfEncoder};
        let enc = RbfEncoder::new(5).unwrap();
        let source = random_net(7);
        let mut target = ExpertNet::zeros(625);
        commit_transfer(&source, &mut target, true);
        let run = |net: &ExpertNet| {
            let mut rng = ChaCha8Rng::seed_from_u64(8);
            let mut noise = NoiseState::default();
            let mut x = [0.3, 0.5, 0.7, 0.2];
            let mut trace = Vec::new();
            for _ in 0..50 {
                let y = enc.encode(&x);
                let c = apply_noise(&actor_output(&y, net), &mut noise, &NoiseParams::default(), &mut rng);
                for k in 0..4 {
                    x[k] = (x[k] + 0.02 * (2.0 * c[k] - 1.0)).clamp(0.0, 1.0);
                }
                trace.push(c);
            }
            trace
        };
        assert_eq!(run(&source), run(&target));
    }

    #[test]
    fn invalid_policy_is_rejected() {
        let p = TransferPolicy {
            transfer_probability: 1.5,
            ..TransferPolicy::default()
        };
        assert!(p.validate().is_err());
    }
}
