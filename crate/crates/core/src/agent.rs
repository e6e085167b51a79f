//! The learning agent and its four architecture variants.
//!
//! One trial: observe the obstacle mask and project it per goal, register
//! unseen contexts, pick a goal and (optionally) a transfer source, pick an
//! arm, run up to `steps_per_trial` control steps with online TD learning,
//! then commit the end-of-trial updates (goal discovery, failure features,
//! competence, goal and expert values).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::context::{
    extract_failure_features, filter_context, record_failure, ContextKey, ContextRegistry, UsefulFeatures,
};
use crate::error::{Error, Result};
use crate::expert::{
    actor_output, apply_noise, critic_value, learn_step, td_error, Expert, LearningParams, NoiseParams, RbfEncoder,
};
use crate::goals::{detect_change, EventImage, GoalId, GoalMap};
use crate::motivation::{CompetenceTable, CpHistory};
use crate::selection::{SelectionParams, SelectorState};
use crate::snapshot;
use crate::transfer::{commit_transfer, plan_trial, TransferPolicy, TrialPlan};
use crate::world::{rasterize, Arm, Joints, ObstacleMask, SceneConfig, TouchKind, World, WorldState, JOINTS};

pub const AGENT_SNAPSHOT_VERSION: u32 = 1;
const AGENT_TAG: &[u8; 4] = b"CGAG";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Bandit,
    CTransfer,
    SmartCBandit,
    CGrail,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Bandit, Variant::CTransfer, Variant::SmartCBandit, Variant::CGrail];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Bandit => "bandit",
            Variant::CTransfer => "c-transfer",
            Variant::SmartCBandit => "smart-c-bandit",
            Variant::CGrail => "c-grail",
        }
    }

    pub fn config(self) -> VariantConfig {
        let (context_mode, use_scd, use_transfer) = match self {
            Variant::Bandit => (ContextMode::Blank, false, false),
            Variant::CTransfer => (ContextMode::Raw, false, true),
            Variant::SmartCBandit => (ContextMode::Filtered, true, false),
            Variant::CGrail => (ContextMode::Filtered, true, true),
        };
        VariantConfig {
            context_mode,
            use_scd,
            use_transfer,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.name().to_string()
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Variant {
    type Err = Error;

    /// Case, dashes, underscores and spaces are ignored: `C-GRAIL`,
    /// `cgrail` and `c_grail` all parse.
    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .chars()
            .filter(|c| !matches!(c, '-' | '_' | ' '))
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "bandit" => Ok(Variant::Bandit),
            "ctransfer" => Ok(Variant::CTransfer),
            "smartcbandit" => Ok(Variant::SmartCBandit),
            "cgrail" => Ok(Variant::CGrail),
            _ => Err(Error::Config(format!(
                "unknown variant `{s}` (expected bandit, c-transfer, smart-c-bandit or c-grail)"
            ))),
        }
    }
}

/// How a goal sees the obstacle mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextMode {
    /// Always the blank context.
    Blank,
    /// All nine slots.
    Raw,
    /// Only the goal's useful slots.
    Filtered,
}

/// Behavioural switches. Variants differ only through these flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantConfig {
    pub context_mode: ContextMode,
    pub use_scd: bool,
    pub use_transfer: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rewards {
    pub success: f64,
    pub obstacle: f64,
    pub timeout: f64,
}

impl Default for Rewards {
    fn default() -> Self {
        Self {
            success: 1.0,
            obstacle: -1.0,
            timeout: -0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentParams {
    pub steps_per_trial: u32,
    pub rbf_per_dim: usize,
    pub goal_capacity: usize,
    pub match_threshold: f64,
    /// EMA rate of the competence predictor.
    pub competence_rate: f64,
    /// Half-window of the competence-improvement signal.
    pub improvement_period: usize,
    /// Entries a pair's window must hold before its improvement signal
    /// reaches the goal-selector; until then the signal reads 0.
    pub improvement_warmup: usize,
    /// Prior competence above which an obstacle touch adds a useful feature.
    pub competence_threshold: f64,
    /// Copy the source's noise decrease along with its weights on a
    /// successful transfer.
    pub transfer_noise: bool,
    pub selection: SelectionParams,
    pub learning: LearningParams,
    pub noise: NoiseParams,
    pub transfer: TransferPolicy,
    pub rewards: Rewards,
}

impl Default for AgentParams {
    fn default() -> Self {
        Self {
            steps_per_trial: 700,
            rbf_per_dim: 5,
            goal_capacity: 10,
            match_threshold: 0.9,
            competence_rate: 0.1,
            improvement_period: 20,
            improvement_warmup: 40,
            competence_threshold: 0.4,
            transfer_noise: true,
            selection: SelectionParams::default(),
            learning: LearningParams::default(),
            noise: NoiseParams::default(),
            transfer: TransferPolicy::default(),
            rewards: Rewards::default(),
        }
    }
}

impl AgentParams {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("match_threshold", self.match_threshold),
            ("competence_rate", self.competence_rate),
            ("competence_threshold", self.competence_threshold),
            ("selection.goal_value_rate", self.selection.goal_value_rate),
            ("selection.expert_value_rate", self.selection.expert_value_rate),
            ("learning.discount", self.learning.discount),
            ("noise.smoothing", self.noise.smoothing),
            ("noise.decrease_rate", self.noise.decrease_rate),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        let positive = [
            ("selection.goal_temperature", self.selection.goal_temperature),
            ("selection.expert_temperature", self.selection.expert_temperature),
            ("learning.critic_rate", self.learning.critic_rate),
            ("learning.actor_rate", self.learning.actor_rate),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.noise.base_sd >= 0.0 && self.noise.base_sd.is_finite()) {
            return Err(Error::Config(format!("noise.base_sd = {} must be non-negative", self.noise.base_sd)));
        }
        if self.steps_per_trial == 0 {
            return Err(Error::Config("steps_per_trial must be positive".into()));
        }
        if self.improvement_period == 0 {
            return Err(Error::Config("improvement_period must be positive".into()));
        }
        if self.goal_capacity == 0 {
            return Err(Error::Config("goal_capacity must be positive".into()));
        }
        self.transfer.validate()?;
        RbfEncoder::new(self.rbf_per_dim)?;
        Ok(())
    }
}

/// Outcome of a trial's transfer attempt.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferEvent {
    pub source: ContextKey,
    /// Whether the weights were copied into the target expert.
    pub committed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub trial: u64,
    pub mask: ObstacleMask,
    /// `None` for a babbling trial.
    pub goal: Option<GoalId>,
    pub context: Option<ContextKey>,
    pub arm: Arm,
    pub touch: TouchKind,
    pub success: bool,
    pub reward_sum: f64,
    pub steps: u32,
    /// Competence estimate before the trial.
    pub prior: f64,
    /// Competence estimate after the trial.
    pub chi: f64,
    pub delta_c: f64,
    pub goal_value: f64,
    pub transfer: Option<TransferEvent>,
    pub new_contexts: Vec<(GoalId, ContextKey)>,
    pub new_goal: Option<GoalId>,
    /// Slot added to the goal's useful features, if any.
    pub feature_added: Option<usize>,
}

/// Result of one episode of control.
#[derive(Clone, Debug)]
struct Rollout {
    touch: TouchKind,
    steps: u32,
    reward_sum: f64,
    success: bool,
    event: Option<EventImage>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    Train,
    Babble,
    Frozen,
}

pub type ExpertSlot = (GoalId, ContextKey, Arm);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    params: AgentParams,
    variant: VariantConfig,
    encoder: RbfEncoder,
    goals: GoalMap,
    ucf: Vec<UsefulFeatures>,
    registry: ContextRegistry,
    competence: CompetenceTable,
    history: CpHistory,
    selector: SelectorState,
    experts: BTreeMap<ExpertSlot, Expert>,
    trials: u64,
}

impl Agent {
    pub fn new(params: AgentParams, variant: VariantConfig) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            encoder: RbfEncoder::new(params.rbf_per_dim)?,
            goals: GoalMap::new(params.goal_capacity, params.match_threshold),
            ucf: Vec::new(),
            registry: ContextRegistry::new(),
            competence: CompetenceTable::new(params.competence_rate),
            history: CpHistory::new(params.improvement_period),
            selector: SelectorState::new(params.selection),
            experts: BTreeMap::new(),
            trials: 0,
            params,
            variant,
        })
    }

    pub fn params(&self) -> &AgentParams {
        &self.params
    }

    pub fn variant(&self) -> VariantConfig {
        self.variant
    }

    pub fn goals(&self) -> &GoalMap {
        &self.goals
    }

    pub fn useful_features(&self, g: GoalId) -> Option<&UsefulFeatures> {
        self.ucf.get(g.0)
    }

    pub fn registry(&self) -> &ContextRegistry {
        &self.registry
    }

    pub fn competence(&self) -> &CompetenceTable {
        &self.competence
    }

    pub fn history(&self) -> &CpHistory {
        &self.history
    }

    pub fn selector(&self) -> &SelectorState {
        &self.selector
    }

    pub fn experts(&self) -> &BTreeMap<ExpertSlot, Expert> {
        &self.experts
    }

    pub fn trials(&self) -> u64 {
        self.trials
    }

    /// Goal `g`'s view of `mask` under this variant.
    pub fn context_of(&self, g: GoalId, mask: ObstacleMask) -> ContextKey {
        match self.variant.context_mode {
            ContextMode::Blank => ContextKey::BLANK,
            ContextMode::Raw => filter_context(mask, &UsefulFeatures::all()),
            ContextMode::Filtered => match self.ucf.get(g.0) {
                Some(u) => filter_context(mask, u),
                None => ContextKey::BLANK,
            },
        }
    }

    fn fresh_expert(&self) -> Expert {
        Expert::new(self.encoder.units())
    }

    /// Runs one training trial. The world must already be reset with this
    /// trial's obstacle mask.
    pub fn run_trial<R: Rng + ?Sized>(&mut self, world: &mut World, rng: &mut R) -> Result<TrialLog> {
        let trial = self.trials;
        let mask = world.state.obstacle_mask;
        world.reset(mask);

        let observed: Vec<(GoalId, ContextKey)> = self.goals.ids().map(|g| (g, self.context_of(g, mask))).collect();
        let mut new_contexts = Vec::new();
        for &(g, key) in &observed {
            if self.registry.register_context(g, key, trial) {
                new_contexts.push((g, key));
            }
        }

        if observed.is_empty() {
            return self.babble(world, rng, trial, mask, new_contexts);
        }

        let (g, key) = self.selector.select_goal(&observed, rng)?;
        let plan = if self.variant.use_transfer {
            plan_trial(g, key, &self.params.transfer, &self.competence, &self.registry, rng)
        } else {
            TrialPlan::OwnPolicy
        };
        let prior = self.competence.predict(g, key);
        let controller_key = match plan {
            TrialPlan::OwnPolicy => key,
            TrialPlan::TransferFrom(src) => src,
        };
        let arm = self.selector.select_expert(g, controller_key, rng)?;
        let mut working = self
            .experts
            .get(&(g, controller_key, arm))
            .cloned()
            .unwrap_or_else(|| self.fresh_expert());

        world.set_active_arm(arm);
        let out = self.rollout(&mut working, world, Some(g), Mode::Train, rng)?;

        // Fallible work first so that a failure leaves the agent untouched.
        let failure_features = match out.touch {
            TouchKind::Obstacle(_) if self.variant.use_scd => {
                let ev = crate::world::TouchEvent {
                    kind: out.touch,
                    effector_pos: world.state.effector(&world.cfg),
                };
                Some(extract_failure_features(&ev, &world.state)?)
            }
            _ => None,
        };
        let new_goal = self.discover(out.event.clone())?;

        let success = out.success;
        let transfer = match plan {
            TrialPlan::OwnPolicy => {
                working.noise.record_outcome(success, &self.params.noise);
                self.experts.insert((g, key, arm), working);
                None
            }
            TrialPlan::TransferFrom(source) => {
                if success {
                    let fresh = self.fresh_expert();
                    let target = self.experts.entry((g, key, arm)).or_insert(fresh);
                    commit_transfer(&working.net, &mut target.net, true);
                    if self.params.transfer_noise {
                        target.noise.decrease = working.noise.decrease;
                    }
                }
                Some(TransferEvent {
                    source,
                    committed: success,
                })
            }
        };

        let mut feature_added = None;
        if let Some(f_fail) = failure_features {
            let ucf = &mut self.ucf[g.0];
            if record_failure(ucf, &f_fail, prior, self.params.competence_threshold) {
                feature_added = f_fail.first().copied();
            }
        }

        self.competence.update(g, key, success, &mut self.history);
        let filled = self.history.window(g, key).map_or(0, |w| w.len());
        let delta_c = if filled >= self.params.improvement_warmup {
            self.history.delta_c(g, key)
        } else {
            0.0
        };
        let goal_value = self.selector.update_goal_value(g, key, delta_c);
        self.selector
            .update_expert_value(g, key, arm, if success { 1.0 } else { 0.0 });
        self.trials += 1;

        Ok(TrialLog {
            trial,
            mask,
            goal: Some(g),
            context: Some(key),
            arm,
            touch: out.touch,
            success,
            reward_sum: out.reward_sum,
            steps: out.steps,
            prior,
            chi: self.competence.predict(g, key),
            delta_c,
            goal_value,
            transfer,
            new_contexts,
            new_goal,
            feature_added,
        })
    }

    /// Exploration before any goal exists: random arm, untrained policy,
    /// full noise, nothing learned except the goals it stumbles upon.
    fn babble<R: Rng + ?Sized>(
        &mut self,
        world: &mut World,
        rng: &mut R,
        trial: u64,
        mask: ObstacleMask,
        new_contexts: Vec<(GoalId, ContextKey)>,
    ) -> Result<TrialLog> {
        let arm = Arm::ALL[rng.random_range(0..Arm::ALL.len())];
        world.set_active_arm(arm);
        let mut scratch = self.fresh_expert();
        let out = self.rollout(&mut scratch, world, None, Mode::Babble, rng)?;
        let new_goal = self.discover(out.event)?;
        self.trials += 1;
        Ok(TrialLog {
            trial,
            mask,
            goal: None,
            context: None,
            arm,
            touch: out.touch,
            success: false,
            reward_sum: out.reward_sum,
            steps: out.steps,
            prior: 0.0,
            chi: 0.0,
            delta_c: 0.0,
            goal_value: 0.0,
            transfer: None,
            new_contexts,
            new_goal,
            feature_added: None,
        })
    }

    fn discover(&mut self, event: Option<EventImage>) -> Result<Option<GoalId>> {
        let Some(img) = event else {
            return Ok(None);
        };
        let (g, is_new) = self.goals.store_goal(img)?;
        if is_new {
            self.ucf.push(UsefulFeatures::empty());
            return Ok(Some(g));
        }
        Ok(None)
    }

    /// Noise-free, non-learning attempt at `g` in the world's current
    /// context. The arm is the one with the higher expert value (left on a
    /// tie); an unseen slot runs an untrained expert.
    pub fn attempt_frozen(&self, world: &mut World, g: GoalId) -> Result<bool> {
        self.goals.image(g)?;
        let mask = world.state.obstacle_mask;
        world.reset(mask);
        let key = self.context_of(g, mask);
        let arm = if self.selector.expert_value(g, key, Arm::Right) > self.selector.expert_value(g, key, Arm::Left) {
            Arm::Right
        } else {
            Arm::Left
        };
        world.set_active_arm(arm);
        let mut expert = self.experts.get(&(g, key, arm)).cloned().unwrap_or_else(|| self.fresh_expert());
        // Frozen rollouts draw no random numbers.
        let mut unused = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        Ok(self.rollout(&mut expert, world, Some(g), Mode::Frozen, &mut unused)?.success)
    }

    fn rollout<R: Rng + ?Sized>(
        &self,
        expert: &mut Expert,
        world: &mut World,
        goal: Option<GoalId>,
        mode: Mode,
        rng: &mut R,
    ) -> Result<Rollout> {
        expert.noise.reset_trial();
        let arm = world.state.active_arm;
        let limits = world.cfg.joint_limits[arm.index()];
        let normalize = |q: &Joints| -> [f64; JOINTS] { std::array::from_fn(|k| limits[k].normalize(q[k])) };
        let units = self.encoder.units();
        let mut y = vec![0.0; units];
        let mut y_next = vec![0.0; units];
        self.encoder.encode_into(&normalize(world.state.active_joints()), &mut y);
        let rewards = self.params.rewards;
        let horizon = self.params.steps_per_trial;

        let mut reward_sum = 0.0;
        for step in 1..=horizon {
            let o = actor_output(&y, &expert.net);
            let c = match mode {
                Mode::Frozen => o,
                _ => apply_noise(&o, &mut expert.noise, &self.params.noise, rng),
            };
            let ev = world.step(&c);
            let (r, terminal, event, success) = match ev.kind {
                TouchKind::Target(i) => {
                    let img = target_event(&world.cfg, &world.state, i);
                    let hit = match (goal, &img) {
                        (Some(g), Some(img)) => self.goals.match_goal(img, g)? == 1,
                        _ => false,
                    };
                    (if hit { rewards.success } else { 0.0 }, true, img, hit)
                }
                TouchKind::Obstacle(_) => (rewards.obstacle, true, None, false),
                TouchKind::None if step == horizon => (rewards.timeout, true, None, false),
                TouchKind::None => (0.0, false, None, false),
            };
            reward_sum += r;
            if !terminal {
                self.encoder.encode_into(&normalize(world.state.active_joints()), &mut y_next);
            }
            if mode == Mode::Train {
                let v_prev = critic_value(&y, &expert.net);
                let v_now = if terminal { 0.0 } else { critic_value(&y_next, &expert.net) };
                let delta = td_error(r, v_now, v_prev, terminal, self.params.learning.discount);
                learn_step(&mut expert.net, &y, delta, &o, &c, &self.params.learning);
            }
            if terminal {
                return Ok(Rollout {
                    touch: ev.kind,
                    steps: step,
                    reward_sum,
                    success,
                    event,
                });
            }
            std::mem::swap(&mut y, &mut y_next);
        }
        unreachable!("the last step is always terminal")
    }

    pub fn snapshot(&self) -> Result<Vec<u8>> {
        snapshot::encode(AGENT_TAG, AGENT_SNAPSHOT_VERSION, self)
    }

    pub fn restore(bytes: &[u8]) -> Result<Self> {
        let agent: Agent = snapshot::decode(AGENT_TAG, AGENT_SNAPSHOT_VERSION, bytes)?;
        agent.params.validate()?;
        Ok(agent)
    }
}

/// The visual event of target `i` lighting up, observed with both arms
/// back at rest so the lit disc is never occluded.
pub fn target_event(cfg: &SceneConfig, state: &WorldState, i: usize) -> Option<EventImage> {
    let before = WorldState::reset(cfg, state.obstacle_mask, state.active_arm);
    let mut after = before;
    after.target_lit[i] = true;
    detect_change(&rasterize(&before, cfg), &rasterize(&after, cfg))
}
