//! Experiment runner: configuration, seeding, metrics CSV, run snapshots,
//! frozen evaluation and plot emission.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentParams, TrialLog, Variant, VariantConfig};
use crate::context::ContextKey;
use crate::error::{Error, Result};
use crate::goals::GoalId;
use crate::snapshot;
use crate::world::{sample_obstacle_mask, SceneConfig, World};

/// First line of every metrics file.
pub const METRICS_SCHEMA: &str = "# cgrail-metrics v1";

pub const METRICS_COLUMNS: [&str; 24] = [
    "variant",
    "seed",
    "trial",
    "goal",
    "context",
    "arm",
    "mask",
    "touch",
    "success",
    "reward_sum",
    "steps",
    "window_rate",
    "goal_window_rate",
    "contexts",
    "useful",
    "prior",
    "chi",
    "delta_c",
    "goal_value",
    "transfer",
    "transfer_source",
    "new_contexts",
    "new_goal",
    "feature_added",
];

pub const RUN_SNAPSHOT_VERSION: u32 = 1;
const RUN_TAG: &[u8; 4] = b"CGRN";

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "CGRAIL_OUT";

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub variant: Variant,
    pub trials: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Trials per windowed success rate.
    pub success_window: usize,
    pub out_dir: PathBuf,
    pub agent: AgentParams,
    pub scene: SceneConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            variant: Variant::CGrail,
            trials: 10_000,
            seeds: default_seeds(),
            success_window: 200,
            out_dir: PathBuf::from("out"),
            agent: AgentParams::default(),
            scene: SceneConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.success_window == 0 {
            return Err(Error::Config("success_window must be positive".into()));
        }
        self.agent.validate()?;
        self.scene.validate()
    }
}

/// Rolling success rates, overall and per goal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SuccessWindows {
    len: usize,
    overall: VecDeque<bool>,
    per_goal: BTreeMap<GoalId, VecDeque<bool>>,
}

impl SuccessWindows {
    fn new(len: usize) -> Self {
        Self {
            len,
            overall: VecDeque::with_capacity(len),
            per_goal: BTreeMap::new(),
        }
    }

    fn push_to(buf: &mut VecDeque<bool>, len: usize, v: bool) -> f64 {
        if buf.len() == len {
            buf.pop_front();
        }
        buf.push_back(v);
        buf.iter().filter(|&&b| b).count() as f64 / buf.len() as f64
    }

    /// Records a trial and returns (overall rate, goal rate).
    fn record(&mut self, goal: Option<GoalId>, success: bool) -> (f64, Option<f64>) {
        let overall = Self::push_to(&mut self.overall, self.len, success);
        let per_goal = goal.map(|g| {
            let buf = self.per_goal.entry(g).or_insert_with(|| VecDeque::with_capacity(self.len));
            Self::push_to(buf, self.len, success)
        });
        (overall, per_goal)
    }
}

/// One trial as written to the metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub variant: String,
    pub seed: u64,
    pub trial: u64,
    pub goal: Option<usize>,
    pub context: Option<String>,
    pub arm: String,
    pub mask: String,
    pub touch: String,
    pub success: u8,
    pub reward_sum: f64,
    pub steps: u32,
    /// Success rate over the last `success_window` trials.
    pub window_rate: f64,
    /// Success rate over the last `success_window` trials of this goal.
    pub goal_window_rate: Option<f64>,
    /// Known contexts per goal, `;`-separated in goal order.
    pub contexts: String,
    /// Useful features per goal, `;`-separated in goal order.
    pub useful: String,
    pub prior: f64,
    pub chi: f64,
    pub delta_c: f64,
    pub goal_value: f64,
    /// Empty, `attempt` or `commit`.
    pub transfer: String,
    pub transfer_source: Option<String>,
    /// `goal:key` pairs registered this trial, `;`-separated.
    pub new_contexts: String,
    pub new_goal: Option<usize>,
    pub feature_added: Option<usize>,
}

impl MetricsRow {
    pub fn total_contexts(&self) -> usize {
        parse_counts(&self.contexts).iter().sum()
    }
}

fn parse_counts(s: &str) -> Vec<usize> {
    s.split(';').filter(|p| !p.is_empty()).filter_map(|p| p.parse().ok()).collect()
}

fn join<I: IntoIterator<Item = String>>(items: I) -> String {
    items.into_iter().collect::<Vec<_>>().join(";")
}

/// A seeded world/agent pair stepping one trial at a time. Obstacle masks
/// and the agent's own draws use separate streams of the same seed.
#[derive(Clone, Debug)]
pub struct Runner {
    label: String,
    seed: u64,
    world: World,
    agent: Agent,
    world_rng: ChaCha8Rng,
    agent_rng: ChaCha8Rng,
    windows: SuccessWindows,
}

impl Runner {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        Self::with_flags(cfg, cfg.variant.config(), cfg.variant.name(), seed)
    }

    /// Like [`Runner::new`] with explicit behavioural switches, for
    /// ablations. `label` fills the metrics `variant` column.
    pub fn with_flags(cfg: &ExperimentConfig, flags: VariantConfig, label: &str, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let agent_rng = {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(1);
            r
        };
        Ok(Self {
            label: label.to_string(),
            seed,
            world: World::new(cfg.scene.clone()),
            agent: Agent::new(cfg.agent.clone(), flags)?,
            world_rng: ChaCha8Rng::seed_from_u64(seed),
            agent_rng,
            windows: SuccessWindows::new(cfg.success_window),
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn scene(&self) -> &SceneConfig {
        &self.world.cfg
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Samples the next obstacle mask and runs one trial.
    pub fn step(&mut self) -> Result<TrialLog> {
        let mask = sample_obstacle_mask(&mut self.world_rng);
        self.world.reset(mask);
        self.agent.run_trial(&mut self.world, &mut self.agent_rng)
    }

    /// Runs one trial and converts it to a metrics row.
    pub fn step_row(&mut self) -> Result<MetricsRow> {
        let log = self.step()?;
        Ok(self.row(&log))
    }

    fn row(&mut self, log: &TrialLog) -> MetricsRow {
        let (window_rate, goal_window_rate) = self.windows.record(log.goal, log.success);
        let ids: Vec<GoalId> = self.agent.goals().ids().collect();
        MetricsRow {
            variant: self.label.clone(),
            seed: self.seed,
            trial: log.trial,
            goal: log.goal.map(|g| g.0),
            context: log.context.map(|k| k.to_string()),
            arm: log.arm.to_string(),
            mask: log.mask.to_string(),
            touch: log.touch.to_string(),
            success: log.success as u8,
            reward_sum: log.reward_sum,
            steps: log.steps,
            window_rate,
            goal_window_rate,
            contexts: join(ids.iter().map(|&g| self.agent.registry().count(g).to_string())),
            useful: join(
                ids.iter()
                    .map(|&g| self.agent.useful_features(g).map_or(0, |u| u.len()).to_string()),
            ),
            prior: log.prior,
            chi: log.chi,
            delta_c: log.delta_c,
            goal_value: log.goal_value,
            transfer: match log.transfer {
                None => String::new(),
                Some(t) if t.committed => "commit".into(),
                Some(_) => "attempt".into(),
            },
            transfer_source: log.transfer.map(|t| t.source.to_string()),
            new_contexts: join(log.new_contexts.iter().map(|(g, k)| format!("{}:{k}", g.0))),
            new_goal: log.new_goal.map(|g| g.0),
            feature_added: log.feature_added,
        }
    }

    pub fn snapshot(&self) -> RunSnapshot {
        RunSnapshot {
            label: self.label.clone(),
            seed: self.seed,
            scene: self.world.cfg.clone(),
            agent: self.agent.clone(),
            world_rng: self.world_rng.clone(),
            agent_rng: self.agent_rng.clone(),
            windows: self.windows.clone(),
        }
    }

    /// Resumes a run exactly where its snapshot was taken.
    pub fn restore(snap: RunSnapshot) -> Result<Self> {
        snap.scene.validate()?;
        snap.agent.params().validate()?;
        Ok(Self {
            label: snap.label,
            seed: snap.seed,
            world: World::new(snap.scene),
            agent: snap.agent,
            world_rng: snap.world_rng,
            agent_rng: snap.agent_rng,
            windows: snap.windows,
        })
    }
}

/// Scene, agent and random streams: enough to evaluate a trained agent or
/// to resume its run bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub label: String,
    pub seed: u64,
    pub scene: SceneConfig,
    pub agent: Agent,
    world_rng: ChaCha8Rng,
    agent_rng: ChaCha8Rng,
    windows: SuccessWindows,
}

impl RunSnapshot {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        snapshot::encode(RUN_TAG, RUN_SNAPSHOT_VERSION, self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let snap: RunSnapshot = snapshot::decode(RUN_TAG, RUN_SNAPSHOT_VERSION, bytes)?;
        snap.agent.params().validate()?;
        snap.scene.validate()?;
        Ok(snap)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Streams metrics rows to a CSV file behind the schema line.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut out: W) -> Result<Self> {
        writeln!(out, "{METRICS_SCHEMA}").map_err(|e| Error::io("metrics", e))?;
        // Header written by hand so that zero-row files still carry it.
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        inner.write_record(METRICS_COLUMNS)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::io("metrics", e))?;
        self.inner.into_inner().map_err(|e| Error::io("metrics", e.into_error()))
    }
}

/// Parses a metrics file, rejecting any other schema.
pub fn read_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let (first, rest) = text.split_once('\n').unwrap_or((text, ""));
    let first = first.trim_end_matches('\r');
    if first != METRICS_SCHEMA {
        return Err(Error::Schema(format!("expected `{METRICS_SCHEMA}`, found `{first}`")));
    }
    let mut rdr = csv::Reader::from_reader(rest.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_COLUMNS {
        return Err(Error::Schema(format!("unexpected columns: {}", header.join(","))));
    }
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

pub fn load_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    read_metrics(&text).map_err(|e| match e {
        Error::Schema(m) => Error::Schema(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: PathBuf,
    pub snapshot: PathBuf,
    pub trials: u64,
    /// Overall windowed success rate after the last trial.
    pub final_window_rate: f64,
}

pub fn metrics_file_name(label: &str, seed: u64) -> String {
    format!("{label}-seed{seed}.csv")
}

pub fn snapshot_file_name(label: &str, seed: u64) -> String {
    format!("{label}-seed{seed}.snap")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Runs `cfg.trials` trials of one seed, writing `<variant>-seed<n>.csv`
/// and `<variant>-seed<n>.snap` under `out_dir`. Both files are opened
/// before the first trial so an unwritable directory fails fast.
pub fn run_experiment(cfg: &ExperimentConfig, seed: u64, out_dir: &Path) -> Result<RunOutput> {
    let mut runner = Runner::new(cfg, seed)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let label = cfg.variant.name();
    let metrics_path = out_dir.join(metrics_file_name(label, seed));
    let snapshot_path = out_dir.join(snapshot_file_name(label, seed));
    let mut metrics = MetricsWriter::new(create(&metrics_path)?)?;
    let mut snap_out = create(&snapshot_path)?;

    let mut last_rate = 0.0;
    for _ in 0..cfg.trials {
        let row = runner.step_row()?;
        last_rate = row.window_rate;
        metrics.write(&row)?;
    }
    metrics.finish()?;
    snap_out
        .write_all(&runner.snapshot().to_bytes()?)
        .and_then(|_| snap_out.flush())
        .map_err(|e| Error::io(&snapshot_path, e))?;
    Ok(RunOutput {
        metrics: metrics_path,
        snapshot: snapshot_path,
        trials: cfg.trials,
        final_window_rate: last_rate,
    })
}

/// Runs every configured seed in turn.
pub fn run_seeds(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Vec<RunOutput>> {
    cfg.seeds.iter().map(|&s| run_experiment(cfg, s, out_dir)).collect()
}

/// Resolves the output root: an explicit path wins, then `CGRAIL_OUT`,
/// then the configured directory.
pub fn output_root(explicit: Option<&Path>, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => cfg.out_dir.clone(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCell {
    pub goal: GoalId,
    pub context: ContextKey,
    pub attempts: u64,
    pub successes: u64,
}

impl EvalCell {
    pub fn rate(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.successes as f64 / self.attempts as f64
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub cells: Vec<EvalCell>,
    pub attempts: u64,
    pub successes: u64,
}

impl EvalReport {
    pub fn overall(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.successes as f64 / self.attempts as f64
        }
    }

    /// Success rate per goal across its contexts.
    pub fn per_goal(&self) -> BTreeMap<GoalId, f64> {
        let mut acc: BTreeMap<GoalId, (u64, u64)> = BTreeMap::new();
        for c in &self.cells {
            let e = acc.entry(c.goal).or_default();
            e.0 += c.successes;
            e.1 += c.attempts;
        }
        acc.into_iter().map(|(g, (s, n))| (g, s as f64 / n as f64)).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["goal", "context", "attempts", "successes", "rate"])?;
        for c in &self.cells {
            w.write_record([
                c.goal.0.to_string(),
                c.context.to_string(),
                c.attempts.to_string(),
                c.successes.to_string(),
                format!("{:.4}", c.rate()),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("evaluation", e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Frozen evaluation: `n` attempts at a uniformly drawn discovered goal
/// under a uniformly drawn obstacle mask, without noise or learning. With
/// no discovered goals nothing is attempted.
pub fn evaluate<R: Rng + ?Sized>(snap: &RunSnapshot, n: usize, rng: &mut R) -> Result<EvalReport> {
    let agent = &snap.agent;
    let goals: Vec<GoalId> = agent.goals().ids().collect();
    let mut report = EvalReport::default();
    if goals.is_empty() {
        return Ok(report);
    }
    let mut world = World::new(snap.scene.clone());
    let mut cells: BTreeMap<(GoalId, ContextKey), (u64, u64)> = BTreeMap::new();
    for _ in 0..n {
        let g = goals[rng.random_range(0..goals.len())];
        let mask = sample_obstacle_mask(rng);
        world.reset(mask);
        let ok = agent.attempt_frozen(&mut world, g)?;
        let cell = cells.entry((g, agent.context_of(g, mask))).or_default();
        cell.0 += 1;
        cell.1 += ok as u64;
        report.attempts += 1;
        report.successes += ok as u64;
    }
    report.cells = cells
        .into_iter()
        .map(|((goal, context), (attempts, successes))| EvalCell {
            goal,
            context,
            attempts,
            successes,
        })
        .collect();
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Figure {
    /// Overall windowed success per variant.
    Success,
    /// Windowed success per goal and variant.
    Goals,
    /// Known contexts over time, with registration marks.
    Contexts,
    /// Competence-improvement traces per goal.
    Motivation,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::Success, Figure::Goals, Figure::Contexts, Figure::Motivation];

    pub fn name(self) -> &'static str {
        match self {
            Figure::Success => "success",
            Figure::Goals => "goals",
            Figure::Contexts => "contexts",
            Figure::Motivation => "motivation",
        }
    }

    fn y_label(self) -> &'static str {
        match self {
            Figure::Success | Figure::Goals => "windowed success",
            Figure::Contexts => "known contexts",
            Figure::Motivation => "competence improvement",
        }
    }
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Figure::ALL
            .into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown figure `{s}` (expected success, goals, contexts or motivation)")))
    }
}

/// One curve: mean and sample sd across runs at each sampled trial.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<SeriesPoint>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeriesPoint {
    pub trial: u64,
    pub mean: f64,
    pub sd: f64,
    pub runs: usize,
}

/// Mean and sample standard deviation (`n - 1` denominator, 0 for one value).
pub fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs grouped by variant label, in the canonical variant order.
fn group_runs(runs: &[Vec<MetricsRow>]) -> Vec<(String, Vec<&Vec<MetricsRow>>)> {
    let mut groups: BTreeMap<(usize, String), Vec<&Vec<MetricsRow>>> = BTreeMap::new();
    for run in runs.iter().filter(|r| !r.is_empty()) {
        let label = run[0].variant.clone();
        let rank = Variant::from_str(&label)
            .ok()
            .and_then(|v| Variant::ALL.iter().position(|&x| x == v))
            .unwrap_or(Variant::ALL.len());
        groups.entry((rank, label)).or_default().push(run);
    }
    groups.into_iter().map(|((_, l), r)| (l, r)).collect()
}

/// Trials sampled for plotting: every `stride`-th, at most ~500 points.
fn sample_trials(len: usize) -> Vec<usize> {
    let stride = (len / 500).max(1);
    (stride - 1..len).step_by(stride).collect()
}

fn series_from<F>(name: String, runs: &[&Vec<MetricsRow>], value: F) -> Series
where
    F: Fn(&[MetricsRow], usize) -> Option<f64>,
{
    let len = runs.iter().map(|r| r.len()).min().unwrap_or(0);
    let mut points = Vec::new();
    for t in sample_trials(len) {
        let vals: Vec<f64> = runs.iter().filter_map(|r| value(r, t)).collect();
        if vals.is_empty() {
            continue;
        }
        let (mean, sd) = mean_sd(&vals);
        points.push(SeriesPoint {
            trial: runs[0][t].trial,
            mean,
            sd,
            runs: vals.len(),
        });
    }
    Series { name, points }
}

/// Last value of `field` on a row of goal `g` at or before `t`.
fn last_for_goal(rows: &[MetricsRow], t: usize, g: usize, field: impl Fn(&MetricsRow) -> Option<f64>) -> Option<f64> {
    rows[..=t].iter().rev().find(|r| r.goal == Some(g)).and_then(field)
}

/// Builds the curves of one figure from parsed metrics runs.
pub fn figure_series(fig: Figure, runs: &[Vec<MetricsRow>]) -> Vec<Series> {
    let mut out = Vec::new();
    for (label, group) in group_runs(runs) {
        match fig {
            Figure::Success => out.push(series_from(label, &group, |r, t| Some(r[t].window_rate))),
            Figure::Contexts => out.push(series_from(label, &group, |r, t| Some(r[t].total_contexts() as f64))),
            Figure::Goals | Figure::Motivation => {
                let goals = group
                    .iter()
                    .flat_map(|r| r.iter().filter_map(|row| row.goal))
                    .max()
                    .map_or(0, |g| g + 1);
                for g in 0..goals {
                    let s = if fig == Figure::Goals {
                        series_from(format!("{label} goal {g}"), &group, |r, t| {
                            last_for_goal(r, t, g, |row| row.goal_window_rate)
                        })
                    } else {
                        series_from(format!("{label} goal {g}"), &group, |r, t| {
                            last_for_goal(r, t, g, |row| Some(row.delta_c))
                        })
                    };
                    out.push(s);
                }
            }
        }
    }
    out
}

/// Context registrations of the first run of each variant.
fn registration_marks(runs: &[Vec<MetricsRow>]) -> Vec<(String, u64, u64, String)> {
    let mut marks = Vec::new();
    for (label, group) in group_runs(runs) {
        let run = group[0];
        for row in run.iter().filter(|r| !r.new_contexts.is_empty()) {
            for entry in row.new_contexts.split(';') {
                marks.push((label.clone(), row.seed, row.trial, entry.to_string()));
            }
        }
    }
    marks
}

fn series_csv(series: &[Series]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["series", "trial", "mean", "sd", "runs"])?;
    for s in series {
        for p in &s.points {
            w.write_record([
                s.name.clone(),
                p.trial.to_string(),
                p.mean.to_string(),
                p.sd.to_string(),
                p.runs.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::io("plot data", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];

/// A plain SVG line chart with shaded mean +/- sd bands.
pub fn render_svg(title: &str, y_label: &str, series: &[Series], marks: &[u64]) -> String {
    let (w, h) = (800.0, 480.0);
    let (left, right, top, bottom) = (70.0, 190.0, 40.0, 50.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let pts = series.iter().flat_map(|s| s.points.iter());
    let x_max = pts.clone().map(|p| p.trial).max().unwrap_or(1).max(1) as f64;
    let mut y_min = pts.clone().map(|p| p.mean - p.sd).fold(f64::INFINITY, f64::min);
    let mut y_max = pts.map(|p| p.mean + p.sd).fold(f64::NEG_INFINITY, f64::max);
    if !y_min.is_finite() {
        (y_min, y_max) = (0.0, 1.0);
    }
    y_min = y_min.min(0.0);
    if y_max - y_min < 1e-9 {
        y_max = y_min + 1.0;
    }
    let sx = |t: f64| left + pw * t / x_max;
    let sy = |v: f64| top + ph * (1.0 - (v - y_min) / (y_max - y_min));

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="22" font-size="15">{}</text>"#, left, escape(title));
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (x, y) = (left + pw * f, top + ph * (1.0 - f));
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#999"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{:.0}</text>"##,
            top + ph,
            top + ph + 5.0,
            top + ph + 18.0,
            x_max * f
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{left}" y2="{y:.1}" stroke="#999"/><text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"##,
            left - 5.0,
            left - 8.0,
            y + 4.0,
            y_min + (y_max - y_min) * f
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">trial</text>"#,
        left + pw / 2.0,
        h - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + ph / 2.0,
        escape(y_label)
    );
    for &m in marks {
        let x = sx(m as f64);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#444" stroke-width="0.5"/>"##,
            top + ph - 8.0,
            top + ph
        );
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if s.points.is_empty() {
            continue;
        }
        if s.points.iter().any(|p| p.sd > 0.0) {
            let upper = s.points.iter().map(|p| format!("{:.1},{:.1}", sx(p.trial as f64), sy(p.mean + p.sd)));
            let lower = s.points.iter().rev().map(|p| format!("{:.1},{:.1}", sx(p.trial as f64), sy(p.mean - p.sd)));
            let poly: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.18" stroke="none"/>"#,
                poly.join(" ")
            );
        }
        let line: Vec<String> = s
            .points
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.trial as f64), sy(p.mean)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = w - right + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Metrics files directly inside `dir`, sorted by name.
pub fn metrics_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    Ok(files)
}

/// Writes `<fig>.csv` and `<fig>.svg` into `out_dir` from the given
/// metrics files; returns the written paths.
pub fn emit_plots(inputs: &[PathBuf], out_dir: &Path, fig: Figure) -> Result<Vec<PathBuf>> {
    if inputs.is_empty() {
        return Err(Error::Config("no metrics files to plot".into()));
    }
    let runs = inputs.iter().map(load_metrics).collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let series = figure_series(fig, &runs);
    let mut written = Vec::new();

    let data = out_dir.join(format!("{}.csv", fig.name()));
    fs::write(&data, series_csv(&series)?).map_err(|e| Error::io(&data, e))?;
    written.push(data);

    let mut mark_trials = Vec::new();
    if fig == Figure::Contexts {
        let marks = registration_marks(&runs);
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["variant", "seed", "trial", "registered"])?;
        for (label, seed, trial, entry) in &marks {
            w.write_record([label.clone(), seed.to_string(), trial.to_string(), entry.clone()])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::io("plot data", e.into_error()))?;
        let path = out_dir.join("contexts_marks.csv");
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        written.push(path);
        mark_trials = marks.iter().map(|m| m.2).collect();
        mark_trials.dedup();
    }

    let svg = render_svg(fig.name(), fig.y_label(), &series, &mark_trials);
    let path = out_dir.join(format!("{}.svg", fig.name()));
    fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(written)
}
