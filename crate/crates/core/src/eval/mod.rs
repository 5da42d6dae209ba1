//! Policy evaluation: success rates, target selectivity and report files.

mod controller;

pub use controller::{Controller, PolicyController, ScriptedOracle, ZeroController};

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{distance_to_targets, EnvConfig, Env, HandDecoder, Scene};
use crate::error::{Error, Result};
use crate::intent::Intent;

/// Scene, env settings and hand decoder shared by all trials.
#[derive(Debug, Clone)]
pub struct EvalSetup {
    pub scene: Arc<Scene>,
    pub env: Arc<EnvConfig>,
    pub decoder: HandDecoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub label: String,
    pub n_trials: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            label: "eval".into(),
            n_trials: 100,
            seed: 0,
            workers: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub trial: usize,
    pub object: String,
    pub intent: Intent,
    pub success: bool,
    /// Grasp point to use target at the end of the episode, metres.
    pub d_use: f64,
    pub d_handoff: f64,
    pub steps: usize,
}

impl EpisodeRecord {
    /// Whether the hand ended nearer the requested target than the other.
    pub fn on_requested_side(&self) -> bool {
        match self.intent {
            Intent::Use => self.d_use < self.d_handoff,
            Intent::Handoff => self.d_handoff < self.d_use,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TargetStats {
    pub trials: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub label: String,
    pub config_hash: String,
    pub n_trials: usize,
    pub seed: u64,
    /// `None` when no trials ran.
    pub success_rate: Option<f64>,
    pub degenerate: bool,
    /// Keyed by `object/intent`.
    pub per_target: BTreeMap<String, TargetStats>,
    /// Per intent, share of successful episodes that ended closer to the
    /// requested target. `None` without successes for that intent.
    pub separation: BTreeMap<Intent, Option<f64>>,
    pub episodes: Vec<EpisodeRecord>,
}

impl EvalReport {
    fn from_episodes(opts: &EvalOptions, config_hash: String, episodes: Vec<EpisodeRecord>) -> Self {
        let n = episodes.len();
        let mut per_target: BTreeMap<String, TargetStats> = BTreeMap::new();
        for e in &episodes {
            let s = per_target.entry(format!("{}/{}", e.object, e.intent)).or_default();
            s.trials += 1;
            s.successes += e.success as usize;
        }
        let successes = episodes.iter().filter(|e| e.success).count();
        EvalReport {
            label: opts.label.clone(),
            config_hash,
            n_trials: n,
            seed: opts.seed,
            success_rate: (n > 0).then(|| successes as f64 / n as f64),
            degenerate: n == 0,
            per_target,
            separation: separation(&episodes),
            episodes,
        }
    }
}

/// Per intent, the share of successful episodes whose final grasp point is
/// strictly closer to that intent's target.
pub fn separation(episodes: &[EpisodeRecord]) -> BTreeMap<Intent, Option<f64>> {
    Intent::ALL
        .iter()
        .map(|&i| {
            let ok: Vec<&EpisodeRecord> = episodes.iter().filter(|e| e.success && e.intent == i).collect();
            let frac = (!ok.is_empty()).then(|| ok.iter().filter(|e| e.on_requested_side()).count() as f64 / ok.len() as f64);
            (i, frac)
        })
        .collect()
}

/// Seed for trial `i`; independent of the worker count.
pub fn trial_seed(seed: u64, i: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng.next_u64()
}

fn config_hash(setup: &EvalSetup, opts: &EvalOptions, extra: &str) -> Result<String> {
    let env = serde_json::to_string(&*setup.env).map_err(|e| Error::Config(format!("env config: {e}")))?;
    let mut h = Sha256::new();
    h.update(env.as_bytes());
    h.update(setup.decoder.mode().as_str().as_bytes());
    h.update(setup.decoder.hand_dim().to_le_bytes());
    h.update(opts.seed.to_le_bytes());
    h.update((opts.n_trials as u64).to_le_bytes());
    h.update(extra.as_bytes());
    Ok(hex::encode(h.finalize()))
}

fn check_mode<C: Controller>(ctrl: &C, setup: &EvalSetup) -> Result<()> {
    match ctrl.mode() {
        Some(m) if m != setup.decoder.mode() => Err(Error::ModeMismatch {
            expected: setup.decoder.mode().to_string(),
            got: m.to_string(),
        }),
        _ => Ok(()),
    }
}

fn run_episode<C: Controller + Clone>(
    ctrl: &C,
    setup: &EvalSetup,
    trial: usize,
    seed: u64,
    object: Option<&str>,
    intent: Option<Intent>,
) -> Result<EpisodeRecord> {
    let mut env = Env::new(setup.scene.clone(), setup.env.clone(), setup.decoder.clone(), seed, 0)?;
    let mut obs = env.reset(object, intent)?;
    let mut ctrl = ctrl.clone();
    ctrl.begin(&env)?;
    let mut steps = 0;
    let success = loop {
        let action = ctrl.act(&env, &obs)?;
        let r = env.step(&action)?;
        steps += 1;
        if r.done {
            break r.success;
        }
        obs = r.observation;
    };
    let st = env.state();
    let (d_use, d_handoff) = distance_to_targets(st, env.scene());
    Ok(EpisodeRecord {
        trial,
        object: env.scene().objects[st.active].id.clone(),
        intent: st.intent,
        success,
        d_use,
        d_handoff,
        steps,
    })
}

type Job = (Option<String>, Option<Intent>);

fn run_jobs<C: Controller + Clone + Send + Sync>(ctrl: &C, setup: &EvalSetup, opts: &EvalOptions, jobs: &[Job]) -> Result<Vec<EpisodeRecord>> {
    let one = |(i, (obj, intent)): (usize, &Job)| run_episode(ctrl, setup, i, trial_seed(opts.seed, i), obj.as_deref(), *intent);
    if opts.workers > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| jobs.par_iter().enumerate().map(one).collect())
    } else {
        jobs.iter().enumerate().map(one).collect()
    }
}

/// Run `n_trials` episodes with uniformly drawn object and intent and
/// report the success rate with per-episode target distances.
pub fn success_rate<C: Controller + Clone + Send + Sync>(ctrl: &C, setup: &EvalSetup, opts: &EvalOptions) -> Result<EvalReport> {
    check_mode(ctrl, setup)?;
    let jobs: Vec<Job> = vec![(None, None); opts.n_trials];
    let episodes = run_jobs(ctrl, setup, opts, &jobs)?;
    Ok(EvalReport::from_episodes(opts, config_hash(setup, opts, "uniform")?, episodes))
}

/// Like [`success_rate`] but with `n_trials` episodes forced on every
/// object and intent pair.
pub fn target_distance_report<C: Controller + Clone + Send + Sync>(ctrl: &C, setup: &EvalSetup, opts: &EvalOptions) -> Result<EvalReport> {
    check_mode(ctrl, setup)?;
    let mut jobs: Vec<Job> = Vec::new();
    for obj in &setup.scene.objects {
        for intent in Intent::ALL {
            jobs.extend(std::iter::repeat((Some(obj.id.clone()), Some(intent))).take(opts.n_trials));
        }
    }
    let episodes = run_jobs(ctrl, setup, opts, &jobs)?;
    Ok(EvalReport::from_episodes(opts, config_hash(setup, opts, "per-target")?, episodes))
}

/// Evaluate one controller per latent size; `build` trains or loads it.
pub fn ablation_latent_dims<C, F>(ks: &[usize], opts: &EvalOptions, mut build: F) -> Result<Vec<EvalReport>>
where
    C: Controller + Clone + Send + Sync,
    F: FnMut(usize) -> Result<(C, EvalSetup)>,
{
    ks.iter()
        .map(|&k| {
            let (ctrl, setup) = build(k)?;
            let o = EvalOptions {
                label: format!("{}-k{k}", opts.label),
                ..opts.clone()
            };
            success_rate(&ctrl, &setup, &o)
        })
        .collect()
}

/// Evaluate with and without the object category in the observation.
pub fn ablation_object_category<C, F>(opts: &EvalOptions, mut build: F) -> Result<Vec<EvalReport>>
where
    C: Controller + Clone + Send + Sync,
    F: FnMut(bool) -> Result<(C, EvalSetup)>,
{
    [true, false]
        .iter()
        .map(|&with| {
            let (ctrl, setup) = build(with)?;
            if setup.env.include_category != with {
                return Err(Error::ContractViolation("env config disagrees with the category ablation".into()));
            }
            let tag = if with { "with-category" } else { "without-category" };
            let o = EvalOptions {
                label: format!("{}-{tag}", opts.label),
                ..opts.clone()
            };
            success_rate(&ctrl, &setup, &o)
        })
        .collect()
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    label: &'a str,
    config_hash: &'a str,
    n_trials: usize,
    seed: u64,
    success_rate: Option<f64>,
    degenerate: bool,
    separation: &'a BTreeMap<Intent, Option<f64>>,
    per_target: &'a BTreeMap<String, TargetStats>,
}

#[derive(Serialize)]
struct Summary<'a> {
    reports: Vec<SummaryEntry<'a>>,
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Write `success.csv`, `separation.csv` and `summary.json` into `dir`.
/// Output bytes depend only on the reports.
pub fn emit_report(reports: &[EvalReport], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("success.csv");
    let err = csv_err(&path);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "target", "trials", "successes", "success_rate"]).map_err(&err)?;
    for r in reports {
        let rate = r.success_rate.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([r.label.as_str(), "all", &r.n_trials.to_string(), &r.episodes.iter().filter(|e| e.success).count().to_string(), &rate])
            .map_err(&err)?;
        for (key, s) in &r.per_target {
            let rate = (s.successes as f64 / s.trials as f64).to_string();
            w.write_record([r.label.as_str(), key, &s.trials.to_string(), &s.successes.to_string(), &rate]).map_err(&err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("success csv: {e}")))?;
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;

    let path = dir.join("separation.csv");
    let err = csv_err(&path);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "trial", "object", "intent", "success", "d_use", "d_handoff", "steps"]).map_err(&err)?;
    for r in reports {
        for e in &r.episodes {
            w.write_record([
                r.label.as_str(),
                &e.trial.to_string(),
                &e.object,
                e.intent.as_str(),
                &e.success.to_string(),
                &e.d_use.to_string(),
                &e.d_handoff.to_string(),
                &e.steps.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("separation csv: {e}")))?;
    std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;

    let path = dir.join("summary.json");
    let summary = Summary {
        reports: reports
            .iter()
            .map(|r| SummaryEntry {
                label: &r.label,
                config_hash: &r.config_hash,
                n_trials: r.n_trials,
                seed: r.seed,
                success_rate: r.success_rate,
                degenerate: r.degenerate,
                separation: &r.separation,
                per_target: &r.per_target,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| Error::json(&path, e))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
