use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use synergrasp::env::{ActionMode, ObjectModel, Scene};
use synergrasp::eval::{
    emit_report, success_rate, target_distance_report, Controller, EvalOptions, EvalReport, EvalSetup, PolicyController, ScriptedOracle,
    ZeroController,
};
use synergrasp::retarget::{read_grasp_jsonl, retarget_dataset, write_grasp_jsonl, PostureDataset, Reject};
use synergrasp::rl::{decoder_for, train_with, Checkpoint, TrainSetup};
use synergrasp::synergy::{fit_pca, vae_train, SynergyKind, SynergyModel};
use synergrasp::synthetic::generate;
use synergrasp::targets::{extract_targets, grasp_points, write_cluster_report, GraspTargetTable};
use synergrasp::{Error, HandModel};

use crate::{Cli, CliError, Command, PipelineConfig, Suite};

type Out<'a> = &'a mut dyn Write;

fn say(out: Out, text: std::fmt::Arguments) -> Result<(), CliError> {
    out.write_fmt(text).and_then(|_| out.write_all(b"\n")).map_err(|e| Error::io("<stdout>", e).into())
}

macro_rules! say {
    ($out:expr, $($arg:tt)*) => { say($out, format_args!($($arg)*)) };
}

/// Parse-free entry point: resolve the config, echo it, run the command.
pub fn run(cli: Cli, out: Out) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.set_seed(s);
    }
    let name = cli.command.name();
    let mut eval_args = None;
    let mut workers = 1;
    match cli.command {
        Command::GenerateSynthetic(a) => {
            set(&mut cfg.synthetic.n_per_intent, a.n);
            set(&mut cfg.synthetic.sigma, a.sigma);
            set(&mut cfg.synthetic.posture_noise, a.posture_noise);
            set(&mut cfg.synthetic.label_flip, a.label_flip);
            set(&mut cfg.paths.dataset, a.out);
        }
        Command::Retarget(a) => {
            set(&mut cfg.paths.dataset, a.dataset);
            if a.hand.is_some() {
                cfg.paths.hand = a.hand;
            }
            set(&mut cfg.paths.postures, a.out);
            workers = a.workers;
        }
        Command::TrainSynergy(a) => {
            set(&mut cfg.paths.postures, a.postures);
            set(&mut cfg.synergy.kind, a.kind);
            set(&mut cfg.synergy.k, a.k);
            set(&mut cfg.synergy.vae.epochs, a.epochs);
            set(&mut cfg.synergy.vae.beta, a.beta);
            set(&mut cfg.paths.synergy, a.out);
        }
        Command::ExtractTargets(a) => {
            set(&mut cfg.paths.dataset, a.dataset);
            set(&mut cfg.paths.targets, a.out);
            set(&mut cfg.paths.clusters, a.report);
        }
        Command::TrainPolicy(a) => {
            set(&mut cfg.ppo.mode, a.mode);
            set(&mut cfg.ppo.k, a.k);
            set(&mut cfg.ppo.total_updates, a.updates);
            set(&mut cfg.ppo.num_envs, a.num_envs);
            set(&mut cfg.ppo.horizon, a.horizon);
            set(&mut cfg.ppo.minibatch_size, a.minibatch);
            set(&mut cfg.ppo.learning_rate, a.learning_rate);
            set(&mut cfg.ppo.workers, a.workers);
            if a.no_category {
                cfg.ppo.include_category = false;
            }
            if a.reach_only {
                cfg.env.weights.w2 = 0.0;
                cfg.env.weights.w3 = 0.0;
            }
            set(&mut cfg.paths.synergy, a.synergy);
            set(&mut cfg.paths.targets, a.targets);
            set(&mut cfg.paths.run, a.out_dir);
        }
        Command::Evaluate(a) => {
            set(&mut cfg.eval.n_trials, a.trials);
            set(&mut cfg.eval.n_per_target, a.per_target);
            set(&mut cfg.eval.workers, a.workers);
            set(&mut cfg.paths.synergy, a.synergy.clone());
            set(&mut cfg.paths.targets, a.targets.clone());
            set(&mut cfg.paths.reports, a.out_dir.clone());
            eval_args = Some(a);
        }
        Command::Pipeline(a) => {
            set(&mut cfg.ppo.total_updates, a.updates);
            if let Some(root) = a.workdir {
                rebase(&mut cfg, &root);
            }
        }
        Command::ShowConfig => {}
    }
    cfg.validate()?;
    let seed = match name {
        "generate-synthetic" => Some(cfg.synthetic.seed),
        "train-synergy" => Some(cfg.synergy.vae.seed),
        "train-policy" | "pipeline" => Some(cfg.ppo.seed),
        "evaluate" => Some(cfg.eval.seed),
        _ => None,
    };
    say!(out, "# command: {name}")?;
    if let Some(s) = seed {
        say!(out, "# seed: {s}")?;
    }
    say!(out, "{}", cfg.to_toml()?.trim_end())?;

    match name {
        "generate-synthetic" => generate_synthetic(&cfg, out),
        "retarget" => retarget(&cfg, workers, out),
        "train-synergy" => train_synergy(&cfg, out),
        "extract-targets" => extract(&cfg, out),
        "train-policy" => train_policy(&cfg, out),
        "evaluate" => {
            let a = eval_args.expect("evaluate args");
            evaluate(&cfg, a.suite, a.checkpoint.as_deref(), a.mode, out)
        }
        "pipeline" => pipeline(&cfg, out),
        _ => Ok(()),
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn rebase(cfg: &mut PipelineConfig, root: &Path) {
    let p = &mut cfg.paths;
    for path in [&mut p.dataset, &mut p.postures, &mut p.synergy, &mut p.targets, &mut p.clusters, &mut p.run, &mut p.reports] {
        if path.is_relative() {
            *path = root.join(&*path);
        }
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e).into()),
        _ => Ok(()),
    }
}

/// Refuse to overwrite an input.
fn distinct(inputs: &[&Path], output: &Path) -> Result<(), CliError> {
    if inputs.iter().any(|i| *i == output) {
        return Err(CliError::Usage(format!("output {} would overwrite an input", output.display())));
    }
    Ok(())
}

fn hand(cfg: &PipelineConfig) -> Result<HandModel, CliError> {
    Ok(match &cfg.paths.hand {
        Some(p) => HandModel::load(p)?,
        None => HandModel::default_hand(),
    })
}

fn scene(cfg: &PipelineConfig) -> Result<Arc<Scene>, CliError> {
    let table = GraspTargetTable::load(&cfg.paths.targets)?;
    Ok(Arc::new(Scene::new(hand(cfg)?, ObjectModel::builtin())?.with_targets(&table)?))
}

fn synergy_for(cfg: &PipelineConfig, mode: ActionMode, hand: &HandModel) -> Result<Option<Arc<SynergyModel>>, CliError> {
    if mode == ActionMode::Joint {
        return Ok(None);
    }
    Ok(Some(Arc::new(SynergyModel::load(&cfg.paths.synergy, hand)?)))
}

fn generate_synthetic(cfg: &PipelineConfig, out: Out) -> Result<(), CliError> {
    let hand = hand(cfg)?;
    let records: Vec<_> = generate(&hand, &ObjectModel::builtin(), &cfg.synthetic)?.into_iter().map(|g| g.record).collect();
    let path = &cfg.paths.dataset;
    ensure_parent(path)?;
    write_grasp_jsonl(path, &records)?;
    say!(out, "wrote {} grasps to {}", records.len(), path.display())
}

fn retarget(cfg: &PipelineConfig, workers: usize, out: Out) -> Result<(), CliError> {
    let src = &cfg.paths.dataset;
    let dst = &cfg.paths.postures;
    distinct(&[src], dst)?;
    let hand = hand(cfg)?;
    let file = read_grasp_jsonl(src)?;
    let mut rejects = file.malformed;
    let mut lines = Vec::new();
    let mut keypoints = Vec::new();
    for (line, rec) in &file.records {
        match rec.to_keypoints() {
            Ok(k) => {
                lines.push(*line);
                keypoints.push(k);
            }
            Err(e) => rejects.push(Reject {
                index: *line,
                reason: e.to_string(),
            }),
        }
    }
    if keypoints.is_empty() {
        return Err(Error::EmptyDataset.into());
    }
    let source = src.display().to_string();
    let ds = retarget_dataset(&keypoints, &hand, &source, workers)?;
    rejects.extend(ds.rejects.into_iter().map(|r| Reject {
        index: lines[r.index],
        reason: r.reason,
    }));
    rejects.sort_by_key(|r| r.index);
    let ds = PostureDataset::new(source, ds.postures, rejects);
    ensure_parent(dst)?;
    ds.save(dst)?;
    say!(out, "retargeted {} grasps, {} rejected, wrote {}", ds.len(), ds.rejects.len(), dst.display())?;
    for r in &ds.rejects {
        say!(out, "reject line {}: {}", r.index + 1, r.reason)?;
    }
    Ok(())
}

fn train_synergy(cfg: &PipelineConfig, out: Out) -> Result<(), CliError> {
    let src = &cfg.paths.postures;
    let dst = &cfg.paths.synergy;
    distinct(&[src], dst)?;
    let hand = hand(cfg)?;
    let data = PostureDataset::load(src)?.angles();
    let k = cfg.synergy.k;
    let model = match cfg.synergy.kind {
        SynergyKind::Pca => {
            let m = fit_pca(&data, k, hand.limits())?;
            say!(out, "pca k={k}: explained variance {:.4}", m.explained_fraction())?;
            SynergyModel::Pca(m)
        }
        SynergyKind::Vae => {
            let (m, report) = vae_train(&data, k, &cfg.synergy.vae, hand.limits())?;
            let last = |v: &[f64]| v.last().copied().unwrap_or(f64::NAN);
            say!(
                out,
                "vae k={k}: {} epochs, final loss {:.5} (reconstruction {:.5}, kl {:.5})",
                report.epochs,
                last(&report.total),
                last(&report.reconstruction),
                last(&report.kl)
            )?;
            SynergyModel::Vae(m)
        }
    };
    say!(out, "mean per-joint reconstruction error {:.5} rad over {} postures", model.reconstruction_error(&data), data.len())?;
    ensure_parent(dst)?;
    model.save(dst, &hand)?;
    say!(out, "wrote {}", dst.display())
}

fn extract(cfg: &PipelineConfig, out: Out) -> Result<(), CliError> {
    let src = &cfg.paths.dataset;
    distinct(&[src], &cfg.paths.targets)?;
    distinct(&[src], &cfg.paths.clusters)?;
    let file = read_grasp_jsonl(src)?;
    for r in &file.malformed {
        say!(out, "skipped line {}: {}", r.index + 1, r.reason)?;
    }
    let records: Vec<_> = file.records.into_iter().map(|(_, r)| r).collect();
    let ex = extract_targets(&grasp_points(&records)?)?;
    ensure_parent(&cfg.paths.targets)?;
    ex.table.save(&cfg.paths.targets)?;
    ensure_parent(&cfg.paths.clusters)?;
    write_cluster_report(&cfg.paths.clusters, &ex.report)?;
    for (key, p) in &ex.table.targets {
        let v = &ex.table.votes[key];
        say!(
            out,
            "{key}: [{:.4}, {:.4}, {:.4}] m, {} grasps ({} use, {} handoff)",
            p[0],
            p[1],
            p[2],
            v.cluster_size,
            v.use_votes,
            v.handoff
        )?;
    }
    say!(out, "wrote {} and {}", cfg.paths.targets.display(), cfg.paths.clusters.display())
}

fn train_policy(cfg: &PipelineConfig, out: Out) -> Result<(), CliError> {
    let scene = scene(cfg)?;
    let synergy = synergy_for(cfg, cfg.ppo.mode, &scene.hand)?;
    let setup = TrainSetup {
        scene,
        env: cfg.env.clone(),
        synergy,
    };
    let every = (cfg.ppo.total_updates / 20).max(1);
    let mut io_err = None;
    let (_, curve) = train_with(&cfg.ppo, &setup, Some(&cfg.paths.run), &mut |r| {
        if (r.update + 1) % every == 0 && io_err.is_none() {
            io_err = say!(
                out,
                "update {:5}  reward {:9.3}  success {:.3}  value loss {:.4}  entropy {:.3}",
                r.update + 1,
                r.mean_reward,
                r.success_window,
                r.value_loss,
                r.entropy
            )
            .err();
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    let ck = Checkpoint::load(&cfg.paths.run.join("checkpoint.json"))?;
    say!(out, "trained {} updates; weights sha256 {}", curve.rows.len(), ck.weights_hash())?;
    say!(out, "wrote {}", cfg.paths.run.display())
}

fn report_with<C: Controller + Clone + Send + Sync>(ctrl: &C, setup: &EvalSetup, cfg: &PipelineConfig, label: &str) -> Result<Vec<EvalReport>, CliError> {
    let base = EvalOptions {
        label: label.into(),
        n_trials: cfg.eval.n_trials,
        seed: cfg.eval.seed,
        workers: cfg.eval.workers,
    };
    let uniform = success_rate(ctrl, setup, &base)?;
    let per_target = target_distance_report(
        ctrl,
        setup,
        &EvalOptions {
            label: format!("{label}-per-target"),
            n_trials: cfg.eval.n_per_target,
            ..base
        },
    )?;
    Ok(vec![uniform, per_target])
}

fn evaluate(cfg: &PipelineConfig, suite: Suite, checkpoint: Option<&Path>, mode: Option<ActionMode>, out: Out) -> Result<(), CliError> {
    let scene = scene(cfg)?;
    let reports = match suite {
        Suite::Policy => {
            let path: PathBuf = checkpoint.map(Path::to_path_buf).unwrap_or_else(|| cfg.paths.run.join("checkpoint.json"));
            let ck = Checkpoint::load(&path)?;
            let env_mode = mode.unwrap_or(ck.config.mode);
            let synergy = synergy_for(cfg, env_mode, &scene.hand)?;
            let k = synergy.as_ref().map(|m| m.k()).unwrap_or(0);
            let setup = EvalSetup {
                scene,
                env: Arc::new(ck.env.clone()),
                decoder: decoder_for(env_mode, k, synergy.as_ref())?,
            };
            say!(out, "checkpoint {} after {} updates, weights sha256 {}", path.display(), ck.update, ck.weights_hash())?;
            let ctrl = PolicyController::new(Arc::new(ck.net), ck.config.mode);
            report_with(&ctrl, &setup, cfg, "policy")?
        }
        Suite::Oracle | Suite::Zero => {
            let env_mode = mode.unwrap_or(ActionMode::Joint);
            let synergy = synergy_for(cfg, env_mode, &scene.hand)?;
            let k = synergy.as_ref().map(|m| m.k()).unwrap_or(0);
            let setup = EvalSetup {
                scene,
                env: Arc::new(cfg.env.clone()),
                decoder: decoder_for(env_mode, k, synergy.as_ref())?,
            };
            if suite == Suite::Oracle {
                report_with(&ScriptedOracle::new(), &setup, cfg, "oracle")?
            } else {
                report_with(&ZeroController, &setup, cfg, "zero")?
            }
        }
    };
    for r in &reports {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into());
        say!(
            out,
            "{}: {} trials, success {}, separation use {} handoff {}",
            r.label,
            r.n_trials,
            fmt(r.success_rate),
            fmt(r.separation[&synergrasp::Intent::Use]),
            fmt(r.separation[&synergrasp::Intent::Handoff])
        )?;
    }
    emit_report(&reports, &cfg.paths.reports)?;
    say!(out, "wrote {}", cfg.paths.reports.display())
}

fn pipeline(cfg: &PipelineConfig, out: Out) -> Result<(), CliError> {
    generate_synthetic(cfg, out)?;
    retarget(cfg, 1, out)?;
    if cfg.ppo.mode != ActionMode::Joint {
        let mut s = cfg.clone();
        s.synergy.kind = match cfg.ppo.mode {
            ActionMode::Pca => SynergyKind::Pca,
            _ => SynergyKind::Vae,
        };
        s.synergy.k = cfg.ppo.k;
        train_synergy(&s, out)?;
    }
    extract(cfg, out)?;
    train_policy(cfg, out)?;
    evaluate(cfg, Suite::Policy, None, None, out)
}
