//! Acceptance checks. Prints one PASS/FAIL line per criterion and always
//! exits 0. Set `SYNERGRASP_SKIP_HEADLINE=1` to skip the two long training
//! runs.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use sha2::{Digest, Sha256};

use synergrasp::env::{ActionMode, EnvConfig, HandDecoder, ObjectModel, Scene};
use synergrasp::eval::{emit_report, success_rate, target_distance_report, EvalOptions, EvalReport, EvalSetup, PolicyController, ScriptedOracle};
use synergrasp::kinematics::{is_abduction, NUM_JOINTS};
use synergrasp::nn::gradcheck::max_fd_error;
use synergrasp::nn::{Activation, Mat, Mlp, Params};
use synergrasp::retarget::{human_configuration, retarget_dataset, retarget_grasp, HumanHandKeypoints, PostureDataset};
use synergrasp::rl::{gae, Checkpoint, gae_brute_force, ppo_loss, train, train_with, Minibatch, PolicyArch, PolicyNet, PpoConfig, SeqLayout, TrainSetup};
use synergrasp::synergy::pca::fix_sign;
use synergrasp::synergy::vae::{elbo_loss, VaeModel};
use synergrasp::synergy::{fit_pca, vae_train, SynergyModel, VaeHyperparams};
use synergrasp::synthetic::{generate, SyntheticConfig};
use synergrasp::targets::{brute_force_two_partition, cluster_two, extract_targets, grasp_points, GraspTargetTable};
use synergrasp::{HandModel, Intent, JointAngles, Pose, Vec3};

struct Tally {
    pass: usize,
    fail: usize,
}

impl Tally {
    fn line(&mut self, ok: bool, name: &str, detail: String) {
        if ok {
            self.pass += 1;
        } else {
            self.fail += 1;
        }
        println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn sha(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Synthetic data, retargeted postures and extracted targets shared by the
/// learning checks.
struct Data {
    hand: HandModel,
    postures: PostureDataset,
    targets: GraspTargetTable,
}

fn data() -> Data {
    let hand = HandModel::default_hand();
    let grasps = generate(&hand, &ObjectModel::builtin(), &SyntheticConfig::default()).unwrap();
    let records: Vec<_> = grasps.into_iter().map(|g| g.record).collect();
    let kps: Vec<_> = records.iter().map(|r| r.to_keypoints().unwrap()).collect();
    let postures = retarget_dataset(&kps, &hand, "synthetic", 1).unwrap();
    let targets = extract_targets(&grasp_points(&records).unwrap()).unwrap().table;
    Data { hand, postures, targets }
}

fn oracle_gate(t: &mut Tally) {
    let start = Instant::now();
    let setup = EvalSetup {
        scene: Arc::new(Scene::builtin()),
        env: Arc::new(EnvConfig {
            sigma_pos: 0.0,
            sigma_yaw: 0.0,
            ..Default::default()
        }),
        decoder: HandDecoder::Joint,
    };
    let opts = EvalOptions {
        label: "oracle".into(),
        n_trials: 100,
        ..Default::default()
    };
    let r = success_rate(&ScriptedOracle::new(), &setup, &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let wins = r.episodes.iter().filter(|e| e.success).count();
    t.line(
        wins == 100 && secs < 30.0,
        "oracle gate",
        format!("{wins}/100 scripted grasps succeed without randomization in {secs:.2} s (need 100/100, < 30 s)"),
    );
}

fn random_mat(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn policy_batch(net: &PolicyNet, n_seq: usize, len: usize, rng: &mut ChaCha8Rng) -> Minibatch {
    let b = n_seq * len;
    let obs = random_mat(b, net.obs_dim, rng);
    let actions = random_mat(b, net.act_dim, rng);
    let hs = net.recurrent_size();
    let seq = net.gru.as_ref().map(|_| SeqLayout {
        n_seq,
        len,
        h0: random_mat(n_seq, hs, rng),
        starts: (0..b).map(|i| i >= n_seq && i % 3 == 0).collect(),
    });
    let mut old = net.clone();
    let mut p = old.flatten();
    p.iter_mut().for_each(|v| *v += rng.gen_range(-0.05..0.05));
    old.assign(&p);
    let hidden = seq.as_ref().map(|s| s.h0.clone()).unwrap_or_else(|| Mat::zeros(1, 0));
    let old_log_probs = (0..b)
        .map(|i| {
            let h = if hs > 0 { hidden.row(i % n_seq).to_vec() } else { Vec::new() };
            let out = old.forward(obs.row(i), &h).unwrap();
            synergrasp::rl::log_prob(&out.mean, &out.log_std, actions.row(i))
        })
        .collect();
    Minibatch {
        obs,
        actions,
        old_log_probs,
        advantages: (0..b).map(|_| rng.gen_range(-2.0..2.0)).collect(),
        returns: (0..b).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        seq,
    }
}

fn gradient_suite(t: &mut Tally) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut worst: Vec<(&str, f64)> = Vec::new();

    let mut net_err = 0.0f64;
    for act in [Activation::Elu, Activation::Tanh] {
        let mlp = Mlp::init(&[5, 7, 6, 3], act, Activation::Identity, 1.0, &mut rng);
        let x = random_mat(9, 5, &mut rng);
        let target = random_mat(9, 3, &mut rng);
        let (y, cache) = mlp.forward_cached(&x);
        let mut dy = y.clone();
        for (d, v) in dy.data.iter_mut().zip(&target.data) {
            *d -= v;
        }
        let mut grad = mlp.zeros_like();
        mlp.backward(&cache, &dy, &mut grad, false);
        net_err = net_err.max(max_fd_error(&mlp, &grad.flatten(), 1e-5, |m| {
            m.forward(&x).data.iter().zip(&target.data).map(|(a, b)| 0.5 * (a - b).powi(2)).sum()
        }));
    }
    worst.push(("network forward", net_err));

    let hand = HandModel::default_hand();
    let data: Vec<JointAngles> = (0..8)
        .map(|_| {
            let v: Vec<f64> = hand.limits().iter().map(|(lo, hi)| rng.gen_range(*lo..*hi)).collect();
            JointAngles::from_slice(&v).unwrap()
        })
        .collect();
    let vae = VaeModel::init(&data, 2, &[8, 6], hand.limits(), &mut rng).unwrap();
    let eps = Mat::from_vec(8, 2, (0..16).map(|_| StandardNormal.sample(&mut rng)).collect());
    let mut vae_err = 0.0f64;
    for beta in [1.0, 0.25] {
        let (_, g) = elbo_loss(&vae, &data, &eps, beta).unwrap();
        vae_err = vae_err.max(max_fd_error(&vae, &g.flatten(), 1e-5, |m| elbo_loss(m, &data, &eps, beta).unwrap().0.total));
    }
    worst.push(("VAE ELBO", vae_err));

    let mut ppo_err = 0.0f64;
    for (recurrent, n_seq, len) in [(None, 1, 1), (None, 8, 1), (Some(3), 2, 5)] {
        let arch = PolicyArch {
            recurrent,
            hidden: vec![6, 5],
            init_log_std: -0.3,
        };
        let mut net = PolicyNet::new(4, 3, &arch, &mut rng);
        net.mean_head = synergrasp::nn::Linear::init(5, 3, 1.0, &mut rng);
        let mb = policy_batch(&net, n_seq, len, &mut rng);
        for (vc, ec) in [(0.0, 0.0), (0.5, 0.0), (0.5, 0.01)] {
            let cfg = PpoConfig {
                clip: 0.1,
                value_coef: vc,
                entropy_coef: ec,
                ..Default::default()
            };
            let (_, g) = ppo_loss(&net, &mb, &cfg).unwrap();
            ppo_err = ppo_err.max(max_fd_error(&net, &g.flatten(), 1e-6, |n| ppo_loss(n, &mb, &cfg).unwrap().0.total));
        }
    }
    worst.push(("PPO policy/value/entropy", ppo_err));

    let secs = start.elapsed().as_secs_f64();
    let ok = worst.iter().all(|(_, e)| *e < 1e-4) && secs < 60.0;
    let detail = worst.iter().map(|(n, e)| format!("{n} {e:.2e}")).collect::<Vec<_>>().join(", ");
    t.line(ok, "gradient suite", format!("max relative error: {detail}; {secs:.1} s (need < 1e-4, < 60 s)"));
}

fn gae_equivalence(t: &mut Tally) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=32);
        let rewards: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let dones: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.1)).collect();
        let bootstrap = rng.gen_range(-1.0..1.0);
        let g = rng.gen_range(0.0..=1.0);
        let l = rng.gen_range(0.0..=1.0);
        let (a, r) = gae(&rewards, &values, &dones, bootstrap, g, l);
        let ab = gae_brute_force(&rewards, &values, &dones, bootstrap, g, l);
        for i in 0..n {
            worst = worst.max((a[i] - ab[i]).abs()).max((r[i] - (ab[i] + values[i])).abs());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    t.line(
        worst < 1e-12 && secs < 10.0,
        "GAE brute-force equivalence",
        format!("1000 instances, T <= 32, max error {worst:.2e} in {secs:.2} s (need < 1e-12, < 10 s)"),
    );
}

fn pca_oracle(t: &mut Tally) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let hand = HandModel::default_hand();
    let mut worst = 0.0f64;
    let mut round_trip = 0.0f64;
    for _ in 0..20 {
        let n = rng.gen_range(40..200);
        let mix = DMatrix::<f64>::from_fn(NUM_JOINTS, NUM_JOINTS, |_, _| rng.gen_range(-0.3..0.3));
        let data: Vec<JointAngles> = (0..n)
            .map(|_| {
                let z = nalgebra::DVector::<f64>::from_fn(NUM_JOINTS, |i, _| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    e * (1.0 / (1.0 + i as f64))
                });
                let q = &mix * z;
                let v: Vec<f64> = q.iter().zip(hand.limits()).map(|(x, (lo, hi))| (0.5 * (lo + hi) + 0.1 * x).clamp(*lo, *hi)).collect();
                JointAngles::from_slice(&v).unwrap()
            })
            .collect();
        let model = fit_pca(&data, NUM_JOINTS, hand.limits()).unwrap();

        let mean: Vec<f64> = (0..NUM_JOINTS).map(|j| data.iter().map(|q| q[j]).sum::<f64>() / n as f64).collect();
        let cov = DMatrix::<f64>::from_fn(NUM_JOINTS, NUM_JOINTS, |a, b| {
            data.iter().map(|q| (q[a] - mean[a]) * (q[b] - mean[b])).sum::<f64>() / (n - 1) as f64
        });
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..NUM_JOINTS).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
        for (rank, &col) in order.iter().enumerate() {
            let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
            fix_sign(&mut v);
            let err = v.iter().zip(&model.components[rank]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            worst = worst.max(err);
        }
        let m = SynergyModel::Pca(model);
        for q in &data {
            round_trip = round_trip.max(m.decode(&m.encode(q)).unwrap().max_abs_diff(q));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    t.line(
        worst < 1e-8 && round_trip < 1e-9 && secs < 10.0,
        "PCA oracle equivalence",
        format!("20 datasets: max component error {worst:.2e} (need < 1e-8), k=19 round trip {round_trip:.2e} (need < 1e-9), {secs:.2} s"),
    );
}

fn blobs(n: usize, sep: f64, rng: &mut ChaCha8Rng) -> (Vec<Vec3>, Vec<usize>) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let dir = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
    (0..n)
        .map(|i| {
            let b = i % 2;
            (dir * sep * b as f64 + Vec3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng)), b)
        })
        .unzip()
}

fn clustering_oracle(t: &mut Tally) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(400);
    let check = |pts: &[Vec3]| {
        let sse = cluster_two(pts).unwrap().within_sum_of_squares(pts);
        (sse - brute_force_two_partition(pts)).abs() < 1e-9
    };
    let trials = 500;
    let uniform = (0..trials)
        .filter(|_| {
            let n = rng.gen_range(2..=12);
            let pts: Vec<Vec3> = (0..n).map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen())).collect();
            check(&pts)
        })
        .count();
    let separated = (0..trials)
        .filter(|_| {
            let n = rng.gen_range(2..=12);
            let sep = rng.gen_range(4.0..10.0);
            check(&blobs(n, sep, &mut rng).0)
        })
        .count();
    let mut purity_min = 1.0f64;
    for _ in 0..50 {
        let (pts, truth) = blobs(200, 6.0, &mut rng);
        let c = cluster_two(&pts).unwrap();
        let agree = c.assignment.iter().zip(&truth).filter(|(a, b)| a == b).count();
        purity_min = purity_min.min(agree.max(pts.len() - agree) as f64 / pts.len() as f64);
    }
    let secs = start.elapsed().as_secs_f64();
    t.line(
        uniform == trials && separated == trials && purity_min >= 0.95 && secs < 30.0,
        "clustering oracle",
        format!(
            "matches exhaustive optimum on {uniform}/{trials} uniform and {separated}/{trials} two-blob (4-10 sigma) instances with n <= 12; \
             min two-blob purity {purity_min:.3} (need all instances, purity >= 0.95, < 30 s; took {secs:.1} s)"
        ),
    );
}

fn retarget_checks(t: &mut Tally) {
    let start = Instant::now();
    let hand = HandModel::default_hand();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let keypoints = |q: &JointAngles, base: &Pose| HumanHandKeypoints {
        points: hand.keypoints(base, &human_configuration(&hand, q)),
        object_id: "hammer".into(),
        intent: Intent::Use,
        subject_id: "s0".into(),
    };
    let mut round = 0.0f64;
    let mut invariance = 0.0f64;
    for _ in 0..500 {
        let mut q = hand.neutral();
        for (j, (lo, hi)) in hand.limits().iter().enumerate() {
            if !is_abduction(j) {
                q[j] = rng.gen_range(*lo..*hi);
            }
        }
        let base = Pose::from_rpy(
            Vec3::new(rng.gen(), rng.gen(), rng.gen()),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-3.0..3.0),
        );
        let k = keypoints(&q, &base);
        let back = retarget_grasp(&k, &hand).unwrap();
        round = round.max(back.max_abs_diff(&q));
        let s: f64 = rng.gen_range(0.1..10.0);
        let mut scaled = k.clone();
        scaled.points.iter_mut().for_each(|p| *p *= s);
        invariance = invariance.max(retarget_grasp(&scaled, &hand).unwrap().max_abs_diff(&back));
        let motion = Pose::from_rpy(Vec3::new(rng.gen(), rng.gen(), rng.gen()), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        invariance = invariance.max(retarget_grasp(&k.transformed(&motion), &hand).unwrap().max_abs_diff(&back));
    }
    let secs = start.elapsed().as_secs_f64();
    t.line(
        round < 1e-6 && invariance < 1e-9 && secs < 10.0,
        "retarget round trip",
        format!("500 postures: flexion error {round:.2e} rad (need < 1e-6), scale/rigid invariance {invariance:.2e} (need < 1e-9), {secs:.2} s"),
    );
}

fn synergy_quality(t: &mut Tally, d: &Data) -> Arc<SynergyModel> {
    let start = Instant::now();
    let angles = d.postures.angles();
    let (vae, _) = vae_train(&angles, 2, &VaeHyperparams::default(), d.hand.limits()).unwrap();
    let model = SynergyModel::Vae(vae);
    let err = model.reconstruction_error(&angles);
    let secs = start.elapsed().as_secs_f64();
    t.line(
        angles.len() >= 500 && err < 0.15 && secs < 300.0,
        "synergy quality",
        format!("VAE k=2 on {} synthetic grasps: mean per-joint error {err:.4} rad in {secs:.1} s (need < 0.15 rad, < 5 min)", angles.len()),
    );
    Arc::new(model)
}

fn scene_for(d: &Data) -> Arc<Scene> {
    Arc::new(Scene::new(d.hand.clone(), ObjectModel::builtin()).unwrap().with_targets(&d.targets).unwrap())
}

fn smoke(t: &mut Tally, d: &Data, synergy: &Arc<SynergyModel>) {
    let start = Instant::now();
    let mut env = EnvConfig::default();
    env.weights.w2 = 0.0;
    env.weights.w3 = 0.0;
    let setup = TrainSetup {
        scene: scene_for(d),
        env,
        synergy: Some(synergy.clone()),
    };
    let cfg = PpoConfig {
        total_updates: 100,
        ..Default::default()
    };
    let (_, curve) = train(&cfg, &setup, None).unwrap();
    let first = curve.rows[0].mean_reward;
    let tail: Vec<f64> = curve.rows[curve.rows.len() - 5..].iter().map(|r| r.mean_reward).collect();
    let last = tail.iter().sum::<f64>() / tail.len() as f64;
    let gain = (last - first) / first.abs();
    let secs = start.elapsed().as_secs_f64();
    t.line(
        gain >= 0.5 && secs < 600.0,
        "learning smoke test",
        format!(
            "reach-only, 64 envs, VAE k=2: mean episode reward {first:.2} at update 1 -> {last:.2} over updates 96-100 ({:+.0}%) in {secs:.0} s (need >= +50%, < 10 min)",
            100.0 * gain
        ),
    );
}

fn mean_separation(r: &EvalReport) -> f64 {
    Intent::ALL.iter().map(|i| r.separation[i].unwrap_or(0.0)).sum::<f64>() / 2.0
}

fn headline(t: &mut Tally, d: &Data, synergy: &Arc<SynergyModel>) {
    let name = "desk-scale headline";
    if std::env::var_os("SYNERGRASP_SKIP_HEADLINE").is_some() {
        println!("[SKIP] {name}: SYNERGRASP_SKIP_HEADLINE is set");
        return;
    }
    let start = Instant::now();
    let scene = scene_for(d);
    let mut results = Vec::new();
    for with in [true, false] {
        let cfg = PpoConfig {
            include_category: with,
            ..Default::default()
        };
        let setup = TrainSetup {
            scene: scene.clone(),
            env: EnvConfig::default(),
            synergy: Some(synergy.clone()),
        };
        let t0 = Instant::now();
        let (net, curve) = train_with(&cfg, &setup, None, &mut |r| {
            if (r.update + 1) % 250 == 0 {
                eprintln!(
                    "  headline (category {with}): update {} success window {:.3} reward {:.2}",
                    r.update + 1,
                    r.success_window,
                    r.mean_reward
                );
            }
        })
        .unwrap();
        let train_secs = t0.elapsed().as_secs_f64();
        let eval_setup = EvalSetup {
            scene: scene.clone(),
            env: Arc::new(EnvConfig {
                include_category: with,
                ..Default::default()
            }),
            decoder: HandDecoder::Synergy(synergy.clone()),
        };
        let ctrl = PolicyController::new(Arc::new(net), ActionMode::Vae);
        let uniform = success_rate(
            &ctrl,
            &eval_setup,
            &EvalOptions {
                label: format!("vae-category-{with}"),
                n_trials: 500,
                seed: 1,
                workers: 1,
            },
        )
        .unwrap();
        let per_target = target_distance_report(
            &ctrl,
            &eval_setup,
            &EvalOptions {
                label: format!("vae-category-{with}-per-target"),
                n_trials: 200,
                seed: 2,
                workers: 1,
            },
        )
        .unwrap();
        eprintln!(
            "  headline (category {with}): {} updates in {train_secs:.0} s, final success window {:.3}",
            curve.rows.len(),
            curve.rows.last().map(|r| r.success_window).unwrap_or(0.0)
        );
        results.push((uniform, per_target));
    }
    if let Ok(dir) = std::env::var("SYNERGRASP_REPORT_DIR") {
        let all: Vec<EvalReport> = results.iter().flat_map(|(a, b)| [a.clone(), b.clone()]).collect();
        emit_report(&all, std::path::Path::new(&dir)).unwrap();
    }
    let secs = start.elapsed().as_secs_f64();
    let (with_u, with_t) = &results[0];
    let (without_u, without_t) = &results[1];
    let success = with_u.success_rate.unwrap_or(0.0);
    let sep = |r: &EvalReport, i: Intent| r.separation[&i].unwrap_or(0.0);
    let a = success >= 0.5;
    let b = Intent::ALL.iter().all(|&i| sep(with_t, i) >= 0.8);
    let c = mean_separation(with_t) > mean_separation(without_t);
    t.line(
        a && b && c && secs < 7200.0,
        name,
        format!(
            "2000 updates x 64 envs, VAE k=2, seed 0. (a) success {success:.3} over 500 trials (need >= 0.5); \
             (b) separation use {:.3} handoff {:.3} over 200 trials per object and intent (need >= 0.8 each); \
             (c) mean separation with category {:.3} vs without {:.3} (need with > without; without-category success {:.3}); \
             total {:.0} min (budget 120 min)",
            sep(with_t, Intent::Use),
            sep(with_t, Intent::Handoff),
            mean_separation(with_t),
            mean_separation(without_t),
            without_u.success_rate.unwrap_or(0.0),
            secs / 60.0
        ),
    );
}

fn determinism(t: &mut Tally, d: &Data, synergy: &Arc<SynergyModel>) {
    let start = Instant::now();
    let mut stages: Vec<(&str, bool)> = Vec::new();
    let hand = &d.hand;

    let synth = |seed| {
        let g = generate(hand, &ObjectModel::builtin(), &SyntheticConfig { seed, ..Default::default() }).unwrap();
        let recs: Vec<_> = g.into_iter().map(|g| g.record).collect();
        sha(serde_json::to_string(&recs).unwrap().as_bytes())
    };
    stages.push(("synthetic", synth(3) == synth(3)));

    let grasps = generate(hand, &ObjectModel::builtin(), &SyntheticConfig::default()).unwrap();
    let records: Vec<_> = grasps.into_iter().map(|g| g.record).collect();
    let kps: Vec<_> = records.iter().map(|r| r.to_keypoints().unwrap()).collect();
    let rt = |w| sha(serde_json::to_string(&retarget_dataset(&kps, hand, "s", w).unwrap()).unwrap().as_bytes());
    stages.push(("retarget (1 vs 4 workers)", rt(1) == rt(4)));

    let angles = d.postures.angles();
    let hp = VaeHyperparams {
        epochs: 50,
        ..Default::default()
    };
    let vae = || sha(SynergyModel::Vae(vae_train(&angles, 2, &hp, hand.limits()).unwrap().0).to_json(hand).unwrap().as_bytes());
    stages.push(("VAE training", vae() == vae()));
    let pca = || sha(SynergyModel::Pca(fit_pca(&angles, 5, hand.limits()).unwrap()).to_json(hand).unwrap().as_bytes());
    stages.push(("PCA fit", pca() == pca()));

    let tg = || sha(serde_json::to_string(&extract_targets(&grasp_points(&records).unwrap()).unwrap().table).unwrap().as_bytes());
    stages.push(("target extraction", tg() == tg()));

    let setup = TrainSetup {
        scene: scene_for(d),
        env: EnvConfig::default(),
        synergy: Some(synergy.clone()),
    };
    let run = |workers: usize, recurrent: Option<usize>| {
        let cfg = PpoConfig {
            num_envs: 8,
            total_updates: 3,
            minibatch_size: 600,
            workers,
            arch: PolicyArch {
                recurrent,
                hidden: vec![32, 32],
                ..Default::default()
            },
            ..Default::default()
        };
        let dir = tempfile::tempdir().unwrap();
        let (net, _) = train(&cfg, &setup, Some(dir.path())).unwrap();
        let mut ck = Checkpoint::load(&dir.path().join("checkpoint.json")).unwrap();
        ck.config.workers = 1;
        let files = [
            sha(serde_json::to_string(&ck).unwrap().as_bytes()),
            sha(&std::fs::read(dir.path().join("curve.csv")).unwrap()),
        ];
        (net, files)
    };
    let (net, files) = run(1, None);
    stages.push(("policy training (1 vs 4 workers)", files == run(4, None).1));
    stages.push(("recurrent policy training (1 vs 4 workers)", run(1, Some(16)).1 == run(4, Some(16)).1));

    let eval_setup = EvalSetup {
        scene: scene_for(d),
        env: Arc::new(EnvConfig::default()),
        decoder: HandDecoder::Synergy(synergy.clone()),
    };
    let ctrl = PolicyController::new(Arc::new(net), ActionMode::Vae);
    let ev = |workers| {
        let opts = EvalOptions {
            n_trials: 40,
            workers,
            ..Default::default()
        };
        let r = success_rate(&ctrl, &eval_setup, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&[r], dir.path()).unwrap();
        ["success.csv", "separation.csv", "summary.json"].map(|f| sha(&std::fs::read(dir.path().join(f)).unwrap()))
    };
    stages.push(("evaluation (1 vs 4 workers)", ev(1) == ev(4)));

    let secs = start.elapsed().as_secs_f64();
    let bad: Vec<&str> = stages.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    t.line(
        bad.is_empty(),
        "determinism",
        if bad.is_empty() {
            format!("{} stages hash identically across duplicate runs; checkpoints compared with the worker count field set equal ({secs:.0} s)", stages.len())
        } else {
            format!("hash differs for: {}", bad.join(", "))
        },
    );
}

fn main() {
    let start = Instant::now();
    println!("acceptance checks");
    let mut t = Tally { pass: 0, fail: 0 };
    println!("[N/A] paper-number reproduction: not attempted at desk scale; the headline below is the directional substitute");
    oracle_gate(&mut t);
    gradient_suite(&mut t);
    gae_equivalence(&mut t);
    pca_oracle(&mut t);
    clustering_oracle(&mut t);
    retarget_checks(&mut t);
    let d = data();
    let synergy = synergy_quality(&mut t, &d);
    smoke(&mut t, &d, &synergy);
    determinism(&mut t, &d, &synergy);
    headline(&mut t, &d, &synergy);
    println!("acceptance: {} passed, {} failed in {:.0} s", t.pass, t.fail, start.elapsed().as_secs_f64());
}
