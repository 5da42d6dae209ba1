use std::sync::Arc;

use synergrasp::env::{ActionMode, EnvConfig, HandDecoder, ObjectModel, Scene};
use synergrasp::eval::{success_rate, target_distance_report, EvalOptions, EvalSetup, PolicyController, ScriptedOracle};
use synergrasp::nn::Params;
use synergrasp::retarget::retarget_dataset;
use synergrasp::rl::{train, Checkpoint, PolicyArch, PpoConfig, TrainSetup};
use synergrasp::synergy::{fit_pca, SynergyModel};
use synergrasp::synthetic::{generate, SyntheticConfig};
use synergrasp::targets::{extract_targets, grasp_points, GraspTargetTable};
use synergrasp::{HandModel, Intent};

fn small_data() -> (HandModel, Vec<synergrasp::JointAngles>, GraspTargetTable) {
    let hand = HandModel::default_hand();
    let cfg = SyntheticConfig {
        n_per_intent: 15,
        ..Default::default()
    };
    let records: Vec<_> = generate(&hand, &ObjectModel::builtin(), &cfg).unwrap().into_iter().map(|g| g.record).collect();
    let kps: Vec<_> = records.iter().map(|r| r.to_keypoints().unwrap()).collect();
    let postures = retarget_dataset(&kps, &hand, "synthetic", 2).unwrap();
    assert!(postures.rejects.is_empty());
    let table = extract_targets(&grasp_points(&records).unwrap()).unwrap().table;
    (hand, postures.angles(), table)
}

#[test]
fn extracted_targets_sit_near_the_sites() {
    let (_, _, table) = small_data();
    for o in ObjectModel::builtin() {
        for intent in Intent::ALL {
            let site = o.targets[&intent];
            let got = table.get(&o.id, intent).unwrap();
            let d = ((got.x - site[0]).powi(2) + (got.y - site[1]).powi(2) + (got.z - site[2]).powi(2)).sqrt();
            assert!(d < 0.02, "{} {intent}: {d}", o.id);
        }
    }
}

#[test]
fn files_round_trip() {
    let (hand, angles, table) = small_data();
    let dir = tempfile::tempdir().unwrap();
    let model = SynergyModel::Pca(fit_pca(&angles, 4, hand.limits()).unwrap());
    let path = dir.path().join("synergy.json");
    model.save(&path, &hand).unwrap();
    let back = SynergyModel::load(&path, &hand).unwrap();
    assert_eq!(back.to_json(&hand).unwrap(), model.to_json(&hand).unwrap());

    let tpath = dir.path().join("targets.json");
    table.save(&tpath).unwrap();
    assert_eq!(GraspTargetTable::load(&tpath).unwrap(), table);
}

#[test]
fn oracle_grasps_learned_targets_through_pca() {
    let (hand, angles, table) = small_data();
    let model = Arc::new(SynergyModel::Pca(fit_pca(&angles, 19, hand.limits()).unwrap()));
    let scene = Arc::new(Scene::builtin().with_targets(&table).unwrap());
    let setup = EvalSetup {
        scene,
        env: Arc::new(EnvConfig::default()),
        decoder: HandDecoder::Synergy(model),
    };
    let opts = EvalOptions {
        label: "oracle".into(),
        n_trials: 2,
        ..Default::default()
    };
    let r = target_distance_report(&ScriptedOracle::new(), &setup, &opts).unwrap();
    assert_eq!(r.success_rate, Some(1.0));
    for intent in Intent::ALL {
        assert_eq!(r.separation[&intent], Some(1.0));
    }
}

#[test]
fn short_training_checkpoints_and_evaluates() {
    let (hand, angles, table) = small_data();
    let model = Arc::new(SynergyModel::Pca(fit_pca(&angles, 3, hand.limits()).unwrap()));
    let scene = Arc::new(Scene::builtin().with_targets(&table).unwrap());
    let cfg = PpoConfig {
        mode: ActionMode::Pca,
        k: 3,
        num_envs: 2,
        total_updates: 2,
        minibatch_size: 150,
        arch: PolicyArch {
            hidden: vec![16, 16],
            ..Default::default()
        },
        ..Default::default()
    };
    let setup = TrainSetup {
        scene: scene.clone(),
        env: EnvConfig::default(),
        synergy: Some(model.clone()),
    };
    let dir = tempfile::tempdir().unwrap();
    let (net, curve) = train(&cfg, &setup, Some(dir.path())).unwrap();
    assert_eq!(curve.rows.len(), 2);
    let ck = Checkpoint::load(&dir.path().join("checkpoint.json")).unwrap();
    assert_eq!(ck.update, 2);
    assert_eq!(ck.net.flatten(), net.flatten());

    let eval = EvalSetup {
        scene,
        env: Arc::new(ck.env.clone()),
        decoder: HandDecoder::Synergy(model),
    };
    let opts = EvalOptions {
        n_trials: 6,
        ..Default::default()
    };
    let r = success_rate(&PolicyController::new(Arc::new(net), ActionMode::Pca), &eval, &opts).unwrap();
    assert_eq!(r.episodes.len(), 6);
    assert!(r.episodes.iter().all(|e| e.steps > 0));
}
