//! Quasi-static grasping environment.
//!
//! A floating hand moves above a table holding three objects. The active
//! object attaches rigidly to the wrist once the thumb and another fingertip
//! touch it with the palm close by, and is dropped back onto the table when
//! that stops being true. There is no contact dynamics.

mod objects;

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use objects::{surface_distance, ObjectModel, OBJECT_SCHEMA, TARGET_SURFACE_TOLERANCE};

use crate::error::{check_dim, Error, Result};
use crate::intent::Intent;
use crate::kinematics::{cartesian_step, Finger, FingertipSet, HandModel, JointAngles, StepCaps, NUM_FINGERS, NUM_JOINTS};
use crate::pose::{Pose, Vec3};
use crate::synergy::SynergyModel;
use crate::targets::GraspTargetTable;

pub const WRIST_DIM: usize = 6;
pub const LATENT_BOUND: f64 = 3.0;
pub const NUM_OBJECTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    /// Distance decay, 1/m.
    pub alpha: f64,
    /// Lift height counted as success, m.
    pub h_lift: f64,
}

impl Default for RewardWeights {
    fn default() -> Self {
        RewardWeights {
            w1: 1.0,
            w2: 1.0,
            w3: 0.25,
            alpha: 10.0,
            h_lift: 0.10,
        }
    }
}

impl RewardWeights {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.w1, self.w2, self.w3, self.alpha]
            .iter()
            .all(|w| w.is_finite() && *w >= 0.0)
            && self.h_lift > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid reward weights {self:?}")))
        }
    }

    /// Upper bound of the per-step reward.
    pub fn max_total(&self) -> f64 {
        2.0 * self.w1 + 2.0 * self.w2 + self.w3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_fingertips_object_dist: f64,
    pub r_palm_object_dist: f64,
    pub r_object_height: f64,
    pub r_object_grasped: f64,
    pub r_rotation: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Fingertip-to-surface distance for contact, m.
    pub d_contact: f64,
    /// Palm-to-surface distance for attachment, m.
    pub d_palm: f64,
    /// Consecutive lifted steps required for success.
    pub n_hold: usize,
    pub horizon: usize,
    /// Std of the active object's x and y at reset, m.
    pub sigma_pos: f64,
    /// Std of the active object's yaw at reset, rad.
    pub sigma_yaw: f64,
    /// Joint rate cap toward the commanded posture, rad/step.
    pub joint_rate: f64,
    pub caps: StepCaps,
    pub weights: RewardWeights,
    pub table_height: f64,
    /// Lowest wrist height above the table, m.
    pub wrist_clearance: f64,
    pub wrist_home: Pose,
    /// Table spots of the two inactive objects, `[x, y]` in m.
    pub scenery_slots: [[f64; 2]; 2],
    pub include_category: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            d_contact: 0.015,
            d_palm: 0.06,
            n_hold: 5,
            horizon: 150,
            sigma_pos: 0.02,
            sigma_yaw: 0.2,
            joint_rate: 0.15,
            caps: StepCaps::default(),
            weights: RewardWeights::default(),
            table_height: 0.0,
            wrist_clearance: 0.02,
            wrist_home: Pose::from_rpy(Vec3::new(0.40, -0.05, 0.22), 0.0, 0.0, std::f64::consts::FRAC_PI_2),
            scenery_slots: [[0.45, 0.30], [0.45, -0.30]],
            include_category: true,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        let pos = [self.d_contact, self.d_palm, self.joint_rate, self.caps.translation, self.caps.rotation];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || self.horizon == 0
            || self.n_hold == 0
            || !(self.sigma_pos >= 0.0 && self.sigma_yaw >= 0.0)
            || !self.wrist_home.is_finite()
        {
            return Err(Error::Config("invalid environment parameters".into()));
        }
        Ok(())
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(self.include_category)
    }
}

pub fn observation_dim(include_category: bool) -> usize {
    NUM_JOINTS + 7 + 7 + if include_category { NUM_OBJECTS } else { 0 } + 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Joint,
    Pca,
    Vae,
}

impl ActionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionMode::Joint => "joint",
            ActionMode::Pca => "pca",
            ActionMode::Vae => "vae",
        }
    }

    pub fn hand_dim(self, k: usize) -> usize {
        match self {
            ActionMode::Joint => NUM_JOINTS,
            _ => k,
        }
    }
}

impl std::fmt::Display for ActionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ActionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(ActionMode::Joint),
            "pca" => Ok(ActionMode::Pca),
            "vae" => Ok(ActionMode::Vae),
            other => Err(Error::Config(format!("unknown action mode '{other}'"))),
        }
    }
}

/// Turns the hand part of an action into a joint target.
#[derive(Debug, Clone)]
pub enum HandDecoder {
    /// Raw joint targets in radians.
    Joint,
    Synergy(Arc<SynergyModel>),
}

impl HandDecoder {
    pub fn mode(&self) -> ActionMode {
        match self {
            HandDecoder::Joint => ActionMode::Joint,
            HandDecoder::Synergy(m) => match m.kind() {
                crate::synergy::SynergyKind::Pca => ActionMode::Pca,
                crate::synergy::SynergyKind::Vae => ActionMode::Vae,
            },
        }
    }

    pub fn hand_dim(&self) -> usize {
        match self {
            HandDecoder::Joint => NUM_JOINTS,
            HandDecoder::Synergy(m) => m.k(),
        }
    }

    pub fn action_dim(&self) -> usize {
        WRIST_DIM + self.hand_dim()
    }

    /// Joint target for `hand`; latents are clamped to `±LATENT_BOUND`.
    pub fn decode(&self, hand: &[f64], model: &HandModel) -> Result<JointAngles> {
        check_dim("hand action", self.hand_dim(), hand.len())?;
        match self {
            HandDecoder::Joint => Ok(crate::kinematics::clamp_to_limits(model, &JointAngles::from_slice(hand)?)),
            HandDecoder::Synergy(m) => {
                let z: Vec<f64> = hand.iter().map(|v| v.clamp(-LATENT_BOUND, LATENT_BOUND)).collect();
                m.decode(&z)
            }
        }
    }
}

/// Wrist displacement followed by the hand command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub wrist: [f64; WRIST_DIM],
    pub hand: Vec<f64>,
}

impl Action {
    pub fn zeros(hand_dim: usize) -> Self {
        Action {
            wrist: [0.0; WRIST_DIM],
            hand: vec![0.0; hand_dim],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.wrist.iter().chain(&self.hand).all(|v| v.is_finite())
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.wrist.iter().chain(&self.hand).copied().collect()
    }

    /// Map an unbounded policy output to an action: wrist components pass
    /// through tanh and are scaled to the step caps, latents are clamped,
    /// joint targets are squashed into the joint limits.
    pub fn from_policy_output(raw: &[f64], mode: ActionMode, caps: &StepCaps, hand: &HandModel) -> Result<Self> {
        if raw.len() < WRIST_DIM {
            return Err(Error::DimensionMismatch {
                context: "policy output".into(),
                expected: WRIST_DIM,
                got: raw.len(),
            });
        }
        let mut wrist = [0.0; WRIST_DIM];
        for (i, w) in wrist.iter_mut().enumerate() {
            let cap = if i < 3 { caps.translation } else { caps.rotation };
            *w = raw[i].tanh() * cap;
        }
        let rest = &raw[WRIST_DIM..];
        let hand_cmd = match mode {
            ActionMode::Joint => {
                check_dim("joint action", NUM_JOINTS, rest.len())?;
                rest.iter()
                    .zip(hand.limits())
                    .map(|(v, (lo, hi))| lo + 0.5 * (v.tanh() + 1.0) * (hi - lo))
                    .collect()
            }
            _ => rest.iter().map(|v| v.clamp(-LATENT_BOUND, LATENT_BOUND)).collect(),
        };
        Ok(Action { wrist, hand: hand_cmd })
    }
}

/// Hand, objects and their grasp targets; shared by every env instance.
#[derive(Debug, Clone)]
pub struct Scene {
    pub hand: HandModel,
    pub objects: Vec<ObjectModel>,
}

impl Scene {
    pub fn new(hand: HandModel, objects: Vec<ObjectModel>) -> Result<Self> {
        check_dim("scene objects", NUM_OBJECTS, objects.len())?;
        for o in &objects {
            o.validate()?;
        }
        Ok(Scene { hand, objects })
    }

    /// Default hand and objects with their built-in targets.
    pub fn builtin() -> Self {
        Scene::new(HandModel::default_hand(), ObjectModel::builtin()).expect("builtin scene is valid")
    }

    pub fn with_targets(self, table: &GraspTargetTable) -> Result<Self> {
        let objects = self
            .objects
            .into_iter()
            .map(|o| o.with_targets(table))
            .collect::<Result<Vec<_>>>()?;
        Scene::new(self.hand, objects)
    }

    pub fn object_index(&self, id: &str) -> Result<usize> {
        self.objects
            .iter()
            .position(|o| o.id == id)
            .ok_or_else(|| Error::UnknownObject(id.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub wrist: Pose,
    pub hand_q: JointAngles,
    pub object_poses: Vec<Pose>,
    pub active: usize,
    pub intent: Intent,
    pub attached: bool,
    /// Object pose in the wrist frame while attached.
    pub grip: Option<Pose>,
    pub step_index: usize,
    /// Consecutive steps with the object attached above the lift height.
    pub lifted_steps: usize,
    pub success: bool,
    pub failed: bool,
    pub table_height: f64,
}

impl EnvState {
    pub fn object_pose(&self) -> &Pose {
        &self.object_poses[self.active]
    }

    /// Height of the active object above its rest height.
    pub fn lift(&self, scene: &Scene) -> f64 {
        self.object_pose().position.z - scene.objects[self.active].rest_pose.position.z - self.table_height
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub breakdown: RewardBreakdown,
    pub done: bool,
    pub success: bool,
    /// Episode aborted because the action was not finite.
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub wrist: [f64; 7],
    pub hand_q: JointAngles,
    pub object: [f64; 7],
    pub attached: bool,
    pub action: Vec<f64>,
    pub reward: RewardBreakdown,
}

/// Active intent's target and the other one, world frame.
pub fn world_targets(state: &EnvState, scene: &Scene) -> Result<[Vec3; 2]> {
    let obj = &scene.objects[state.active];
    let pose = state.object_pose();
    Ok([
        pose.transform_point(&obj.target(Intent::Use)?),
        pose.transform_point(&obj.target(Intent::Handoff)?),
    ])
}

/// Per-term reward for `state`.
pub fn reward(state: &EnvState, scene: &Scene, weights: &RewardWeights) -> RewardBreakdown {
    let tips = scene.hand.forward_kinematics(&state.wrist, &state.hand_q);
    let obj = &scene.objects[state.active];
    let target = state
        .object_pose()
        .transform_point(&obj.target(state.intent).expect("scene objects carry both targets"));
    reward_terms(&tips, &target, state.lift(scene), &scene.hand.world_palm_normal(&state.wrist), weights)
}

fn reward_terms(tips: &FingertipSet, target: &Vec3, lift: f64, palm_normal: &Vec3, w: &RewardWeights) -> RewardBreakdown {
    let mean_tip = tips.tips.iter().map(|t| (t - target).norm()).sum::<f64>() / NUM_FINGERS as f64;
    let fing = (-w.alpha * mean_tip).exp();
    let palm = (-w.alpha * (tips.palm.position - target).norm()).exp();
    let height = (lift / w.h_lift).clamp(0.0, 1.0);
    let grasped = if lift > w.h_lift { 1.0 } else { 0.0 };
    let rotation = palm_normal.dot(&-Vec3::z()).max(0.0);
    RewardBreakdown {
        r_fingertips_object_dist: fing,
        r_palm_object_dist: palm,
        r_object_height: height,
        r_object_grasped: grasped,
        r_rotation: rotation,
        total: w.w1 * (fing + palm) + w.w2 * (height + grasped) + w.w3 * rotation,
    }
}

pub fn is_success(state: &EnvState) -> bool {
    state.success
}

/// Distances from the grasp point (thumb, index, middle mean) to the use and
/// handoff targets.
pub fn distance_to_targets(state: &EnvState, scene: &Scene) -> (f64, f64) {
    let g = scene.hand.forward_kinematics(&state.wrist, &state.hand_q).grasp_point();
    let [u, h] = world_targets(state, scene).expect("scene objects carry both targets");
    ((g - u).norm(), (g - h).norm())
}

fn canonical_quat(p: &Pose) -> [f64; 7] {
    let mut a = p.to_array();
    if a[3] < 0.0 {
        for v in &mut a[3..] {
            *v = -*v;
        }
    }
    a
}

/// Flat observation: joints, wrist pose, object pose, object one-hot
/// (optional), intent one-hot.
pub fn observation(state: &EnvState, include_category: bool) -> Vec<f64> {
    let mut o = Vec::with_capacity(observation_dim(include_category));
    o.extend_from_slice(state.hand_q.as_slice());
    o.extend_from_slice(&canonical_quat(&state.wrist));
    o.extend_from_slice(&canonical_quat(state.object_pose()));
    if include_category {
        for i in 0..NUM_OBJECTS {
            o.push(if i == state.active { 1.0 } else { 0.0 });
        }
    }
    for intent in Intent::ALL {
        o.push(if intent == state.intent { 1.0 } else { 0.0 });
    }
    o
}

/// Thumb plus one other fingertip within `d_contact` of the object and the
/// palm origin within `d_palm`.
pub fn grasp_holds(tips: &FingertipSet, object: &ObjectModel, pose: &Pose, cfg: &EnvConfig) -> bool {
    let inv = pose.inverse();
    let d = |p: &Vec3| object.surface_distance(&inv.transform_point(p));
    if d(&tips.tip(Finger::Thumb)) > cfg.d_contact {
        return false;
    }
    let others = tips.tips[1..].iter().any(|t| d(t) <= cfg.d_contact);
    others && d(&tips.palm.position) <= cfg.d_palm
}

fn rest_on_table(pose: &Pose, rest_z: f64) -> Pose {
    Pose::from_rpy(Vec3::new(pose.position.x, pose.position.y, rest_z), 0.0, 0.0, pose.yaw())
}

/// One environment instance with its own random stream.
#[derive(Debug, Clone)]
pub struct Env {
    scene: Arc<Scene>,
    config: Arc<EnvConfig>,
    decoder: HandDecoder,
    rng: ChaCha8Rng,
    state: EnvState,
    trace: Option<Vec<TraceRecord>>,
}

impl Env {
    /// `stream` selects an independent random stream for the same seed.
    pub fn new(scene: Arc<Scene>, config: Arc<EnvConfig>, decoder: HandDecoder, seed: u64, stream: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let state = Self::initial_state(&scene, &config, 0, Intent::Use);
        Ok(Env {
            scene,
            config,
            decoder,
            rng,
            state,
            trace: None,
        })
    }

    fn initial_state(scene: &Scene, cfg: &EnvConfig, active: usize, intent: Intent) -> EnvState {
        let mut slots = cfg.scenery_slots.iter();
        let object_poses = scene
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| {
                let mut p = o.rest_pose;
                if i != active {
                    let s = slots.next().expect("two scenery slots");
                    p.position.x = s[0];
                    p.position.y = s[1];
                }
                p.position.z += cfg.table_height;
                p
            })
            .collect();
        EnvState {
            wrist: cfg.wrist_home,
            hand_q: scene.hand.open_posture(),
            object_poses,
            active,
            intent,
            attached: false,
            grip: None,
            step_index: 0,
            lifted_steps: 0,
            success: false,
            failed: false,
            table_height: cfg.table_height,
        }
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn decoder(&self) -> &HandDecoder {
        &self.decoder
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn action_dim(&self) -> usize {
        self.decoder.action_dim()
    }

    pub fn observation(&self) -> Vec<f64> {
        observation(&self.state, self.config.include_category)
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceRecord> {
        self.trace.as_mut().map(std::mem::take).unwrap_or_default()
    }

    /// Reseed the stream and reset.
    pub fn reset_seeded(&mut self, seed: u64, object: Option<&str>, intent: Option<Intent>) -> Result<Vec<f64>> {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.reset(object, intent)
    }

    /// New episode drawn from the env's stream. `None` picks uniformly.
    pub fn reset(&mut self, object: Option<&str>, intent: Option<Intent>) -> Result<Vec<f64>> {
        let active = match object {
            Some(id) => self.scene.object_index(id)?,
            None => self.rng.gen_range(0..NUM_OBJECTS),
        };
        let intent = match intent {
            Some(i) => i,
            None => Intent::ALL[self.rng.gen_range(0..2)],
        };
        let mut state = Self::initial_state(&self.scene, &self.config, active, intent);
        let n: [f64; 3] = [
            self.rng.sample(StandardNormal),
            self.rng.sample(StandardNormal),
            self.rng.sample(StandardNormal),
        ];
        let p = &mut state.object_poses[active];
        let yaw = p.yaw() + self.config.sigma_yaw * n[2];
        *p = Pose::from_rpy(
            Vec3::new(
                p.position.x + self.config.sigma_pos * n[0],
                p.position.y + self.config.sigma_pos * n[1],
                p.position.z,
            ),
            0.0,
            0.0,
            yaw,
        );
        self.state = state;
        if let Some(t) = self.trace.as_mut() {
            t.clear();
        }
        Ok(self.observation())
    }

    pub fn step(&mut self, action: &Action) -> Result<StepResult> {
        if self.state.success || self.state.failed || self.state.step_index >= self.config.horizon {
            return Err(Error::ContractViolation("step after episode end".into()));
        }
        check_dim("action", self.decoder.action_dim(), WRIST_DIM + action.hand.len())?;
        if !action.is_finite() {
            self.state.failed = true;
            self.state.step_index += 1;
            return Ok(StepResult {
                observation: self.observation(),
                reward: 0.0,
                breakdown: RewardBreakdown::default(),
                done: true,
                success: false,
                failed: true,
            });
        }
        let cfg = &*self.config;
        let scene = &*self.scene;
        let st = &mut self.state;

        let mut wrist = cartesian_step(&st.wrist, &action.wrist, &cfg.caps)?;
        let floor = cfg.table_height + cfg.wrist_clearance;
        if wrist.position.z < floor {
            wrist.position.z = floor;
        }

        let target = self.decoder.decode(&action.hand, &scene.hand)?;
        for j in 0..NUM_JOINTS {
            let d = (target[j] - st.hand_q[j]).clamp(-cfg.joint_rate, cfg.joint_rate);
            st.hand_q[j] += d;
        }

        let obj = &scene.objects[st.active];
        let rest_z = obj.rest_pose.position.z + cfg.table_height;
        let object_pose = match st.grip {
            Some(grip) => {
                let mut pose = wrist.compose(&grip);
                if pose.position.z < rest_z {
                    // Carried objects cannot sink into the table.
                    wrist.position.z += rest_z - pose.position.z;
                    pose = wrist.compose(&grip);
                }
                pose
            }
            None => *st.object_pose(),
        };
        st.wrist = wrist;
        let tips = scene.hand.forward_kinematics(&st.wrist, &st.hand_q);
        let holds = grasp_holds(&tips, obj, &object_pose, cfg);
        let active = st.active;
        match (st.grip.is_some(), holds) {
            (true, true) => st.object_poses[active] = object_pose,
            (true, false) => {
                st.object_poses[active] = rest_on_table(&object_pose, rest_z);
                st.grip = None;
            }
            (false, true) => st.grip = Some(st.wrist.inverse().compose(&object_pose)),
            (false, false) => {}
        }
        st.attached = st.grip.is_some();

        let lift = st.lift(scene);
        let breakdown = reward_terms(
            &tips,
            &st.object_pose().transform_point(&obj.target(st.intent)?),
            lift,
            &scene.hand.world_palm_normal(&st.wrist),
            &cfg.weights,
        );
        if st.attached && lift > cfg.weights.h_lift {
            st.lifted_steps += 1;
        } else {
            st.lifted_steps = 0;
        }
        st.success = st.lifted_steps >= cfg.n_hold;
        st.step_index += 1;
        let done = st.success || st.step_index >= cfg.horizon;

        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                step: st.step_index,
                wrist: st.wrist.to_array(),
                hand_q: st.hand_q,
                object: st.object_pose().to_array(),
                attached: st.attached,
                action: action.to_vec(),
                reward: breakdown,
            });
        }
        Ok(StepResult {
            observation: observation(st, cfg.include_category),
            reward: breakdown.total,
            breakdown,
            done,
            success: st.success,
            failed: false,
        })
    }

    /// Overwrite the state; used by tests and scripted rollouts.
    pub fn set_state(&mut self, state: EnvState) {
        self.state = state;
    }
}

pub fn write_trace_jsonl(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::json(path, e))?;
        buf.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|e| Error::io(path, e))
}
