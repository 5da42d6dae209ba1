use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use crate::env::{world_targets, Action, ActionMode, Env, HandDecoder};
use crate::error::{Error, Result};
use crate::intent::Intent;
use crate::kinematics::JointAngles;
use crate::pose::{Pose, Vec3};
use crate::rl::PolicyNet;
use crate::synthetic::{template_posture, GraspTemplate};

/// Anything that can drive an [`Env`] for one episode at a time.
pub trait Controller {
    /// Action mode the controller was built for; `None` adapts to any env.
    fn mode(&self) -> Option<ActionMode>;
    /// Called after every reset.
    fn begin(&mut self, env: &Env) -> Result<()>;
    fn act(&mut self, env: &Env, obs: &[f64]) -> Result<Action>;
}

/// Trained policy acting at its mean.
#[derive(Debug, Clone)]
pub struct PolicyController {
    net: Arc<PolicyNet>,
    mode: ActionMode,
    hidden: Vec<f64>,
}

impl PolicyController {
    pub fn new(net: Arc<PolicyNet>, mode: ActionMode) -> Self {
        let hidden = vec![0.0; net.recurrent_size()];
        PolicyController { net, mode, hidden }
    }

    pub fn net_ref(&self) -> &Arc<PolicyNet> {
        &self.net
    }
}

impl Controller for PolicyController {
    fn mode(&self) -> Option<ActionMode> {
        Some(self.mode)
    }

    fn begin(&mut self, env: &Env) -> Result<()> {
        if env.action_dim() != self.net.act_dim {
            return Err(Error::DimensionMismatch {
                context: "policy action".into(),
                expected: env.action_dim(),
                got: self.net.act_dim,
            });
        }
        self.hidden.iter_mut().for_each(|h| *h = 0.0);
        Ok(())
    }

    fn act(&mut self, env: &Env, obs: &[f64]) -> Result<Action> {
        let out = self.net.forward(obs, &self.hidden)?;
        self.hidden = out.hidden;
        Action::from_policy_output(&out.mean, self.mode, &env.config().caps, &env.scene().hand)
    }
}

/// Outputs a raw zero vector: the wrist never moves.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroController;

impl Controller for ZeroController {
    fn mode(&self) -> Option<ActionMode> {
        None
    }

    fn begin(&mut self, _env: &Env) -> Result<()> {
        Ok(())
    }

    fn act(&mut self, env: &Env, _obs: &[f64]) -> Result<Action> {
        let raw = vec![0.0; env.action_dim()];
        let mode = env.decoder().mode();
        Action::from_policy_output(&raw, mode, &env.config().caps, &env.scene().hand)
    }
}

/// Hand-written waypoint grasp: hover above the target, descend, close the
/// hand, lift. The wrist moves only through capped displacements.
#[derive(Debug, Clone)]
pub struct ScriptedOracle {
    /// Target to grasp; `None` uses the episode's intent.
    pub aim: Option<Intent>,
    pub hover: f64,
    pub lift: f64,
    phase: u8,
    goal: Vec3,
    yaw: f64,
    open_cmd: Vec<f64>,
    grip_cmd: Vec<f64>,
    grip_q: JointAngles,
}

impl ScriptedOracle {
    pub fn new() -> Self {
        ScriptedOracle {
            aim: None,
            hover: 0.06,
            lift: 0.15,
            phase: 0,
            goal: Vec3::zeros(),
            yaw: 0.0,
            open_cmd: Vec::new(),
            grip_cmd: Vec::new(),
            grip_q: JointAngles::zeros(),
        }
    }

    /// Always grasps the `intent` target, whatever the episode asks for.
    pub fn parked(intent: Intent) -> Self {
        ScriptedOracle {
            aim: Some(intent),
            ..Self::new()
        }
    }

    fn command(env: &Env, q: &JointAngles) -> Vec<f64> {
        match env.decoder() {
            HandDecoder::Joint => q.as_slice().to_vec(),
            HandDecoder::Synergy(m) => m.encode(q),
        }
    }
}

impl Default for ScriptedOracle {
    fn default() -> Self {
        Self::new()
    }
}

impl Controller for ScriptedOracle {
    fn mode(&self) -> Option<ActionMode> {
        None
    }

    fn begin(&mut self, env: &Env) -> Result<()> {
        let scene = env.scene();
        let st = env.state();
        let closed = template_posture(&scene.hand, GraspTemplate::Power, 1.0);
        self.open_cmd = Self::command(env, &scene.hand.open_posture());
        self.grip_cmd = Self::command(env, &closed);
        self.grip_q = env.decoder().decode(&self.grip_cmd, &scene.hand)?;
        let intent = self.aim.unwrap_or(st.intent);
        let target = world_targets(st, scene)?[intent.index()];
        let offset = scene.hand.forward_kinematics(&Pose::identity(), &self.grip_q).grasp_point();
        self.yaw = st.object_pose().yaw() + FRAC_PI_2;
        let rot = Pose::from_rpy(Vec3::zeros(), 0.0, 0.0, self.yaw);
        self.goal = target - rot.transform_vector(&offset);
        self.phase = 0;
        Ok(())
    }

    fn act(&mut self, env: &Env, _obs: &[f64]) -> Result<Action> {
        let st = env.state();
        let w = st.wrist;
        let err_yaw = (self.yaw - w.yaw() + PI).rem_euclid(2.0 * PI) - PI;
        let aim = match self.phase {
            0 => self.goal + Vec3::new(0.0, 0.0, self.hover),
            1 | 2 => self.goal,
            _ => self.goal + Vec3::new(0.0, 0.0, self.lift),
        };
        let d = aim - w.position;
        let hand = if self.phase >= 2 { self.grip_cmd.clone() } else { self.open_cmd.clone() };
        if self.phase < 2 && d.norm() < 1e-3 && err_yaw.abs() < 1e-3 {
            self.phase += 1;
        }
        if self.phase == 2 && st.hand_q.max_abs_diff(&self.grip_q) < 1e-9 {
            self.phase = 3;
        }
        Ok(Action {
            wrist: [d.x, d.y, d.z, 0.0, 0.0, err_yaw],
            hand,
        })
    }
}
