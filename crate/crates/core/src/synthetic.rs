//! Synthetic human grasp generator.
//!
//! Each (object, intent) pair has one grasp site: the object's target for
//! that intent. A hand posture is drawn from a site template, converted to
//! the human joint configuration that retargets back onto it, and the wrist
//! is placed so that the fingertip mean lands on the site plus Gaussian
//! jitter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::ObjectModel;
use crate::error::{Error, Result};
use crate::intent::Intent;
use crate::kinematics::{clamp_to_limits, Finger, HandModel, JointAngles};
use crate::pose::{Pose, Vec3};
use crate::retarget::{human_configuration, GraspRecord, HumanHandKeypoints};
use crate::targets::target_key;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    /// Grasps per object and intent.
    pub n_per_intent: usize,
    /// Std of the grasp point around its site, m.
    pub sigma: f64,
    /// Std of the closure and per-joint posture noise, rad.
    pub posture_noise: f64,
    /// Probability that a record carries the wrong intent label.
    pub label_flip: f64,
    pub subjects: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_per_intent: 100,
            sigma: 0.01,
            posture_noise: 0.15,
            label_flip: 0.1,
            subjects: 5,
            seed: 0,
        }
    }
}

/// Grasp family used at a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraspTemplate {
    /// All fingers wrap around.
    Power,
    /// Thumb, index and middle close; ring and little stay extended.
    Precision,
}

/// Use grasps wrap the functional part; handoff grasps pinch.
pub fn template_for(intent: Intent) -> GraspTemplate {
    match intent {
        Intent::Use => GraspTemplate::Power,
        Intent::Handoff => GraspTemplate::Precision,
    }
}

/// Robot posture of `template` at closure `c` (radians of the MCP joints).
pub fn template_posture(hand: &HandModel, template: GraspTemplate, c: f64) -> JointAngles {
    let mut q = hand.neutral();
    q[0] = 0.0;
    q[1] = 0.8 * c;
    q[2] = 0.8 * c;
    for f in [Finger::Index, Finger::Middle, Finger::Ring, Finger::Little] {
        let r = f.joint_range();
        let cf = match (template, f) {
            (GraspTemplate::Precision, Finger::Ring | Finger::Little) => 0.15,
            _ => c,
        };
        q[r.start] = 0.0;
        q[r.start + 1] = cf;
        q[r.start + 2] = cf;
        q[r.start + 3] = 0.8 * cf;
    }
    clamp_to_limits(hand, &q)
}

const CANONICAL_CLOSURE: f64 = 1.0;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Robot posture and human keypoints of one synthetic grasp.
#[derive(Debug, Clone)]
pub struct SyntheticGrasp {
    pub record: GraspRecord,
    pub robot_q: JointAngles,
}

/// Generate grasps for every object, intent, and repetition, in that order.
pub fn generate(hand: &HandModel, objects: &[ObjectModel], cfg: &SyntheticConfig) -> Result<Vec<SyntheticGrasp>> {
    if cfg.n_per_intent == 0 {
        return Err(Error::Config("n_per_intent must be at least 1".into()));
    }
    if !(cfg.sigma >= 0.0 && cfg.posture_noise >= 0.0 && (0.0..=1.0).contains(&cfg.label_flip)) {
        return Err(Error::Config("invalid synthetic noise parameters".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(objects.len() * 2 * cfg.n_per_intent);
    for obj in objects {
        for intent in Intent::ALL {
            let site = obj.target(intent)?;
            let template = template_for(intent);
            for i in 0..cfg.n_per_intent {
                let c = CANONICAL_CLOSURE + cfg.posture_noise * normal(&mut rng);
                let mut q = template_posture(hand, template, c);
                for j in 0..q.0.len() {
                    if !crate::kinematics::is_abduction(j) {
                        q[j] += 0.25 * cfg.posture_noise * normal(&mut rng);
                    }
                }
                let q = clamp_to_limits(hand, &q);
                let human = human_configuration(hand, &q);

                // Capture frame: the object somewhere on a table, any yaw.
                let object_pose = Pose::from_rpy(
                    Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), 0.0),
                    0.0,
                    0.0,
                    rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                );
                let jitter = Vec3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng)) * cfg.sigma;
                let yaw = std::f64::consts::FRAC_PI_2 + cfg.posture_noise * normal(&mut rng);
                let local_grasp = hand.forward_kinematics(&Pose::identity(), &human).grasp_point();
                let hand_rot = Pose::from_rpy(Vec3::zeros(), 0.0, 0.0, yaw);
                // Wrist in the object frame, then in the capture frame.
                let wrist_obj = Pose::new(site + jitter - hand_rot.transform_vector(&local_grasp), hand_rot.orientation);
                let wrist = object_pose.compose(&wrist_obj);

                let flip = cfg.label_flip > 0.0 && rng.gen::<f64>() < cfg.label_flip;
                let label = if flip { intent.opposite() } else { intent };
                let points = hand.keypoints(&wrist, &human);
                let k = HumanHandKeypoints {
                    points,
                    object_id: obj.id.clone(),
                    intent: label,
                    subject_id: format!("s{}", i % cfg.subjects.max(1)),
                };
                let mut record = GraspRecord::from_keypoints(&k);
                record.object_pose = Some(object_pose);
                record.site = Some(target_key(&obj.id, intent));
                out.push(SyntheticGrasp { record, robot_q: q });
            }
        }
    }
    Ok(out)
}
