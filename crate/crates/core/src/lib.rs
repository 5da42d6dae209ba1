//! Intent-conditioned dexterous grasping with postural synergies.
//!
//! Pipeline: human keypoints are retargeted to a 19-DoF hand
//! ([`retarget`]), compressed into a low-dimensional synergy space
//! ([`synergy`]), and per-object grasp targets are extracted for each
//! post-grasp intent ([`targets`]). A PPO policy ([`rl`]) then learns to
//! grasp and lift objects in a quasi-static environment ([`env`]), and
//! [`eval`] measures success and intent separation.

pub mod env;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod intent;
pub mod kinematics;
pub mod nn;
pub mod pose;
pub mod retarget;
pub mod rl;
pub mod synergy;
pub mod synthetic;
pub mod targets;

pub use error::{Error, Result};
pub use intent::Intent;
pub use kinematics::{HandModel, JointAngles};
pub use pose::{Pose, Vec3};
