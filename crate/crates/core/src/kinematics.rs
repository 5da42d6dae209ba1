//! 19-DoF hand model: joint layout, limits, forward kinematics and the
//! floating-wrist Cartesian integrator.
//!
//! Joint order is thumb (abduction, MCP, IP), then index, middle, ring and
//! little (abduction, MCP, PIP, DIP). Each finger frame has x pointing along
//! the extended finger and z pointing out of the back of the hand; abduction
//! rotates about z, flexion about y (positive flexion curls toward the palm).

use std::ops::{Index, IndexMut, Range};
use std::path::Path;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::pose::{Pose, Vec3};

pub const NUM_JOINTS: usize = 19;
pub const NUM_FINGERS: usize = 5;
pub const HAND_SCHEMA: u32 = 1;

const DEFAULT_HAND_JSON: &str = include_str!("../assets/hand.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Finger {
    Thumb,
    Index,
    Middle,
    Ring,
    Little,
}

impl Finger {
    pub const ALL: [Finger; NUM_FINGERS] = [
        Finger::Thumb,
        Finger::Index,
        Finger::Middle,
        Finger::Ring,
        Finger::Little,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Finger::Thumb => "thumb",
            Finger::Index => "index",
            Finger::Middle => "middle",
            Finger::Ring => "ring",
            Finger::Little => "little",
        }
    }

    pub fn num_joints(self) -> usize {
        match self {
            Finger::Thumb => 3,
            _ => 4,
        }
    }

    /// Slice of the 19-vector owned by this finger.
    pub fn joint_range(self) -> Range<usize> {
        let start = match self {
            Finger::Thumb => 0,
            Finger::Index => 3,
            Finger::Middle => 7,
            Finger::Ring => 11,
            Finger::Little => 15,
        };
        start..start + self.num_joints()
    }
}

/// Abduction joints are the first joint of every finger.
pub fn is_abduction(joint: usize) -> bool {
    Finger::ALL
        .iter()
        .any(|f| f.joint_range().start == joint)
}

/// Robot hand configuration in radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointAngles(pub [f64; NUM_JOINTS]);

impl JointAngles {
    pub fn zeros() -> Self {
        JointAngles([0.0; NUM_JOINTS])
    }

    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_JOINTS] = values.try_into().map_err(|_| {
            Error::ContractViolation(format!(
                "joint vector has {} entries, expected {NUM_JOINTS}",
                values.len()
            ))
        })?;
        Ok(JointAngles(arr))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn finger(&self, finger: Finger) -> &[f64] {
        &self.0[finger.joint_range()]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &JointAngles) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for JointAngles {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for JointAngles {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// On-disk hand description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandDescription {
    pub schema: u32,
    pub name: String,
    pub joint_order: Vec<String>,
    /// Wrist frame to palm frame.
    pub palm_offset: Pose,
    /// Palm normal in the palm frame.
    pub palm_normal: [f64; 3],
    pub fingers: Vec<FingerDescription>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerDescription {
    pub name: String,
    /// Base joint position in the palm frame.
    pub base: [f64; 3],
    /// Base orientation in the palm frame. `None` aligns the finger with the
    /// ray from the wrist to its base, so that wrist, MCP and PIP are
    /// collinear when the finger is straight.
    pub base_rpy: Option<[f64; 3]>,
    pub links: Vec<f64>,
    pub limits: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy)]
enum Axis {
    Abduction,
    Flexion,
}

#[derive(Debug, Clone)]
struct ChainJoint {
    axis: Axis,
    /// Link length travelled after this joint.
    link: f64,
}

#[derive(Debug, Clone)]
struct FingerChain {
    finger: Finger,
    base: Pose,
    joints: Vec<ChainJoint>,
}

/// Fingertip positions (world frame, thumb → little) and the palm frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingertipSet {
    pub tips: [Vec3; NUM_FINGERS],
    pub palm: Pose,
}

impl FingertipSet {
    pub fn tip(&self, finger: Finger) -> Vec3 {
        self.tips[finger as usize]
    }

    /// Mean of thumb, index and middle fingertips.
    pub fn grasp_point(&self) -> Vec3 {
        (self.tips[0] + self.tips[1] + self.tips[2]) / 3.0
    }
}

/// Validated hand model ready for forward kinematics.
#[derive(Debug, Clone)]
pub struct HandModel {
    description: HandDescription,
    hash: String,
    chains: Vec<FingerChain>,
    limits: [(f64, f64); NUM_JOINTS],
    palm_normal: Vec3,
}

fn rpy_pose(position: [f64; 3], rpy: [f64; 3]) -> Pose {
    Pose::from_rpy(Vec3::from(position), rpy[0], rpy[1], rpy[2])
}

/// Rotation whose x axis points along `dir` and whose z axis is as close as
/// possible to the palm frame z.
fn aligned_orientation(dir: Vec3) -> Result<UnitQuaternion<f64>> {
    let x = dir.normalize();
    let z0 = Vec3::z() - x * x.z;
    if z0.norm() < 1e-9 {
        return Err(Error::Config("finger base ray parallel to palm z".into()));
    }
    let z = z0.normalize();
    let y = z.cross(&x);
    let m = Matrix3::from_columns(&[x, y, z]);
    Ok(UnitQuaternion::from_rotation_matrix(
        &Rotation3::from_matrix_unchecked(m),
    ))
}

impl HandModel {
    /// Hand shipped with the crate.
    pub fn default_hand() -> Self {
        Self::from_json(DEFAULT_HAND_JSON).expect("shipped hand description is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let desc: HandDescription =
            serde_json::from_str(text).map_err(|e| Error::json("<hand description>", e))?;
        Self::from_description(desc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let desc: HandDescription =
            serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        Self::from_description(desc)
    }

    pub fn from_description(desc: HandDescription) -> Result<Self> {
        if desc.schema != HAND_SCHEMA {
            return Err(Error::Config(format!(
                "unsupported hand schema {}",
                desc.schema
            )));
        }
        if desc.joint_order.len() != NUM_JOINTS {
            return Err(Error::Config(format!(
                "hand must have {NUM_JOINTS} joints, description lists {}",
                desc.joint_order.len()
            )));
        }
        let mut names = desc.joint_order.clone();
        names.sort();
        names.dedup();
        if names.len() != NUM_JOINTS {
            return Err(Error::Config("duplicate joint names".into()));
        }
        if desc.fingers.len() != NUM_FINGERS {
            return Err(Error::Config(format!(
                "expected {NUM_FINGERS} fingers, got {}",
                desc.fingers.len()
            )));
        }
        let normal = Vec3::from(desc.palm_normal);
        if !(normal.norm() > 1e-9) {
            return Err(Error::Config("palm normal must be non-zero".into()));
        }

        let wrist_in_palm = desc.palm_offset.inverse().position;
        let mut limits = [(0.0, 0.0); NUM_JOINTS];
        let mut chains = Vec::with_capacity(NUM_FINGERS);
        for (finger, fd) in Finger::ALL.iter().copied().zip(&desc.fingers) {
            if fd.name != finger.name() {
                return Err(Error::Config(format!(
                    "finger {} should be '{}', found '{}'",
                    finger as usize,
                    finger.name(),
                    fd.name
                )));
            }
            let n = finger.num_joints();
            if fd.limits.len() != n || fd.links.len() != 3 {
                return Err(Error::Config(format!(
                    "finger '{}' needs {n} limits and 3 links",
                    fd.name
                )));
            }
            if fd.links.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::Config(format!(
                    "finger '{}' has a non-positive link",
                    fd.name
                )));
            }
            for (j, lim) in finger.joint_range().zip(&fd.limits) {
                if !(lim[0] < lim[1]) {
                    return Err(Error::Config(format!(
                        "joint '{}' has min >= max",
                        desc.joint_order[j]
                    )));
                }
                limits[j] = (lim[0], lim[1]);
            }
            let base = match fd.base_rpy {
                Some(rpy) => rpy_pose(fd.base, rpy),
                None => {
                    let b = Vec3::from(fd.base);
                    let dir = b - wrist_in_palm;
                    if dir.norm() < 1e-9 {
                        return Err(Error::Config(format!(
                            "finger '{}' base coincides with wrist",
                            fd.name
                        )));
                    }
                    Pose::new(b, aligned_orientation(dir)?)
                }
            };
            // The thumb abducts at the CMC and then travels its metacarpal;
            // the other fingers abduct and flex at the same MCP point.
            let joints = match finger {
                Finger::Thumb => vec![
                    ChainJoint { axis: Axis::Abduction, link: fd.links[0] },
                    ChainJoint { axis: Axis::Flexion, link: fd.links[1] },
                    ChainJoint { axis: Axis::Flexion, link: fd.links[2] },
                ],
                _ => vec![
                    ChainJoint { axis: Axis::Abduction, link: 0.0 },
                    ChainJoint { axis: Axis::Flexion, link: fd.links[0] },
                    ChainJoint { axis: Axis::Flexion, link: fd.links[1] },
                    ChainJoint { axis: Axis::Flexion, link: fd.links[2] },
                ],
            };
            chains.push(FingerChain {
                finger,
                base,
                joints,
            });
        }

        let canonical = serde_json::to_vec(&desc).expect("hand description serializes");
        let hash = hex::encode(Sha256::digest(&canonical));
        Ok(HandModel {
            palm_normal: normal.normalize(),
            description: desc,
            hash,
            chains,
            limits,
        })
    }

    pub fn description(&self) -> &HandDescription {
        &self.description
    }

    /// SHA-256 of the canonical description, used to tie synergy models to a hand.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn limits(&self) -> &[(f64, f64); NUM_JOINTS] {
        &self.limits
    }

    pub fn palm_offset(&self) -> &Pose {
        &self.description.palm_offset
    }

    pub fn palm_normal(&self) -> Vec3 {
        self.palm_normal
    }

    /// Midpoint of every joint's range.
    pub fn neutral(&self) -> JointAngles {
        let mut q = JointAngles::zeros();
        for (j, (lo, hi)) in self.limits.iter().enumerate() {
            q[j] = 0.5 * (lo + hi);
        }
        q
    }

    /// Open hand: flexions at their minimum, abductions neutral.
    pub fn open_posture(&self) -> JointAngles {
        let mut q = self.neutral();
        for (j, (lo, _)) in self.limits.iter().enumerate() {
            if !is_abduction(j) {
                q[j] = *lo;
            }
        }
        q
    }

    /// Distance bound from the palm origin to the fingertip of `finger`.
    pub fn chain_length(&self, finger: Finger) -> f64 {
        let chain = &self.chains[finger as usize];
        chain.base.position.norm() + chain.joints.iter().map(|j| j.link).sum::<f64>()
    }

    pub fn within_limits(&self, q: &JointAngles) -> bool {
        q.0.iter()
            .zip(&self.limits)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Keypoints of one finger chain in the palm frame: base joint, then the
    /// end of every link (4 points for each finger).
    fn chain_points(&self, chain: &FingerChain, q: &[f64]) -> [Vec3; 4] {
        let mut rot = chain.base.orientation;
        let mut p = chain.base.position;
        let mut pts = [p; 4];
        let mut k = 1;
        for (joint, angle) in chain.joints.iter().zip(q) {
            let r = match joint.axis {
                Axis::Abduction => UnitQuaternion::from_axis_angle(&Vec3::z_axis(), *angle),
                Axis::Flexion => UnitQuaternion::from_axis_angle(&Vec3::y_axis(), *angle),
            };
            rot *= r;
            if joint.link > 0.0 {
                p += rot * Vec3::new(joint.link, 0.0, 0.0);
                pts[k] = p;
                k += 1;
            }
        }
        pts
    }

    /// Fingertip positions for the wrist at `base`.
    pub fn forward_kinematics(&self, base: &Pose, q: &JointAngles) -> FingertipSet {
        let palm = base.compose(&self.description.palm_offset);
        let mut tips = [Vec3::zeros(); NUM_FINGERS];
        for chain in &self.chains {
            let pts = self.chain_points(chain, q.finger(chain.finger));
            tips[chain.finger as usize] = palm.transform_point(&pts[3]);
        }
        FingertipSet { tips, palm }
    }

    /// All 21 keypoints (wrist first, then thumb CMC→tip, index MCP→tip, ...)
    /// in the world frame for the wrist at `base`.
    pub fn keypoints(&self, base: &Pose, q: &JointAngles) -> [Vec3; 21] {
        let palm = base.compose(&self.description.palm_offset);
        let mut out = [Vec3::zeros(); 21];
        out[0] = base.position;
        for chain in &self.chains {
            let pts = self.chain_points(chain, q.finger(chain.finger));
            let start = 1 + 4 * chain.finger as usize;
            for (i, p) in pts.iter().enumerate() {
                out[start + i] = palm.transform_point(p);
            }
        }
        out
    }

    /// World-frame palm normal for the wrist at `base`.
    pub fn world_palm_normal(&self, base: &Pose) -> Vec3 {
        let palm = base.compose(&self.description.palm_offset);
        palm.transform_vector(&self.palm_normal)
    }
}

/// Checked forward kinematics over a raw joint slice.
pub fn forward_kinematics(hand: &HandModel, base: &Pose, q: &[f64]) -> Result<FingertipSet> {
    let q = JointAngles::from_slice(q)?;
    Ok(hand.forward_kinematics(base, &q))
}

/// Elementwise projection onto the joint limits.
pub fn clamp_to_limits(hand: &HandModel, q: &JointAngles) -> JointAngles {
    let mut out = *q;
    for (v, (lo, hi)) in out.0.iter_mut().zip(hand.limits()) {
        *v = v.clamp(*lo, *hi);
    }
    out
}

/// Per-step caps for the floating wrist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepCaps {
    /// Meters per step along each world axis.
    pub translation: f64,
    /// Radians per step about each world axis.
    pub rotation: f64,
}

impl Default for StepCaps {
    fn default() -> Self {
        StepCaps {
            translation: 0.02,
            rotation: 0.1,
        }
    }
}

/// Integrate one capped Cartesian displacement `[dx, dy, dz, droll, dpitch, dyaw]`.
///
/// Translation and rotation are expressed in the world frame; the rotation
/// is applied about the wrist origin.
pub fn cartesian_step(wrist: &Pose, displacement: &[f64; 6], caps: &StepCaps) -> Result<Pose> {
    if displacement.iter().any(|v| !v.is_finite()) {
        return Err(Error::ContractViolation(
            "non-finite wrist displacement".into(),
        ));
    }
    let t = caps.translation;
    let r = caps.rotation;
    let d = Vec3::new(
        displacement[0].clamp(-t, t),
        displacement[1].clamp(-t, t),
        displacement[2].clamp(-t, t),
    );
    let delta = UnitQuaternion::from_euler_angles(
        displacement[3].clamp(-r, r),
        displacement[4].clamp(-r, r),
        displacement[5].clamp(-r, r),
    );
    let mut orientation = delta * wrist.orientation;
    orientation.renormalize();
    Ok(Pose::new(wrist.position + d, orientation))
}
