//! Human keypoints to robot joint angles.
//!
//! Every flexion joint is filled from the interior angle of its three
//! adjacent keypoints, mapped linearly onto the robot joint range. Abduction
//! joints are left at the midpoint of their limits.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intent::Intent;
use crate::kinematics::{clamp_to_limits, is_abduction, Finger, HandModel, JointAngles};
use crate::pose::{Pose, Vec3};

pub const NUM_KEYPOINTS: usize = 21;
pub const POSTURE_SCHEMA: u32 = 1;
const MIN_SEGMENT: f64 = 1e-6;

/// Keypoint index of the fingertip of `finger`.
pub fn tip_index(finger: Finger) -> usize {
    4 + 4 * finger as usize
}

/// Keypoint chain of a finger used for angle extraction. Non-thumb fingers
/// start at the wrist so that MCP flexion sees the metacarpal direction.
fn finger_chain(finger: Finger) -> Vec<usize> {
    let s = 1 + 4 * finger as usize;
    match finger {
        Finger::Thumb => vec![s, s + 1, s + 2, s + 3],
        _ => vec![0, s, s + 1, s + 2, s + 3],
    }
}

/// One human grasp: wrist + 4 keypoints per finger, meters.
#[derive(Debug, Clone, PartialEq)]
pub struct HumanHandKeypoints {
    pub points: [Vec3; NUM_KEYPOINTS],
    pub object_id: String,
    pub intent: Intent,
    pub subject_id: String,
}

impl HumanHandKeypoints {
    /// Checks finiteness and that adjacent keypoints of each finger are
    /// separated.
    pub fn validate(&self) -> Result<()> {
        if let Some(i) = self
            .points
            .iter()
            .position(|p| !p.iter().all(|v| v.is_finite()))
        {
            return Err(Error::InvalidKeypoints(format!(
                "keypoint {i} is not finite"
            )));
        }
        for finger in Finger::ALL {
            let chain = finger_chain(finger);
            for w in chain.windows(2) {
                if (self.points[w[1]] - self.points[w[0]]).norm() <= MIN_SEGMENT {
                    return Err(Error::InvalidKeypoints(format!(
                        "keypoints {} and {} coincide",
                        w[0], w[1]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Mean of the thumb, index and middle fingertips.
    pub fn grasp_point(&self) -> Vec3 {
        (self.points[tip_index(Finger::Thumb)]
            + self.points[tip_index(Finger::Index)]
            + self.points[tip_index(Finger::Middle)])
            / 3.0
    }

    pub fn transformed(&self, pose: &Pose) -> Self {
        let mut out = self.clone();
        for p in out.points.iter_mut() {
            *p = pose.transform_point(p);
        }
        out
    }
}

/// Interior angle at `p` between the segments to `p_prev` and `p_next`, in
/// `[0, π]`. `joint` only labels the error.
pub fn joint_angle_from_keypoints(p_prev: &Vec3, p: &Vec3, p_next: &Vec3, joint: usize) -> Result<f64> {
    let a = p_prev - p;
    let b = p_next - p;
    let (na, nb) = (a.norm(), b.norm());
    if !(na > MIN_SEGMENT && nb > MIN_SEGMENT) {
        return Err(Error::DegenerateKeypoint { joint });
    }
    let c = (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0);
    Ok(c.acos())
}

/// Map an interior angle onto a robot joint range: straight (π) goes to
/// `limit_min`, fully folded (0) to `limit_max`.
pub fn remap_angle(theta: f64, limit_min: f64, limit_max: f64) -> Result<f64> {
    if !(theta >= -1e-9 && theta <= PI + 1e-9) {
        return Err(Error::ContractViolation(format!(
            "interior angle {theta} outside [0, π]"
        )));
    }
    if !(limit_min < limit_max) {
        return Err(Error::ContractViolation(format!(
            "joint limits ({limit_min}, {limit_max}) are not ordered"
        )));
    }
    let flexion = PI - theta.clamp(0.0, PI);
    Ok(limit_min + flexion / PI * (limit_max - limit_min))
}

/// Human flexion (radians, `[0, π]`) that `remap_angle` sends to `q`.
pub fn human_flexion_for(q: f64, limit_min: f64, limit_max: f64) -> f64 {
    PI * (q - limit_min) / (limit_max - limit_min)
}

/// Joint configuration for posing synthetic human keypoints: every flexion
/// replaced by the human flexion that retargets to it.
pub fn human_configuration(hand: &HandModel, q: &JointAngles) -> JointAngles {
    let mut out = *q;
    for (j, (lo, hi)) in hand.limits().iter().enumerate() {
        if !is_abduction(j) {
            out[j] = human_flexion_for(q[j], *lo, *hi);
        }
    }
    out
}

pub fn retarget_grasp(k: &HumanHandKeypoints, hand: &HandModel) -> Result<JointAngles> {
    k.validate()?;
    let mut q = hand.neutral();
    for finger in Finger::ALL {
        let chain = finger_chain(finger);
        let first_flexion = finger.joint_range().start + 1;
        for (i, w) in chain.windows(3).enumerate() {
            let joint = first_flexion + i;
            let theta = joint_angle_from_keypoints(
                &k.points[w[0]],
                &k.points[w[1]],
                &k.points[w[2]],
                joint,
            )?;
            let (lo, hi) = hand.limits()[joint];
            q[joint] = remap_angle(theta, lo, hi)?;
        }
    }
    Ok(clamp_to_limits(hand, &q))
}

/// A retargeted grasp with its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Posture {
    pub q: JointAngles,
    pub object: String,
    pub intent: Intent,
    pub subject: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    /// Zero-based record (or input line) index.
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PostureDataset {
    pub schema: u32,
    pub source: String,
    pub count: usize,
    pub postures: Vec<Posture>,
    pub rejects: Vec<Reject>,
}

impl PostureDataset {
    pub fn new(source: impl Into<String>, postures: Vec<Posture>, rejects: Vec<Reject>) -> Self {
        PostureDataset {
            schema: POSTURE_SCHEMA,
            source: source.into(),
            count: postures.len(),
            postures,
            rejects,
        }
    }

    pub fn len(&self) -> usize {
        self.postures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.postures.is_empty()
    }

    pub fn angles(&self) -> Vec<JointAngles> {
        self.postures.iter().map(|p| p.q).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let ds: PostureDataset = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if ds.count != ds.postures.len() {
            return Err(Error::Config(format!(
                "{}: count {} does not match {} postures",
                path.display(),
                ds.count,
                ds.postures.len()
            )));
        }
        Ok(ds)
    }
}

/// Retarget every record, keeping input order. Records that fail are listed
/// in `rejects` instead of being dropped silently.
pub fn retarget_dataset(
    records: &[HumanHandKeypoints],
    hand: &HandModel,
    source: &str,
    workers: usize,
) -> Result<PostureDataset> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let work = |k: &HumanHandKeypoints| retarget_grasp(k, hand);
    let results: Vec<Result<JointAngles>> = if workers <= 1 {
        records.iter().map(work).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| records.par_iter().map(work).collect())
    };
    let mut postures = Vec::with_capacity(records.len());
    let mut rejects = Vec::new();
    for (index, (rec, res)) in records.iter().zip(results).enumerate() {
        match res {
            Ok(q) => postures.push(Posture {
                q,
                object: rec.object_id.clone(),
                intent: rec.intent,
                subject: rec.subject_id.clone(),
            }),
            Err(e) => rejects.push(Reject {
                index,
                reason: e.to_string(),
            }),
        }
    }
    Ok(PostureDataset::new(source, postures, rejects))
}

/// One JSONL line of the ingestion format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraspRecord {
    pub object: String,
    pub intent: Intent,
    pub subject: String,
    pub keypoints: Vec<[f64; 3]>,
    /// Object pose in the capture frame, when known per record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object_pose: Option<Pose>,
    /// Ground-truth grasp site of synthetic records.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<String>,
}

impl GraspRecord {
    pub fn to_keypoints(&self) -> Result<HumanHandKeypoints> {
        if self.keypoints.len() != NUM_KEYPOINTS {
            return Err(Error::InvalidKeypoints(format!(
                "expected {NUM_KEYPOINTS} keypoints, got {}",
                self.keypoints.len()
            )));
        }
        let mut points = [Vec3::zeros(); NUM_KEYPOINTS];
        for (dst, src) in points.iter_mut().zip(&self.keypoints) {
            *dst = Vec3::from(*src);
        }
        Ok(HumanHandKeypoints {
            points,
            object_id: self.object.clone(),
            intent: self.intent,
            subject_id: self.subject.clone(),
        })
    }

    pub fn from_keypoints(k: &HumanHandKeypoints) -> Self {
        GraspRecord {
            object: k.object_id.clone(),
            intent: k.intent,
            subject: k.subject_id.clone(),
            keypoints: k.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            object_pose: None,
            site: None,
        }
    }
}

/// Parsed JSONL file: records that parsed, and lines that did not.
#[derive(Debug, Clone, Default)]
pub struct GraspFile {
    /// `(line index, record)`
    pub records: Vec<(usize, GraspRecord)>,
    pub malformed: Vec<Reject>,
}

pub fn read_grasp_jsonl(path: &Path) -> Result<GraspFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = GraspFile::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<GraspRecord>(&line) {
            Ok(r) => out.records.push((i, r)),
            Err(e) => out.malformed.push(Reject {
                index: i,
                reason: format!("malformed line: {e}"),
            }),
        }
    }
    Ok(out)
}

pub fn write_grasp_jsonl(path: &Path, records: &[GraspRecord]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| Error::json(path, e))?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}
