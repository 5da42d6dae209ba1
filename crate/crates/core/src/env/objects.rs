use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Primitive, Shape};
use crate::intent::Intent;
use crate::pose::{Pose, Vec3};
use crate::targets::GraspTargetTable;

pub const OBJECT_SCHEMA: u32 = 1;
/// Targets must lie within this distance of the object surface.
pub const TARGET_SURFACE_TOLERANCE: f64 = 0.02;

const BUILTIN: [&str; 3] = [
    include_str!("../../assets/objects/hammer.json"),
    include_str!("../../assets/objects/flashlight.json"),
    include_str!("../../assets/objects/bulb.json"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectModel {
    pub schema: u32,
    pub id: String,
    pub primitives: Shape,
    /// World pose when presented on the table; the object frame origin sits
    /// on the table surface.
    pub rest_pose: Pose,
    /// Object-frame grasp target per intent.
    pub targets: BTreeMap<Intent, [f64; 3]>,
}

impl ObjectModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: ObjectModel =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("object description: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Hammer, flashlight and light bulb, in that order.
    pub fn builtin() -> Vec<ObjectModel> {
        BUILTIN
            .iter()
            .map(|t| Self::from_json(t).expect("builtin object assets are valid"))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != OBJECT_SCHEMA {
            return Err(Error::Config(format!("unsupported object schema {}", self.schema)));
        }
        if self.primitives.0.is_empty() || !self.primitives.0.iter().all(Primitive::is_valid) {
            return Err(Error::Config(format!("object '{}' has invalid geometry", self.id)));
        }
        for intent in Intent::ALL {
            let t = self.target(intent)?;
            let d = self.surface_distance(&t);
            if d.abs() > TARGET_SURFACE_TOLERANCE + 1e-12 {
                return Err(Error::ContractViolation(format!(
                    "{} target of '{}' is {d:.4} m from the surface",
                    intent, self.id
                )));
            }
        }
        Ok(())
    }

    pub fn target(&self, intent: Intent) -> Result<Vec3> {
        self.targets
            .get(&intent)
            .map(|p| Vec3::from(*p))
            .ok_or_else(|| Error::Config(format!("object '{}' lacks a {intent} target", self.id)))
    }

    /// Signed distance from an object-frame point to the surface.
    pub fn surface_distance(&self, p: &Vec3) -> f64 {
        self.primitives.sdf(p)
    }

    /// Replace the targets with the entries of `table`.
    pub fn with_targets(mut self, table: &GraspTargetTable) -> Result<Self> {
        for intent in Intent::ALL {
            let p = table.get(&self.id, intent)?;
            self.targets.insert(intent, [p.x, p.y, p.z]);
        }
        self.validate()?;
        Ok(self)
    }
}

/// Signed distance from a world point to an object placed at `pose`.
pub fn surface_distance(object: &ObjectModel, pose: &Pose, p: &Vec3) -> f64 {
    object.surface_distance(&pose.inverse().transform_point(p))
}
