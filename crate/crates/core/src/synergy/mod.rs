//! Postural synergy models: a PCA baseline and a VAE.

mod linalg;
pub mod pca;
pub mod vae;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use linalg::symmetric_eigen;
pub use pca::{fit_pca, PcaModel};
pub use vae::{elbo_loss, kl_divergence, vae_train, ElboTerms, TrainReport, VaeGrads, VaeHyperparams, VaeModel};

use crate::error::{check_dim, Error, Result};
use crate::kinematics::{HandModel, JointAngles};

/// Point in a synergy space of dimension `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatentPoint(pub Vec<f64>);

impl LatentPoint {
    pub fn new(values: Vec<f64>, k: usize) -> Result<Self> {
        check_dim("latent point", k, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::ContractViolation("non-finite latent point".into()));
        }
        Ok(LatentPoint(values))
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynergyKind {
    Pca,
    Vae,
}

impl SynergyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SynergyKind::Pca => "pca",
            SynergyKind::Vae => "vae",
        }
    }
}

impl std::fmt::Display for SynergyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for SynergyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(SynergyKind::Pca),
            "vae" => Ok(SynergyKind::Vae),
            other => Err(Error::Config(format!("unknown synergy kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SynergyModel {
    Pca(PcaModel),
    Vae(VaeModel),
}

#[derive(Serialize, Deserialize)]
struct SynergyFile {
    schema: u32,
    kind: SynergyKind,
    k: usize,
    hand_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pca: Option<PcaModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vae: Option<VaeModel>,
}

impl SynergyModel {
    pub fn kind(&self) -> SynergyKind {
        match self {
            SynergyModel::Pca(_) => SynergyKind::Pca,
            SynergyModel::Vae(_) => SynergyKind::Vae,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            SynergyModel::Pca(m) => m.k,
            SynergyModel::Vae(m) => m.k,
        }
    }

    pub fn decode(&self, z: &[f64]) -> Result<JointAngles> {
        match self {
            SynergyModel::Pca(m) => m.decode(z),
            SynergyModel::Vae(m) => m.decode(z),
        }
    }

    /// Latent coordinates of `q`; the posterior mean for the VAE.
    pub fn encode(&self, q: &JointAngles) -> Vec<f64> {
        match self {
            SynergyModel::Pca(m) => m.encode(q),
            SynergyModel::Vae(m) => m.encode(q).0,
        }
    }

    /// Mean per-joint absolute error of decode∘encode over `data`.
    pub fn reconstruction_error(&self, data: &[JointAngles]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let mut total = 0.0;
        for q in data {
            let r = self.decode(&self.encode(q)).expect("encode has model dimension");
            total += r.as_slice().iter().zip(q.as_slice()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        }
        total / (data.len() * crate::kinematics::NUM_JOINTS) as f64
    }

    pub fn to_json(&self, hand: &HandModel) -> Result<String> {
        let (pca, vae) = match self {
            SynergyModel::Pca(m) => (Some(m.clone()), None),
            SynergyModel::Vae(m) => (None, Some(m.clone())),
        };
        let file = SynergyFile {
            schema: 1,
            kind: self.kind(),
            k: self.k(),
            hand_hash: hand.hash().to_string(),
            pca,
            vae,
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json(text: &str, hand: &HandModel) -> Result<Self> {
        let file: SynergyFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("synergy model: {e}")))?;
        if file.schema != 1 {
            return Err(Error::Config(format!("unsupported synergy schema {}", file.schema)));
        }
        if file.hand_hash != hand.hash() {
            return Err(Error::HandMismatch {
                model: file.hand_hash,
                active: hand.hash().to_string(),
            });
        }
        let model = match (file.kind, file.pca, file.vae) {
            (SynergyKind::Pca, Some(m), None) => {
                check_dim("pca components", m.k, m.components.len())?;
                SynergyModel::Pca(m)
            }
            (SynergyKind::Vae, None, Some(m)) => {
                m.validate()?;
                SynergyModel::Vae(m)
            }
            _ => return Err(Error::Config("synergy model body does not match its kind".into())),
        };
        check_dim("synergy k", file.k, model.k())?;
        Ok(model)
    }

    pub fn save(&self, path: &Path, hand: &HandModel) -> Result<()> {
        std::fs::write(path, self.to_json(hand)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, hand: &HandModel) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, hand)
    }
}
