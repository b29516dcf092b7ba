//! Run configuration shared by the command-line driver and its manifests.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::DEFAULT_MAX_LEVEL;
use crate::operator::OperatorKind;
use crate::solver::{SolveMethod, Which};

pub const DEFAULT_SEED: u64 = 0x5eed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub level: u32,
    pub kind: OperatorKind,
    pub c0: f64,
    pub solver: SolveMethod,
    /// Number of eigenpairs for partial solves; `None` asks for all of them.
    pub k: Option<usize>,
    pub which: Which,
    pub eps: f64,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            level: 0,
            kind: OperatorKind::Full,
            c0: 1.0,
            solver: SolveMethod::Dense,
            k: None,
            which: Which::Smallest,
            eps: crate::analysis::DEFAULT_CONTOUR_EPS,
            out: PathBuf::from("."),
            seed: DEFAULT_SEED,
        }
    }
}

impl RunConfig {
    /// Checks the numeric fields; `max_level` is the mesh level guard.
    pub fn validate(&self, max_level: u32) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::Argument(format!("c0 must be positive and finite, got {}", self.c0)));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::Argument(format!("eps must be positive and finite, got {}", self.eps)));
        }
        if self.k == Some(0) {
            return Err(Error::Argument("k must be positive".into()));
        }
        if self.level > max_level {
            return Err(Error::Resource {
                what: "mesh level",
                requested: self.level as usize,
                limit: max_level as usize,
            });
        }
        Ok(())
    }

    pub fn validate_default(&self) -> Result<()> {
        self.validate(DEFAULT_MAX_LEVEL)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Hex SHA-256 of the compact JSON form.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(self.to_json()?.as_bytes());
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}
