use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Post-grasp intention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intent {
    Use,
    Handoff,
}

impl Intent {
    pub const ALL: [Intent; 2] = [Intent::Use, Intent::Handoff];

    pub fn as_str(self) -> &'static str {
        match self {
            Intent::Use => "use",
            Intent::Handoff => "handoff",
        }
    }

    pub fn opposite(self) -> Intent {
        match self {
            Intent::Use => Intent::Handoff,
            Intent::Handoff => Intent::Use,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Intent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Intent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "use" => Ok(Intent::Use),
            "handoff" => Ok(Intent::Handoff),
            other => Err(Error::Config(format!("unknown intent '{other}'"))),
        }
    }
}
