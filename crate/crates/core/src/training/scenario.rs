use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Training regime: plain, augmented, adversarial, or both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scenario {
    N,
    Aug,
    Adv,
    AugAdv,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::N, Scenario::Aug, Scenario::Adv, Scenario::AugAdv];

    pub fn tag(self) -> &'static str {
        match self {
            Scenario::N => "N",
            Scenario::Aug => "AUG",
            Scenario::Adv => "ADV",
            Scenario::AugAdv => "AUG+ADV",
        }
    }

    pub fn augmented(self) -> bool {
        matches!(self, Scenario::Aug | Scenario::AugAdv)
    }

    pub fn adversarial(self) -> bool {
        matches!(self, Scenario::Adv | Scenario::AugAdv)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_uppercase().as_str() {
            "N" => Ok(Scenario::N),
            "AUG" => Ok(Scenario::Aug),
            "ADV" => Ok(Scenario::Adv),
            "AUG+ADV" | "AUG_ADV" => Ok(Scenario::AugAdv),
            _ => Err(Error::Config(format!(
                "unknown scenario '{s}' (valid: N, AUG, ADV, AUG+ADV)"
            ))),
        }
    }
}

impl TryFrom<String> for Scenario {
    type Error = Error;

    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

impl From<Scenario> for String {
    fn from(s: Scenario) -> String {
        s.tag().to_string()
    }
}
