//! Organizational scopes: the selectors used to carve a corpus out of the
//! classified document stream, and the unit codes crowd votes are filed under.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScopeError {
    #[error("unknown scope selector `{0}` (expected generic, workgroup:<code>, art_unit:<code> or cpc:<prefix>)")]
    UnknownSelector(String),
    #[error("invalid unit code `{0}` (expected four digits)")]
    InvalidCode(String),
}

/// Which documents a corpus (and the model trained on it) covers.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scope {
    #[default]
    Generic,
    Workgroup(UnitCode),
    ArtUnit(UnitCode),
    Cpc(String),
}

impl Scope {
    /// The unit code crowd votes for this scope are filed under, if any.
    pub fn crowd_code(&self) -> Option<&UnitCode> {
        match self {
            Scope::Workgroup(code) | Scope::ArtUnit(code) => Some(code),
            Scope::Generic | Scope::Cpc(_) => None,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Generic => f.write_str("generic"),
            Scope::Workgroup(code) => write!(f, "workgroup:{code}"),
            Scope::ArtUnit(code) => write!(f, "art_unit:{code}"),
            Scope::Cpc(prefix) => write!(f, "cpc:{prefix}"),
        }
    }
}

impl FromStr for Scope {
    type Err = ScopeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("generic") {
            return Ok(Scope::Generic);
        }
        let Some((kind, value)) = s.split_once(':') else {
            return Err(ScopeError::UnknownSelector(s.to_owned()));
        };
        match kind.to_ascii_lowercase().as_str() {
            "workgroup" | "wg" => Ok(Scope::Workgroup(value.parse()?)),
            "art_unit" | "art-unit" | "artunit" | "au" => Ok(Scope::ArtUnit(value.parse()?)),
            "cpc" if !value.trim().is_empty() => Ok(Scope::Cpc(value.trim().to_owned())),
            _ => Err(ScopeError::UnknownSelector(s.to_owned())),
        }
    }
}

impl Serialize for Scope {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Scope {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A four-digit organizational unit code. Codes ending in `0` name a
/// workgroup; any other final digit names an art unit inside the workgroup
/// sharing its first three digits (art unit 1641 sits under workgroup 1640).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UnitCode(String);

impl UnitCode {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_workgroup(&self) -> bool {
        self.0.ends_with('0')
    }

    /// The enclosing workgroup of an art unit; `None` for workgroups.
    pub fn parent(&self) -> Option<UnitCode> {
        if self.is_workgroup() {
            None
        } else {
            Some(UnitCode(format!("{}0", &self.0[..3])))
        }
    }

    /// True when `self` is `other` or lies inside it.
    pub fn within(&self, other: &UnitCode) -> bool {
        self == other || self.parent().as_ref() == Some(other)
    }
}

impl fmt::Display for UnitCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for UnitCode {
    type Err = ScopeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.len() == 4 && s.bytes().all(|b| b.is_ascii_digit()) {
            Ok(UnitCode(s.to_owned()))
        } else {
            Err(ScopeError::InvalidCode(s.to_owned()))
        }
    }
}

impl TryFrom<String> for UnitCode {
    type Error = ScopeError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<UnitCode> for String {
    fn from(code: UnitCode) -> Self {
        code.0
    }
}
