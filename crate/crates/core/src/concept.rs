use std::borrow::Borrow;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A normalized token: lowercase, with internal whitespace runs collapsed to
/// a single underscore.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Concept(String);

impl Concept {
    pub fn new(raw: &str) -> Result<Self> {
        let normalized = normalize(raw);
        if normalized.is_empty() {
            return Err(Error::InvalidConcept(raw.to_string()));
        }
        Ok(Concept(normalized))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// True when `s` is already in normalized form.
    pub fn is_normalized(s: &str) -> bool {
        !s.is_empty() && normalize(s) == s
    }
}

/// Lowercases and joins whitespace-separated parts with `_`.
pub fn normalize(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for (i, part) in raw.split_whitespace().enumerate() {
        if i > 0 {
            out.push('_');
        }
        out.extend(part.chars().flat_map(char::to_lowercase));
    }
    out
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for Concept {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for Concept {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Concept {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Concept::new(&value)
    }
}

impl TryFrom<&str> for Concept {
    type Error = Error;

    fn try_from(value: &str) -> Result<Self> {
        Concept::new(value)
    }
}

impl From<Concept> for String {
    fn from(c: Concept) -> String {
        c.0
    }
}
