use std::borrow::Borrow;
use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

/// Canonical identifier of a key term. Multi-token terms join their tokens
/// with `_` (`"baja_california"`).
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermId(String);

impl TermId {
    /// Reserved identifier of the artificial taxonomy root.
    pub const ROOT: &'static str = "Root";

    pub fn new(s: impl Into<String>) -> Self {
        TermId(s.into())
    }

    /// Joins the tokens of a multi-gram term with `_`.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let mut out = String::new();
        for (i, t) in tokens.iter().enumerate() {
            if i > 0 {
                out.push('_');
            }
            out.push_str(t.as_ref());
        }
        TermId(out)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0 == Self::ROOT
    }
}

impl Deref for TermId {
    type Target = str;
    fn deref(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for TermId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl AsRef<str> for TermId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for TermId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for TermId {
    fn from(s: &str) -> Self {
        TermId(s.to_owned())
    }
}

impl From<String> for TermId {
    fn from(s: String) -> Self {
        TermId(s)
    }
}
