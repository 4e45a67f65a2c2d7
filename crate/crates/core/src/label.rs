use std::fmt;

use serde::{Deserialize, Serialize};

/// Credibility of an image-caption pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairLabel {
    Real,
    Fake,
}

impl fmt::Display for PairLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairLabel::Real => "Real",
            PairLabel::Fake => "Fake",
        })
    }
}
