use std::fmt;

use serde::{Deserialize, Serialize};

/// Which route produced a visibility value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Analytic,
    McSearch,
    Oracle,
    Bell,
    Chsh,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Analytic => "analytic",
            Provenance::McSearch => "mc-search",
            Provenance::Oracle => "oracle",
            Provenance::Bell => "bell",
            Provenance::Chsh => "chsh",
        }
    }
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A visibility value together with where it came from.
///
/// `n_settings` is `None` for values that do not belong to a finite settings
/// ensemble (closed forms, inequality bounds, extrapolations to `N -> inf`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_settings: Option<usize>,
    pub provenance: Provenance,
    pub seed: u64,
    pub iterations_used: u64,
}

impl VisibilityEstimate {
    pub fn exact(value: f64, provenance: Provenance) -> Self {
        VisibilityEstimate {
            value,
            std_error: 0.0,
            n_settings: None,
            provenance,
            seed: 0,
            iterations_used: 0,
        }
    }
}
