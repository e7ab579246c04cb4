//! Numerical tolerances shared across modules.

use serde::{Deserialize, Serialize};

/// Default geometry tolerance.
pub const DEFAULT_GEOMETRY_TOL: f64 = 1e-10;

/// Default tangency tolerance for `|dir . n|` at an impact.
pub const DEFAULT_TANGENCY_TOL: f64 = 1e-9;

/// Environment variable that overrides the geometry tolerance in the CLI.
pub const TOL_ENV_VAR: &str = "POLYTUBE_TOL";

/// One geometry knob governs vertex incidence, unit-normal checks and
/// group-element equality so that all predicates agree with each other.
/// Tangency is separate because it compares a cosine, not a length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub geometry: f64,
    pub tangency: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            geometry: DEFAULT_GEOMETRY_TOL,
            tangency: DEFAULT_TANGENCY_TOL,
        }
    }
}

impl Tolerance {
    pub fn with_geometry(geometry: f64) -> Self {
        Self {
            geometry,
            ..Self::default()
        }
    }

    /// Reads `POLYTUBE_TOL`, falling back to the default when unset or unparsable.
    pub fn from_env() -> Self {
        std::env::var(TOL_ENV_VAR)
            .ok()
            .and_then(|s| s.trim().parse::<f64>().ok())
            .filter(|t| t.is_finite() && *t > 0.0)
            .map(Self::with_geometry)
            .unwrap_or_default()
    }
}
