//! Hierarchy model of resource allocation.
//!
//! Each school turns an increment of resources into human capital at a
//! school-specific rate `s` (its compatibility with the resource), on top of
//! its own effort `e` and the return on its initial endowment `l0`. A central
//! authority that cannot observe `s` gives every school the same increment; a
//! local authority that does observe it may reallocate the same total budget,
//! subject to no school with positive compatibility falling below the uniform
//! increment and no school with negative compatibility rising above it.

mod allocation;
mod distribution;
mod gains;

pub use allocation::{
    check_feasibility, informed_allocation, uniform_allocation, AllocationPlan, FeasibilityReport,
    Violation, FEASIBILITY_TOLERANCE,
};
pub use distribution::DistributionSpec;
pub use gains::{draw_gains, expected_gains, DrawGain, GainReport, PATHWISE_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// One school in a municipality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct School {
    pub id: u64,
    /// Compatibility of allocated resources with the school's needs. May be
    /// negative.
    pub s: f64,
    /// Effort level, in score units.
    pub e: f64,
    /// Initial resource endowment.
    pub l0: f64,
    #[serde(default)]
    pub is_public: bool,
    #[serde(default)]
    pub is_anglophone: bool,
    #[serde(default)]
    pub municipality_id: u64,
}

impl School {
    pub fn new(id: u64, s: f64, e: f64, l0: f64) -> Result<Self> {
        let school = School {
            id,
            s,
            e,
            l0,
            is_public: true,
            is_anglophone: false,
            municipality_id: 0,
        };
        school.validate()?;
        Ok(school)
    }

    /// A public school with zero effort and endowment; only `s` matters for
    /// allocation.
    pub fn with_compatibility(id: u64, s: f64) -> Self {
        School {
            id,
            s,
            e: 0.0,
            l0: 0.0,
            is_public: true,
            is_anglophone: false,
            municipality_id: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s.is_finite() && self.e.is_finite() && self.l0.is_finite()) {
            return Err(domain(format!(
                "school {}: s, e and l0 must be finite (got s={}, e={}, l0={})",
                self.id, self.s, self.e, self.l0
            )));
        }
        if self.l0 < 0.0 {
            return Err(domain(format!(
                "school {}: initial endowment l0 must be non-negative, got {}",
                self.id, self.l0
            )));
        }
        Ok(())
    }
}

/// Human capital produced by `school` after receiving `delta_l` extra
/// resources: `e + s·l0 + s·Δl`.
pub fn produce_human_capital(school: &School, delta_l: f64) -> Result<f64> {
    school.validate()?;
    if !delta_l.is_finite() || delta_l < 0.0 {
        return Err(domain(format!(
            "resource increment must be finite and non-negative, got {delta_l}"
        )));
    }
    Ok(school.e + school.s * school.l0 + school.s * delta_l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn school(s: f64, e: f64, l0: f64) -> School {
        School::new(0, s, e, l0).unwrap()
    }

    #[test]
    fn zero_compatibility_leaves_only_effort() {
        assert_eq!(
            produce_human_capital(&school(0.0, 5.0, 123.0), 7.5).unwrap(),
            5.0
        );
        assert_eq!(
            produce_human_capital(&school(0.0, 5.0, 0.0), 0.0).unwrap(),
            5.0
        );
    }

    #[test]
    fn direct_substitution() {
        assert_eq!(
            produce_human_capital(&school(1.0, 0.0, 2.0), 3.0).unwrap(),
            5.0
        );
        assert_eq!(
            produce_human_capital(&school(-1.0, 10.0, 4.0), 2.0).unwrap(),
            4.0
        );
    }

    #[test]
    fn rejects_non_finite_inputs() {
        let mut s = School::with_compatibility(1, 1.0);
        assert!(produce_human_capital(&s, f64::NAN).is_err());
        assert!(produce_human_capital(&s, f64::INFINITY).is_err());
        s.e = f64::NEG_INFINITY;
        assert!(produce_human_capital(&s, 1.0).is_err());
        assert!(School::new(0, f64::NAN, 0.0, 0.0).is_err());
        assert!(School::new(0, 1.0, 0.0, -1.0).is_err());
    }
}
