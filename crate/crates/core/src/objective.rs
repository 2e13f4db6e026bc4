//! Fitness (minimized during the search) and the comparison score used to
//! rank procedures.

use serde::{Deserialize, Serialize};

use crate::simulator::PerformanceEstimate;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    /// Stated probability for critical random error detection.
    pub p_re_target: f64,
    /// Stated probability for critical systematic error detection.
    pub p_se_target: f64,
    pub w_re: f64,
    pub w_se: f64,
    pub w_fr: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        Self { p_re_target: 0.5, p_se_target: 1.0, w_re: 1.0, w_se: 1.0, w_fr: 1.0 }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p_re_target", self.p_re_target), ("p_se_target", self.p_se_target)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("objective.{name} must be in [0, 1], got {v}")));
            }
        }
        for (name, w) in [("w_re", self.w_re), ("w_se", self.w_se), ("w_fr", self.w_fr)] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::invalid(format!("objective.{name} must be non-negative, got {w}")));
            }
        }
        Ok(())
    }
}

/// Weighted distance from the targets, with false rejection pulled to zero.
/// Overshooting a detection target is penalized like undershooting it.
pub fn fitness_f(est: &PerformanceEstimate, cfg: &ObjectiveConfig) -> f64 {
    let d_re = est.p_re - cfg.p_re_target;
    let d_se = est.p_se - cfg.p_se_target;
    (cfg.w_re * d_re * d_re + cfg.w_se * d_se * d_se + cfg.w_fr * est.p_fr * est.p_fr).sqrt()
}

/// Comparison score: random-error detection above 0.5 is not penalized.
pub fn comparison_f1(est: &PerformanceEstimate) -> f64 {
    let d_re = if est.p_re < 0.5 { est.p_re - 0.5 } else { 0.0 };
    let d_se = est.p_se - 1.0;
    (d_re * d_re + d_se * d_se + est.p_fr * est.p_fr).sqrt()
}
