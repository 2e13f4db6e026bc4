//! Critical errors of an analytical process and a closed-form power oracle
//! for single-value rules.
//!
//! A result falls outside the allowable total error when it deviates from the
//! true value by more than `tea`. The critical systematic error is the mean
//! shift (in SDs) and the critical random error the SD multiplier at which
//! that two-sided exceedance probability reaches the clinical type I bound.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::{Error, Result};

const BISECTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssayParams {
    /// In-control standard deviation, analyte units.
    pub sd: f64,
    /// Bias, analyte units.
    pub bias: f64,
    /// Maximum medically allowable total error, analyte units.
    pub tea: f64,
    /// Upper bound of the clinical type I error.
    pub alpha: f64,
}

impl Default for AssayParams {
    /// Serum sodium: SD 0.67 meq/l, bias 0.1 meq/l, TEa 4.0 meq/l, alpha 0.01.
    fn default() -> Self {
        Self { sd: 0.67, bias: 0.1, tea: 4.0, alpha: 0.01 }
    }
}

impl AssayParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sd > 0.0 && self.sd.is_finite()) {
            return Err(Error::invalid(format!("assay.sd must be positive, got {}", self.sd)));
        }
        if !(self.tea > self.bias.abs() && self.tea.is_finite()) {
            return Err(Error::invalid(format!(
                "assay.tea ({}) must exceed |assay.bias| ({})",
                self.tea,
                self.bias.abs()
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("assay.alpha must be in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Probability that one result falls outside `±tea` when the process
    /// runs with an extra mean shift of `shift` SDs and SD inflated by `k`.
    pub fn exceedance(&self, shift: f64, k: f64) -> f64 {
        let s = k * self.sd;
        let centre = self.bias + shift * self.sd;
        normal_cdf((-self.tea - centre) / s) + normal_sf((self.tea - centre) / s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalErrors {
    /// SD multiplier of the critical random error.
    pub k_re: f64,
    /// Mean shift of the critical systematic error, in SDs.
    pub delta_se: f64,
}

impl CriticalErrors {
    pub fn from_assay(p: &AssayParams) -> Result<Self> {
        Ok(Self { k_re: critical_random_error(p)?, delta_se: critical_systematic_error(p)? })
    }
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal upper tail, accurate far into the tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    while hi - lo > BISECTION_TOL * 1e-3 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Mean shift Δ (SDs) at which the exceedance equals `alpha`.
pub fn critical_systematic_error(p: &AssayParams) -> Result<f64> {
    p.validate()?;
    let lo = 0.0;
    let hi = (p.tea - p.bias) / p.sd + 10.0;
    let g = |d: f64| p.exceedance(d, 1.0) - p.alpha;
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo == 0.0 {
        return Ok(0.0);
    }
    if g_lo > 0.0 || g_hi < 0.0 {
        return Err(Error::InfeasibleAssay(format!(
            "no systematic shift in [{lo}, {hi:.3}] SD gives exceedance {}: exceedance at zero shift is {:.3e}",
            p.alpha,
            g_lo + p.alpha
        )));
    }
    Ok(bisect(lo, hi, g))
}

/// SD multiplier k at which the exceedance equals `alpha`.
pub fn critical_random_error(p: &AssayParams) -> Result<f64> {
    p.validate()?;
    let (lo, hi) = (1.0, 100.0);
    let g = |k: f64| p.exceedance(0.0, k) - p.alpha;
    let (g_lo, g_hi) = (g(lo), g(hi));
    if g_lo > 0.0 {
        return Err(Error::InfeasibleAssay(format!(
            "exceedance without added error is already {:.3e} > alpha {}",
            g_lo + p.alpha,
            p.alpha
        )));
    }
    if g_lo == 0.0 {
        return Ok(1.0);
    }
    if g_hi < 0.0 {
        return Err(Error::InfeasibleAssay("no SD multiplier in [1, 100] reaches alpha".into()));
    }
    Ok(bisect(lo, hi, g))
}

/// Per-run rejection probability of `S(1, limit)` evaluated after every
/// measurement, with `meas_per_run` independent measurements distributed
/// `N(shift, sd_multiplier^2)` in SD units.
pub fn single_value_power_oracle(limit: f64, meas_per_run: u32, shift: f64, sd_multiplier: f64) -> f64 {
    let p = normal_sf((limit - shift) / sd_multiplier) + normal_cdf((-limit - shift) / sd_multiplier);
    if p >= 1.0 {
        return 1.0;
    }
    1.0 - (1.0 - p).powi(meas_per_run as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sodium_assay() {
        let p = AssayParams::default();
        let c = CriticalErrors::from_assay(&p).unwrap();
        assert!((c.k_re - 2.313).abs() < 1e-3, "{}", c.k_re);
        assert!((c.delta_se - 3.495).abs() < 1e-3, "{}", c.delta_se);
    }

    #[test]
    fn unbiased_unit_sd() {
        let p = AssayParams { sd: 1.0, bias: 0.0, tea: 4.0, alpha: 0.01 };
        assert!((critical_systematic_error(&p).unwrap() - 1.6737).abs() < 1e-3);
        assert!((critical_random_error(&p).unwrap() - 4.0 / 2.575_829).abs() < 1e-3);
    }

    #[test]
    fn symmetric_case_forces_unit_multiplier() {
        let p = AssayParams { sd: 1.0, bias: 0.0, tea: 1.959_964, alpha: 0.05 };
        assert!((critical_random_error(&p).unwrap() - 1.0).abs() < 1e-4);
        let exact = AssayParams { alpha: p.exceedance(0.0, 1.0), ..p };
        assert_eq!(critical_systematic_error(&exact).unwrap(), 0.0);
    }

    #[test]
    fn infeasible() {
        let p = AssayParams { sd: 1.0, bias: 0.0, tea: 1.5, alpha: 0.05 };
        assert!(matches!(critical_random_error(&p), Err(Error::InfeasibleAssay(_))));
        assert!(matches!(critical_systematic_error(&p), Err(Error::InfeasibleAssay(_))));
    }

    #[test]
    fn invalid_params() {
        let bad = [
            AssayParams { sd: 0.0, ..Default::default() },
            AssayParams { tea: 0.05, ..Default::default() },
            AssayParams { alpha: 1.0, ..Default::default() },
        ];
        for p in bad {
            assert!(matches!(p.validate(), Err(Error::InvalidArgument(_))));
        }
    }

    #[test]
    fn roots_reproduce_alpha() {
        let p = AssayParams::default();
        let c = CriticalErrors::from_assay(&p).unwrap();
        assert!((p.exceedance(c.delta_se, 1.0) - p.alpha).abs() < 1e-5);
        assert!((p.exceedance(0.0, c.k_re) - p.alpha).abs() < 1e-5);
    }

    #[test]
    fn oracle_values() {
        assert!((single_value_power_oracle(2.4, 2, 0.0, 1.0) - 0.0325).abs() < 5e-4);
        assert!((single_value_power_oracle(2.4, 2, 3.495, 1.0) - 0.9813).abs() < 5e-4);
        assert_eq!(single_value_power_oracle(0.0, 3, 0.0, 1.0), 1.0);
    }
}
