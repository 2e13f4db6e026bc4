//! Paired replicate comparison, summary statistics and the sign test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::error_model::CriticalErrors;
use crate::objective::comparison_f1;
use crate::rng::StreamKey;
use crate::rules::Procedure;
use crate::simulator::{estimate_performance, PerformanceEstimate, SimulationPlan};
use crate::{Error, Result};

pub const DEFAULT_REPLICATES: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

/// Mean and sample SD (divisor `n - 1`).
pub fn summarize(values: &[f64]) -> Result<Summary> {
    if values.len() < 2 {
        return Err(Error::invalid(format!("SD needs at least 2 values, got {}", values.len())));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    Ok(Summary { mean, sd: (ss / (n - 1.0)).sqrt() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub p_value: f64,
    /// Pairs with `a < b`.
    pub below: usize,
    pub above: usize,
    pub ties: usize,
    pub ties_only: bool,
}

/// Exact two-sided sign test on paired samples; tied pairs are dropped.
pub fn sign_test(a: &[f64], b: &[f64]) -> Result<SignTest> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::invalid(format!(
            "sign test needs two non-empty samples of equal length, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let below = a.iter().zip(b).filter(|(x, y)| x < y).count();
    let above = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let ties = a.len() - below - above;
    let n = below + above;
    if n == 0 {
        return Ok(SignTest { p_value: 1.0, below, above, ties, ties_only: true });
    }
    let bin = Binomial::new(0.5, n as u64).expect("valid binomial");
    let s = below as u64;
    let lower = bin.cdf(s);
    let upper = if s == 0 { 1.0 } else { bin.sf(s - 1) };
    let p_value = (2.0 * lower.min(upper)).min(1.0);
    Ok(SignTest { p_value, below, above, ties, ties_only: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureSummary {
    pub name: String,
    pub notation: String,
    pub p_re: Summary,
    pub p_se: Summary,
    pub p_fr: Summary,
    pub f1: Summary,
    /// Per-replicate estimates, replicate order.
    pub replicates: Vec<PerformanceEstimate>,
    pub f1_values: Vec<f64>,
    /// Sign test of the top-ranked procedure's f1 against this one's; absent
    /// for the top-ranked procedure itself.
    pub vs_top: Option<SignTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub replicates: usize,
    pub base_seed: u64,
    /// Sorted by mean f1, ascending; ties keep input order.
    pub procedures: Vec<ProcedureSummary>,
}

/// Replicate `r` of every procedure runs on stream `(base_seed, r)`, so all
/// procedures see the same simulated series.
pub fn replicate_plan(template: &SimulationPlan, base_seed: u64, replicate: usize) -> SimulationPlan {
    template.with_stream(StreamKey::new(base_seed, replicate as u64))
}

pub fn compare_procedures(
    procedures: &[(String, Procedure)],
    plan_template: &SimulationPlan,
    critical: &CriticalErrors,
    replicates: usize,
    base_seed: u64,
) -> Result<ComparisonResult> {
    if replicates < 2 {
        return Err(Error::invalid(format!("at least 2 replicates are needed, got {replicates}")));
    }
    plan_template.validate()?;
    let jobs: Vec<(usize, usize)> = (0..procedures.len()).flat_map(|i| (0..replicates).map(move |r| (i, r))).collect();
    let estimates = jobs
        .par_iter()
        .map(|&(i, r)| estimate_performance(&procedures[i].1, &replicate_plan(plan_template, base_seed, r), critical))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::with_capacity(procedures.len());
    for (i, (name, procedure)) in procedures.iter().enumerate() {
        let reps = estimates[i * replicates..(i + 1) * replicates].to_vec();
        let column = |f: fn(&PerformanceEstimate) -> f64| reps.iter().map(f).collect::<Vec<_>>();
        let f1_values = column(comparison_f1);
        rows.push(ProcedureSummary {
            name: name.clone(),
            notation: procedure.notation(),
            p_re: summarize(&column(|e| e.p_re))?,
            p_se: summarize(&column(|e| e.p_se))?,
            p_fr: summarize(&column(|e| e.p_fr))?,
            f1: summarize(&f1_values)?,
            replicates: reps,
            f1_values,
            vs_top: None,
        });
    }
    rows.sort_by(|a, b| a.f1.mean.total_cmp(&b.f1.mean));
    if let Some((top, rest)) = rows.split_first_mut() {
        for row in rest {
            row.vs_top = Some(sign_test(&top.f1_values, &row.f1_values)?);
        }
    }
    Ok(ComparisonResult { replicates, base_seed, procedures: rows })
}
