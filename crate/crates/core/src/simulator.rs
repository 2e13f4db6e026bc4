//! Monte Carlo estimation of rejection probabilities.
//!
//! Each analytical run contributes `levels * per_level` standardized control
//! measurements, appended to one chronological history in alternating level
//! order (level 1 slot 1, level 2 slot 1, level 1 slot 2, ...). The procedure
//! is evaluated after every measurement and the run is rejected when any of
//! those evaluations is true. The simulated error persists for every run of a
//! condition; what the rules may still see after a rejection is set by
//! [`HistoryPolicy`].

use serde::{Deserialize, Serialize};

use crate::error_model::CriticalErrors;
use crate::rng::{Lcg, RandomStream, StreamKey, STREAM_JUMP};
use crate::rules::{ControlLayout, ExprTree, Procedure, Rule, MAX_WINDOW};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ErrorCondition {
    InControl,
    /// SD inflated by the given multiplier (≥ 1).
    RandomError(f64),
    /// Mean shifted by the given number of SDs.
    SystematicError(f64),
}

impl ErrorCondition {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            ErrorCondition::InControl => z,
            ErrorCondition::RandomError(k) => z * k,
            ErrorCondition::SystematicError(d) => z + d,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            ErrorCondition::RandomError(k) if !(k >= 1.0 && k.is_finite()) => {
                Err(Error::invalid(format!("random error multiplier must be >= 1, got {k}")))
            }
            ErrorCondition::SystematicError(d) if !d.is_finite() => {
                Err(Error::invalid("systematic error must be finite"))
            }
            _ => Ok(()),
        }
    }
}

/// What stays in the rule history after a rejected run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HistoryPolicy {
    /// Forget everything: later rules only see measurements taken after the
    /// rejection.
    Reset,
    /// Discard the rejected run's measurements; accepted runs stay.
    #[default]
    DropRejectedRun,
    /// Keep every measurement.
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationPlan {
    /// Control measurements simulated at each level.
    pub measurements_per_level: usize,
    /// Used for procedures that do not carry their own control layout.
    pub control: ControlLayout,
    pub history: HistoryPolicy,
    pub lcg: Lcg,
    pub stream: StreamKey,
}

impl Default for SimulationPlan {
    fn default() -> Self {
        Self {
            measurements_per_level: 1000,
            control: ControlLayout::default(),
            history: HistoryPolicy::default(),
            lcg: Lcg::default(),
            stream: StreamKey::new(1, 0),
        }
    }
}

impl SimulationPlan {
    pub fn with_stream(&self, stream: StreamKey) -> Self {
        Self { stream, ..self.clone() }
    }

    pub fn runs_for(&self, control: &ControlLayout) -> usize {
        self.measurements_per_level / control.per_level as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.control.validate()?;
        self.lcg.validate()?;
        if self.measurements_per_level == 0 {
            return Err(Error::invalid("plan.measurements_per_level must be positive"));
        }
        let draws = self.measurements_per_level as u64 * ControlLayout::MAX_LEVELS as u64;
        if draws > STREAM_JUMP {
            return Err(Error::invalid(format!(
                "plan.measurements_per_level too large: {draws} draws per stream exceed the stream spacing {STREAM_JUMP}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PerformanceEstimate {
    pub p_re: f64,
    pub p_se: f64,
    pub p_fr: f64,
    pub runs_simulated: usize,
}

/// Hooks into the simulation loop, for instrumented tests.
pub trait SimObserver {
    /// A procedure evaluation after measurement `index` (0-based, global to
    /// the condition). `oldest` is the index of the oldest measurement still
    /// visible to the rules.
    fn evaluated(&mut self, _run: usize, _index: usize, _oldest: Option<usize>, _result: bool) {}
    fn run_finished(&mut self, _run: usize, _rejected: bool) {}
}

impl SimObserver for () {}

/// Chronological window of standardized values, oldest first.
struct History {
    values: Vec<f64>,
    /// Global index of `values[0]`.
    first: usize,
    keep: usize,
}

impl History {
    fn new(per_run: usize) -> Self {
        let keep = MAX_WINDOW + per_run;
        Self { values: Vec::with_capacity(4 * keep), first: 0, keep }
    }

    fn push(&mut self, value: f64) {
        if self.values.len() >= 3 * self.keep {
            let cut = self.values.len() - self.keep;
            self.values.drain(..cut);
            self.first += cut;
        }
        self.values.push(value);
    }

    fn next_index(&self) -> usize {
        self.first + self.values.len()
    }

    fn clear(&mut self) {
        self.first = self.next_index();
        self.values.clear();
    }

    /// Drops everything at or after global index `from`.
    fn truncate_from(&mut self, from: usize) {
        if from <= self.first {
            self.clear();
            self.first = from.max(self.first);
        } else {
            self.values.truncate(from - self.first);
        }
    }

    fn oldest(&self) -> Option<usize> {
        (!self.values.is_empty()).then_some(self.first)
    }
}

/// Per-run rejection probability of `procedure` under `condition`.
pub fn simulate_condition(procedure: &Procedure, plan: &SimulationPlan, condition: ErrorCondition) -> Result<f64> {
    simulate_condition_observed(procedure, plan, condition, &mut ())
}

pub fn simulate_condition_observed(
    procedure: &Procedure,
    plan: &SimulationPlan,
    condition: ErrorCondition,
    observer: &mut impl SimObserver,
) -> Result<f64> {
    condition.validate()?;
    let control = procedure.control.unwrap_or(plan.control);
    control.validate()?;
    let runs = plan.runs_for(&control);
    if runs == 0 {
        return Err(Error::invalid(format!(
            "{} measurements per level do not fill one run of {} per level",
            plan.measurements_per_level, control.per_level
        )));
    }
    if (runs * control.per_run()) as u64 > STREAM_JUMP {
        return Err(Error::invalid("simulation would overrun its random substream"));
    }
    let Some(expr) = procedure.expr() else {
        return Ok(0.0);
    };
    let mut stream = RandomStream::from_key(&plan.lcg, plan.stream)?;
    let rejected = run_loop(&expr, procedure.rules(), &control, runs, plan.history, condition, &mut stream, observer);
    Ok(rejected as f64 / runs as f64)
}

#[allow(clippy::too_many_arguments)]
fn run_loop(
    expr: &ExprTree,
    rules: &[Rule],
    control: &ControlLayout,
    runs: usize,
    policy: HistoryPolicy,
    condition: ErrorCondition,
    stream: &mut RandomStream,
    observer: &mut impl SimObserver,
) -> usize {
    let per_run = control.per_run();
    let mut history = History::new(per_run);
    let mut rejected_runs = 0;
    for run in 0..runs {
        let run_start = history.next_index();
        let mut rejected = false;
        // slot-major, level-minor: L1 s1, L2 s1, L1 s2, ...
        for _ in 0..per_run {
            let value = condition.apply(stream.next_normal());
            history.push(value);
            let index = history.next_index() - 1;
            let result = expr.evaluate_with(&mut |i| rules[i].evaluate(&history.values));
            observer.evaluated(run, index, history.oldest(), result);
            rejected |= result;
        }
        observer.run_finished(run, rejected);
        if rejected {
            rejected_runs += 1;
            match policy {
                HistoryPolicy::Reset => history.clear(),
                HistoryPolicy::DropRejectedRun => history.truncate_from(run_start),
                HistoryPolicy::Keep => {}
            }
        }
    }
    rejected_runs
}

/// Estimates `(P_re, P_se, P_fr)`, each condition on its own substream of
/// `plan.stream` (child 0 in control, 1 random error, 2 systematic error).
pub fn estimate_performance(
    procedure: &Procedure,
    plan: &SimulationPlan,
    critical: &CriticalErrors,
) -> Result<PerformanceEstimate> {
    let conditions = [
        ErrorCondition::InControl,
        ErrorCondition::RandomError(critical.k_re),
        ErrorCondition::SystematicError(critical.delta_se),
    ];
    let mut p = [0.0; 3];
    for (slot, condition) in conditions.into_iter().enumerate() {
        p[slot] = simulate_condition(procedure, &plan.with_stream(plan.stream.child(slot as u64)), condition)?;
    }
    let control = procedure.control.unwrap_or(plan.control);
    Ok(PerformanceEstimate { p_fr: p[0], p_re: p[1], p_se: p[2], runs_simulated: plan.runs_for(&control) })
}
