//! Control rules and Boolean QC procedures.
//!
//! All statistics work on standardized measurements (in-control mean 0,
//! in-control SD 1), so a decision limit is a multiple of the SD.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Largest window any rule looks at.
pub const MAX_WINDOW: usize = 4;
/// Largest decision limit, in SD units.
pub const MAX_LIMIT: f64 = 6.3;
/// Operator priorities fit in two bits.
pub const MAX_PRIORITY: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleKind {
    SingleValue,
    Range,
    Mean,
    StdDev,
}

impl RuleKind {
    pub const ALL: [RuleKind; 4] = [RuleKind::SingleValue, RuleKind::Range, RuleKind::Mean, RuleKind::StdDev];

    pub fn symbol(self) -> char {
        match self {
            RuleKind::SingleValue => 'S',
            RuleKind::Range => 'R',
            RuleKind::Mean => 'M',
            RuleKind::StdDev => 'D',
        }
    }

    pub fn from_symbol(c: char) -> Option<Self> {
        match c {
            'S' => Some(RuleKind::SingleValue),
            'R' => Some(RuleKind::Range),
            'M' => Some(RuleKind::Mean),
            'D' => Some(RuleKind::StdDev),
            _ => None,
        }
    }

    /// Smallest admissible window: a single value can stand alone, the other
    /// statistics need two.
    pub fn min_n(self) -> u8 {
        match self {
            RuleKind::SingleValue => 1,
            _ => 2,
        }
    }
}

/// One generic control rule: true when its statistic over the last `n`
/// measurements exceeds `limit` SDs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub kind: RuleKind,
    pub n: u8,
    pub limit: f64,
}

impl Rule {
    pub fn new(kind: RuleKind, n: u8, limit: f64) -> Result<Self> {
        if n < kind.min_n() || n as usize > MAX_WINDOW {
            return Err(Error::UnsupportedRule(format!(
                "{}: n = {n} outside [{}, {MAX_WINDOW}]",
                kind.symbol(),
                kind.min_n()
            )));
        }
        if !limit.is_finite() || !(0.0..=MAX_LIMIT + 1e-9).contains(&limit) {
            return Err(Error::UnsupportedRule(format!("{}: limit {limit} outside [0, {MAX_LIMIT}]", kind.symbol())));
        }
        Ok(Self { kind, n, limit })
    }

    /// Evaluates the rule on the last `n` entries of `window` (newest last).
    /// Too little history evaluates to false.
    #[inline]
    pub fn evaluate(&self, window: &[f64]) -> bool {
        let n = self.n as usize;
        if window.len() < n {
            return false;
        }
        let w = &window[window.len() - n..];
        match self.kind {
            RuleKind::SingleValue => w.iter().all(|x| x.abs() > self.limit),
            RuleKind::Range => {
                let (lo, hi) = w.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
                hi - lo > self.limit
            }
            RuleKind::Mean => (w.iter().sum::<f64>() / n as f64).abs() > self.limit,
            RuleKind::StdDev => {
                let mean = w.iter().sum::<f64>() / n as f64;
                let ss = w.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
                (ss / (n - 1) as f64).sqrt() > self.limit
            }
        }
    }
}

/// Free-function form of [`Rule::evaluate`].
pub fn evaluate_rule(rule: &Rule, window: &[f64]) -> bool {
    rule.evaluate(window)
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.kind.symbol(), self.n, format_limit(self.limit))
    }
}

/// One decimal when the limit sits on the 0.1 grid, shortest round-trip
/// representation otherwise.
pub fn format_limit(limit: f64) -> String {
    let tenths = (limit * 10.0).round();
    if (tenths / 10.0 - limit).abs() < 1e-9 {
        format!("{:.1}", tenths / 10.0)
    } else {
        format!("{limit}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OperatorKind {
    And,
    Or,
}

impl fmt::Display for OperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OperatorKind::And => "AND",
            OperatorKind::Or => "OR",
        })
    }
}

/// Binary connective; higher priority binds tighter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Operator {
    pub kind: OperatorKind,
    pub priority: u8,
}

impl Operator {
    pub fn new(kind: OperatorKind, priority: u8) -> Result<Self> {
        if priority > MAX_PRIORITY {
            return Err(Error::invalid(format!("operator priority {priority} exceeds {MAX_PRIORITY}")));
        }
        Ok(Self { kind, priority })
    }

    pub fn and(priority: u8) -> Self {
        Self { kind: OperatorKind::And, priority: priority.min(MAX_PRIORITY) }
    }

    pub fn or(priority: u8) -> Self {
        Self { kind: OperatorKind::Or, priority: priority.min(MAX_PRIORITY) }
    }
}

/// How control measurements are taken: levels of control material and
/// measurements per level in each run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ControlLayout {
    pub levels: u8,
    pub per_level: u8,
}

impl ControlLayout {
    pub const MAX_LEVELS: u8 = 2;
    pub const MAX_PER_LEVEL: u8 = 4;

    pub fn new(levels: u8, per_level: u8) -> Result<Self> {
        let c = Self { levels, per_level };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=Self::MAX_LEVELS).contains(&self.levels) {
            return Err(Error::invalid(format!("levels must be 1 or 2, got {}", self.levels)));
        }
        if !(1..=Self::MAX_PER_LEVEL).contains(&self.per_level) {
            return Err(Error::invalid(format!("measurements per level must be in [1, 4], got {}", self.per_level)));
        }
        Ok(())
    }

    pub fn per_run(&self) -> usize {
        self.levels as usize * self.per_level as usize
    }
}

impl Default for ControlLayout {
    fn default() -> Self {
        Self { levels: 2, per_level: 1 }
    }
}

/// Rules joined left to right by operators, plus an optional control layout.
/// A procedure without rules never rejects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Procedure {
    rules: Vec<Rule>,
    operators: Vec<Operator>,
    pub control: Option<ControlLayout>,
}

impl Procedure {
    pub fn new(rules: Vec<Rule>, operators: Vec<Operator>) -> Result<Self> {
        if !rules.is_empty() && operators.len() + 1 != rules.len() {
            return Err(Error::invalid(format!(
                "{} rules need {} operators, got {}",
                rules.len(),
                rules.len() - 1,
                operators.len()
            )));
        }
        if rules.is_empty() && !operators.is_empty() {
            return Err(Error::invalid("operators without rules"));
        }
        Ok(Self { rules, operators, control: None })
    }

    pub fn empty() -> Self {
        Self { rules: Vec::new(), operators: Vec::new(), control: None }
    }

    pub fn single(rule: Rule) -> Self {
        Self { rules: vec![rule], operators: Vec::new(), control: None }
    }

    /// Rules joined by OR at one priority (Westgard-style multirule).
    pub fn any_of(rules: Vec<Rule>) -> Self {
        let operators = vec![Operator::or(0); rules.len().saturating_sub(1)];
        Self { rules, operators, control: None }
    }

    pub fn with_control(mut self, control: ControlLayout) -> Self {
        self.control = Some(control);
        self
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn operators(&self) -> &[Operator] {
        &self.operators
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn operator_count(&self) -> usize {
        self.operators.len()
    }

    pub fn expr(&self) -> Option<ExprTree> {
        build_expr(self)
    }

    pub fn notation(&self) -> String {
        canonical_notation(self)
    }
}

/// Binary expression over rule indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprTree {
    Leaf(usize),
    Node { op: OperatorKind, left: Box<ExprTree>, right: Box<ExprTree> },
}

impl ExprTree {
    pub fn evaluate_with(&self, leaf: &mut impl FnMut(usize) -> bool) -> bool {
        match self {
            ExprTree::Leaf(i) => leaf(*i),
            ExprTree::Node { op: OperatorKind::And, left, right } => {
                left.evaluate_with(leaf) && right.evaluate_with(leaf)
            }
            ExprTree::Node { op: OperatorKind::Or, left, right } => {
                left.evaluate_with(leaf) || right.evaluate_with(leaf)
            }
        }
    }

    /// Leaves in order, with the connective between consecutive leaves.
    pub fn flatten(&self) -> (Vec<usize>, Vec<OperatorKind>) {
        fn walk(t: &ExprTree, leaves: &mut Vec<usize>, ops: &mut Vec<OperatorKind>) {
            match t {
                ExprTree::Leaf(i) => leaves.push(*i),
                ExprTree::Node { op, left, right } => {
                    walk(left, leaves, ops);
                    ops.push(*op);
                    walk(right, leaves, ops);
                }
            }
        }
        let mut leaves = Vec::new();
        let mut ops = Vec::new();
        walk(self, &mut leaves, &mut ops);
        (leaves, ops)
    }

    /// Truth table over leaf indices `0..vars`: bit `a` of the result is the
    /// value under the assignment where leaf `i` is bit `i` of `a`.
    pub fn truth_table(&self, vars: usize) -> u64 {
        assert!(vars <= 6, "truth table limited to 6 variables");
        let mut table = 0u64;
        for a in 0..(1u64 << vars) {
            if self.evaluate_with(&mut |i| a >> i & 1 == 1) {
                table |= 1 << a;
            }
        }
        table
    }
}

/// Precedence-climbing parse of the rule/operator sequence. Higher priority
/// binds tighter; equal priorities associate to the left.
pub fn build_expr(procedure: &Procedure) -> Option<ExprTree> {
    if procedure.rules.is_empty() {
        return None;
    }
    let ops = &procedure.operators;
    let mut pos = 0;
    Some(climb(ops, &mut pos, 0))
}

fn climb(ops: &[Operator], pos: &mut usize, min_priority: u8) -> ExprTree {
    // Leaf i sits before operator i.
    let mut lhs = ExprTree::Leaf(*pos);
    while *pos < ops.len() && ops[*pos].priority >= min_priority {
        let op = ops[*pos];
        *pos += 1;
        let rhs = climb(ops, pos, op.priority + 1);
        lhs = ExprTree::Node { op: op.kind, left: Box::new(lhs), right: Box::new(rhs) };
    }
    lhs
}

/// Evaluates a procedure tree on a shared chronological history.
pub fn evaluate_procedure(expr: Option<&ExprTree>, rules: &[Rule], history: &[f64]) -> bool {
    match expr {
        None => false,
        Some(t) => t.evaluate_with(&mut |i| rules[i].evaluate(history)),
    }
}

/// Text form with parentheses wherever AND and OR meet.
pub fn canonical_notation(procedure: &Procedure) -> String {
    fn write(t: &ExprTree, rules: &[Rule], parent: Option<OperatorKind>, out: &mut String) {
        match t {
            ExprTree::Leaf(i) => out.push_str(&rules[*i].to_string()),
            ExprTree::Node { op, left, right } => {
                let wrap = parent.is_some_and(|p| p != *op);
                if wrap {
                    out.push('(');
                }
                write(left, rules, Some(*op), out);
                out.push(' ');
                out.push_str(&op.to_string());
                out.push(' ');
                // A same-kind right subtree is logically flat, no parentheses.
                write(right, rules, Some(*op), out);
                if wrap {
                    out.push(')');
                }
            }
        }
    }
    match build_expr(procedure) {
        None => "NONE".to_string(),
        Some(t) => {
            let mut out = String::new();
            write(&t, &procedure.rules, None, &mut out);
            out
        }
    }
}

impl fmt::Display for Procedure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&canonical_notation(self))
    }
}

/// Number of distinct Boolean functions of the four rule classes expressible
/// with 1..=`max_rules` rules and every operator kind/priority assignment.
/// Two propositions are the same when their truth tables over the four
/// classes agree.
pub fn count_distinct_propositions(max_rules: usize) -> Result<usize> {
    if max_rules == 0 {
        return Err(Error::invalid("max_rules must be at least 1"));
    }
    if max_rules > 4 {
        return Err(Error::invalid("enumeration supports at most 4 rules"));
    }
    let operator_choices: Vec<Operator> = [OperatorKind::And, OperatorKind::Or]
        .into_iter()
        .flat_map(|kind| (0..=MAX_PRIORITY).map(move |priority| Operator { kind, priority }))
        .collect();
    let mut tables = HashSet::new();
    for count in 1..=max_rules {
        let atom_combos = 4usize.pow(count as u32);
        let op_combos = operator_choices.len().pow(count as u32 - 1);
        for a in 0..atom_combos {
            let classes: Vec<usize> = digits(a, 4, count);
            for o in 0..op_combos {
                let operators: Vec<Operator> =
                    digits(o, operator_choices.len(), count - 1).into_iter().map(|d| operator_choices[d]).collect();
                let mut pos = 0;
                let tree = climb(&operators, &mut pos, 0);
                let mut table = 0u16;
                for assignment in 0..16u16 {
                    if tree.evaluate_with(&mut |leaf| assignment >> classes[leaf] & 1 == 1) {
                        table |= 1 << assignment;
                    }
                }
                tables.insert(table);
            }
        }
    }
    Ok(tables.len())
}

fn digits(mut value: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(value % base);
        value /= base;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(kind: RuleKind, n: u8, limit: f64) -> Rule {
        Rule::new(kind, n, limit).unwrap()
    }

    #[test]
    fn single_value_rule() {
        assert!(r(RuleKind::SingleValue, 1, 2.4).evaluate(&[0.0, -1.0, 2.5]));
        assert!(r(RuleKind::SingleValue, 1, 2.4).evaluate(&[-2.5]));
        assert!(!r(RuleKind::SingleValue, 1, 2.4).evaluate(&[2.4]));
        // all of the last n must exceed
        assert!(!r(RuleKind::SingleValue, 2, 2.0).evaluate(&[2.1, 1.0]));
        assert!(r(RuleKind::SingleValue, 2, 2.0).evaluate(&[2.1, -2.1]));
    }

    #[test]
    fn range_rule() {
        assert!(r(RuleKind::Range, 2, 4.3).evaluate(&[9.0, -2.0, 2.5]));
        assert!(!r(RuleKind::Range, 2, 4.3).evaluate(&[-2.0, 2.0]));
    }

    #[test]
    fn mean_rule() {
        assert!(!r(RuleKind::Mean, 2, 1.9).evaluate(&[5.0, 1.0, 1.0]));
        assert!(r(RuleKind::Mean, 2, 1.9).evaluate(&[-2.0, -2.0]));
    }

    #[test]
    fn std_dev_rule_uses_n_minus_one() {
        // sd of [0, 2] with divisor 1 is sqrt(2) = 1.4142
        assert!(r(RuleKind::StdDev, 2, 1.0).evaluate(&[0.0, 2.0]));
        assert!(r(RuleKind::StdDev, 2, 1.414).evaluate(&[0.0, 2.0]));
        assert!(!r(RuleKind::StdDev, 2, 1.4143).evaluate(&[0.0, 2.0]));
    }

    #[test]
    fn short_history_is_false() {
        assert!(!r(RuleKind::Range, 4, 0.0).evaluate(&[1.0, 2.0, 3.0]));
        assert!(!r(RuleKind::SingleValue, 1, 0.0).evaluate(&[]));
    }

    #[test]
    fn rule_bounds() {
        assert!(Rule::new(RuleKind::Range, 1, 1.0).is_err());
        assert!(Rule::new(RuleKind::SingleValue, 5, 1.0).is_err());
        assert!(Rule::new(RuleKind::Mean, 2, 6.4).is_err());
        assert!(Rule::new(RuleKind::Mean, 2, -0.1).is_err());
        assert!(Rule::new(RuleKind::Mean, 2, 6.3).is_ok());
    }

    #[test]
    fn precedence() {
        let a = r(RuleKind::SingleValue, 1, 1.0);
        let p = Procedure::new(vec![a, a, a], vec![Operator::or(0), Operator::and(3)]).unwrap();
        let t = build_expr(&p).unwrap();
        let expected = ExprTree::Node {
            op: OperatorKind::Or,
            left: Box::new(ExprTree::Leaf(0)),
            right: Box::new(ExprTree::Node {
                op: OperatorKind::And,
                left: Box::new(ExprTree::Leaf(1)),
                right: Box::new(ExprTree::Leaf(2)),
            }),
        };
        assert_eq!(t, expected);

        let p = Procedure::new(vec![a, a, a], vec![Operator::or(1), Operator::or(1)]).unwrap();
        let t = build_expr(&p).unwrap();
        let expected = ExprTree::Node {
            op: OperatorKind::Or,
            left: Box::new(ExprTree::Node {
                op: OperatorKind::Or,
                left: Box::new(ExprTree::Leaf(0)),
                right: Box::new(ExprTree::Leaf(1)),
            }),
            right: Box::new(ExprTree::Leaf(2)),
        };
        assert_eq!(t, expected);
    }

    #[test]
    fn two_rules_one_node() {
        let a = r(RuleKind::SingleValue, 1, 1.0);
        let p = Procedure::new(vec![a, a], vec![Operator::and(2)]).unwrap();
        assert!(matches!(build_expr(&p), Some(ExprTree::Node { .. })));
    }

    #[test]
    fn empty_never_rejects() {
        let p = Procedure::empty();
        assert!(!evaluate_procedure(build_expr(&p).as_ref(), p.rules(), &[10.0, 10.0]));
        assert_eq!(canonical_notation(&p), "NONE");
    }

    #[test]
    fn procedure_evaluation() {
        let p =
            Procedure::new(vec![r(RuleKind::SingleValue, 1, 2.7), r(RuleKind::Mean, 2, 1.9)], vec![Operator::or(0)])
                .unwrap();
        assert!(evaluate_procedure(p.expr().as_ref(), p.rules(), &[0.1, 2.8]));

        let p = Procedure::new(
            vec![r(RuleKind::SingleValue, 1, 2.2), r(RuleKind::Mean, 2, 1.9), r(RuleKind::Range, 4, 4.3)],
            vec![Operator::and(1), Operator::or(0)],
        )
        .unwrap();
        assert!(!evaluate_procedure(p.expr().as_ref(), p.rules(), &[0.0, 0.0, 0.0, 2.3]));
    }

    #[test]
    fn notation() {
        let s = |l| r(RuleKind::SingleValue, 1, l);
        assert_eq!(Procedure::single(s(2.7)).notation(), "S(1,2.7)");
        let p = Procedure::new(
            vec![s(3.2), r(RuleKind::Range, 4, 4.6), r(RuleKind::Mean, 2, 1.9)],
            vec![Operator::or(0), Operator::or(0)],
        )
        .unwrap();
        assert_eq!(p.notation(), "S(1,3.2) OR R(4,4.6) OR M(2,1.9)");
        let p = Procedure::new(
            vec![s(1.9), r(RuleKind::Range, 4, 4.2), r(RuleKind::Mean, 2, 1.9)],
            vec![Operator::and(0), Operator::or(1)],
        )
        .unwrap();
        assert_eq!(p.notation(), "S(1,1.9) AND (R(4,4.2) OR M(2,1.9))");
        let p = Procedure::new(
            vec![s(2.2), r(RuleKind::Mean, 2, 1.9), r(RuleKind::Range, 4, 4.3)],
            vec![Operator::and(2), Operator::or(1)],
        )
        .unwrap();
        assert_eq!(p.notation(), "(S(1,2.2) AND M(2,1.9)) OR R(4,4.3)");
    }

    #[test]
    fn flatten_reproduces_sequence() {
        let a = r(RuleKind::SingleValue, 1, 1.0);
        let ops = vec![Operator::and(2), Operator::or(0), Operator::and(1)];
        let p = Procedure::new(vec![a; 4], ops.clone()).unwrap();
        let (leaves, kinds) = build_expr(&p).unwrap().flatten();
        assert_eq!(leaves, vec![0, 1, 2, 3]);
        assert_eq!(kinds, ops.iter().map(|o| o.kind).collect::<Vec<_>>());
    }

    #[test]
    fn operator_count_mismatch() {
        let a = r(RuleKind::SingleValue, 1, 1.0);
        assert!(Procedure::new(vec![a, a], vec![]).is_err());
        assert!(Procedure::new(vec![], vec![Operator::or(0)]).is_err());
    }

    #[test]
    fn proposition_counts() {
        assert_eq!(count_distinct_propositions(1).unwrap(), 4);
        assert!(count_distinct_propositions(0).is_err());
        assert!(count_distinct_propositions(5).is_err());
    }
}
