//! Procedure notation and the built-in reference library.
//!
//! Two notations are accepted:
//!
//! * canonical: `S(1,2.7) OR (M(2,1.9) AND R(4,4.3))`. AND and OR have equal
//!   precedence and associate to the left; parentheses group.
//! * Westgard: `1_2.5s/2_2.0s/R_4s`, terms joined by `/` meaning OR.
//!   `n_ks` maps to `S(n,k)` and `R_ks` to `R(2,k)`.
//!
//! `NONE` denotes the empty, never-rejecting procedure.
//!
//! The generic rules compare absolute deviations, so `2_2s` here means "both
//! of the last two values beyond ±2 SD", on either side of the mean, and
//! `4_1s` is `S(4,1.0)`. Classical same-side Westgard semantics and counting
//! rules such as `10_x` are not expressible.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rules::{ControlLayout, Operator, OperatorKind, Procedure, Rule, RuleKind, MAX_PRIORITY};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntrySource {
    Builtin,
    UserFile(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryEntry {
    pub name: String,
    pub procedure: Procedure,
    pub source: EntrySource,
    pub note: Option<String>,
}

impl LibraryEntry {
    fn builtin(name: &str, note: Option<&str>) -> Self {
        let procedure = parse_procedure(name).expect("builtin library entry parses");
        Self { name: name.to_string(), procedure, source: EntrySource::Builtin, note: note.map(str::to_string) }
    }
}

/// Parses either notation, optionally followed by a control layout suffix
/// `@<levels>x<per_level>` such as `S(1,2.4) @2x1`.
pub fn parse_procedure(text: &str) -> Result<Procedure> {
    let Some(at) = text.rfind('@') else {
        return parse_body(text);
    };
    let suffix = text[at + 1..].trim();
    let bad = || Error::parse(at + 1, format!("expected <levels>x<per_level> after '@', found {suffix:?}"));
    let (levels, per_level) = suffix.split_once('x').ok_or_else(bad)?;
    let levels: u8 = levels.parse().map_err(|_| bad())?;
    let per_level: u8 = per_level.parse().map_err(|_| bad())?;
    let control = ControlLayout::new(levels, per_level).map_err(|e| Error::parse(at + 1, e.to_string()))?;
    Ok(parse_body(&text[..at])?.with_control(control))
}

/// Canonical notation, with the `@LxP` suffix when the procedure carries its
/// own control layout.
pub fn notation_with_control(procedure: &Procedure) -> String {
    match procedure.control {
        Some(c) => format!("{} @{}x{}", procedure.notation(), c.levels, c.per_level),
        None => procedure.notation(),
    }
}

fn parse_body(text: &str) -> Result<Procedure> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(Error::parse(0, "empty procedure text"));
    }
    if trimmed.eq_ignore_ascii_case("none") {
        return Ok(Procedure::empty());
    }
    let offset = text.len() - text.trim_start().len();
    if trimmed.contains('(') {
        CanonicalParser::new(text).parse()
    } else {
        parse_westgard(trimmed, offset)
    }
}

enum Parsed {
    Leaf(Rule),
    Node(OperatorKind, Box<Parsed>, Box<Parsed>),
}

struct CanonicalParser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> CanonicalParser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn parse(mut self) -> Result<Procedure> {
        let tree = self.expr()?;
        self.skip_ws();
        if self.pos != self.src.len() {
            return Err(Error::parse(self.pos, format!("unexpected {:?}", self.rest_preview())));
        }
        let mut rules = Vec::new();
        let mut operators = Vec::new();
        flatten(&tree, 0, &mut rules, &mut operators)?;
        Procedure::new(rules, operators)
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn rest_preview(&self) -> String {
        self.rest().chars().take(8).collect()
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(Error::parse(self.pos, format!("expected {token:?}, found {:?}", self.rest_preview())))
        }
    }

    fn operator(&mut self) -> Option<OperatorKind> {
        self.skip_ws();
        let rest = self.rest();
        for (word, kind) in [("AND", OperatorKind::And), ("OR", OperatorKind::Or)] {
            if rest.starts_with(word) && !rest[word.len()..].starts_with(|c: char| c.is_ascii_alphanumeric()) {
                self.pos += word.len();
                return Some(kind);
            }
        }
        None
    }

    fn expr(&mut self) -> Result<Parsed> {
        let mut lhs = self.term()?;
        while let Some(op) = self.operator() {
            let rhs = self.term()?;
            lhs = Parsed::Node(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Parsed> {
        if self.eat("(") {
            let inner = self.expr()?;
            self.expect(")")?;
            return Ok(inner);
        }
        self.skip_ws();
        let start = self.pos;
        let kind = self
            .rest()
            .chars()
            .next()
            .and_then(RuleKind::from_symbol)
            .ok_or_else(|| Error::parse(start, format!("expected a rule, found {:?}", self.rest_preview())))?;
        self.pos += 1;
        self.expect("(")?;
        self.skip_ws();
        let n_pos = self.pos;
        let n = self.number()?;
        if n.fract() != 0.0 {
            return Err(Error::parse(n_pos, "sample size must be an integer"));
        }
        self.expect(",")?;
        self.skip_ws();
        let limit = self.number()?;
        self.expect(")")?;
        let n = u8::try_from(n as u64).map_err(|_| Error::UnsupportedRule(format!("sample size {n}")))?;
        Ok(Parsed::Leaf(Rule::new(kind, n, limit)?))
    }

    fn number(&mut self) -> Result<f64> {
        let rest = self.rest();
        let len = rest.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(rest.len());
        let text = &rest[..len];
        let value = text
            .parse::<f64>()
            .map_err(|_| Error::parse(self.pos, format!("expected a number, found {:?}", self.rest_preview())))?;
        self.pos += len;
        Ok(value)
    }
}

/// In-order flattening with priorities that make precedence climbing rebuild
/// the same tree: a left child of the same kind keeps its parent's priority,
/// anything else nested binds one level tighter.
fn flatten(t: &Parsed, priority: u8, rules: &mut Vec<Rule>, ops: &mut Vec<Operator>) -> Result<()> {
    match t {
        Parsed::Leaf(r) => rules.push(*r),
        Parsed::Node(kind, left, right) => {
            if priority > MAX_PRIORITY {
                return Err(Error::UnsupportedRule(format!(
                    "grouping nested deeper than {} operator priorities",
                    MAX_PRIORITY + 1
                )));
            }
            let child = |c: &Parsed, is_left: bool| match c {
                Parsed::Node(k, ..) if is_left && k == kind => priority,
                _ => priority + 1,
            };
            flatten(left, child(left, true), rules, ops)?;
            ops.push(Operator { kind: *kind, priority });
            flatten(right, child(right, false), rules, ops)?;
        }
    }
    Ok(())
}

fn parse_westgard(text: &str, offset: usize) -> Result<Procedure> {
    let mut rules = Vec::new();
    let mut pos = offset;
    for term in text.split('/') {
        let lead = term.len() - term.trim_start().len();
        rules.push(westgard_term(term.trim(), pos + lead)?);
        pos += term.len() + 1;
    }
    Ok(Procedure::any_of(rules))
}

fn westgard_term(term: &str, pos: usize) -> Result<Rule> {
    let Some((count, limit)) = term.split_once('_') else {
        return Err(Error::parse(pos, format!("expected <count>_<limit>s, found {term:?}")));
    };
    let limit_pos = pos + count.len() + 1;
    let Some(limit) = limit.strip_suffix('s') else {
        if count.chars().all(|c| c.is_ascii_digit()) && limit == "x" {
            return Err(Error::UnsupportedRule(format!(
                "{term}: counting rules on the mean side are not expressible with the generic rules"
            )));
        }
        return Err(Error::parse(limit_pos, format!("expected a limit ending in 's', found {limit:?}")));
    };
    let value: f64 = limit
        .parse()
        .ok()
        .filter(|v: &f64| v.is_finite() && !limit.starts_with(['+', '-']))
        .ok_or_else(|| Error::parse(limit_pos, format!("bad limit {limit:?}")))?;
    if count == "R" {
        return Rule::new(RuleKind::Range, 2, value);
    }
    if count.is_empty() || !count.chars().all(|c| c.is_ascii_digit()) {
        return Err(Error::parse(pos, format!("bad rule count {count:?}")));
    }
    let n: u64 = count.parse().map_err(|_| Error::parse(pos, format!("bad rule count {count:?}")))?;
    let n = u8::try_from(n).map_err(|_| Error::UnsupportedRule(format!("{term}: count {n}")))?;
    if n == 0 {
        return Err(Error::parse(pos, "rule count must be positive"));
    }
    Rule::new(RuleKind::SingleValue, n, value)
        .map_err(|_| Error::UnsupportedRule(format!("{term}: single-value rules cover 1 to 4 values within 0..6.3 SD")))
}

/// Reference procedures: the single-value sweep `1_2.0s` .. `1_4.0s`, the
/// Westgard multirule without its `10_x` term, and common multirule
/// combinations.
pub fn builtin_library() -> Vec<LibraryEntry> {
    let mut entries: Vec<LibraryEntry> =
        (0..=20).map(|k| LibraryEntry::builtin(&format!("1_{:.1}s", 2.0 + 0.1 * k as f64), None)).collect();
    entries.push(LibraryEntry::builtin(
        "1_3s/2_2s/R_4s/4_1s",
        Some("Westgard multirule without 10_x; 2_2s and 4_1s use absolute deviations"),
    ));
    entries.push(LibraryEntry::builtin("1_3.0s/2_2.0s/R_4.0s", Some("2_2s uses absolute deviations")));
    for name in ["1_2.5s/2_2.0s", "1_2.5s/2_2.0s/R_4s", "1_2.5s/2_2.0s/4_1s", "1_2.5s/2_2.0s/R_4s/4_1s"] {
        entries.push(LibraryEntry::builtin(name, Some("multi-value terms use absolute deviations")));
    }
    entries
}

/// Parses a library file: one `name = notation` per line (a bare notation is
/// its own name), `#` starts a comment.
pub fn parse_library(text: &str, source: &str) -> Result<Vec<LibraryEntry>> {
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let (name, notation) = match line.split_once('=') {
            Some((name, notation)) => (name.trim(), notation),
            None => (line.trim(), line),
        };
        let procedure = parse_procedure(notation).map_err(|e| match e {
            Error::Parse { position, message } => {
                Error::Parse { position, message: format!("{source}:{}: {message}", lineno + 1) }
            }
            other => other,
        })?;
        if name.is_empty() {
            return Err(Error::parse(0, format!("{source}:{}: missing entry name", lineno + 1)));
        }
        entries.push(LibraryEntry {
            name: name.to_string(),
            procedure,
            source: EntrySource::UserFile(source.to_string()),
            note: None,
        });
    }
    Ok(entries)
}

pub fn load_library_file(path: &Path) -> Result<Vec<LibraryEntry>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read library file {}: {e}", path.display())))?;
    parse_library(&text, &path.display().to_string())
}
