//! Fixed-width bit-string encoding of QC procedures.
//!
//! Layout, most significant bit first within every field:
//!
//! ```text
//! rule slot (11 bits):     flag | kind(2) | n code(2) | limit code(6)
//! operator slot (3 bits):  kind (0 AND, 1 OR) | priority(2)
//! string:                  rule 1 .. rule q | op 1 .. op q-1 | [level bit] | [count bits(2)]
//! ```
//!
//! Kind codes: 00 single value, 01 range, 10 mean, 11 standard deviation.
//! The n code `u` maps to `u + 1` for single-value rules and `max(2, u + 1)`
//! otherwise; the limit code `v` maps to `v / 10` SDs. An included rule other
//! than the first included one is joined by the operator slot just before it;
//! every other operator slot is ignored. Every bit pattern decodes.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::rules::{ControlLayout, Operator, OperatorKind, Procedure, Rule, RuleKind};
use crate::{Error, Result};

pub const RULE_BITS: usize = 11;
pub const OPERATOR_BITS: usize = 3;
const LIMIT_BITS: usize = 6;
const LIMIT_CODES: u32 = (1 << LIMIT_BITS) - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenomeLayout {
    /// Maximum number of rules (`q`).
    pub max_rules: usize,
    pub optimize_levels: bool,
    pub optimize_per_level: bool,
    /// Levels used when they are not optimized.
    pub levels: u8,
    /// Measurements per level used when not optimized.
    pub per_level: u8,
}

impl Default for GenomeLayout {
    fn default() -> Self {
        Self { max_rules: 3, optimize_levels: true, optimize_per_level: false, levels: 2, per_level: 1 }
    }
}

#[allow(clippy::len_without_is_empty)]
impl GenomeLayout {
    pub fn validate(&self) -> Result<()> {
        if self.max_rules == 0 {
            return Err(Error::invalid("layout.max_rules must be at least 1"));
        }
        if self.max_rules > 16 {
            return Err(Error::invalid("layout.max_rules must be at most 16"));
        }
        ControlLayout::new(self.levels, self.per_level).map(|_| ())
    }

    pub fn len(&self) -> usize {
        genome_length(self)
    }

    fn operators_offset(&self) -> usize {
        self.max_rules * RULE_BITS
    }

    fn tail_offset(&self) -> usize {
        self.operators_offset() + (self.max_rules - 1) * OPERATOR_BITS
    }
}

/// `11 q + 3 (q - 1)` plus one bit when levels are optimized and two when the
/// per-level count is.
pub fn genome_length(layout: &GenomeLayout) -> usize {
    layout.max_rules * RULE_BITS
        + layout.max_rules.saturating_sub(1) * OPERATOR_BITS
        + usize::from(layout.optimize_levels)
        + 2 * usize::from(layout.optimize_per_level)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Genome {
    bits: Vec<bool>,
}

impl Genome {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(len: usize) -> Self {
        Self { bits: vec![false; len] }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Hex rendering, left-padded with zero bits to whole nibbles.
    pub fn to_hex(&self) -> String {
        let pad = (4 - self.bits.len() % 4) % 4;
        let padded: Vec<bool> = std::iter::repeat_n(false, pad).chain(self.bits.iter().copied()).collect();
        let digits: String = padded
            .chunks(4)
            .map(|c| {
                let v = c.iter().fold(0u32, |acc, &b| acc << 1 | u32::from(b));
                char::from_digit(v, 16).unwrap()
            })
            .collect();
        format!("0x{digits}")
    }

    /// Parses the output of [`Genome::to_hex`] back into `len` bits.
    pub fn from_hex(text: &str, len: usize) -> Result<Self> {
        let digits = text.strip_prefix("0x").unwrap_or(text);
        if digits.len() != len.div_ceil(4) {
            return Err(Error::invalid(format!("{len}-bit genome needs {} hex digits", len.div_ceil(4))));
        }
        let mut bits = Vec::with_capacity(digits.len() * 4);
        for c in digits.chars() {
            let v = c.to_digit(16).ok_or_else(|| Error::invalid(format!("bad hex digit {c:?}")))?;
            bits.extend((0..4).rev().map(|i| v >> i & 1 == 1));
        }
        let pad = bits.len() - len;
        if bits[..pad].iter().any(|&b| b) {
            return Err(Error::invalid("padding bits must be zero"));
        }
        Ok(Self { bits: bits.split_off(pad) })
    }

    fn field(&self, start: usize, width: usize) -> u32 {
        self.bits[start..start + width].iter().fold(0, |acc, &b| acc << 1 | u32::from(b))
    }

    fn set_field(&mut self, start: usize, width: usize, value: u32) {
        for i in 0..width {
            self.bits[start + i] = value >> (width - 1 - i) & 1 == 1;
        }
    }
}

impl fmt::Display for Genome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

fn kind_from_code(code: u32) -> RuleKind {
    RuleKind::ALL[code as usize]
}

fn kind_code(kind: RuleKind) -> u32 {
    RuleKind::ALL.iter().position(|&k| k == kind).unwrap() as u32
}

fn n_from_code(kind: RuleKind, code: u32) -> u8 {
    (code as u8 + 1).max(kind.min_n())
}

pub fn decode(genome: &Genome, layout: &GenomeLayout) -> Result<Procedure> {
    if genome.len() != layout.len() {
        return Err(Error::invalid(format!("genome has {} bits, layout needs {}", genome.len(), layout.len())));
    }
    let mut rules = Vec::new();
    let mut operators = Vec::new();
    for slot in 0..layout.max_rules {
        let base = slot * RULE_BITS;
        if !genome.bits[base] {
            continue;
        }
        let kind = kind_from_code(genome.field(base + 1, 2));
        let n = n_from_code(kind, genome.field(base + 3, 2));
        let limit = genome.field(base + 5, LIMIT_BITS) as f64 / 10.0;
        if !rules.is_empty() {
            let ob = layout.operators_offset() + (slot - 1) * OPERATOR_BITS;
            let kind = if genome.bits[ob] { OperatorKind::Or } else { OperatorKind::And };
            operators.push(Operator { kind, priority: genome.field(ob + 1, 2) as u8 });
        }
        rules.push(Rule { kind, n, limit });
    }
    let mut tail = layout.tail_offset();
    let levels = if layout.optimize_levels {
        tail += 1;
        1 + u8::from(genome.bits[tail - 1])
    } else {
        layout.levels
    };
    let per_level = if layout.optimize_per_level { 1 + genome.field(tail, 2) as u8 } else { layout.per_level };
    let procedure = Procedure::new(rules, operators)?;
    Ok(procedure.with_control(ControlLayout { levels, per_level }))
}

pub fn encode(procedure: &Procedure, layout: &GenomeLayout) -> Result<Genome> {
    layout.validate()?;
    let rules = procedure.rules();
    if rules.len() > layout.max_rules {
        return Err(Error::invalid(format!("procedure has {} rules, layout allows {}", rules.len(), layout.max_rules)));
    }
    let mut genome = Genome::zeros(layout.len());
    for (slot, rule) in rules.iter().enumerate() {
        let base = slot * RULE_BITS;
        if rule.n < rule.kind.min_n() || rule.n > 4 {
            return Err(Error::invalid(format!("{rule}: n outside class bounds")));
        }
        let code = (rule.limit * 10.0).round();
        if !(0.0..=LIMIT_CODES as f64).contains(&code) || (code / 10.0 - rule.limit).abs() > 1e-9 {
            return Err(Error::invalid(format!("{rule}: limit is not a multiple of 0.1 in [0, 6.3]")));
        }
        genome.bits[base] = true;
        genome.set_field(base + 1, 2, kind_code(rule.kind));
        genome.set_field(base + 3, 2, u32::from(rule.n - 1));
        genome.set_field(base + 5, LIMIT_BITS, code as u32);
    }
    for (slot, op) in procedure.operators().iter().enumerate() {
        if op.priority > 3 {
            return Err(Error::invalid("operator priority exceeds 3"));
        }
        let ob = layout.operators_offset() + slot * OPERATOR_BITS;
        genome.bits[ob] = op.kind == OperatorKind::Or;
        genome.set_field(ob + 1, 2, u32::from(op.priority));
    }
    let control = procedure.control.unwrap_or(ControlLayout { levels: layout.levels, per_level: layout.per_level });
    control.validate()?;
    let mut tail = layout.tail_offset();
    if layout.optimize_levels {
        genome.bits[tail] = control.levels == 2;
        tail += 1;
    } else if control.levels != layout.levels {
        return Err(Error::invalid(format!(
            "procedure uses {} levels but the layout fixes {}",
            control.levels, layout.levels
        )));
    }
    if layout.optimize_per_level {
        genome.set_field(tail, 2, u32::from(control.per_level - 1));
    } else if control.per_level != layout.per_level {
        return Err(Error::invalid(format!(
            "procedure uses {} measurements per level but the layout fixes {}",
            control.per_level, layout.per_level
        )));
    }
    Ok(genome)
}

pub fn hamming_distance(a: &Genome, b: &Genome) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("genome lengths differ: {} vs {}", a.len(), b.len())));
    }
    Ok(a.bits.iter().zip(&b.bits).filter(|(x, y)| x != y).count())
}
