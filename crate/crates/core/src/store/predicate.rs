//! Conjunctions of numeric comparisons over record fields, e.g.
//! `flux>10 and pass_id<=25`. The literals `true` and `false` stand alone.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::record::Detection;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Field {
    DetId,
    PassId,
    Mjd,
    Ra,
    Dec,
    Flux,
    FluxErr,
    Flags,
    Zone,
    MasterId,
}

impl Field {
    pub const ALL: [(&'static str, Field); 10] = [
        ("det_id", Field::DetId),
        ("pass_id", Field::PassId),
        ("mjd", Field::Mjd),
        ("ra", Field::Ra),
        ("dec", Field::Dec),
        ("flux", Field::Flux),
        ("flux_err", Field::FluxErr),
        ("flags", Field::Flags),
        ("zone", Field::Zone),
        ("master_id", Field::MasterId),
    ];

    pub fn name(self) -> &'static str {
        Self::ALL.iter().find(|(_, f)| *f == self).map(|(n, _)| *n).unwrap_or("?")
    }

    pub fn get(self, d: &Detection) -> f64 {
        match self {
            Field::DetId => d.det_id as f64,
            Field::PassId => f64::from(d.pass_id),
            Field::Mjd => d.mjd,
            Field::Ra => d.ra,
            Field::Dec => d.dec,
            Field::Flux => f64::from(d.flux),
            Field::FluxErr => f64::from(d.flux_err),
            Field::Flags => f64::from(d.flags),
            Field::Zone => f64::from(d.zone),
            Field::MasterId => d.master_id as f64,
        }
    }
}

impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|(n, _)| *n == s)
            .map(|(_, f)| *f)
            .ok_or_else(|| Error::validation(format!("unknown field {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl CmpOp {
    fn symbol(self) -> &'static str {
        match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        }
    }

    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub field: Field,
    pub op: CmpOp,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predicate {
    terms: Vec<Comparison>,
    never: bool,
}

impl Predicate {
    pub fn always() -> Self {
        Self { terms: Vec::new(), never: false }
    }

    pub fn never() -> Self {
        Self { terms: Vec::new(), never: true }
    }

    pub fn from_terms(terms: Vec<Comparison>) -> Self {
        Self { terms, never: false }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.is_empty() || t.eq_ignore_ascii_case("true") {
            return Ok(Self::always());
        }
        if t.eq_ignore_ascii_case("false") {
            return Ok(Self::never());
        }
        let mut terms = Vec::new();
        for clause in split_and(t) {
            terms.push(parse_comparison(clause.trim())?);
        }
        Ok(Self::from_terms(terms))
    }

    pub fn matches(&self, d: &Detection) -> bool {
        !self.never && self.terms.iter().all(|c| c.op.apply(c.field.get(d), c.value))
    }

    pub fn terms(&self) -> &[Comparison] {
        &self.terms
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.never {
            return f.write_str("false");
        }
        if self.terms.is_empty() {
            return f.write_str("true");
        }
        for (i, c) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" and ")?;
            }
            write!(f, "{}{}{}", c.field.name(), c.op.symbol(), c.value)?;
        }
        Ok(())
    }
}

fn split_and(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = s;
    loop {
        let lower = rest.to_ascii_lowercase();
        let and = lower.find(" and ").map(|i| (i, 5));
        let amp = lower.find("&&").map(|i| (i, 2));
        let cut = match (and, amp) {
            (Some(a), Some(b)) => Some(if a.0 < b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        match cut {
            Some((i, len)) => {
                out.push(&rest[..i]);
                rest = &rest[i + len..];
            }
            None => {
                out.push(rest);
                return out;
            }
        }
    }
}

fn parse_comparison(s: &str) -> Result<Comparison> {
    const OPS: [(&str, CmpOp); 7] = [
        ("<=", CmpOp::Le),
        (">=", CmpOp::Ge),
        ("==", CmpOp::Eq),
        ("!=", CmpOp::Ne),
        ("<", CmpOp::Lt),
        (">", CmpOp::Gt),
        ("=", CmpOp::Eq),
    ];
    for (sym, op) in OPS {
        if let Some(i) = s.find(sym) {
            let field: Field = s[..i].trim().parse()?;
            let rhs = s[i + sym.len()..].trim();
            let value: f64 = rhs
                .parse()
                .map_err(|_| Error::validation(format!("bad number {rhs:?} in {s:?}")))?;
            return Ok(Comparison { field, op, value });
        }
    }
    Err(Error::validation(format!("no comparison operator in {s:?}")))
}
