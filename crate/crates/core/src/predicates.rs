//! Predicates over encoded columns, their bitwise factorization, and training-set generation.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{factorize_value, ColumnMeta, FactorizationSpec};
use crate::error::{Error, Result};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<=")]
    Le,
}

impl CmpOp {
    pub const ALL: [CmpOp; 5] = [CmpOp::Eq, CmpOp::Gt, CmpOp::Lt, CmpOp::Ge, CmpOp::Le];

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "=",
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::Ge => ">=",
            CmpOp::Le => "<=",
        }
    }

    pub fn parse(s: &str) -> Result<CmpOp> {
        CmpOp::ALL.into_iter().find(|o| o.symbol() == s).ok_or_else(|| Error::Usage(format!("unknown operator {s:?}")))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn eval<T: Ord>(self, a: T, b: T) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Gt => a > b,
            CmpOp::Lt => a < b,
            CmpOp::Ge => a >= b,
            CmpOp::Le => a <= b,
        }
    }

    /// `>=` becomes `>`, `<=` becomes `<`; the others are unchanged.
    pub fn strict(self) -> CmpOp {
        match self {
            CmpOp::Ge => CmpOp::Gt,
            CmpOp::Le => CmpOp::Lt,
            o => o,
        }
    }

    /// The complementary half-line: `x op c` fails exactly when `x op.complement() c` holds.
    pub fn complement(self) -> Option<CmpOp> {
        match self {
            CmpOp::Eq => None,
            CmpOp::Gt => Some(CmpOp::Le),
            CmpOp::Le => Some(CmpOp::Gt),
            CmpOp::Lt => Some(CmpOp::Ge),
            CmpOp::Ge => Some(CmpOp::Lt),
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// `column op value` over codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub column: usize,
    pub op: CmpOp,
    pub value: u32,
}

impl Predicate {
    pub fn new(column: usize, op: CmpOp, value: u32) -> Self {
        Self { column, op, value }
    }

    pub fn matches(&self, code: u32) -> bool {
        self.op.eval(code, self.value)
    }

    /// Translates `column op literal` into code predicates with identical row semantics.
    /// Literals outside the domain clamp to the nearest code; comparisons never select NULL.
    pub fn from_literal(column: usize, meta: &ColumnMeta, op: CmpOp, lit: &Value) -> Vec<Predicate> {
        let never = vec![Predicate::new(column, CmpOp::Lt, 0)];
        if lit.is_null() {
            return never;
        }
        let dom = &meta.domain;
        let ndv = dom.len() as u32;
        let nn = meta.has_null() as u32;
        let below = dom.partition_point(|v| v < lit) as u32;
        let at_or_below = dom.partition_point(|v| v <= lit) as u32;
        let mut out = Vec::new();
        match op {
            CmpOp::Eq => {
                if at_or_below == below {
                    return never;
                }
                out.push(Predicate::new(column, CmpOp::Eq, below));
            }
            CmpOp::Gt | CmpOp::Ge => {
                let first = if op == CmpOp::Gt { at_or_below } else { below };
                if first == ndv {
                    return never;
                }
                if first > 0 {
                    out.push(if op == CmpOp::Gt {
                        Predicate::new(column, CmpOp::Gt, first - 1)
                    } else {
                        Predicate::new(column, CmpOp::Ge, first)
                    });
                }
            }
            CmpOp::Lt | CmpOp::Le => {
                let end = if op == CmpOp::Lt { below } else { at_or_below };
                if end <= nn {
                    return never;
                }
                if end < ndv {
                    out.push(if op == CmpOp::Lt {
                        Predicate::new(column, CmpOp::Lt, end)
                    } else {
                        Predicate::new(column, CmpOp::Le, end - 1)
                    });
                }
                if nn == 1 {
                    out.push(Predicate::new(column, CmpOp::Gt, 0));
                }
            }
        }
        out
    }
}

/// Merged constraint on one column, as an inclusive code interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnFilter {
    All,
    Empty,
    Range { lo: u32, hi: u32 },
}

impl ColumnFilter {
    pub fn from_predicates(preds: &[Predicate], ndv: usize) -> ColumnFilter {
        let top = ndv as i64 - 1;
        let (mut lo, mut hi) = (0i64, top);
        for p in preds {
            let v = p.value as i64;
            let (a, b) = match p.op {
                CmpOp::Eq => (v, v),
                CmpOp::Gt => (v + 1, top),
                CmpOp::Ge => (v, top),
                CmpOp::Lt => (0, v - 1),
                CmpOp::Le => (0, v),
            };
            lo = lo.max(a);
            hi = hi.min(b);
        }
        if lo > hi {
            ColumnFilter::Empty
        } else if lo == 0 && hi == top {
            ColumnFilter::All
        } else {
            ColumnFilter::Range { lo: lo as u32, hi: hi as u32 }
        }
    }

    pub fn contains(&self, code: u32) -> bool {
        match *self {
            ColumnFilter::All => true,
            ColumnFilter::Empty => false,
            ColumnFilter::Range { lo, hi } => lo <= code && code <= hi,
        }
    }

    pub fn mask(&self, domain_size: usize) -> BitMask {
        BitMask((0..domain_size as u32).map(|c| self.contains(c)).collect())
    }

    /// Canonical predicate form: one `=`, or up to one `>=` and one `<=`.
    /// Returns `None` for an empty interval.
    pub fn canonical(&self, column: usize, ndv: usize) -> Option<Vec<Predicate>> {
        match *self {
            ColumnFilter::All => Some(vec![]),
            ColumnFilter::Empty => None,
            ColumnFilter::Range { lo, hi } if lo == hi => Some(vec![Predicate::new(column, CmpOp::Eq, lo)]),
            ColumnFilter::Range { lo, hi } => {
                let mut v = Vec::with_capacity(2);
                if lo > 0 {
                    v.push(Predicate::new(column, CmpOp::Ge, lo));
                }
                if (hi as usize) + 1 < ndv {
                    v.push(Predicate::new(column, CmpOp::Le, hi));
                }
                Some(v)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask(pub Vec<bool>);

impl BitMask {
    pub fn ones(n: usize) -> Self {
        BitMask(vec![true; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&b| b).count()
    }

    pub fn weighted_sum(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).filter(|(&b, _)| b).map(|(_, &w)| w).sum()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| b as u8 as f64).collect()
    }
}

/// Mask of codes satisfying every predicate in a conjunction.
pub fn indicator_mask(preds: &[Predicate], domain_size: usize) -> BitMask {
    BitMask((0..domain_size as u32).map(|c| preds.iter().all(|p| p.matches(c))).collect())
}

/// Per-column predicate lists; an empty list is a wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PredicateSet {
    pub per_column: Vec<Vec<Predicate>>,
}

impl PredicateSet {
    pub fn wildcard(n_columns: usize) -> Self {
        Self { per_column: vec![Vec::new(); n_columns] }
    }

    pub fn from_predicates(n_columns: usize, preds: impl IntoIterator<Item = Predicate>) -> Result<Self> {
        let mut s = Self::wildcard(n_columns);
        for p in preds {
            s.push(p)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, p: Predicate) -> Result<()> {
        let n = self.per_column.len();
        let slot = self
            .per_column
            .get_mut(p.column)
            .ok_or_else(|| Error::Shape(format!("predicate on column {} of a {n}-column table", p.column)))?;
        slot.push(p);
        Ok(())
    }

    pub fn n_columns(&self) -> usize {
        self.per_column.len()
    }

    pub fn is_wildcard(&self, column: usize) -> bool {
        self.per_column[column].is_empty()
    }

    pub fn filter(&self, column: usize, ndv: usize) -> ColumnFilter {
        ColumnFilter::from_predicates(&self.per_column[column], ndv)
    }

    pub fn matches_row(&self, codes: &[u32]) -> bool {
        self.per_column.iter().zip(codes).all(|(ps, &c)| ps.iter().all(|p| p.matches(c)))
    }

    /// Merges each column to its canonical form. `None` if any column is contradictory.
    pub fn canonicalize(&self, ndvs: &[usize]) -> Option<PredicateSet> {
        let mut out = PredicateSet::wildcard(self.n_columns());
        for (c, &ndv) in ndvs.iter().enumerate() {
            out.per_column[c] = self.filter(c, ndv).canonical(c, ndv)?;
        }
        Some(out)
    }
}

/// One sub-column term `C^j op v^j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorTerm {
    pub sub_column: usize,
    pub op: CmpOp,
    pub value: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorizedPredicate {
    pub terms: Vec<FactorTerm>,
}

pub fn factorize_predicate(p: &Predicate, spec: &FactorizationSpec) -> Result<FactorizedPredicate> {
    let parts = factorize_value(p.value as u64, spec)?;
    Ok(FactorizedPredicate {
        terms: parts.into_iter().enumerate().map(|(j, v)| FactorTerm { sub_column: j, op: p.op, value: v }).collect(),
    })
}

/// Evaluates the disjunctive expansion: clause j requires equality on every earlier
/// sub-column and the comparison on sub-column j. Non-final clauses of `>=` / `<=`
/// compare strictly.
pub fn expansion_eval(fp: &FactorizedPredicate, sub_codes: &[u32]) -> Result<bool> {
    if sub_codes.len() != fp.terms.len() {
        return Err(Error::Shape(format!("{} sub-codes against {} terms", sub_codes.len(), fp.terms.len())));
    }
    let k = fp.terms.len();
    let op = fp.terms[0].op;
    if op == CmpOp::Eq {
        return Ok(fp.terms.iter().zip(sub_codes).all(|(t, &c)| c == t.value));
    }
    for (j, (t, &c)) in fp.terms.iter().zip(sub_codes).enumerate() {
        let clause_op = if j + 1 == k { t.op } else { t.op.strict() };
        if clause_op.eval(c, t.value) {
            return Ok(true);
        }
        if c != t.value {
            return Ok(false);
        }
    }
    Ok(false)
}

/// Knobs for [`generate_training_predicates`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredicateGenConfig {
    /// Probability that a given column is constrained.
    pub coverage: f64,
    /// Probability that a range predicate gets a second, opposite bound.
    pub two_sided: f64,
}

impl Default for PredicateGenConfig {
    fn default() -> Self {
        Self { coverage: 0.5, two_sided: 0.3 }
    }
}

/// A constraint satisfied by `code` on a domain of `ndv` codes. Range bounds come from
/// a cut drawn without looking at `code`; the side containing `code` is kept.
fn draw_bound<R: Rng + ?Sized>(rng: &mut R, column: usize, code: u32, ndv: u32, op: CmpOp) -> Predicate {
    match op {
        CmpOp::Eq => Predicate::new(column, CmpOp::Eq, code),
        CmpOp::Gt | CmpOp::Le => {
            let cut = rng.random_range(0..ndv - 1);
            let p = Predicate::new(column, op, cut);
            if p.matches(code) {
                p
            } else {
                Predicate::new(column, op.complement().unwrap(), cut)
            }
        }
        CmpOp::Lt | CmpOp::Ge => {
            let cut = rng.random_range(1..ndv);
            let p = Predicate::new(column, op, cut);
            if p.matches(code) {
                p
            } else {
                Predicate::new(column, op.complement().unwrap(), cut)
            }
        }
    }
}

/// Random predicate set satisfied by `tuple`. Which columns are constrained and which
/// operators are used does not depend on the tuple.
pub fn generate_training_predicates<R: Rng + ?Sized>(
    tuple: &[u32],
    ndvs: &[usize],
    cfg: &PredicateGenConfig,
    rng: &mut R,
) -> PredicateSet {
    let mut set = PredicateSet::wildcard(tuple.len());
    for (c, (&code, &ndv)) in tuple.iter().zip(ndvs).enumerate() {
        if !rng.random_bool(cfg.coverage) {
            continue;
        }
        let op = CmpOp::ALL[rng.random_range(0..5)];
        let ndv = ndv as u32;
        if ndv < 2 || op == CmpOp::Eq {
            set.per_column[c].push(Predicate::new(c, CmpOp::Eq, code));
            continue;
        }
        set.per_column[c].push(draw_bound(rng, c, code, ndv, op));
        if rng.random_bool(cfg.two_sided) {
            let op2 = [CmpOp::Gt, CmpOp::Lt, CmpOp::Ge, CmpOp::Le][rng.random_range(0..4)];
            set.per_column[c].push(draw_bound(rng, c, code, ndv, op2));
        }
    }
    set
}
