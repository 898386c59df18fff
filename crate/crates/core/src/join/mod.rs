//! Join cardinality from per-table key joints.
//!
//! Plans are left-deep: step `k` joins the running relation with `tables[k]` on
//! `carried ops[k-1] tables[k].key`, and the running relation then carries the larger
//! of the two keys (for `=` they coincide).

mod cache;

use sha2::{Digest, Sha256};

pub use cache::{CacheEntry, SchemaCardCache};

use crate::catalog::{KeyDistribution, TableCatalog};
use crate::dist::{DistVector, DomainRef};
use crate::error::{Error, Result};
use crate::estimator::TableEstimator;
use crate::predicates::{CmpOp, PredicateSet};
use crate::value::{Value, ValueKind};

/// A resolved query over encoded tables.
#[derive(Debug, Clone, PartialEq)]
pub struct JoinQuery {
    pub tables: Vec<String>,
    /// `ops[k - 1]` joins the running relation with `tables[k]`.
    pub ops: Vec<CmpOp>,
    /// Per table: NULL-padded where its key is missing (the partner side is preserved).
    /// On `tables[0]` this concerns the first step only.
    pub outer: Vec<bool>,
    pub predicates: Vec<PredicateSet>,
}

impl JoinQuery {
    pub fn validate(&self) -> Result<()> {
        let n = self.tables.len();
        if n < 2 {
            return Err(Error::Shape("a join needs at least two tables".into()));
        }
        if self.ops.len() != n - 1 || self.outer.len() != n || self.predicates.len() != n {
            return Err(Error::Shape(format!(
                "{n} tables with {} ops, {} outer flags, {} predicate sets",
                self.ops.len(),
                self.outer.len(),
                self.predicates.len()
            )));
        }
        for (i, &o) in self.outer.iter().enumerate() {
            let op = self.ops[i.max(1) - 1];
            if o && op != CmpOp::Eq {
                return Err(Error::Unsupported(format!("outer join on a {op} edge (only = is supported)")));
            }
        }
        Ok(())
    }

    /// Identifies the unfiltered join this query runs over.
    pub fn plan_signature(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tables.iter().enumerate() {
            if i > 0 {
                s.push(' ');
                s.push_str(self.ops[i - 1].symbol());
                s.push(' ');
            }
            s.push_str(t);
            if self.outer[i] {
                s.push('+');
            }
        }
        s
    }
}

/// Sorted union of member key dictionaries, NULL excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDomain {
    pub values: Vec<Value>,
    /// Per member, native key code to aligned slot (`None` for the NULL code).
    pub maps: Vec<Vec<Option<usize>>>,
    pub fingerprint: u64,
}

impl AlignedDomain {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn domain_ref(&self) -> DomainRef {
        DomainRef::Aligned { fingerprint: self.fingerprint }
    }

    /// Moves a member's native-domain vector onto the aligned slots.
    pub fn reindex(&self, member: usize, v: &DistVector) -> Result<DistVector> {
        let map = &self.maps[member];
        if v.len() != map.len() {
            return Err(Error::Shape(format!("vector of {} entries for a key domain of {}", v.len(), map.len())));
        }
        let mut out = vec![0.0; self.len()];
        for (x, slot) in v.values.iter().zip(map) {
            if let Some(s) = slot {
                out[*s] = *x;
            }
        }
        Ok(DistVector::new(out, self.domain_ref()))
    }

    /// Slots holding one of the member's own key values.
    pub fn presence(&self, member: usize) -> Vec<bool> {
        let mut p = vec![false; self.len()];
        for s in self.maps[member].iter().flatten() {
            p[*s] = true;
        }
        p
    }
}

fn key_family(kind: Option<ValueKind>) -> Option<u8> {
    match kind {
        Some(ValueKind::Int) | Some(ValueKind::Float) => Some(0),
        Some(ValueKind::Str) => Some(1),
        None => None,
    }
}

pub fn align_domains(tables: &[&TableCatalog]) -> Result<AlignedDomain> {
    let families: Vec<_> = tables.iter().map(|t| key_family(t.key().kind)).collect();
    if families.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Schema(format!(
            "join keys of {} are not comparable",
            tables.iter().map(|t| t.name.as_str()).collect::<Vec<_>>().join(", ")
        )));
    }
    let mut values: Vec<Value> =
        tables.iter().flat_map(|t| t.key().domain.iter().filter(|v| !v.is_null()).cloned()).collect();
    values.sort();
    values.dedup();
    let maps = tables
        .iter()
        .map(|t| t.key().domain.iter().map(|v| if v.is_null() { None } else { values.binary_search(v).ok() }).collect())
        .collect();
    let mut h = Sha256::new();
    for v in &values {
        h.update(v.to_string().as_bytes());
        h.update([0u8]);
    }
    let fingerprint = u64::from_le_bytes(h.finalize()[..8].try_into().unwrap());
    Ok(AlignedDomain { values, maps, fingerprint })
}

fn cumsum(v: &[f64], exclusive: bool) -> Vec<f64> {
    let mut acc = 0.0;
    v.iter()
        .map(|&x| {
            let before = acc;
            acc += x;
            if exclusive {
                before
            } else {
                acc
            }
        })
        .collect()
}

/// The op-specific transform followed by the elementwise product. Indexed by the
/// carried key of the result.
pub fn join_product(op: CmpOp, left: &[f64], right: &[f64]) -> Vec<f64> {
    let (l, r): (Vec<f64>, Vec<f64>) = match op {
        CmpOp::Eq => (left.to_vec(), right.to_vec()),
        CmpOp::Ge => (left.to_vec(), cumsum(right, false)),
        CmpOp::Gt => (left.to_vec(), cumsum(right, true)),
        CmpOp::Le => (cumsum(left, false), right.to_vec()),
        CmpOp::Lt => (cumsum(left, true), right.to_vec()),
    };
    l.iter().zip(&r).map(|(a, b)| a * b).collect()
}

/// `P(KEY, Q)` of the joined pair: transformed product of the conditioned vectors over
/// the total mass of the transformed product of the unconditioned ones.
pub fn combine_pair(
    pl_q: &DistVector,
    pr_q: &DistVector,
    pl: &DistVector,
    pr: &DistVector,
    op: CmpOp,
) -> Result<DistVector> {
    let n = pl_q.len();
    if [pr_q.len(), pl.len(), pr.len()].iter().any(|&m| m != n) {
        return Err(Error::Shape("combine_pair operands on different domains".into()));
    }
    let den: f64 = join_product(op, &pl.values, &pr.values).iter().sum();
    if den <= 0.0 {
        return Err(Error::ZeroJoin);
    }
    let num = join_product(op, &pl_q.values, &pr_q.values);
    Ok(DistVector::new(num.iter().map(|x| x / den).collect(), pl_q.domain.clone()))
}

/// Sets slots the member lacks, but its partner has, to `unit`.
pub fn pad_missing(v: &[f64], own: &[bool], partner: &[bool], unit: f64) -> Vec<f64> {
    v.iter().zip(own.iter().zip(partner)).map(|(&x, (&o, &p))| if !o && p { unit } else { x }).collect()
}

/// Outer-join padding of one member: every aligned slot outside its native key domain
/// becomes 1.
pub fn outer_join_pad(joint: &DistVector, aligned: &AlignedDomain, member: usize) -> DistVector {
    let own = aligned.presence(member);
    let all = vec![true; own.len()];
    DistVector::new(pad_missing(&joint.values, &own, &all, 1.0), joint.domain.clone())
}

/// Exact unfiltered join size from aligned per-key row counts.
pub fn schema_cardinality(key_counts: &[Vec<f64>], ops: &[CmpOp], outer: &[bool]) -> Result<f64> {
    if key_counts.len() < 2 || ops.len() + 1 != key_counts.len() || outer.len() != key_counts.len() {
        return Err(Error::Shape("schema cardinality needs n tables, n-1 ops, n flags".into()));
    }
    let present = |c: &[f64]| c.iter().map(|&x| x > 0.0).collect::<Vec<_>>();
    let mut acc = key_counts[0].clone();
    for k in 1..key_counts.len() {
        let mut right = key_counts[k].clone();
        let (pl, pr) = (present(&acc), present(&right));
        if k == 1 && outer[0] {
            acc = pad_missing(&acc, &pl, &pr, 1.0);
        }
        if outer[k] {
            right = pad_missing(&right, &pr, &pl, 1.0);
        }
        acc = join_product(ops[k - 1], &acc, &right);
    }
    Ok(acc.iter().sum())
}

/// Count-based estimate `sum_v prod_i p_i(v, Q) |T_i|` for an inner equi join.
pub fn count_based_cardinality(joints: &[DistVector], sizes: &[u64]) -> Result<f64> {
    if joints.len() != sizes.len() || joints.is_empty() {
        return Err(Error::Shape("one size per joint required".into()));
    }
    let n = joints[0].len();
    if joints.iter().any(|j| j.len() != n) {
        return Err(Error::Shape("joints on different domains".into()));
    }
    Ok((0..n).map(|v| joints.iter().zip(sizes).map(|(j, &s)| j.values[v] * s as f64).product::<f64>()).sum())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub cardinality: f64,
    pub selectivity: f64,
    pub schema_card: f64,
    /// The unconditioned join is empty; the estimate is 0 by policy.
    pub zero_join: bool,
}

/// Member of a join with everything inference needs, already on the aligned domain.
#[derive(Debug, Clone)]
pub struct AlignedMember {
    pub conditioned: DistVector,
    pub unconditioned: DistVector,
    /// True unfiltered rows per key.
    pub key_counts: Vec<f64>,
    /// Row count the joints are normalized by; a NULL-padded row weighs `1 / row_count`.
    pub row_count: u64,
}

/// `card_J` times the selectivity from the left-deep recursion.
pub fn infer_cardinality(q: &JoinQuery, members: &[AlignedMember], card_j: f64) -> Result<Estimate> {
    q.validate()?;
    if members.len() != q.tables.len() {
        return Err(Error::Shape("one member per table required".into()));
    }
    let present = |c: &[f64]| c.iter().map(|&x| x > 0.0).collect::<Vec<_>>();
    let m0 = &members[0];
    let mut q_vec = m0.conditioned.values.clone();
    let mut u_vec = m0.unconditioned.values.clone();
    let mut exact = m0.key_counts.clone();
    for (k, m) in members.iter().enumerate().skip(1) {
        let op = q.ops[k - 1];
        let (pl, pr) = (present(&exact), present(&m.key_counts));
        let mut right_exact = m.key_counts.clone();
        let (mut rq, mut ru) = (m.conditioned.values.clone(), m.unconditioned.values.clone());
        if k == 1 && q.outer[0] {
            let unit = 1.0 / m0.row_count as f64;
            q_vec = pad_missing(&q_vec, &pl, &pr, unit);
            u_vec = pad_missing(&u_vec, &pl, &pr, unit);
            exact = pad_missing(&exact, &pl, &pr, 1.0);
        }
        if q.outer[k] {
            let unit = 1.0 / m.row_count as f64;
            rq = pad_missing(&rq, &pr, &pl, unit);
            ru = pad_missing(&ru, &pr, &pl, unit);
            right_exact = pad_missing(&right_exact, &pr, &pl, 1.0);
        }
        let u_next = join_product(op, &u_vec, &ru);
        let den: f64 = u_next.iter().sum();
        if den <= 0.0 {
            return Ok(Estimate { cardinality: 0.0, selectivity: 0.0, schema_card: card_j, zero_join: true });
        }
        q_vec = join_product(op, &q_vec, &rq).iter().map(|x| x / den).collect();
        u_vec = u_next.iter().map(|x| x / den).collect();
        exact = join_product(op, &exact, &right_exact);
    }
    let selectivity: f64 = q_vec.iter().sum();
    Ok(Estimate { cardinality: card_j * selectivity, selectivity, schema_card: card_j, zero_join: false })
}

/// Which inference formula to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InferenceMode {
    Selectivity,
    CountBased,
}

/// One table as seen by [`estimate_join`].
pub struct JoinInput<'a> {
    pub estimator: &'a dyn TableEstimator,
    pub key_dist: &'a KeyDistribution,
    /// Content digest used to validate cached schema cardinalities.
    pub digest: &'a str,
}

/// Aligns the members' key domains and builds per-member inputs.
pub fn prepare_members(q: &JoinQuery, inputs: &[JoinInput<'_>]) -> Result<(AlignedDomain, Vec<AlignedMember>)> {
    q.validate()?;
    if inputs.len() != q.tables.len() {
        return Err(Error::Shape("one input per table required".into()));
    }
    let cats: Vec<&TableCatalog> = inputs.iter().map(|i| i.estimator.catalog()).collect();
    let aligned = align_domains(&cats)?;
    let mut members = Vec::with_capacity(inputs.len());
    for (i, inp) in inputs.iter().enumerate() {
        let est = inp.estimator;
        let n_cols = est.catalog().columns.len();
        let cond = est.estimate_key_joint(&q.predicates[i])?;
        let uncond = est.estimate_key_joint(&PredicateSet::wildcard(n_cols))?;
        let counts = DistVector::anonymous(inp.key_dist.counts());
        members.push(AlignedMember {
            conditioned: aligned.reindex(i, &cond)?,
            unconditioned: aligned.reindex(i, &uncond)?,
            key_counts: aligned.reindex(i, &counts)?.values,
            row_count: est.catalog().row_count as u64,
        });
    }
    Ok((aligned, members))
}

/// End-to-end estimate for one query.
pub fn estimate_join(
    q: &JoinQuery,
    inputs: &[JoinInput<'_>],
    cache: Option<&SchemaCardCache>,
    mode: InferenceMode,
) -> Result<Estimate> {
    let (_, members) = prepare_members(q, inputs)?;
    match mode {
        InferenceMode::Selectivity => {
            let compute = || {
                let counts: Vec<Vec<f64>> = members.iter().map(|m| m.key_counts.clone()).collect();
                schema_cardinality(&counts, &q.ops, &q.outer)
            };
            let card_j = match cache {
                Some(c) => {
                    let digests: Vec<String> = inputs.iter().map(|i| i.digest.to_string()).collect();
                    c.get_or_insert_with(&q.plan_signature(), &q.tables, &digests, compute)?
                }
                None => compute()?,
            };
            infer_cardinality(q, &members, card_j)
        }
        InferenceMode::CountBased => {
            if q.ops.iter().any(|&o| o != CmpOp::Eq) || q.outer.iter().any(|&o| o) {
                return Err(Error::Unsupported("count-based inference covers inner equi joins only".into()));
            }
            let joints: Vec<DistVector> = members.iter().map(|m| m.conditioned.clone()).collect();
            let sizes: Vec<u64> = members.iter().map(|m| m.row_count).collect();
            let card = count_based_cardinality(&joints, &sizes)?;
            let card_j = {
                let counts: Vec<Vec<f64>> = members.iter().map(|m| m.key_counts.clone()).collect();
                schema_cardinality(&counts, &q.ops, &q.outer)?
            };
            Ok(Estimate {
                cardinality: card,
                selectivity: if card_j > 0.0 { card / card_j } else { 0.0 },
                schema_card: card_j,
                zero_join: card_j == 0.0,
            })
        }
    }
}
