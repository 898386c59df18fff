//! Exact COUNT(*) by direct evaluation over decoded key values.

use std::collections::{BTreeMap, BTreeSet};

use crate::catalog::TableCatalog;
use crate::error::{Error, Result};
use crate::join::JoinQuery;
use crate::predicates::{CmpOp, PredicateSet};
use crate::value::Value;

/// Upper bound on group-by-row comparisons for the nested-loop oracle.
pub const ORACLE_BUDGET: u64 = 2_000_000_000;

fn overflow() -> Error {
    Error::Resource("join count overflows u64".into())
}

fn check_tables(tables: &[&TableCatalog], q: &JoinQuery) -> Result<()> {
    q.validate()?;
    if tables.len() != q.tables.len() || tables.iter().zip(&q.tables).any(|(t, n)| &t.name != n) {
        return Err(Error::Shape("oracle tables do not match the query".into()));
    }
    let numeric = |t: &TableCatalog| !matches!(t.key().kind, Some(crate::value::ValueKind::Str));
    if tables.windows(2).any(|w| numeric(w[0]) != numeric(w[1])) {
        return Err(Error::Schema("join keys are not comparable".into()));
    }
    Ok(())
}

/// Keys of rows that pass the predicates; NULL keys never join.
fn filtered_keys(t: &TableCatalog, q: &PredicateSet) -> Vec<Value> {
    let key = t.key();
    (0..t.row_count)
        .filter(|&r| q.matches_row(&t.row_codes(r)))
        .map(|r| key.domain[key.codes[r] as usize].clone())
        .filter(|v| !v.is_null())
        .collect()
}

fn key_set(t: &TableCatalog) -> BTreeSet<Value> {
    t.key().domain.iter().filter(|v| !v.is_null()).cloned().collect()
}

fn bump(map: &mut BTreeMap<Value, u64>, k: &Value, by: u64) -> Result<()> {
    let e = map.entry(k.clone()).or_insert(0);
    *e = e.checked_add(by).ok_or_else(overflow)?;
    Ok(())
}

/// Groups the running relation by carried key and loops over every filtered row of the
/// next table.
pub fn brute_force_cardinality(tables: &[&TableCatalog], q: &JoinQuery) -> Result<u64> {
    check_tables(tables, q)?;
    let mut groups: BTreeMap<Value, u64> = BTreeMap::new();
    for v in filtered_keys(tables[0], &q.predicates[0]) {
        bump(&mut groups, &v, 1)?;
    }
    let mut work = 0u64;
    for k in 1..tables.len() {
        let op = q.ops[k - 1];
        let rows = filtered_keys(tables[k], &q.predicates[k]);
        work = work.saturating_add(groups.len() as u64 * rows.len() as u64);
        if work > ORACLE_BUDGET {
            return Err(Error::Resource(format!("oracle budget of {ORACLE_BUDGET} comparisons exceeded")));
        }
        let mut next = BTreeMap::new();
        for (a, &ca) in &groups {
            for b in &rows {
                if op.eval(a, b) {
                    bump(&mut next, a.max(b), ca)?;
                }
            }
        }
        if q.outer[k] {
            let full = key_set(tables[k]);
            for (a, &ca) in &groups {
                if !full.contains(a) {
                    bump(&mut next, a, ca)?;
                }
            }
        }
        if k == 1 && q.outer[0] {
            let full = key_set(tables[0]);
            for b in &rows {
                if !full.contains(b) {
                    bump(&mut next, b, 1)?;
                }
            }
        }
        groups = next;
    }
    groups.values().try_fold(0u64, |acc, &c| acc.checked_add(c).ok_or_else(overflow))
}

fn grouped_sorted(keys: Vec<Value>) -> Vec<(Value, u64)> {
    let mut keys = keys;
    keys.sort();
    let mut out: Vec<(Value, u64)> = Vec::new();
    for k in keys {
        match out.last_mut() {
            Some((v, c)) if *v == k => *c += 1,
            _ => out.push((k, 1)),
        }
    }
    out
}

fn push_sorted(out: &mut Vec<(Value, u64)>, k: &Value, c: u64) -> Result<()> {
    if c == 0 {
        return Ok(());
    }
    match out.binary_search_by(|(v, _)| v.cmp(k)) {
        Ok(i) => out[i].1 = out[i].1.checked_add(c).ok_or_else(overflow)?,
        Err(i) => out.insert(i, (k.clone(), c)),
    }
    Ok(())
}

/// Running counts of `side` over keys `<=` (or `<`, when `strict`) each probe key.
fn prefix_counts(side: &[(Value, u64)], probes: &[(Value, u64)], strict: bool) -> Result<Vec<u64>> {
    let mut out = Vec::with_capacity(probes.len());
    let (mut i, mut acc) = (0usize, 0u64);
    for (p, _) in probes {
        while i < side.len() && (side[i].0 < *p || (!strict && side[i].0 == *p)) {
            acc = acc.checked_add(side[i].1).ok_or_else(overflow)?;
            i += 1;
        }
        out.push(acc);
    }
    Ok(out)
}

/// Same semantics as [`brute_force_cardinality`], computed by sorting and prefix sums.
pub fn sort_merge_cardinality(tables: &[&TableCatalog], q: &JoinQuery) -> Result<u64> {
    check_tables(tables, q)?;
    let mut left = grouped_sorted(filtered_keys(tables[0], &q.predicates[0]));
    for k in 1..tables.len() {
        let right = grouped_sorted(filtered_keys(tables[k], &q.predicates[k]));
        let mut next: Vec<(Value, u64)> = Vec::new();
        match q.ops[k - 1] {
            CmpOp::Eq => {
                let (mut i, mut j) = (0, 0);
                while i < left.len() && j < right.len() {
                    match left[i].0.cmp(&right[j].0) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            let c = left[i].1.checked_mul(right[j].1).ok_or_else(overflow)?;
                            push_sorted(&mut next, &left[i].0, c)?;
                            i += 1;
                            j += 1;
                        }
                    }
                }
            }
            op @ (CmpOp::Ge | CmpOp::Gt) => {
                let below = prefix_counts(&right, &left, op == CmpOp::Gt)?;
                for ((a, ca), n) in left.iter().zip(below) {
                    push_sorted(&mut next, a, ca.checked_mul(n).ok_or_else(overflow)?)?;
                }
            }
            op @ (CmpOp::Le | CmpOp::Lt) => {
                let below = prefix_counts(&left, &right, op == CmpOp::Lt)?;
                for ((b, cb), n) in right.iter().zip(below) {
                    push_sorted(&mut next, b, cb.checked_mul(n).ok_or_else(overflow)?)?;
                }
            }
        }
        if q.outer[k] {
            let full: Vec<Value> = key_set(tables[k]).into_iter().collect();
            for (a, ca) in &left {
                if full.binary_search(a).is_err() {
                    push_sorted(&mut next, a, *ca)?;
                }
            }
        }
        if k == 1 && q.outer[0] {
            let full: Vec<Value> = key_set(tables[0]).into_iter().collect();
            for (b, cb) in &right {
                if full.binary_search(b).is_err() {
                    push_sorted(&mut next, b, *cb)?;
                }
            }
        }
        left = next;
    }
    left.iter().try_fold(0u64, |acc, (_, c)| acc.checked_add(*c).ok_or_else(overflow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ingest_table, read_csv_from};
    use crate::predicates::Predicate;

    fn keys(name: &str, ks: &[i64]) -> TableCatalog {
        let mut csv = String::from("k\n");
        for k in ks {
            csv.push_str(&format!("{k}\n"));
        }
        ingest_table(&read_csv_from(csv.as_bytes(), name, b',').unwrap(), "k", 12).unwrap()
    }

    fn query(names: &[&str], op: CmpOp, outer: &[bool]) -> JoinQuery {
        JoinQuery {
            tables: names.iter().map(|s| s.to_string()).collect(),
            ops: vec![op; names.len() - 1],
            outer: outer.to_vec(),
            predicates: vec![PredicateSet::wildcard(1); names.len()],
        }
    }

    fn both(tables: &[&TableCatalog], q: &JoinQuery) -> u64 {
        let a = brute_force_cardinality(tables, q).unwrap();
        assert_eq!(a, sort_merge_cardinality(tables, q).unwrap());
        a
    }

    #[test]
    fn small_equi() {
        let (l, r) = (keys("l", &[1, 1, 2]), keys("r", &[1, 2, 2]));
        assert_eq!(both(&[&l, &r], &query(&["l", "r"], CmpOp::Eq, &[false, false])), 4);
        assert_eq!(both(&[&l, &r], &query(&["l", "r"], CmpOp::Ge, &[false, false])), 5);
    }

    #[test]
    fn ge_on_distinct() {
        let (l, r) = (keys("l", &[1, 2, 3]), keys("r", &[1, 2, 3]));
        assert_eq!(both(&[&l, &r], &query(&["l", "r"], CmpOp::Ge, &[false, false])), 6);
    }

    #[test]
    fn contradictory_predicate_gives_zero() {
        let (l, r) = (keys("l", &[1, 2, 3]), keys("r", &[1, 2, 3]));
        let mut q = query(&["l", "r"], CmpOp::Eq, &[false, false]);
        q.predicates[0] =
            PredicateSet::from_predicates(1, [Predicate::new(0, CmpOp::Gt, 1), Predicate::new(0, CmpOp::Lt, 1)])
                .unwrap();
        assert_eq!(both(&[&l, &r], &q), 0);
    }

    #[test]
    fn left_outer_keeps_unmatched() {
        let (l, r) = (keys("l", &[1, 1, 5]), keys("r", &[1, 2]));
        // l=1 matches twice, l=5 is padded
        assert_eq!(both(&[&l, &r], &query(&["l", "r"], CmpOp::Eq, &[false, true])), 3);
        // r=2 is padded on the l side
        assert_eq!(both(&[&l, &r], &query(&["l", "r"], CmpOp::Eq, &[true, false])), 3);
        assert_eq!(both(&[&l, &r], &query(&["l", "r"], CmpOp::Eq, &[true, true])), 4);
    }

    #[test]
    fn outer_on_non_equi_rejected() {
        let (l, r) = (keys("l", &[1]), keys("r", &[1]));
        let q = query(&["l", "r"], CmpOp::Gt, &[false, true]);
        assert!(matches!(brute_force_cardinality(&[&l, &r], &q), Err(Error::Unsupported(_))));
    }
}
