//! Seeded synthetic databases and queries.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, Zipf};

use crate::catalog::{ingest_table, RawTable, TableCatalog};
use crate::error::Result;
use crate::join::JoinQuery;
use crate::predicates::{CmpOp, Predicate, PredicateSet};
use crate::value::Value;

#[derive(Debug, Clone, Copy)]
pub struct RandomDbConfig {
    pub tables: usize,
    pub max_rows: usize,
    /// Size of the shared key universe.
    pub key_universe: usize,
    pub null_rate: f64,
}

impl Default for RandomDbConfig {
    fn default() -> Self {
        Self { tables: 5, max_rows: 1000, key_universe: 64, null_rate: 0.02 }
    }
}

/// Tables `t0..tN`, each with a key `k` over a random slice of a shared universe and
/// two attributes, one of them correlated with the key.
pub fn random_database<R: Rng + ?Sized>(rng: &mut R, cfg: &RandomDbConfig) -> Result<Vec<TableCatalog>> {
    let mut out = Vec::with_capacity(cfg.tables);
    for t in 0..cfg.tables {
        let rows = rng.random_range(1..=cfg.max_rows);
        let lo = rng.random_range(0..cfg.key_universe / 2) as i64;
        let width = rng.random_range(1..=cfg.key_universe - lo as usize) as i64;
        let skew = rng.random_range(0.0..1.5);
        let zipf = Zipf::new(width as f64, skew).unwrap();
        let mut data = Vec::with_capacity(rows);
        for _ in 0..rows {
            let k = lo + zipf.sample(rng) as i64 - 1;
            let key = if rng.random_bool(cfg.null_rate) { Value::Null } else { Value::Int(k) };
            let a = Value::Int((k * 3 + rng.random_range(0..4)) % 17);
            let b = if rng.random_bool(cfg.null_rate) {
                Value::Null
            } else {
                Value::Float((rng.random_range(0..40) as f64) / 4.0)
            };
            data.push(vec![a, b, key]);
        }
        let raw = RawTable { name: format!("t{t}"), columns: vec!["a".into(), "b".into(), "k".into()], rows: data };
        let raw = if rng.random_bool(0.5) { raw } else { with_string_attribute(raw, rng) };
        out.push(ingest_table(&raw, "k", rng.random_range(1..=6))?);
    }
    Ok(out)
}

fn with_string_attribute<R: Rng + ?Sized>(mut raw: RawTable, rng: &mut R) -> RawTable {
    raw.columns.insert(0, "s".into());
    for row in &mut raw.rows {
        let s = ["ab", "cd", "ef", "gh", "xy"].choose(rng).unwrap();
        row.insert(0, Value::Str((*s).to_string()));
    }
    raw
}

#[derive(Debug, Clone, Copy)]
pub struct RandomQueryConfig {
    pub min_tables: usize,
    pub max_tables: usize,
    pub ops: &'static [CmpOp],
    pub outer_rate: f64,
    pub predicate_rate: f64,
}

impl Default for RandomQueryConfig {
    fn default() -> Self {
        Self { min_tables: 2, max_tables: 5, ops: &CmpOp::ALL, outer_rate: 0.2, predicate_rate: 0.4 }
    }
}

/// Random literal predicates on `cat`, converted to codes.
pub fn random_predicates<R: Rng + ?Sized>(rng: &mut R, cat: &TableCatalog, rate: f64) -> PredicateSet {
    let mut set = PredicateSet::wildcard(cat.columns.len());
    for (c, meta) in cat.columns.iter().enumerate() {
        if !rng.random_bool(rate) {
            continue;
        }
        let n_preds = if rng.random_bool(0.3) { 2 } else { 1 };
        for _ in 0..n_preds {
            let op = CmpOp::ALL[rng.random_range(0..5)];
            let lit = meta.domain.choose(rng).unwrap().clone();
            let lit = if lit.is_null() { meta.domain.last().unwrap().clone() } else { lit };
            for p in Predicate::from_literal(c, meta, op, &lit) {
                set.per_column[c].push(p);
            }
        }
    }
    set
}

/// A query over distinct tables of `db`; one operator per query, outer flags only on `=`.
pub fn random_query<R: Rng + ?Sized>(
    rng: &mut R,
    db: &[TableCatalog],
    cfg: &RandomQueryConfig,
) -> (Vec<usize>, JoinQuery) {
    let n = rng.random_range(cfg.min_tables..=cfg.max_tables.min(db.len()));
    let mut idx: Vec<usize> = (0..db.len()).collect();
    for i in 0..n {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    idx.truncate(n);
    let op = *cfg.ops.choose(rng).unwrap();
    let outer = (0..n).map(|_| op == CmpOp::Eq && rng.random_bool(cfg.outer_rate)).collect();
    let predicates = idx.iter().map(|&i| random_predicates(rng, &db[i], cfg.predicate_rate)).collect();
    let q = JoinQuery {
        tables: idx.iter().map(|&i| db[i].name.clone()).collect(),
        ops: vec![op; n - 1],
        outer,
        predicates,
    };
    (idx, q)
}

/// Four tables `c0..c3` over keys 1..=4 with mildly skewed key frequencies and one
/// attribute `a`. The predicate `a = 1` keeps a key-dependent fraction of rows, falling
/// with the key in even tables and rising in odd ones.
pub fn chain_database() -> Result<(Vec<TableCatalog>, Vec<PredicateSet>)> {
    const ROWS: f64 = 4000.0;
    let weights: Vec<f64> = (1..=4).map(|i| 1.0 / (i as f64).powf(0.3)).collect();
    let total: f64 = weights.iter().sum();
    let mut db = Vec::new();
    let mut preds = Vec::new();
    for t in 0..4 {
        let mut rows = Vec::new();
        for (i, w) in weights.iter().enumerate() {
            let n = (ROWS * w / total).round() as usize;
            let step = 0.2 * i as f64 / 3.0;
            let keep = if t % 2 == 0 { 0.95 - step } else { 0.75 + step };
            let ones = (n as f64 * keep).round() as usize;
            for r in 0..n {
                rows.push(vec![Value::Int((r < ones) as i64), Value::Int(i as i64 + 1)]);
            }
        }
        let raw = RawTable { name: format!("c{t}"), columns: vec!["a".into(), "k".into()], rows };
        let cat = ingest_table(&raw, "k", 12)?;
        let a = &cat.columns[0];
        preds.push(PredicateSet::from_predicates(
            cat.columns.len(),
            Predicate::from_literal(0, a, CmpOp::Eq, &Value::Int(1)),
        )?);
        db.push(cat);
    }
    Ok((db, preds))
}

/// Tables `r0..r{n-1}` on a shared Zipf-distributed key with columns correlated to the
/// key and to each other: `x` follows the key, `y` follows `x`, `z` is independent.
pub fn correlated_database<R: Rng + ?Sized>(rng: &mut R, tables: usize, rows: usize) -> Result<Vec<TableCatalog>> {
    let mut out = Vec::with_capacity(tables);
    for t in 0..tables {
        let universe = 150 + 25 * t as u64;
        let zipf = Zipf::new(universe as f64, 1.0 + 0.1 * t as f64).unwrap();
        let mut data = Vec::with_capacity(rows);
        for _ in 0..rows {
            let k = zipf.sample(rng) as i64;
            let x = if rng.random_bool(0.8) { (k * 7) % 40 } else { rng.random_range(0..40) };
            let y = if rng.random_bool(0.7) { x / 4 } else { rng.random_range(0..10) };
            let z = rng.random_range(0..8);
            data.push(vec![Value::Int(x), Value::Int(y), Value::Int(z), Value::Int(k)]);
        }
        let raw = RawTable {
            name: format!("r{t}"),
            columns: vec!["x".into(), "y".into(), "z".into(), "k".into()],
            rows: data,
        };
        out.push(ingest_table(&raw, "k", 12)?);
    }
    Ok(out)
}
