use std::io::{BufRead, Write};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::oracle::brute_force_cardinality;
use crate::catalog::TableCatalog;
use crate::error::{Error, Result};
use crate::predicates::CmpOp;
use crate::query::{JoinOps, QueryPredicate, QuerySpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub queries: usize,
    /// Query i uses `ops[i % ops.len()]` on every edge.
    pub ops: Vec<CmpOp>,
    pub min_tables: usize,
    pub max_tables: usize,
    /// Probability that a given non-key column gets a predicate.
    pub predicate_rate: f64,
    /// Probability of an outer flag per table, on equi queries only.
    pub outer_rate: f64,
    pub seed: u64,
    /// Redraws allowed for a query whose true cardinality is 0.
    pub max_attempts: usize,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            queries: 100,
            ops: CmpOp::ALL.to_vec(),
            min_tables: 2,
            max_tables: 3,
            predicate_rate: 0.4,
            outer_rate: 0.0,
            seed: 0,
            max_attempts: 50,
        }
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, db: &[TableCatalog], cfg: &WorkloadConfig, op: CmpOp) -> QuerySpec {
    let n = rng.random_range(cfg.min_tables..=cfg.max_tables.min(db.len()));
    let mut idx: Vec<usize> = (0..db.len()).collect();
    for i in 0..n {
        let j = rng.random_range(i..idx.len());
        idx.swap(i, j);
    }
    idx.truncate(n);
    let mut predicates = Vec::new();
    for &t in &idx {
        let cat = &db[t];
        for (c, meta) in cat.columns[..cat.columns.len() - 1].iter().enumerate() {
            let _ = c;
            if meta.kind.is_none() || !rng.random_bool(cfg.predicate_rate) {
                continue;
            }
            let non_null: Vec<_> = meta.domain.iter().filter(|v| !v.is_null()).collect();
            let lit = non_null.choose(rng).unwrap();
            predicates.push(QueryPredicate {
                table: cat.name.clone(),
                column: meta.name.clone(),
                op: CmpOp::ALL[rng.random_range(0..5)],
                value: lit.to_json(),
            });
        }
    }
    let outer = (0..n).map(|_| op == CmpOp::Eq && rng.random_bool(cfg.outer_rate)).collect();
    QuerySpec {
        tables: idx.iter().map(|&i| db[i].name.clone()).collect(),
        join_op: JoinOps::Single(op),
        join_keys: Some(idx.iter().map(|&i| db[i].key().name.clone()).collect()),
        predicates,
        outer: Some(outer),
        true_card: None,
    }
}

fn lookup<'a>(db: &'a [TableCatalog]) -> impl Fn(&str) -> Option<&'a TableCatalog> {
    move |name| db.iter().find(|t| t.name == name)
}

/// True cardinality of `spec` over `db`.
pub fn true_cardinality(db: &[TableCatalog], spec: &QuerySpec) -> Result<u64> {
    let q = spec.resolve(lookup(db))?;
    let tables: Vec<&TableCatalog> = q.tables.iter().map(|t| lookup(db)(t).unwrap()).collect();
    brute_force_cardinality(&tables, &q)
}

/// Seeded random queries labelled with their true cardinality. Queries with an empty
/// result are redrawn up to `max_attempts` times.
pub fn generate_workload(db: &[TableCatalog], cfg: &WorkloadConfig) -> Result<Vec<QuerySpec>> {
    if cfg.ops.is_empty() || cfg.min_tables < 2 || cfg.min_tables > cfg.max_tables || db.len() < cfg.min_tables {
        return Err(Error::Usage(format!(
            "workload needs operators and {}..={} tables from a database of {}",
            cfg.min_tables,
            cfg.max_tables,
            db.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.queries);
    for i in 0..cfg.queries {
        let op = cfg.ops[i % cfg.ops.len()];
        let mut attempt = 0;
        loop {
            let mut spec = draw(&mut rng, db, cfg, op);
            let card = true_cardinality(db, &spec)?;
            attempt += 1;
            if card > 0 || attempt > cfg.max_attempts {
                spec.true_card = Some(card);
                out.push(spec);
                break;
            }
        }
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(mut w: W, queries: &[QuerySpec]) -> Result<()> {
    for q in queries {
        serde_json::to_writer(&mut w, q)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<QuerySpec>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Usage(format!("workload line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::sort_merge_cardinality;
    use crate::eval::synth::{random_database, RandomDbConfig};

    fn db() -> Vec<TableCatalog> {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        random_database(&mut rng, &RandomDbConfig { tables: 4, max_rows: 300, key_universe: 20, null_rate: 0.05 })
            .unwrap()
    }

    fn bytes(db: &[TableCatalog], cfg: &WorkloadConfig) -> Vec<u8> {
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &generate_workload(db, cfg).unwrap()).unwrap();
        buf
    }

    #[test]
    fn deterministic_bytes() {
        let db = db();
        let cfg = WorkloadConfig { queries: 30, outer_rate: 0.3, seed: 9, ..WorkloadConfig::default() };
        assert_eq!(bytes(&db, &cfg), bytes(&db, &cfg));
        assert_ne!(bytes(&db, &cfg), bytes(&db, &WorkloadConfig { seed: 10, ..cfg.clone() }));
    }

    #[test]
    fn labels_recompute_and_ops_mix() {
        let db = db();
        let cfg = WorkloadConfig {
            queries: 40,
            ops: vec![CmpOp::Eq, CmpOp::Lt, CmpOp::Ge, CmpOp::Eq],
            outer_rate: 0.3,
            seed: 2,
            ..WorkloadConfig::default()
        };
        let w = generate_workload(&db, &cfg).unwrap();
        let mut eq = 0;
        for q in &w {
            assert_eq!(q.true_card, Some(true_cardinality(&db, q).unwrap()));
            let jq = q.resolve(lookup(&db)).unwrap();
            let tables: Vec<&TableCatalog> = jq.tables.iter().map(|t| lookup(&db)(t).unwrap()).collect();
            assert_eq!(q.true_card, Some(sort_merge_cardinality(&tables, &jq).unwrap()));
            if q.join_op == JoinOps::Single(CmpOp::Eq) {
                eq += 1;
            }
        }
        assert_eq!(eq, 20);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &w).unwrap();
        assert_eq!(read_jsonl(buf.as_slice()).unwrap(), w);
    }

    #[test]
    fn rejects_bad_config() {
        let db = db();
        let cfg = WorkloadConfig { ops: vec![], ..WorkloadConfig::default() };
        assert!(matches!(generate_workload(&db, &cfg), Err(Error::Usage(_))));
        assert!(read_jsonl("{\"tables\":1}\n".as_bytes()).is_err());
    }
}
