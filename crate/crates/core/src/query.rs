//! JSON query format shared by the CLI, workload files and the FFI.

use serde::{Deserialize, Serialize};

use crate::catalog::TableCatalog;
use crate::error::{Error, Result};
use crate::join::JoinQuery;
use crate::predicates::{CmpOp, Predicate, PredicateSet};
use crate::value::Value;

/// One operator for every edge, or one per edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum JoinOps {
    Single(CmpOp),
    PerEdge(Vec<CmpOp>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryPredicate {
    pub table: String,
    pub column: String,
    pub op: CmpOp,
    pub value: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySpec {
    pub tables: Vec<String>,
    pub join_op: JoinOps,
    /// Join column per table; each must be that table's key column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub join_keys: Option<Vec<String>>,
    #[serde(default)]
    pub predicates: Vec<QueryPredicate>,
    /// Per-table outer flags; absent means all inner.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_card: Option<u64>,
}

impl QuerySpec {
    pub fn parse(json: &str) -> Result<QuerySpec> {
        serde_json::from_str(json).map_err(|e| Error::Usage(format!("malformed query: {e}")))
    }

    /// Resolves names and literals against `lookup` into a code-level query.
    pub fn resolve<'a>(&self, lookup: impl Fn(&str) -> Option<&'a TableCatalog>) -> Result<JoinQuery> {
        let n = self.tables.len();
        let cats: Vec<&TableCatalog> = self
            .tables
            .iter()
            .map(|t| lookup(t).ok_or_else(|| Error::Usage(format!("unknown table {t}"))))
            .collect::<Result<_>>()?;
        let ops = match &self.join_op {
            JoinOps::Single(op) => vec![*op; n.saturating_sub(1)],
            JoinOps::PerEdge(v) => v.clone(),
        };
        if let Some(keys) = &self.join_keys {
            if keys.len() != n {
                return Err(Error::Usage(format!("{} join keys for {n} tables", keys.len())));
            }
            for (k, c) in keys.iter().zip(&cats) {
                if *k != c.key().name {
                    return Err(Error::Unsupported(format!(
                        "table {} joins on {}, but was ingested with key {}",
                        c.name,
                        k,
                        c.key().name
                    )));
                }
            }
        }
        let mut predicates: Vec<PredicateSet> = cats.iter().map(|c| PredicateSet::wildcard(c.columns.len())).collect();
        for p in &self.predicates {
            let slot = self
                .tables
                .iter()
                .position(|t| *t == p.table)
                .ok_or_else(|| Error::Usage(format!("predicate on {} which is not in the query", p.table)))?;
            let cat = cats[slot];
            let col = cat
                .column_index(&p.column)
                .ok_or_else(|| Error::Usage(format!("unknown column {}.{}", p.table, p.column)))?;
            let meta = &cat.columns[col];
            let lit = match meta.kind {
                None => Value::Null,
                Some(kind) => Value::from_json(&p.value, kind).ok_or_else(|| {
                    Error::Usage(format!("literal {} does not fit column {}.{}", p.value, p.table, p.column))
                })?,
            };
            for code_pred in Predicate::from_literal(col, meta, p.op, &lit) {
                predicates[slot].push(code_pred)?;
            }
        }
        let q = JoinQuery {
            tables: self.tables.clone(),
            ops,
            outer: self.outer.clone().unwrap_or_else(|| vec![false; n]),
            predicates,
        };
        q.validate()?;
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{ingest_table, read_csv_from};

    fn cat(name: &str) -> TableCatalog {
        ingest_table(&read_csv_from("id,x\n1,a\n2,b\n3,\n".as_bytes(), name, b',').unwrap(), "id", 12).unwrap()
    }

    #[test]
    fn parse_and_resolve() {
        let (a, b) = (cat("a"), cat("b"));
        let spec = QuerySpec::parse(
            r#"{"tables":["a","b"],"join_op":">=","join_keys":["id","id"],
                "predicates":[{"table":"b","column":"x","op":"=","value":"b"}]}"#,
        )
        .unwrap();
        let q = spec.resolve(|t| [&a, &b].into_iter().find(|c| c.name == t)).unwrap();
        assert_eq!(q.ops, vec![CmpOp::Ge]);
        assert_eq!(q.outer, vec![false, false]);
        assert!(q.predicates[0].per_column.iter().all(|p| p.is_empty()));
        assert_eq!(q.predicates[1].per_column[0], vec![Predicate::new(0, CmpOp::Eq, 2)]);
    }

    #[test]
    fn rejects_bad_references() {
        let a = cat("a");
        let find = |t: &str| (t == "a").then_some(&a);
        let bad = |s: &str| QuerySpec::parse(s).unwrap().resolve(find).unwrap_err();
        assert!(matches!(bad(r#"{"tables":["a","z"],"join_op":"="}"#), Error::Usage(_)));
        assert!(matches!(bad(r#"{"tables":["a","a"],"join_op":"=","join_keys":["x","x"]}"#), Error::Unsupported(_)));
        assert!(matches!(
            bad(r#"{"tables":["a","a"],"join_op":"=","predicates":[{"table":"a","column":"q","op":"=","value":1}]}"#),
            Error::Usage(_)
        ));
        assert!(matches!(QuerySpec::parse("{"), Err(Error::Usage(_))));
    }

    #[test]
    fn round_trips_through_json() {
        let spec = QuerySpec {
            tables: vec!["a".into(), "b".into()],
            join_op: JoinOps::PerEdge(vec![CmpOp::Lt]),
            join_keys: None,
            predicates: vec![],
            outer: Some(vec![false, false]),
            true_card: Some(4),
        };
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(QuerySpec::parse(&s).unwrap(), spec);
    }
}
