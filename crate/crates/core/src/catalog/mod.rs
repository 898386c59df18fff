//! Dictionary-encoded tables, factorization specs and exact key distributions.

mod codec;
mod factorize;
mod input;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use codec::{decode_catalog, encode_catalog};
pub use factorize::{defactorize, factorize_value, sub_column_count, FactorizationSpec};
pub use input::{read_csv, read_csv_from, RawTable};

use crate::dist::{DistVector, DomainRef};
use crate::error::{Error, Result};
use crate::value::{Value, ValueKind};

pub const DEFAULT_BIT_WIDTH: u32 = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    /// `None` when every cell is NULL.
    pub kind: Option<ValueKind>,
    /// Sorted distinct values; NULL, when present, is code 0.
    pub domain: Vec<Value>,
    #[serde(skip)]
    pub codes: Vec<u32>,
    pub factorization: FactorizationSpec,
}

impl ColumnMeta {
    pub fn ndv(&self) -> usize {
        self.domain.len()
    }

    pub fn has_null(&self) -> bool {
        self.domain.first().is_some_and(Value::is_null)
    }

    /// Code of an exact domain value.
    pub fn code_of(&self, v: &Value) -> Option<u32> {
        self.domain.binary_search(v).ok().map(|c| c as u32)
    }

    pub fn decode(&self, code: u32) -> Result<&Value> {
        self.domain.get(code as usize).ok_or(Error::Domain { code: code as u64, size: self.domain.len() as u64 })
    }
}

/// A finished table: immutable once built. The key column is always last.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCatalog {
    pub name: String,
    pub row_count: usize,
    pub columns: Vec<ColumnMeta>,
    pub key_column: usize,
}

impl TableCatalog {
    pub fn key(&self) -> &ColumnMeta {
        &self.columns[self.key_column]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column(&self, name: &str) -> Result<&ColumnMeta> {
        self.column_index(name)
            .map(|i| &self.columns[i])
            .ok_or_else(|| Error::Schema(format!("table {} has no column {name}", self.name)))
    }

    pub fn row_codes(&self, row: usize) -> Vec<u32> {
        self.columns.iter().map(|c| c.codes[row]).collect()
    }

    /// Decodes back to the source values, in catalog column order.
    pub fn to_raw(&self) -> RawTable {
        let rows = (0..self.row_count)
            .map(|r| self.columns.iter().map(|c| c.domain[c.codes[r] as usize].clone()).collect())
            .collect();
        RawTable { name: self.name.clone(), columns: self.columns.iter().map(|c| c.name.clone()).collect(), rows }
    }

    /// Number of rows with a non-NULL key.
    pub fn keyed_rows(&self) -> usize {
        let key = self.key();
        if key.has_null() {
            key.codes.iter().filter(|&&c| c != 0).count()
        } else {
            self.row_count
        }
    }

    pub fn key_domain_ref(&self) -> DomainRef {
        DomainRef::Column { table: self.name.clone(), column: self.key().name.clone() }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.row_count == 0 {
            return Err(Error::Ingest(format!("table {} is empty", self.name)));
        }
        if self.key_column + 1 != self.columns.len() {
            return Err(Error::Schema("key column must be last".into()));
        }
        for c in &self.columns {
            if c.codes.len() != self.row_count {
                return Err(Error::Shape(format!("column {} has {} codes", c.name, c.codes.len())));
            }
            if c.domain.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Integrity(format!("column {} domain not sorted", c.name)));
            }
            let ndv = c.ndv() as u32;
            if let Some(&bad) = c.codes.iter().find(|&&x| x >= ndv) {
                return Err(Error::Domain { code: bad as u64, size: ndv as u64 });
            }
            if c.factorization.capacity() < ndv as u64 {
                return Err(Error::Integrity(format!("column {} factorization too small", c.name)));
            }
        }
        Ok(())
    }
}

/// Exact key-value frequencies of one table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyDistribution {
    pub probs: DistVector,
    pub table_size: u64,
}

impl KeyDistribution {
    /// Per-slot row counts, `probs[v] * table_size`.
    pub fn counts(&self) -> Vec<f64> {
        let n = self.table_size as f64;
        self.probs.values.iter().map(|p| p * n).collect()
    }
}

pub fn ingest_table(raw: &RawTable, key_column: &str, bit_width: u32) -> Result<TableCatalog> {
    if !(1..=16).contains(&bit_width) {
        return Err(Error::Usage(format!("bit width {bit_width} outside 1..=16")));
    }
    if raw.rows.is_empty() {
        return Err(Error::Ingest(format!("table {} has no rows", raw.name)));
    }
    let key_src = raw
        .columns
        .iter()
        .position(|c| c == key_column)
        .ok_or_else(|| Error::Schema(format!("table {} has no key column {key_column}", raw.name)))?;
    for (i, row) in raw.rows.iter().enumerate() {
        if row.len() != raw.columns.len() {
            return Err(Error::Ingest(format!(
                "row {i} of {} has {} cells, expected {}",
                raw.name,
                row.len(),
                raw.columns.len()
            )));
        }
    }

    let mut order: Vec<usize> = (0..raw.columns.len()).filter(|&i| i != key_src).collect();
    order.push(key_src);

    let mut columns = Vec::with_capacity(order.len());
    for &src in &order {
        columns.push(encode_column(raw, src, bit_width)?);
    }
    if columns.last().unwrap().domain.iter().all(Value::is_null) {
        return Err(Error::Ingest(format!("key column {key_column} of {} is entirely NULL", raw.name)));
    }
    let cat =
        TableCatalog { name: raw.name.clone(), row_count: raw.rows.len(), key_column: columns.len() - 1, columns };
    cat.validate()?;
    Ok(cat)
}

fn encode_column(raw: &RawTable, src: usize, bit_width: u32) -> Result<ColumnMeta> {
    let name = &raw.columns[src];
    let mut kind = None;
    for row in &raw.rows {
        if let Some(k) = row[src].kind() {
            match kind {
                None => kind = Some(k),
                Some(prev) if prev == k => {}
                Some(ValueKind::Float) | Some(ValueKind::Int) if matches!(k, ValueKind::Int | ValueKind::Float) => {
                    kind = Some(ValueKind::Float)
                }
                Some(prev) => return Err(Error::Ingest(format!("column {name} mixes {prev:?} and {k:?} values"))),
            }
        }
    }
    let domain: Vec<Value> = raw.rows.iter().map(|r| r[src].clone()).collect::<BTreeSet<_>>().into_iter().collect();
    let codes = raw.rows.iter().map(|r| domain.binary_search(&r[src]).unwrap() as u32).collect();
    let factorization = FactorizationSpec::for_ndv(domain.len() as u64, bit_width);
    Ok(ColumnMeta { name: name.clone(), kind, domain, codes, factorization })
}

/// Exact per-key frequencies. NULL keys carry no mass and do not count toward `table_size`.
pub fn compute_key_distribution(table: &TableCatalog) -> KeyDistribution {
    let key = table.key();
    let mut counts = vec![0u64; key.ndv()];
    for &c in &key.codes {
        counts[c as usize] += 1;
    }
    if key.has_null() {
        counts[0] = 0;
    }
    let total: u64 = counts.iter().sum();
    let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
    KeyDistribution { probs: DistVector::new(probs, table.key_domain_ref()), table_size: total }
}
