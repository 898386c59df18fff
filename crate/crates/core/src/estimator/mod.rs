//! Single-table selectivities and key joints, learned or exact.

mod learned;
mod reconstruct;

use std::sync::Arc;

pub use learned::LearnedEstimator;
pub use reconstruct::{exact_sub_conditionals, reconstruct_column_dist, CondBlock};

use crate::catalog::TableCatalog;
use crate::dist::DistVector;
use crate::error::{Error, Result};
use crate::predicates::{ColumnFilter, PredicateSet};

/// Common interface of the learned model and the exact oracle.
pub trait TableEstimator: Send + Sync {
    fn catalog(&self) -> &TableCatalog;

    /// Fraction of rows satisfying `q`.
    fn estimate_selectivity(&self, q: &PredicateSet) -> Result<f64>;

    /// `P(key = v, q)` over the native key domain; sums to the selectivity.
    fn estimate_key_joint(&self, q: &PredicateSet) -> Result<DistVector>;
}

pub(crate) fn check_shape(cat: &TableCatalog, q: &PredicateSet) -> Result<()> {
    if q.n_columns() != cat.columns.len() {
        return Err(Error::Shape(format!(
            "predicate set over {} columns for table {} with {}",
            q.n_columns(),
            cat.name,
            cat.columns.len()
        )));
    }
    Ok(())
}

/// Counts rows. Error-free by construction.
#[derive(Debug, Clone)]
pub struct ExactEstimator {
    catalog: Arc<TableCatalog>,
}

impl ExactEstimator {
    pub fn new(catalog: Arc<TableCatalog>) -> Self {
        Self { catalog }
    }

    fn matching_key_counts(&self, q: &PredicateSet) -> Result<Vec<u64>> {
        let cat = &*self.catalog;
        check_shape(cat, q)?;
        let filters: Vec<(usize, ColumnFilter)> = cat
            .columns
            .iter()
            .enumerate()
            .map(|(c, m)| (c, q.filter(c, m.ndv())))
            .filter(|(_, f)| *f != ColumnFilter::All)
            .collect();
        let key = cat.key();
        let mut counts = vec![0u64; key.ndv()];
        if filters.iter().any(|(_, f)| *f == ColumnFilter::Empty) {
            return Ok(counts);
        }
        'rows: for r in 0..cat.row_count {
            for (c, f) in &filters {
                if !f.contains(cat.columns[*c].codes[r]) {
                    continue 'rows;
                }
            }
            counts[key.codes[r] as usize] += 1;
        }
        Ok(counts)
    }
}

impl TableEstimator for ExactEstimator {
    fn catalog(&self) -> &TableCatalog {
        &self.catalog
    }

    fn estimate_selectivity(&self, q: &PredicateSet) -> Result<f64> {
        let n: u64 = self.matching_key_counts(q)?.iter().sum();
        Ok(n as f64 / self.catalog.row_count as f64)
    }

    fn estimate_key_joint(&self, q: &PredicateSet) -> Result<DistVector> {
        let n = self.catalog.row_count as f64;
        let counts = self.matching_key_counts(q)?;
        Ok(DistVector::new(counts.iter().map(|&c| c as f64 / n).collect(), self.catalog.key_domain_ref()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{compute_key_distribution, ingest_table, read_csv_from};
    use crate::predicates::{CmpOp, Predicate};
    use proptest::prelude::*;

    fn table(csv: &str) -> Arc<TableCatalog> {
        Arc::new(ingest_table(&read_csv_from(csv.as_bytes(), "t", b',').unwrap(), "k", 12).unwrap())
    }

    #[test]
    fn wildcard_gives_key_distribution() {
        let t = table("k,a\n1,5\n1,6\n2,7\n");
        let est = ExactEstimator::new(t.clone());
        let q = PredicateSet::wildcard(2);
        assert_eq!(est.estimate_selectivity(&q).unwrap(), 1.0);
        assert_eq!(est.estimate_key_joint(&q).unwrap().values, compute_key_distribution(&t).probs.values);
    }

    #[test]
    fn filter_to_key_two() {
        let t = table("k,a\n1,5\n1,6\n2,7\n");
        let est = ExactEstimator::new(t);
        let q = PredicateSet::from_predicates(2, [Predicate::new(0, CmpOp::Eq, 2)]).unwrap();
        assert_eq!(est.estimate_key_joint(&q).unwrap().values, vec![0.0, 1.0 / 3.0]);
    }

    #[test]
    fn contradiction_is_zero() {
        let t = table("k,a\n1,5\n1,6\n2,7\n3,9\n");
        let est = ExactEstimator::new(t);
        let q = PredicateSet::from_predicates(2, [Predicate::new(0, CmpOp::Gt, 2), Predicate::new(0, CmpOp::Lt, 1)])
            .unwrap();
        assert_eq!(est.estimate_selectivity(&q).unwrap(), 0.0);
    }

    fn random_table(rows: &[(u8, u8, u8)]) -> Arc<TableCatalog> {
        let mut csv = String::from("a,b,k\n");
        for (a, b, k) in rows {
            csv.push_str(&format!("{},{},{}\n", a % 9, b % 5, k % 7));
        }
        table(&csv)
    }

    proptest! {
        #[test]
        fn matches_row_scan(
            rows in proptest::collection::vec(any::<(u8, u8, u8)>(), 1..200),
            preds in proptest::collection::vec((0usize..3, 0usize..5, 0u32..10), 0..4),
        ) {
            let t = random_table(&rows);
            let est = ExactEstimator::new(t.clone());
            let ps: Vec<Predicate> = preds.iter().map(|&(c, o, v)| Predicate::new(c, CmpOp::ALL[o], v)).collect();
            let q = PredicateSet::from_predicates(3, ps).unwrap();
            let hits = (0..t.row_count).filter(|&r| q.matches_row(&t.row_codes(r))).count();
            let sel = est.estimate_selectivity(&q).unwrap();
            prop_assert_eq!(sel, hits as f64 / t.row_count as f64);
            let joint = est.estimate_key_joint(&q).unwrap();
            prop_assert!((joint.sum() - sel).abs() < 1e-9);
        }

        #[test]
        fn widening_never_decreases(
            rows in proptest::collection::vec(any::<(u8, u8, u8)>(), 1..200),
            lo in 0u32..9, hi in 0u32..9, dl in 0u32..3, dh in 0u32..3,
        ) {
            let t = random_table(&rows);
            let est = ExactEstimator::new(t);
            let q = |lo: u32, hi: u32| PredicateSet::from_predicates(
                3,
                [Predicate::new(0, CmpOp::Ge, lo), Predicate::new(0, CmpOp::Le, hi)],
            ).unwrap();
            let narrow = est.estimate_selectivity(&q(lo, hi)).unwrap();
            let wide = est.estimate_selectivity(&q(lo.saturating_sub(dl), hi + dh)).unwrap();
            prop_assert!(wide >= narrow);
        }
    }
}
