use std::sync::Arc;

use super::{check_shape, reconstruct_column_dist, TableEstimator};
use crate::anpm::AnpmModel;
use crate::catalog::TableCatalog;
use crate::dist::DistVector;
use crate::error::{Error, Result};
use crate::predicates::PredicateSet;

/// Estimates from a trained model. One trunk pass per query; only constrained columns
/// and the key column are reconstructed.
#[derive(Debug, Clone)]
pub struct LearnedEstimator {
    catalog: Arc<TableCatalog>,
    model: Arc<AnpmModel>,
}

impl LearnedEstimator {
    pub fn new(catalog: Arc<TableCatalog>, model: Arc<AnpmModel>) -> Result<Self> {
        let ndvs: Vec<usize> = catalog.columns.iter().map(|c| c.ndv()).collect();
        if ndvs != model.ndvs() {
            return Err(Error::Schema(format!(
                "model domains {:?} do not match table {} domains {ndvs:?}",
                model.ndvs(),
                catalog.name
            )));
        }
        Ok(Self { catalog, model })
    }

    pub fn model(&self) -> &AnpmModel {
        &self.model
    }

    /// `(P(key | q), product of non-key selectivities)`, or `None` if `q` is contradictory.
    fn parts(&self, q: &PredicateSet) -> Result<Option<(Vec<f64>, f64, PredicateSet)>> {
        check_shape(&self.catalog, q)?;
        let ndvs = self.model.ndvs();
        let Some(canon) = q.canonicalize(ndvs) else {
            return Ok(None);
        };
        let input = self.model.encode(&canon)?.expect("canonical set is consistent");
        let top = self.model.trunk(&input);
        let n = ndvs.len();
        let mut sel = 1.0;
        for (c, &ndv) in ndvs[..n - 1].iter().enumerate() {
            if canon.is_wildcard(c) {
                continue;
            }
            let dist = reconstruct_column_dist(&self.model.column_blocks(&top, c)?, ndv)?;
            sel *= canon.filter(c, ndv).mask(ndv).weighted_sum(&dist.values);
        }
        let key = reconstruct_column_dist(&self.model.column_blocks(&top, n - 1)?, ndvs[n - 1])?;
        Ok(Some((key.values, sel, canon)))
    }
}

impl TableEstimator for LearnedEstimator {
    fn catalog(&self) -> &TableCatalog {
        &self.catalog
    }

    fn estimate_selectivity(&self, q: &PredicateSet) -> Result<f64> {
        Ok(self.estimate_key_joint(q)?.sum().clamp(0.0, 1.0))
    }

    fn estimate_key_joint(&self, q: &PredicateSet) -> Result<DistVector> {
        let n = self.catalog.columns.len();
        let ndv = self.catalog.key().ndv();
        let domain = self.catalog.key_domain_ref();
        let Some((key, sel, canon)) = self.parts(q)? else {
            return Ok(DistVector::zeros(ndv, domain));
        };
        let mask = canon.filter(n - 1, ndv).mask(ndv);
        let values = key.iter().enumerate().map(|(v, &p)| if mask.get(v) { p * sel } else { 0.0 }).collect();
        Ok(DistVector::new(values, domain))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anpm::{train, Hyperparams, TrainConfig};
    use crate::catalog::{ingest_table, RawTable};
    use crate::estimator::ExactEstimator;
    use crate::predicates::{CmpOp, Predicate};
    use crate::value::Value;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn toy() -> Arc<TableCatalog> {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows = (0..3000)
            .map(|_| {
                let a: i64 = rng.random_range(0..6);
                let k = if rng.random_bool(0.8) { a % 4 } else { rng.random_range(0..4) };
                vec![Value::Int(a), Value::Int(k)]
            })
            .collect();
        let raw = RawTable { name: "toy".into(), columns: vec!["a".into(), "k".into()], rows };
        Arc::new(ingest_table(&raw, "k", 12).unwrap())
    }

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 25,
            batch_size: 64,
            learning_rate: 5e-3,
            hyper: Hyperparams { embed_dim: 8, hidden: 32, layers: 2, hyper_width: 16 },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn close_to_exact_on_toy_table() {
        let cat = toy();
        let (model, _) = train(&cat, &cfg()).unwrap();
        let learned = LearnedEstimator::new(cat.clone(), Arc::new(model)).unwrap();
        let exact = ExactEstimator::new(cat);
        let queries = [
            PredicateSet::wildcard(2),
            PredicateSet::from_predicates(2, [Predicate::new(0, CmpOp::Eq, 1)]).unwrap(),
            PredicateSet::from_predicates(2, [Predicate::new(0, CmpOp::Ge, 3)]).unwrap(),
            PredicateSet::from_predicates(2, [Predicate::new(0, CmpOp::Lt, 2), Predicate::new(1, CmpOp::Gt, 0)])
                .unwrap(),
        ];
        for q in &queries {
            let l = learned.estimate_key_joint(q).unwrap();
            let e = exact.estimate_key_joint(q).unwrap();
            assert!(l.l1_distance(&e) < 0.05, "{q:?}: {:?} vs {:?}", l.values, e.values);
            assert!((learned.estimate_selectivity(q).unwrap() - l.sum()).abs() < 1e-9);
        }
    }

    #[test]
    fn contradiction_and_shape() {
        let cat = toy();
        let mut c = cfg();
        c.epochs = 0;
        let (model, _) = train(&cat, &c).unwrap();
        let learned = LearnedEstimator::new(cat, Arc::new(model)).unwrap();
        let q = PredicateSet::from_predicates(2, [Predicate::new(0, CmpOp::Gt, 4), Predicate::new(0, CmpOp::Lt, 2)])
            .unwrap();
        assert_eq!(learned.estimate_selectivity(&q).unwrap(), 0.0);
        assert!((learned.estimate_selectivity(&PredicateSet::wildcard(2)).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(learned.estimate_selectivity(&PredicateSet::wildcard(3)), Err(Error::Shape(_))));
    }
}
