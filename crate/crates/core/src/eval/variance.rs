use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::{compute_key_distribution, TableCatalog};
use crate::dist::DistVector;
use crate::error::{Error, Result};
use crate::estimator::ExactEstimator;
use crate::join::{count_based_cardinality, infer_cardinality, prepare_members, AlignedMember, JoinInput, JoinQuery};
use crate::predicates::{CmpOp, PredicateSet};

/// Zero-mean Gaussian noise on per-table joint vectors.
///
/// Each table draws one shared pattern and one private pattern for each of its two
/// vectors; `correlation` is the weight of the shared part, so at 1 the conditioned and
/// unconditioned joints carry the same error and at 0 independent errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma: f64,
    pub correlation: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) || !(0.0..=1.0).contains(&self.correlation) {
            return Err(Error::Usage(format!(
                "noise sigma {} must be >= 0 and correlation {} in [0, 1]",
                self.sigma, self.correlation
            )));
        }
        Ok(())
    }

    fn draw(&self, rng: &mut ChaCha8Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
        let shared: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let (a, b) = (self.correlation.sqrt(), (1.0 - self.correlation).sqrt());
        let mut one = || -> Vec<f64> {
            shared
                .iter()
                .map(|&s| {
                    let own: f64 = StandardNormal.sample(rng);
                    self.sigma * (a * s + b * own)
                })
                .collect()
        };
        let e_q = one();
        let e_u = one();
        (e_q, e_u)
    }

    /// Perturbs one table's (conditioned, unconditioned) joints. Both are clipped at 0;
    /// the conditioned joint is rescaled to its original mass and the unconditioned one
    /// to 1, so only the shape over keys carries error.
    pub fn perturb(&self, rng: &mut ChaCha8Rng, cond: &[f64], uncond: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (e_q, e_u) = self.draw(rng, cond.len());
        (noisy(cond, &e_q), noisy(uncond, &e_u))
    }
}

fn noisy(v: &[f64], e: &[f64]) -> Vec<f64> {
    let mass: f64 = v.iter().sum();
    let mut out: Vec<f64> = v.iter().zip(e).map(|(&x, &n)| if x > 0.0 { (x + n).max(0.0) } else { 0.0 }).collect();
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        for x in &mut out {
            *x *= mass / s;
        }
    } else {
        out.copy_from_slice(v);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub tables: usize,
    pub true_card: f64,
    /// Sample variance of `estimate / true_card` over the repetitions.
    pub count_var: f64,
    pub selectivity_var: f64,
    /// `count_var / selectivity_var`.
    pub ratio: f64,
    /// Either variance is exactly zero.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub repetitions: usize,
    pub noise: NoiseModel,
    pub rows: Vec<VarianceRow>,
}

impl VarianceReport {
    /// Selectivity-based variance below count-based at every size, and the ratio increasing.
    pub fn ordering_holds(&self) -> bool {
        self.rows.iter().all(|r| r.selectivity_var < r.count_var)
            && self.rows.windows(2).all(|w| w[0].ratio < w[1].ratio)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("tables,true_card,count_var,selectivity_var,ratio,degenerate\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:.6e},{:.6e},{:.6},{}\n",
                r.tables, r.true_card, r.count_var, r.selectivity_var, r.ratio, r.degenerate
            ));
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "repetitions {}  sigma {}  correlation {}  seed {}\n{:>6} {:>14} {:>14} {:>10}\n",
            self.repetitions,
            self.noise.sigma,
            self.noise.correlation,
            self.noise.seed,
            "tables",
            "count var",
            "sel var",
            "ratio"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:>6} {:>14.4e} {:>14.4e} {:>10.3}{}\n",
                r.tables,
                r.count_var,
                r.selectivity_var,
                r.ratio,
                if r.degenerate { "  (degenerate)" } else { "" }
            ));
        }
        s
    }
}

fn sample_var(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Monte-Carlo comparison of count-based and selectivity-based equi-join inference under
/// injected noise. For each size n the first n tables of `db` are joined with their
/// `predicates`. Repetition r uses seed `noise.seed + r`, and both estimators consume
/// the same perturbed vectors.
pub fn variance_experiment(
    db: &[TableCatalog],
    predicates: &[PredicateSet],
    noise: &NoiseModel,
    sizes: &[usize],
    reps: usize,
) -> Result<VarianceReport> {
    noise.validate()?;
    if reps < 2 {
        return Err(Error::Usage("at least two repetitions are needed".into()));
    }
    if predicates.len() != db.len() {
        return Err(Error::Shape("one predicate set per table required".into()));
    }
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        if n < 2 || n > db.len() {
            return Err(Error::Usage(format!("join size {n} outside 2..={}", db.len())));
        }
        let q = JoinQuery {
            tables: db[..n].iter().map(|t| t.name.clone()).collect(),
            ops: vec![CmpOp::Eq; n - 1],
            outer: vec![false; n],
            predicates: predicates[..n].to_vec(),
        };
        let ests: Vec<ExactEstimator> = db[..n].iter().map(|t| ExactEstimator::new(Arc::new(t.clone()))).collect();
        let kds: Vec<_> = db[..n].iter().map(compute_key_distribution).collect();
        let inputs: Vec<JoinInput> =
            ests.iter().zip(&kds).map(|(e, k)| JoinInput { estimator: e, key_dist: k, digest: "" }).collect();
        let (_, members) = prepare_members(&q, &inputs)?;
        let counts: Vec<Vec<f64>> = members.iter().map(|m| m.key_counts.clone()).collect();
        let card_j = crate::join::schema_cardinality(&counts, &q.ops, &q.outer)?;
        let truth = infer_cardinality(&q, &members, card_j)?.cardinality;
        if truth <= 0.0 {
            return Err(Error::Usage(format!("join of the first {n} tables is empty")));
        }
        let sizes_t: Vec<u64> = members.iter().map(|m| m.row_count).collect();
        let draws: Vec<(f64, f64)> = (0..reps)
            .into_par_iter()
            .map(|r| {
                let mut rng = ChaCha8Rng::seed_from_u64(noise.seed.wrapping_add(r as u64));
                let noisy: Vec<AlignedMember> = members
                    .iter()
                    .map(|m| {
                        let (c, u) = noise.perturb(&mut rng, &m.conditioned.values, &m.unconditioned.values);
                        AlignedMember {
                            conditioned: DistVector::new(c, m.conditioned.domain.clone()),
                            unconditioned: DistVector::new(u, m.unconditioned.domain.clone()),
                            key_counts: m.key_counts.clone(),
                            row_count: m.row_count,
                        }
                    })
                    .collect();
                let joints: Vec<DistVector> = noisy.iter().map(|m| m.conditioned.clone()).collect();
                let count = count_based_cardinality(&joints, &sizes_t)?;
                let sel = infer_cardinality(&q, &noisy, card_j)?.cardinality;
                Ok((count / truth, sel / truth))
            })
            .collect::<Result<_>>()?;
        let c: Vec<f64> = draws.iter().map(|d| d.0).collect();
        let s: Vec<f64> = draws.iter().map(|d| d.1).collect();
        let (cv, sv) = (sample_var(&c), sample_var(&s));
        let degenerate = cv == 0.0 || sv == 0.0;
        if degenerate {
            log::warn!("join size {n}: zero-variance run");
        }
        rows.push(VarianceRow {
            tables: n,
            true_card: truth,
            count_var: cv,
            selectivity_var: sv,
            ratio: if sv > 0.0 { cv / sv } else { f64::NAN },
            degenerate,
        });
    }
    Ok(VarianceReport { repetitions: reps, noise: *noise, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::synth::chain_database;

    #[test]
    fn zero_noise_is_exact() {
        let (db, preds) = chain_database().unwrap();
        let noise = NoiseModel { sigma: 0.0, correlation: 1.0, seed: 1 };
        let r = variance_experiment(&db, &preds, &noise, &[2, 3, 4], 50).unwrap();
        for row in &r.rows {
            assert!(row.count_var < 1e-24 && row.selectivity_var < 1e-24, "{row:?}");
        }
    }

    #[test]
    fn noise_statistics() {
        let noise = NoiseModel { sigma: 0.01, correlation: 0.5, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20000;
        let (e_q, e_u) = noise.draw(&mut rng, n);
        let mean = e_q.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 3.0 * noise.sigma / (n as f64).sqrt());
        let var = e_q.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!((var / 1e-4 - 1.0).abs() < 0.05);
        let cov = e_q.iter().zip(&e_u).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        assert!((cov / 1e-4 - 0.5).abs() < 0.05);
    }

    #[test]
    fn perturbed_vectors_stay_valid() {
        let noise = NoiseModel { sigma: 0.2, correlation: 0.0, seed: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let (c, u) = noise.perturb(&mut rng, &[0.1, 0.0, 0.2, 0.05], &[0.3, 0.1, 0.4, 0.2]);
            assert!(c.iter().chain(&u).all(|&x| x >= 0.0));
            assert!((c.iter().sum::<f64>() - 0.35).abs() < 1e-12);
            assert!((u.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(c[1], 0.0);
        }
    }

    #[test]
    fn shared_errors_favour_selectivity_inference() {
        let (db, preds) = chain_database().unwrap();
        let noise = NoiseModel { sigma: 0.01, correlation: 1.0, seed: 11 };
        let r = variance_experiment(&db, &preds, &noise, &[2, 3, 4], 2000).unwrap();
        assert!(r.ordering_holds(), "{}", r.summary());
        assert_eq!(r, variance_experiment(&db, &preds, &noise, &[2, 3, 4], 2000).unwrap());
    }

    #[test]
    fn independent_errors_reverse_the_ordering() {
        let (db, preds) = chain_database().unwrap();
        let noise = NoiseModel { sigma: 0.01, correlation: 0.0, seed: 11 };
        let r = variance_experiment(&db, &preds, &noise, &[2, 3, 4], 2000).unwrap();
        assert!(r.rows.iter().all(|row| row.selectivity_var > row.count_var), "{}", r.summary());
    }

    #[test]
    fn bad_arguments() {
        let (db, preds) = chain_database().unwrap();
        let ok = NoiseModel { sigma: 0.01, correlation: 1.0, seed: 0 };
        assert!(variance_experiment(&db, &preds, &ok, &[5], 10).is_err());
        assert!(variance_experiment(&db, &preds, &ok, &[2], 1).is_err());
        let bad = NoiseModel { correlation: 2.0, ..ok };
        assert!(matches!(variance_experiment(&db, &preds, &bad, &[2], 10), Err(Error::Usage(_))));
    }
}
