use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use keydist::anpm::{Hyperparams, TrainConfig};
use keydist::bundle::{Bundle, EstimatorKind};
use keydist::catalog::RawTable;
use keydist::eval::synth::correlated_database;
use keydist::eval::{generate_workload, WorkloadConfig};
use keydist::join::InferenceMode;
use keydist::predicates::CmpOp;

#[test]
fn sample_then_full_update_improves_estimates() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let db = correlated_database(&mut rng, 3, 3000).unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        batch_size: 128,
        learning_rate: 5e-3,
        hyper: Hyperparams { embed_dim: 8, hidden: 32, layers: 2, hyper_width: 8 },
        ..TrainConfig::default()
    };
    let full = db[0].to_raw();
    let cut = full.rows.len() * 8 / 10;
    let sample = RawTable { rows: full.rows[..cut].to_vec(), ..full.clone() };
    let rest = RawTable { rows: full.rows[cut..].to_vec(), ..full.clone() };
    let mut b = Bundle::new(cfg.clone());
    b.insert_table(&sample, "k", 12).unwrap();
    for t in &db[1..] {
        b.insert_table(&t.to_raw(), "k", 12).unwrap();
    }
    b.train(&[], &cfg).unwrap();

    // true cardinalities come from the full data
    let w: Vec<_> = generate_workload(
        &db,
        &WorkloadConfig { queries: 60, ops: vec![CmpOp::Eq, CmpOp::Le], seed: 4, ..WorkloadConfig::default() },
    )
    .unwrap()
    .into_iter()
    .filter(|q| q.tables.contains(&full.name))
    .collect();
    assert!(w.len() >= 20);
    let before = b.evaluate(&w, EstimatorKind::Learned, InferenceMode::Selectivity).unwrap();
    let next = b.update_table(&full.name, &rest).unwrap();
    assert_eq!(next.table(&full.name).unwrap().catalog.row_count, full.rows.len());
    let after = next.evaluate(&w, EstimatorKind::Learned, InferenceMode::Selectivity).unwrap();
    assert!(after.p50 < before.p50, "median q-error {} -> {}", before.p50, after.p50);
}
