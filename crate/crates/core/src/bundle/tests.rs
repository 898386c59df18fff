use super::*;
use crate::anpm::Hyperparams;
use crate::catalog::read_csv_from;
use crate::predicates::CmpOp;
use crate::query::JoinOps;

fn cfg() -> TrainConfig {
    TrainConfig {
        epochs: 2,
        batch_size: 32,
        hyper: Hyperparams { embed_dim: 4, hidden: 16, layers: 2, hyper_width: 4 },
        ..TrainConfig::default()
    }
}

fn raw(name: &str, seed: i64, rows: usize) -> RawTable {
    let mut csv = String::from("id,x\n");
    for r in 0..rows as i64 {
        csv.push_str(&format!("{},{}\n", (r * 7 + seed) % 9, (r + seed) % 4));
    }
    read_csv_from(csv.as_bytes(), name, b',').unwrap()
}

fn bundle() -> Bundle {
    let mut b = Bundle::new(cfg());
    for (i, n) in ["t1", "t2", "t3"].iter().enumerate() {
        b.insert_table(&raw(n, i as i64, 60 + 10 * i), "id", 3).unwrap();
    }
    b.train(&[], &cfg()).unwrap();
    b
}

fn spec(tables: &[&str], op: CmpOp) -> QuerySpec {
    QuerySpec {
        tables: tables.iter().map(|s| s.to_string()).collect(),
        join_op: JoinOps::Single(op),
        join_keys: None,
        predicates: vec![],
        outer: None,
        true_card: None,
    }
}

#[test]
fn round_trip_reproduces_estimates() {
    let b = bundle();
    let bytes = b.to_bytes().unwrap();
    let back = Bundle::from_bytes(&bytes).unwrap();
    assert_eq!(back.to_bytes().unwrap(), bytes);
    for s in [spec(&["t1", "t2"], CmpOp::Eq), spec(&["t3", "t1", "t2"], CmpOp::Le)] {
        let a = b.estimate(&s, EstimatorKind::Learned, InferenceMode::Selectivity).unwrap();
        let c = back.estimate(&s, EstimatorKind::Learned, InferenceMode::Selectivity).unwrap();
        assert_eq!(a.cardinality.to_bits(), c.cardinality.to_bits());
    }
}

#[test]
fn corruption_is_detected() {
    let bytes = bundle().to_bytes().unwrap();
    assert!(matches!(Bundle::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Integrity(_))));
    assert!(matches!(Bundle::from_bytes(&bytes[..10]), Err(Error::Integrity(_))));
    let mut flipped = bytes.clone();
    flipped[100] ^= 1;
    assert!(matches!(Bundle::from_bytes(&flipped), Err(Error::Integrity(_))));
}

#[test]
fn update_isolates_other_tables() {
    let b = bundle();
    let q13 = spec(&["t1", "t3"], CmpOp::Eq);
    let q12 = spec(&["t1", "t2"], CmpOp::Eq);
    let before = b.estimate(&q13, EstimatorKind::Learned, InferenceMode::Selectivity).unwrap();
    b.estimate(&q12, EstimatorKind::Learned, InferenceMode::Selectivity).unwrap();
    assert_eq!(b.cache().len(), 2);

    let next = b.update_table("t2", &raw("t2", 5, 40)).unwrap();
    for t in ["t1", "t3"] {
        assert_eq!(next.table(t).unwrap().catalog_blob(), b.table(t).unwrap().catalog_blob());
        assert_eq!(next.table(t).unwrap().model_blob(), b.table(t).unwrap().model_blob());
        assert_eq!(next.table(t).unwrap().digest(), b.table(t).unwrap().digest());
    }
    assert_ne!(next.table("t2").unwrap().digest(), b.table("t2").unwrap().digest());
    assert_eq!(next.table("t2").unwrap().catalog.row_count, b.table("t2").unwrap().catalog.row_count + 40);
    assert_eq!(next.cache().len(), 1);
    let after = next.estimate(&q13, EstimatorKind::Learned, InferenceMode::Selectivity).unwrap();
    assert_eq!(before.cardinality.to_bits(), after.cardinality.to_bits());

    let fresh = next.estimate(&q12, EstimatorKind::Exact, InferenceMode::Selectivity).unwrap();
    let truth = crate::eval::true_cardinality(&next.catalogs(), &q12).unwrap();
    assert!((fresh.cardinality - truth as f64).abs() < 1e-9 * truth as f64);
}

#[test]
fn update_rejects_schema_drift_and_unknown_tables() {
    let b = bundle();
    let drift = read_csv_from("id,y\n1,2\n".as_bytes(), "t2", b',').unwrap();
    assert!(matches!(b.update_table("t2", &drift), Err(Error::Schema(_))));
    assert!(matches!(b.update_table("zz", &drift), Err(Error::Usage(_))));
}

#[test]
fn stale_cache_entries_are_dropped_on_load() {
    let b = bundle();
    b.estimate(&spec(&["t1", "t2"], CmpOp::Eq), EstimatorKind::Exact, InferenceMode::Selectivity).unwrap();
    let mut entries = b.cache().snapshot();
    entries.insert(
        "t1 = t3".into(),
        CacheEntry { card: 1.0, members: vec!["t1".into(), "t3".into()], digests: vec!["x".into(), "y".into()] },
    );
    let mut tampered = b.clone();
    tampered.cache = SchemaCardCache::from_entries(entries);
    let back = Bundle::from_bytes(&tampered.to_bytes().unwrap()).unwrap();
    assert_eq!(back.cache().len(), 1);
}

#[test]
fn handle_swaps_atomically() {
    let h = BundleHandle::new(bundle());
    let old = h.snapshot();
    let new = h.update_table("t1", &raw("t1", 2, 5)).unwrap();
    assert!(Arc::ptr_eq(&new, &h.snapshot()));
    assert_eq!(old.table("t1").unwrap().catalog.row_count + 5, new.table("t1").unwrap().catalog.row_count);
}

#[test]
fn save_and_load_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("db.bundle");
    let b = bundle();
    b.save(&p).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), b.to_bytes().unwrap());
    assert_eq!(Bundle::load(&p).unwrap().table_names(), vec!["t1", "t2", "t3"]);
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn untrained_table_needs_exact_mode() {
    let mut b = Bundle::new(cfg());
    b.insert_table(&raw("a", 0, 10), "id", 3).unwrap();
    b.insert_table(&raw("b", 1, 10), "id", 3).unwrap();
    let s = spec(&["a", "b"], CmpOp::Eq);
    assert!(matches!(b.estimate(&s, EstimatorKind::Learned, InferenceMode::Selectivity), Err(Error::Usage(_))));
    let e = b.estimate(&s, EstimatorKind::Exact, InferenceMode::Selectivity).unwrap();
    let truth = crate::eval::true_cardinality(&b.catalogs(), &s).unwrap();
    assert_eq!(e.cardinality.round() as u64, truth);
    let d = b.distributions(&s, EstimatorKind::Exact).unwrap();
    assert_eq!(d["members"].as_array().unwrap().len(), 2);
}
