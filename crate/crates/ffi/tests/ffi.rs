use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use keydist_ffi::*;

fn toy() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/toy")
}

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn load(p: &Path) -> *mut KdBundle {
    let mut b = ptr::null_mut();
    let path = c(p.to_str().unwrap());
    assert_eq!(unsafe { kd_bundle_load(path.as_ptr(), &mut b) }, KdStatus::Ok);
    b
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(kd_last_error_message()) }.to_str().unwrap().to_string()
}

#[test]
fn estimate_matches_core() {
    let b = load(&toy().join("toy.bundle"));
    let q = r#"{"tables":["title","cast","info"],"join_op":"=","predicates":[{"table":"title","column":"kind","op":"=","value":"movie"}]}"#;
    let mut e = KdEstimate::default();
    assert_eq!(unsafe { kd_estimate(b, c(q).as_ptr(), 0, &mut e) }, KdStatus::Ok);
    let core = keydist::bundle::Bundle::load(&toy().join("toy.bundle")).unwrap();
    let want = core
        .estimate(
            &keydist::query::QuerySpec::parse(q).unwrap(),
            keydist::bundle::EstimatorKind::Learned,
            keydist::join::InferenceMode::Selectivity,
        )
        .unwrap();
    assert_eq!(e.cardinality.to_bits(), want.cardinality.to_bits());
    assert_eq!(last_error(), "");

    let mut exact = KdEstimate::default();
    assert_eq!(unsafe { kd_estimate(b, c(q).as_ptr(), KD_EXACT | KD_COUNT_BASED, &mut exact) }, KdStatus::Ok);
    assert!(exact.cardinality > 0.0 && !exact.zero_join);

    let mut s = ptr::null_mut();
    assert_eq!(unsafe { kd_distributions_json(b, c(q).as_ptr(), KD_EXACT, &mut s) }, KdStatus::Ok);
    let v: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(s) }.to_str().unwrap()).unwrap();
    assert_eq!(v["members"].as_array().unwrap().len(), 3);
    unsafe { kd_string_free(s) };
    unsafe { kd_bundle_free(b) };
}

#[test]
fn errors_map_to_status_codes() {
    let mut b = ptr::null_mut();
    assert_eq!(unsafe { kd_bundle_load(ptr::null(), &mut b) }, KdStatus::InvalidArgument);
    assert_eq!(unsafe { kd_bundle_load(c("/nonexistent/x").as_ptr(), &mut b) }, KdStatus::Data);
    assert!(b.is_null());
    assert_eq!(
        unsafe { kd_bundle_load(c(toy().join("toy_v0_9.bundle").to_str().unwrap()).as_ptr(), &mut b) },
        KdStatus::Integrity
    );
    assert!(last_error().contains("0.9"));

    let b = load(&toy().join("toy.bundle"));
    let mut e = KdEstimate::default();
    assert_eq!(unsafe { kd_estimate(b, c("{").as_ptr(), 0, &mut e) }, KdStatus::Usage);
    assert!(last_error().contains("malformed query"));
    let neq = r#"{"tables":["title","cast"],"join_op":"<"}"#;
    assert_eq!(unsafe { kd_estimate(b, c(neq).as_ptr(), KD_COUNT_BASED, &mut e) }, KdStatus::Data);
    assert_eq!(unsafe { kd_estimate(ptr::null(), c(neq).as_ptr(), 0, &mut e) }, KdStatus::InvalidArgument);
    assert_eq!(unsafe { kd_estimate(b, c(neq).as_ptr(), 0, ptr::null_mut()) }, KdStatus::InvalidArgument);
    unsafe { kd_bundle_free(b) };
    unsafe { kd_bundle_free(ptr::null_mut()) };
}

#[test]
fn update_then_save() {
    let dir = tempfile::tempdir().unwrap();
    let b = load(&toy().join("toy.bundle"));
    let rows = dir.path().join("rows.csv");
    std::fs::write(&rows, "k,role\n1,2\n3,4\n").unwrap();
    assert_eq!(unsafe { kd_update_table(b, c("cast").as_ptr(), c(rows.to_str().unwrap()).as_ptr()) }, KdStatus::Ok);
    assert_eq!(unsafe { kd_update_table(b, c("nope").as_ptr(), c(rows.to_str().unwrap()).as_ptr()) }, KdStatus::Usage);
    let out = dir.path().join("next.bundle");
    assert_eq!(unsafe { kd_bundle_save(b, c(out.to_str().unwrap()).as_ptr()) }, KdStatus::Ok);
    let saved = keydist::bundle::Bundle::load(&out).unwrap();
    assert_eq!(saved.table("cast").unwrap().catalog.row_count, 152);
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { kd_bundle_tables_json(b, &mut s) }, KdStatus::Ok);
    assert_eq!(unsafe { CStr::from_ptr(s) }.to_str().unwrap(), r#"["cast","info","title"]"#);
    unsafe { kd_string_free(s) };
    unsafe { kd_bundle_free(b) };
}

#[test]
fn qerror_and_version() {
    assert_eq!(kd_qerror(0.0, 10.0), 10.0);
    assert_eq!(unsafe { CStr::from_ptr(kd_version()) }.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

/// Compiles the C smoke program against the generated header and the static library.
#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().unwrap().parent().unwrap();
    let lib = profile_dir.join("libkeydist_ffi.a");
    assert!(lib.is_file(), "static library not built at {}", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("smoke");
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let status = Command::new("cc")
        .arg(manifest.join("tests/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success());
    let out = Command::new(&bin).arg(toy().join("toy.bundle")).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields[0], env!("CARGO_PKG_VERSION"));
    assert!(fields[1].parse::<u64>().unwrap() > 0);
    assert_eq!(fields[3], "2");
    assert_eq!(fields[4], r#"["cast","info","title"]"#);
}
