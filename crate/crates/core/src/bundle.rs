//! Single-file database bundle: per-table catalog, model and key distribution, plus the
//! schema-cardinality cache.
//!
//! Layout: magic `KDBUNDLE`, u16 major, u16 minor, u64 manifest length, JSON manifest,
//! concatenated blobs, SHA-256 of everything before it.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, RwLock};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::anpm::{decode_model, encode_model, train, AnpmModel, TrainConfig};
use crate::catalog::{
    compute_key_distribution, decode_catalog, encode_catalog, ingest_table, KeyDistribution, RawTable, TableCatalog,
};
use crate::container::{Reader, Writer};
use crate::error::{Error, Result};
use crate::estimator::{ExactEstimator, LearnedEstimator, TableEstimator};
use crate::eval::QErrorReport;
use crate::join::{
    estimate_join, prepare_members, CacheEntry, Estimate, InferenceMode, JoinInput, JoinQuery, SchemaCardCache,
};
use crate::query::QuerySpec;

const MAGIC: &[u8; 8] = b"KDBUNDLE";
pub const BUNDLE_MAJOR: u16 = 1;
pub const BUNDLE_MINOR: u16 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlobRef {
    /// Offset from the start of the blob area.
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TableManifest {
    name: String,
    key_column: String,
    bit_width: u32,
    catalog: BlobRef,
    model: Option<BlobRef>,
    digest: String,
    /// Added in 1.1; recomputed from the catalog when absent.
    #[serde(default)]
    key_dist: Option<KeyDistribution>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    tables: Vec<TableManifest>,
    train_config: TrainConfig,
    /// Added in 1.1.
    #[serde(default)]
    cache: BTreeMap<String, CacheEntry>,
}

/// One table with its serialized forms kept alongside the decoded ones, so untouched
/// tables are written back byte for byte.
#[derive(Debug, Clone)]
pub struct TableEntry {
    pub catalog: Arc<TableCatalog>,
    pub model: Option<Arc<AnpmModel>>,
    pub key_dist: KeyDistribution,
    pub key_column: String,
    pub bit_width: u32,
    catalog_blob: Arc<Vec<u8>>,
    model_blob: Option<Arc<Vec<u8>>>,
    digest: String,
}

fn digest_of(catalog: &[u8], model: Option<&[u8]>) -> String {
    let mut h = Sha256::new();
    h.update(catalog);
    if let Some(m) = model {
        h.update(m);
    }
    hex(&h.finalize())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl TableEntry {
    fn new(catalog: TableCatalog, model: Option<AnpmModel>, bit_width: u32) -> Result<Self> {
        let catalog_blob = encode_catalog(&catalog)?;
        let model_blob = model.as_ref().map(encode_model).transpose()?;
        let digest = digest_of(&catalog_blob, model_blob.as_deref());
        Ok(Self {
            key_dist: compute_key_distribution(&catalog),
            key_column: catalog.key().name.clone(),
            bit_width,
            catalog: Arc::new(catalog),
            model: model.map(Arc::new),
            catalog_blob: Arc::new(catalog_blob),
            model_blob: model_blob.map(Arc::new),
            digest,
        })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn catalog_blob(&self) -> &[u8] {
        &self.catalog_blob
    }

    pub fn model_blob(&self) -> Option<&[u8]> {
        self.model_blob.as_deref().map(|v| v.as_slice())
    }
}

/// Which per-table estimator feeds join inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Learned,
    Exact,
}

#[derive(Debug, Clone, Default)]
pub struct Bundle {
    tables: BTreeMap<String, TableEntry>,
    pub train_config: TrainConfig,
    cache: SchemaCardCache,
}

impl Bundle {
    pub fn new(train_config: TrainConfig) -> Self {
        Self { tables: BTreeMap::new(), train_config, cache: SchemaCardCache::new() }
    }

    /// Adds or replaces an untrained table.
    pub fn insert_table(&mut self, raw: &RawTable, key_column: &str, bit_width: u32) -> Result<()> {
        let cat = ingest_table(raw, key_column, bit_width)?;
        self.cache.invalidate_table(&cat.name);
        let entry = TableEntry::new(cat, None, bit_width)?;
        self.tables.insert(entry.catalog.name.clone(), entry);
        Ok(())
    }

    pub fn table(&self, name: &str) -> Result<&TableEntry> {
        self.tables.get(name).ok_or_else(|| Error::Usage(format!("no table {name} in bundle")))
    }

    pub fn table_names(&self) -> Vec<String> {
        self.tables.keys().cloned().collect()
    }

    pub fn cache(&self) -> &SchemaCardCache {
        &self.cache
    }

    /// Trains the named tables (all when `names` is empty), in parallel across tables.
    /// Returns each table's loss curve.
    pub fn train(&mut self, names: &[String], cfg: &TrainConfig) -> Result<BTreeMap<String, Vec<f64>>> {
        let targets: Vec<String> = if names.is_empty() { self.table_names() } else { names.to_vec() };
        for n in &targets {
            self.table(n)?;
        }
        let results: Vec<(String, AnpmModel, Vec<f64>)> = targets
            .par_iter()
            .map(|n| {
                let (m, curve) = train(&self.tables[n].catalog, cfg)?;
                Ok((n.clone(), m, curve))
            })
            .collect::<Result<_>>()?;
        let mut curves = BTreeMap::new();
        for (name, model, curve) in results {
            let old = &self.tables[&name];
            let entry = TableEntry::new((*old.catalog).clone(), Some(model), old.bit_width)?;
            self.cache.invalidate_table(&name);
            self.tables.insert(name.clone(), entry);
            curves.insert(name, curve);
        }
        self.train_config = cfg.clone();
        Ok(curves)
    }

    /// New bundle in which only `name` changed: `new_rows` are appended, the table is
    /// re-ingested and, if it had a model, retrained. Cache entries that involve the
    /// table are dropped; everything else is shared with `self`.
    pub fn update_table(&self, name: &str, new_rows: &RawTable) -> Result<Bundle> {
        let old = self.table(name)?;
        let mut raw = old.catalog.to_raw();
        raw.append(new_rows)?;
        let cat = ingest_table(&raw, &old.key_column, old.bit_width)?;
        let model = match &old.model {
            Some(m) => Some(train(&cat, &m.config)?.0),
            None => None,
        };
        let entry = TableEntry::new(cat, model, old.bit_width)?;
        let mut next = self.clone();
        next.cache.invalidate_table(name);
        next.tables.insert(name.to_string(), entry);
        Ok(next)
    }

    fn resolve(&self, spec: &QuerySpec) -> Result<JoinQuery> {
        spec.resolve(|t| self.tables.get(t).map(|e| &*e.catalog))
    }

    fn estimators(&self, q: &JoinQuery, kind: EstimatorKind) -> Result<Vec<Box<dyn TableEstimator>>> {
        q.tables
            .iter()
            .map(|t| {
                let e = self.table(t)?;
                Ok(match kind {
                    EstimatorKind::Exact => Box::new(ExactEstimator::new(e.catalog.clone())) as Box<dyn TableEstimator>,
                    EstimatorKind::Learned => {
                        let m =
                            e.model.clone().ok_or_else(|| Error::Usage(format!("table {t} has no trained model")))?;
                        Box::new(LearnedEstimator::new(e.catalog.clone(), m)?)
                    }
                })
            })
            .collect()
    }

    pub fn estimate_query(&self, q: &JoinQuery, kind: EstimatorKind, mode: InferenceMode) -> Result<Estimate> {
        let ests = self.estimators(q, kind)?;
        let inputs: Vec<JoinInput> = q
            .tables
            .iter()
            .zip(&ests)
            .map(|(t, e)| {
                let entry = &self.tables[t];
                JoinInput { estimator: e.as_ref(), key_dist: &entry.key_dist, digest: &entry.digest }
            })
            .collect();
        estimate_join(q, &inputs, Some(&self.cache), mode)
    }

    pub fn estimate(&self, spec: &QuerySpec, kind: EstimatorKind, mode: InferenceMode) -> Result<Estimate> {
        self.estimate_query(&self.resolve(spec)?, kind, mode)
    }

    /// Aligned key domain and every member's vectors, for inspection.
    pub fn distributions(&self, spec: &QuerySpec, kind: EstimatorKind) -> Result<serde_json::Value> {
        let q = self.resolve(spec)?;
        let ests = self.estimators(&q, kind)?;
        let inputs: Vec<JoinInput> = q
            .tables
            .iter()
            .zip(&ests)
            .map(|(t, e)| JoinInput {
                estimator: e.as_ref(),
                key_dist: &self.tables[t].key_dist,
                digest: &self.tables[t].digest,
            })
            .collect();
        let (aligned, members) = prepare_members(&q, &inputs)?;
        Ok(serde_json::json!({
            "keys": aligned.values.iter().map(|v| v.to_json()).collect::<Vec<_>>(),
            "members": q.tables.iter().zip(&members).map(|(t, m)| serde_json::json!({
                "table": t,
                "conditioned": m.conditioned.values,
                "unconditioned": m.unconditioned.values,
                "key_counts": m.key_counts,
            })).collect::<Vec<_>>(),
        }))
    }

    /// Q-errors against each query's `true_card`, computing it when absent.
    pub fn evaluate(&self, workload: &[QuerySpec], kind: EstimatorKind, mode: InferenceMode) -> Result<QErrorReport> {
        let mut entries = Vec::with_capacity(workload.len());
        for spec in workload {
            let q = self.resolve(spec)?;
            let truth = match spec.true_card {
                Some(c) => c,
                None => {
                    let tables: Vec<&TableCatalog> = q.tables.iter().map(|t| &*self.tables[t].catalog).collect();
                    crate::eval::brute_force_cardinality(&tables, &q)?
                }
            };
            let est = self.estimate_query(&q, kind, mode)?;
            entries.push((q.plan_signature(), est.cardinality, truth));
        }
        Ok(QErrorReport::new(entries))
    }

    pub fn catalogs(&self) -> Vec<TableCatalog> {
        self.tables.values().map(|e| (*e.catalog).clone()).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut blobs: Vec<&[u8]> = Vec::new();
        let mut offset = 0u64;
        let mut push = |b: &[u8]| {
            let r = BlobRef { offset, len: b.len() as u64 };
            offset += b.len() as u64;
            r
        };
        let mut tables = Vec::new();
        for e in self.tables.values() {
            let catalog = push(&e.catalog_blob);
            blobs.push(&e.catalog_blob);
            let model = e.model_blob.as_ref().map(|m| {
                blobs.push(m);
                push(m)
            });
            tables.push(TableManifest {
                name: e.catalog.name.clone(),
                key_column: e.key_column.clone(),
                bit_width: e.bit_width,
                catalog,
                model,
                digest: e.digest.clone(),
                key_dist: Some(e.key_dist.clone()),
            });
        }
        let manifest = Manifest { tables, train_config: self.train_config.clone(), cache: self.cache.snapshot() };
        let mut w = Writer::new(MAGIC, BUNDLE_MAJOR, BUNDLE_MINOR);
        w.header(&manifest)?;
        for b in blobs {
            w.bytes(b);
        }
        let mut out = w.finish();
        let sum = Sha256::digest(&out);
        out.extend_from_slice(&sum);
        Ok(out)
    }

    pub fn from_bytes(data: &[u8]) -> Result<Bundle> {
        if data.len() < 32 {
            return Err(Error::Integrity("bundle: truncated".into()));
        }
        let (body, trailer) = data.split_at(data.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(Error::Integrity("bundle: checksum mismatch".into()));
        }
        let (mut r, major, minor) = Reader::open(body, MAGIC, "bundle")?;
        if major != BUNDLE_MAJOR {
            return Err(Error::Version { found_major: major, found_minor: minor, supported_major: BUNDLE_MAJOR });
        }
        let manifest: Manifest = r.header()?;
        let area = r.take(r.remaining())?;
        let slice = |b: &BlobRef| -> Result<&[u8]> {
            let end = b.offset.checked_add(b.len).filter(|&e| e <= area.len() as u64);
            end.map(|e| &area[b.offset as usize..e as usize])
                .ok_or_else(|| Error::Integrity("bundle: blob out of range".into()))
        };
        let mut tables = BTreeMap::new();
        for t in manifest.tables {
            let cblob = slice(&t.catalog)?;
            let mblob = t.model.as_ref().map(&slice).transpose()?;
            if digest_of(cblob, mblob) != t.digest {
                return Err(Error::Integrity(format!("bundle: digest mismatch for table {}", t.name)));
            }
            let catalog = decode_catalog(cblob)?;
            let model = mblob.map(decode_model).transpose()?;
            if catalog.name != t.name {
                return Err(Error::Integrity(format!("bundle: table {} stores catalog {}", t.name, catalog.name)));
            }
            let key_dist = match t.key_dist {
                Some(k) => k,
                None => compute_key_distribution(&catalog),
            };
            tables.insert(
                t.name.clone(),
                TableEntry {
                    catalog: Arc::new(catalog),
                    model: model.map(Arc::new),
                    key_dist,
                    key_column: t.key_column,
                    bit_width: t.bit_width,
                    catalog_blob: Arc::new(cblob.to_vec()),
                    model_blob: mblob.map(|m| Arc::new(m.to_vec())),
                    digest: t.digest,
                },
            );
        }
        let cache = SchemaCardCache::from_entries(manifest.cache);
        let dropped = cache.retain_fresh(|n| tables.get(n).map(|e: &TableEntry| e.digest.clone()));
        if dropped > 0 {
            log::info!("dropped {dropped} stale cache entries");
        }
        if minor < BUNDLE_MINOR {
            log::info!("migrated bundle from format {major}.{minor}");
        }
        Ok(Bundle { tables, train_config: manifest.train_config, cache })
    }

    /// Writes through a temporary file in the same directory and renames it into place.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        let tmp = dir.join(format!(
            ".{}.tmp{}",
            path.file_name().and_then(|s| s.to_str()).unwrap_or("bundle"),
            std::process::id()
        ));
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Bundle> {
        Bundle::from_bytes(&fs::read(path)?)
    }
}

/// Shared, swappable bundle: readers keep the snapshot they took while an update
/// builds its replacement.
#[derive(Debug, Default)]
pub struct BundleHandle {
    current: RwLock<Arc<Bundle>>,
}

impl BundleHandle {
    pub fn new(b: Bundle) -> Self {
        Self { current: RwLock::new(Arc::new(b)) }
    }

    pub fn snapshot(&self) -> Arc<Bundle> {
        self.current.read().unwrap().clone()
    }

    pub fn update_table(&self, name: &str, new_rows: &RawTable) -> Result<Arc<Bundle>> {
        let base = self.snapshot();
        let next = Arc::new(base.update_table(name, new_rows)?);
        *self.current.write().unwrap() = next.clone();
        Ok(next)
    }
}

#[cfg(test)]
mod tests;
