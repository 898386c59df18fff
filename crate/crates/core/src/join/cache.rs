use std::collections::BTreeMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

/// Cached unfiltered join size for one plan signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub card: f64,
    pub members: Vec<String>,
    /// Content digest of each member at computation time, parallel to `members`.
    pub digests: Vec<String>,
}

/// Read-mostly map from plan signature to schema cardinality.
#[derive(Debug, Default)]
pub struct SchemaCardCache {
    entries: RwLock<BTreeMap<String, CacheEntry>>,
}

impl SchemaCardCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: BTreeMap<String, CacheEntry>) -> Self {
        Self { entries: RwLock::new(entries) }
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.entries.read().unwrap().get(key).cloned()
    }

    /// Returns the cached value if present with matching digests, else computes and stores it.
    pub fn get_or_insert_with<E>(
        &self,
        key: &str,
        members: &[String],
        digests: &[String],
        compute: impl FnOnce() -> Result<f64, E>,
    ) -> Result<f64, E> {
        if let Some(e) = self.entries.read().unwrap().get(key) {
            if e.digests == digests {
                return Ok(e.card);
            }
        }
        let card = compute()?;
        self.entries
            .write()
            .unwrap()
            .insert(key.to_string(), CacheEntry { card, members: members.to_vec(), digests: digests.to_vec() });
        Ok(card)
    }

    /// Drops every entry that involves `table`. Returns how many were removed.
    pub fn invalidate_table(&self, table: &str) -> usize {
        let mut map = self.entries.write().unwrap();
        let before = map.len();
        map.retain(|_, e| !e.members.iter().any(|m| m == table));
        before - map.len()
    }

    /// Keeps entries whose member digests all match `current(name)`.
    pub fn retain_fresh(&self, current: impl Fn(&str) -> Option<String>) -> usize {
        let mut map = self.entries.write().unwrap();
        let before = map.len();
        map.retain(|_, e| e.members.iter().zip(&e.digests).all(|(m, d)| current(m).as_deref() == Some(d.as_str())));
        before - map.len()
    }

    pub fn snapshot(&self) -> BTreeMap<String, CacheEntry> {
        self.entries.read().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Clone for SchemaCardCache {
    fn clone(&self) -> Self {
        Self::from_entries(self.snapshot())
    }
}
