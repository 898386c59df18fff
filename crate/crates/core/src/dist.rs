//! Probability vectors over encoded domains.

use serde::{Deserialize, Serialize};

/// Identifies the dictionary a [`DistVector`] is indexed by.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainRef {
    /// Native dictionary of a table column.
    Column { table: String, column: String },
    /// A shared key encoding built by [`crate::join::align_domains`].
    Aligned { fingerprint: u64 },
    /// Sub-column or scratch domain with no catalog identity.
    Anonymous,
}

/// Nonnegative reals indexed by encoded domain slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistVector {
    pub values: Vec<f64>,
    pub domain: DomainRef,
}

impl DistVector {
    pub fn new(values: Vec<f64>, domain: DomainRef) -> Self {
        Self { values, domain }
    }

    pub fn zeros(len: usize, domain: DomainRef) -> Self {
        Self::new(vec![0.0; len], domain)
    }

    pub fn anonymous(values: Vec<f64>) -> Self {
        Self::new(values, DomainRef::Anonymous)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }

    pub fn scaled(&self, factor: f64) -> DistVector {
        DistVector::new(self.values.iter().map(|v| v * factor).collect(), self.domain.clone())
    }

    pub fn l1_distance(&self, other: &DistVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).sum()
    }
}
