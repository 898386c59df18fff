use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bitwise split of one column's code space into sub-columns, high bits first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorizationSpec {
    pub bit_width: u32,
    pub sub_domains: Vec<u32>,
}

/// Number of sub-columns for a domain of `ndv` codes at `bit_width` bits each.
pub fn sub_column_count(ndv: u64, bit_width: u32) -> usize {
    if ndv <= 1 {
        return 1;
    }
    let total_bits = 64 - ndv.leading_zeros();
    total_bits.div_ceil(bit_width) as usize
}

impl FactorizationSpec {
    pub fn for_ndv(ndv: u64, bit_width: u32) -> Self {
        assert!((1..=16).contains(&bit_width), "bit width {bit_width} outside 1..=16");
        let k = sub_column_count(ndv, bit_width);
        let shift = (k as u32 - 1) * bit_width;
        let first = (ndv.max(1) - 1) >> shift;
        let mut sub_domains = vec![1u32 << bit_width; k];
        sub_domains[0] = first as u32 + 1;
        Self { bit_width, sub_domains }
    }

    /// Builds a spec from explicit sub-domain sizes, checking each fits in `bit_width` bits.
    pub fn from_parts(bit_width: u32, sub_domains: Vec<u32>) -> Result<Self> {
        if !(1..=16).contains(&bit_width) {
            return Err(Error::Usage(format!("bit width {bit_width} outside 1..=16")));
        }
        if sub_domains.is_empty() || sub_domains.iter().any(|&d| d == 0 || d > 1 << bit_width) {
            return Err(Error::Shape(format!("sub-domains {sub_domains:?} invalid for {bit_width}-bit sub-columns")));
        }
        if sub_domains[1..].iter().any(|&d| d != 1 << bit_width) {
            return Err(Error::Shape("only the leading sub-column may be narrower".into()));
        }
        Ok(Self { bit_width, sub_domains })
    }

    pub fn k(&self) -> usize {
        self.sub_domains.len()
    }

    /// Size of the full factorized code space (product of sub-domains).
    pub fn capacity(&self) -> u64 {
        self.sub_domains.iter().map(|&d| d as u64).product()
    }

    fn shift(&self, j: usize) -> u32 {
        (self.k() - 1 - j) as u32 * self.bit_width
    }

    /// Flattened size of the first `j` sub-columns.
    pub fn prefix_size(&self, j: usize) -> u64 {
        self.sub_domains[..j].iter().map(|&d| d as u64).product()
    }
}

pub fn factorize_value(code: u64, spec: &FactorizationSpec) -> Result<Vec<u32>> {
    let cap = spec.capacity();
    if code >= cap {
        return Err(Error::Domain { code, size: cap });
    }
    let low_mask = (1u64 << spec.bit_width) - 1;
    Ok((0..spec.k())
        .map(|j| {
            let part = code >> spec.shift(j);
            if j == 0 {
                part as u32
            } else {
                (part & low_mask) as u32
            }
        })
        .collect())
}

pub fn defactorize(sub_codes: &[u32], spec: &FactorizationSpec) -> Result<u64> {
    if sub_codes.len() != spec.k() {
        return Err(Error::Shape(format!("{} sub-codes for a {}-way factorization", sub_codes.len(), spec.k())));
    }
    let mut code = 0u64;
    for (j, (&c, &d)) in sub_codes.iter().zip(&spec.sub_domains).enumerate() {
        if c >= d {
            return Err(Error::Domain { code: c as u64, size: d as u64 });
        }
        code |= (c as u64) << spec.shift(j);
    }
    Ok(code)
}
