use crate::catalog::FactorizationSpec;
use crate::dist::DistVector;
use crate::error::{Error, Result};

/// Row-major conditional table: row r is a distribution over one sub-column given
/// prefix combination r.
#[derive(Debug, Clone, PartialEq)]
pub struct CondBlock {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CondBlock {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{} entries for a {rows}x{cols} block", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Chains sub-column conditionals into the joint over the full factorized space.
fn chain_product(blocks: &[CondBlock]) -> Result<Vec<f64>> {
    let mut dist = vec![1.0];
    for (j, b) in blocks.iter().enumerate() {
        if b.rows != dist.len() {
            return Err(Error::Shape(format!("block {j} has {} rows, prefix space has {}", b.rows, dist.len())));
        }
        let mut next = Vec::with_capacity(dist.len() * b.cols);
        for (r, &p) in dist.iter().enumerate() {
            next.extend(b.row(r).iter().map(|&q| p * q));
        }
        dist = next;
    }
    Ok(dist)
}

/// Distribution over the original column: the chain product with bit combinations
/// beyond `ndv` dropped and the remainder renormalized.
pub fn reconstruct_column_dist(blocks: &[CondBlock], ndv: usize) -> Result<DistVector> {
    let full = chain_product(blocks)?;
    if full.len() < ndv {
        return Err(Error::Shape(format!("factorized space of {} cannot hold {ndv} values", full.len())));
    }
    let slice = &full[..ndv];
    let kept: f64 = slice.iter().sum();
    if kept.is_nan() || kept <= 0.0 {
        return Err(Error::DegenerateDist);
    }
    Ok(DistVector::anonymous(slice.iter().map(|p| p / kept).collect()))
}

/// The normalization line as literally printed, `total / kept` - a scalar, not a distribution.
#[cfg(test)]
pub(crate) fn printed_normalization(blocks: &[CondBlock], ndv: usize) -> Result<f64> {
    let full = chain_product(blocks)?;
    let kept: f64 = full[..ndv].iter().sum();
    Ok(full.iter().sum::<f64>() / kept)
}

/// Conditionals counted directly from `codes`. Prefixes that never occur get a uniform row.
pub fn exact_sub_conditionals(codes: &[u32], spec: &FactorizationSpec) -> Result<Vec<CondBlock>> {
    let k = spec.k();
    let mut blocks = Vec::with_capacity(k);
    let subs: Vec<Vec<u32>> =
        codes.iter().map(|&c| crate::catalog::factorize_value(c as u64, spec)).collect::<Result<_>>()?;
    for j in 0..k {
        let rows = spec.prefix_size(j) as usize;
        let cols = spec.sub_domains[j] as usize;
        let mut counts = vec![0u64; rows * cols];
        for s in &subs {
            let prefix =
                s[..j].iter().zip(&spec.sub_domains).fold(0usize, |acc, (&c, &d)| acc * d as usize + c as usize);
            counts[prefix * cols + s[j] as usize] += 1;
        }
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &counts[r * cols..(r + 1) * cols];
            let total: u64 = row.iter().sum();
            for c in 0..cols {
                data[r * cols + c] = if total == 0 { 1.0 / cols as f64 } else { row[c] as f64 / total as f64 };
            }
        }
        blocks.push(CondBlock::new(rows, cols, data)?);
    }
    Ok(blocks)
}
