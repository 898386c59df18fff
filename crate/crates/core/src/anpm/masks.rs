//! Explicit autoregressive masks and their reachability audit.

use super::layout::{ColumnShape, Hyperparams, Layout};
use crate::error::{Error, Result};

/// Boolean connectivity of every masked layer, derived from the same prefix ranges the
/// forward pass uses.
#[derive(Debug, Clone)]
pub struct MaskSet {
    /// Owning column of each input unit; `None` is the start-of-sequence vector.
    pub input_owner: Vec<Option<usize>>,
    pub input_to_hidden: Vec<Vec<bool>>,
    pub hidden_to_hidden: Vec<Vec<Vec<bool>>>,
    /// One row per sub-column output group.
    pub hidden_to_output: Vec<Vec<bool>>,
    /// Original column of each output group.
    pub output_column: Vec<usize>,
}

impl MaskSet {
    pub(crate) fn from_layout(lay: &Layout) -> Self {
        let h = lay.hp.hidden;
        let e = lay.hp.embed_dim;
        let mut input_owner = vec![None; e];
        for (t, c) in lay.columns[..lay.n_columns() - 1].iter().enumerate() {
            input_owner.extend(std::iter::repeat_n(Some(t), c.sub_domains.len() * e));
        }
        let prefix = |end: usize, width: usize| (0..width).map(|x| x < end).collect::<Vec<bool>>();
        let input_to_hidden = (0..h).map(|k| prefix(lay.in_row_end(k), lay.in_dim)).collect();
        let hidden_to_hidden =
            (1..lay.hp.layers).map(|_| (0..h).map(|k| prefix(lay.hid_row_end(k), h)).collect()).collect();
        let hidden_to_output = lay.subs.iter().map(|s| prefix(lay.head_end(s.col), h)).collect();
        let output_column = lay.subs.iter().map(|s| s.col).collect();
        Self { input_owner, input_to_hidden, hidden_to_hidden, hidden_to_output, output_column }
    }

    /// Input units reachable from each output group through unmasked paths, residual
    /// skips included.
    pub fn reachability(&self) -> Vec<Vec<bool>> {
        let d = self.input_owner.len();
        let mut reach: Vec<Vec<bool>> = self.input_to_hidden.clone();
        for layer in &self.hidden_to_hidden {
            let prev = reach.clone();
            for (k, row) in layer.iter().enumerate() {
                for (k2, &on) in row.iter().enumerate() {
                    if on {
                        for x in 0..d {
                            reach[k][x] |= prev[k2][x];
                        }
                    }
                }
            }
        }
        self.hidden_to_output
            .iter()
            .map(|row| {
                let mut r = vec![false; d];
                for (k, &on) in row.iter().enumerate() {
                    if on {
                        for x in 0..d {
                            r[x] |= reach[k][x];
                        }
                    }
                }
                r
            })
            .collect()
    }

    /// Every output group of column i must reach exactly SOS and the inputs of columns < i.
    pub fn audit(&self) -> Result<()> {
        for (s, r) in self.reachability().iter().enumerate() {
            let col = self.output_column[s];
            for (x, &reached) in r.iter().enumerate() {
                let allowed = match self.input_owner[x] {
                    None => true,
                    Some(t) => t < col,
                };
                if reached != allowed {
                    return Err(Error::Mask(format!(
                        "output group {s} (column {col}) {} input {x} (owner {:?})",
                        if reached { "reaches forbidden" } else { "cannot reach allowed" },
                        self.input_owner[x]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Masks for sub-columns listed in model order as `(column, sub-column)` pairs.
/// Sub-columns of one column must be adjacent and high to low; the key column comes last.
pub fn build_masks(order: &[(usize, usize)], key_column: usize, hp: &Hyperparams) -> Result<MaskSet> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for &(c, j) in order {
        match runs.last_mut() {
            Some((col, k)) if *col == c => {
                if j != *k {
                    return Err(Error::Mask(format!("column {c}: sub-column {j} out of order")));
                }
                *k += 1;
            }
            _ => {
                if runs.iter().any(|r| r.0 == c) {
                    return Err(Error::Mask(format!("sub-columns of column {c} are not adjacent")));
                }
                if j != 0 {
                    return Err(Error::Mask(format!("column {c} does not start at its high sub-column")));
                }
                runs.push((c, 1));
            }
        }
    }
    match runs.last() {
        Some(&(c, _)) if c == key_column => {}
        _ => return Err(Error::Mask("key column sub-columns must come last".into())),
    }
    let columns = runs
        .iter()
        .map(|&(c, k)| ColumnShape { name: format!("c{c}"), sub_domains: vec![2; k], learn_temperature: false })
        .collect();
    Ok(MaskSet::from_layout(&Layout::new(*hp, columns)?))
}
