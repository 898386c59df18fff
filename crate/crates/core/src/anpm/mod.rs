//! Per-table autoregressive density model over factorized columns.
//!
//! A masked residual trunk reads the start-of-sequence vector and per-sub-column
//! predicate embeddings; one head per sub-column emits logits. Sub-columns after the
//! first of each column pass through a block whose modulation weights are produced
//! by small hypernetworks fed with the earlier sub-columns' values.

mod codec;
mod gradcheck;
mod layout;
mod masks;
mod net;
mod train;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use codec::{decode_model, encode_model};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use layout::{ColumnShape, Hyperparams, Section};
pub use masks::{build_masks, MaskSet};
pub use net::{QueryInput, Real};
pub use train::train;

use crate::catalog::{factorize_value, FactorizationSpec, TableCatalog};
use crate::error::{Error, Result};
use crate::estimator::CondBlock;
use crate::predicates::{PredicateGenConfig, PredicateSet};
use layout::Layout;
use net::Net;

pub const DEFAULT_MAX_PREFIX_ROWS: usize = 16384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub predicates: PredicateGenConfig,
    pub hyper: Hyperparams,
    /// Default for every column's temperature flag.
    pub learn_temperature: bool,
    /// Per-column overrides of `learn_temperature`, by column name.
    pub temperature_overrides: BTreeMap<String, bool>,
    /// Largest prefix-combination batch allowed at inference.
    pub max_prefix_rows: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 256,
            learning_rate: 2e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            predicates: PredicateGenConfig::default(),
            hyper: Hyperparams::default(),
            learn_temperature: true,
            temperature_overrides: BTreeMap::new(),
            max_prefix_rows: DEFAULT_MAX_PREFIX_ROWS,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Usage(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(0.0..=1.0).contains(&self.predicates.coverage) || !(0.0..=1.0).contains(&self.predicates.two_sided) {
            return Err(Error::Usage("predicate rates must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Trained model plus the column metadata needed to encode queries.
#[derive(Debug, Clone)]
pub struct AnpmModel {
    pub(crate) layout: Layout,
    pub(crate) params: Vec<f32>,
    pub(crate) specs: Vec<FactorizationSpec>,
    pub(crate) ndvs: Vec<usize>,
    pub config: TrainConfig,
}

impl AnpmModel {
    /// Freshly initialized model for `cat`.
    pub fn init(cat: &TableCatalog, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let columns = cat
            .columns
            .iter()
            .map(|c| ColumnShape {
                name: c.name.clone(),
                sub_domains: c.factorization.sub_domains.iter().map(|&d| d as usize).collect(),
                learn_temperature: *config.temperature_overrides.get(&c.name).unwrap_or(&config.learn_temperature),
            })
            .collect();
        let layout = Layout::new(config.hyper, columns)?;
        let params = init_params(&layout, config.seed);
        Ok(Self {
            layout,
            params,
            specs: cat.columns.iter().map(|c| c.factorization.clone()).collect(),
            ndvs: cat.columns.iter().map(|c| c.ndv()).collect(),
            config: config.clone(),
        })
    }

    pub fn hyperparams(&self) -> Hyperparams {
        self.layout.hp
    }

    pub fn columns(&self) -> &[ColumnShape] {
        &self.layout.columns
    }

    pub fn sections(&self) -> &[Section] {
        &self.layout.sections
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn masks(&self) -> MaskSet {
        MaskSet::from_layout(&self.layout)
    }

    /// Softmax temperature of every sub-column, in model order.
    pub fn temperatures(&self) -> Vec<f64> {
        self.layout
            .subs
            .iter()
            .map(|s| if s.learn_temperature { (self.params[s.temp] as f64).exp() } else { 1.0 })
            .collect()
    }

    /// Mixed activation weights over {ReLU, tanh, identity, GELU}.
    pub fn activation_weights(&self) -> Vec<f64> {
        let w = net::softmax_weights(&self.params[self.layout.mix..self.layout.mix + layout::N_ACT]);
        w.iter().map(|&x| x as f64).collect()
    }

    /// Model input for `q`; `None` when some column's predicates are contradictory.
    pub fn encode(&self, q: &PredicateSet) -> Result<Option<QueryInput>> {
        if q.n_columns() != self.ndvs.len() {
            return Err(Error::Shape(format!(
                "predicate set over {} columns for a {}-column model",
                q.n_columns(),
                self.ndvs.len()
            )));
        }
        let Some(canon) = q.canonicalize(&self.ndvs) else {
            return Ok(None);
        };
        let n = self.ndvs.len();
        let mut cols = Vec::with_capacity(n - 1);
        for (c, preds) in canon.per_column[..n - 1].iter().enumerate() {
            let mut enc = Vec::with_capacity(preds.len());
            for p in preds {
                enc.push((p.op.index(), factorize_value(p.value as u64, &self.specs[c])?));
            }
            cols.push(enc);
        }
        Ok(Some(QueryInput { cols }))
    }

    /// Every sub-code of a row, in model order.
    pub fn targets(&self, codes: &[u32]) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(self.layout.subs.len());
        for (c, &v) in codes.iter().enumerate() {
            out.extend(factorize_value(v as u64, &self.specs[c])?);
        }
        Ok(out)
    }

    fn check_batch(&self, inputs: &[QueryInput], targets: &[Vec<u32>]) -> Result<()> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(format!("{} inputs but {} target rows", inputs.len(), targets.len())));
        }
        let lay = &self.layout;
        for (q, t) in inputs.iter().zip(targets) {
            if q.cols.len() + 1 != lay.n_columns() || t.len() != lay.subs.len() {
                return Err(Error::Shape("input or target width does not match the model".into()));
            }
            for (s, &v) in lay.subs.iter().zip(t) {
                if v as usize >= s.domain {
                    return Err(Error::Domain { code: v as u64, size: s.domain as u64 });
                }
            }
            for (c, preds) in q.cols.iter().enumerate() {
                for (op, sub) in preds {
                    let k = lay.columns[c].sub_domains.len();
                    if *op >= 5
                        || sub.len() != k
                        || sub.iter().zip(&lay.columns[c].sub_domains).any(|(&v, &d)| v as usize >= d)
                    {
                        return Err(Error::Shape(format!("malformed predicate encoding on column {c}")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Teacher-forced probability rows: `out[sub][sample]` over the sub-domain.
    pub fn forward_train(&self, inputs: &[QueryInput], targets: &[Vec<u32>]) -> Result<Vec<Vec<Vec<f64>>>> {
        self.check_batch(inputs, targets)?;
        let net = Net::new(&self.layout, &self.params);
        let ins: Vec<&QueryInput> = inputs.iter().collect();
        let tg: Vec<&[u32]> = targets.iter().map(|t| t.as_slice()).collect();
        let cache = net.forward_batch(&ins, &tg);
        Ok((0..self.layout.subs.len())
            .map(|s| (0..inputs.len()).map(|b| cache.probs(s, b).iter().map(|&p| p as f64).collect()).collect())
            .collect())
    }

    /// Mean negative log-likelihood of rows under teacher forcing.
    pub fn mean_nll(&self, inputs: &[QueryInput], targets: &[Vec<u32>]) -> Result<f64> {
        self.check_batch(inputs, targets)?;
        if inputs.is_empty() {
            return Ok(0.0);
        }
        let net = Net::new(&self.layout, &self.params);
        let ins: Vec<&QueryInput> = inputs.iter().collect();
        let tg: Vec<&[u32]> = targets.iter().map(|t| t.as_slice()).collect();
        let cache = net.forward_batch(&ins, &tg);
        Ok(net.nll(&cache, &tg) / inputs.len() as f64)
    }

    /// Runs the trunk once for `q`.
    pub fn trunk(&self, q: &QueryInput) -> Vec<f32> {
        Net::new(&self.layout, &self.params).trunk_single(q)
    }

    /// Conditional block for sub-column `j` of column `col`: one row per combination of
    /// the earlier sub-columns' codes.
    pub fn forward_infer(&self, q: &QueryInput, col: usize, j: usize) -> Result<CondBlock> {
        let top = self.trunk(q);
        self.sub_block(&top, col, j)
    }

    pub(crate) fn sub_block(&self, top: &[f32], col: usize, j: usize) -> Result<CondBlock> {
        let lay = &self.layout;
        if col >= lay.n_columns() || j >= lay.columns[col].sub_domains.len() {
            return Err(Error::Shape(format!("no sub-column {j} in column {col}")));
        }
        let rows: usize = lay.columns[col].sub_domains[..j].iter().product();
        if rows > self.config.max_prefix_rows {
            return Err(Error::Resource(format!(
                "{rows} prefix combinations exceed the cap of {}",
                self.config.max_prefix_rows
            )));
        }
        let si = lay.col_sub[col] + j;
        let data = Net::new(lay, &self.params).sub_conditionals(si, top);
        CondBlock::new(rows, lay.subs[si].domain, data)
    }

    /// All conditional blocks of column `col` given a trunk output.
    pub(crate) fn column_blocks(&self, top: &[f32], col: usize) -> Result<Vec<CondBlock>> {
        (0..self.layout.columns[col].sub_domains.len()).map(|j| self.sub_block(top, col, j)).collect()
    }

    pub fn ndvs(&self) -> &[usize] {
        &self.ndvs
    }
}

fn init_params(lay: &Layout, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_a11c);
    let mut p = vec![0f32; lay.total];
    for s in &lay.sections {
        let name = s.name.as_str();
        let std = if name.ends_with(".b")
            || name.ends_with(".b1")
            || name.ends_with(".b2")
            || name.ends_with("log_temp")
            || name == "trunk.mix"
        {
            continue;
        } else if name == "sos"
            || name.ends_with("pred_val")
            || name.ends_with("pred_op")
            || name.ends_with("wildcard")
            || name.ends_with("prefix_emb")
        {
            1.0 / (lay.hp.embed_dim as f64).sqrt()
        } else {
            let cols = fan_in(lay, name).max(1);
            (2.0 / cols as f64).sqrt()
        };
        let normal = Normal::new(0.0, std).unwrap();
        for x in &mut p[s.offset..s.offset + s.len] {
            *x = normal.sample(&mut rng) as f32;
        }
    }
    p
}

fn fan_in(lay: &Layout, name: &str) -> usize {
    if name == "trunk.in.w" {
        return lay.in_dim;
    }
    if name.starts_with("trunk.res") || name.ends_with("head.w") {
        return lay.hp.hidden;
    }
    if name.ends_with(".w2") {
        return lay.hp.hyper_width;
    }
    let sub = lay.subs.iter().find(|s| name.starts_with(&format!("c{}.s{}.", s.col, s.j)));
    sub.map(|s| s.j * lay.hp.embed_dim).unwrap_or(lay.hp.hidden)
}
