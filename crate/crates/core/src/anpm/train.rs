use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::net::{Net, QueryInput};
use super::{AnpmModel, TrainConfig};
use crate::catalog::TableCatalog;
use crate::error::{Error, Result};
use crate::predicates::generate_training_predicates;

pub(crate) struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
}

impl Adam {
    pub fn new(n: usize, cfg: &TrainConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            lr: cfg.learning_rate,
            b1: cfg.beta1,
            b2: cfg.beta2,
            eps: cfg.eps,
        }
    }

    pub fn step(&mut self, p: &mut [f32], g: &[f32]) {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let (b1, b2, eps) = (self.b1 as f32, self.b2 as f32, (self.eps * c2.sqrt()) as f32);
        for i in 0..p.len() {
            let gi = g[i];
            self.m[i] = b1 * self.m[i] + (1.0 - b1) * gi;
            self.v[i] = b2 * self.v[i] + (1.0 - b2) * gi * gi;
            p[i] -= step * self.m[i] / (self.v[i].sqrt() + eps);
        }
    }
}

/// Fits a model to `cat` by maximum likelihood on sampled rows with generated predicates.
/// Returns the model and the per-epoch mean negative log-likelihood.
pub fn train(cat: &TableCatalog, cfg: &TrainConfig) -> Result<(AnpmModel, Vec<f64>)> {
    let mut model = AnpmModel::init(cat, cfg)?;
    if cfg.epochs == 0 {
        log::warn!("table {}: zero epochs, keeping initialized weights", cat.name);
        return Ok((model, Vec::new()));
    }
    if cat.row_count == 0 {
        return Err(Error::Train(format!("table {} has no rows", cat.name)));
    }
    let n = cat.columns.len();
    let ndvs = model.ndvs.clone();
    let rows: Vec<Vec<u32>> = (0..cat.row_count).map(|r| cat.row_codes(r)).collect();
    let targets: Vec<Vec<u32>> = rows.iter().map(|r| model.targets(r)).collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.params.len(), cfg);
    let mut grad = vec![0f32; model.params.len()];
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let mut total = 0.0f64;
        let mut done = 0usize;
        let mut step = 0usize;
        while done < cat.row_count {
            let b = cfg.batch_size.min(cat.row_count - done);
            let mut inputs: Vec<QueryInput> = Vec::with_capacity(b);
            let mut tg: Vec<&[u32]> = Vec::with_capacity(b);
            for _ in 0..b {
                let r = rng.random_range(0..cat.row_count);
                let preds = generate_training_predicates(&rows[r][..n - 1], &ndvs[..n - 1], &cfg.predicates, &mut rng);
                let mut full = preds;
                full.per_column.push(Vec::new());
                let q = model
                    .encode(&full)?
                    .ok_or_else(|| Error::Train("generated predicates reject their own tuple".into()))?;
                inputs.push(q);
                tg.push(&targets[r]);
            }
            let ins: Vec<&QueryInput> = inputs.iter().collect();
            grad.fill(0.0);
            let net = Net::new(&model.layout, &model.params);
            let cache = net.forward_batch(&ins, &tg);
            let loss = net.nll(&cache, &tg);
            if !loss.is_finite() {
                return Err(Error::Train(format!(
                    "table {}: non-finite loss {loss} at epoch {epoch} step {step} (lr {}, batch {b})",
                    cat.name, cfg.learning_rate
                )));
            }
            net.backward(&cache, &ins, &tg, 1.0 / b as f32, &mut grad);
            if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
                return Err(Error::Train(format!(
                    "table {}: non-finite gradient in parameter {i} at epoch {epoch} step {step}",
                    cat.name
                )));
            }
            adam.step(&mut model.params, &grad);
            total += loss;
            done += b;
            step += 1;
        }
        let mean = total / cat.row_count as f64;
        log::debug!("table {} epoch {epoch}: nll {mean:.5}", cat.name);
        curve.push(mean);
    }
    Ok((model, curve))
}
