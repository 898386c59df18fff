//! Flat parameter layout: every tensor is a named section of one vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hyperparams {
    /// Embedding width E.
    pub embed_dim: usize,
    /// Hidden units per trunk layer H.
    pub hidden: usize,
    /// Trunk depth L: one input layer plus L-1 residual layers.
    pub layers: usize,
    /// Width of each two-layer hypernetwork.
    pub hyper_width: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self { embed_dim: 64, hidden: 256, layers: 4, hyper_width: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnShape {
    pub name: String,
    pub sub_domains: Vec<usize>,
    /// Learn the softmax temperature of this column's sub-columns; fixed at 1 otherwise.
    pub learn_temperature: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

/// A matrix stored row-major at `offset`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Mat {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Mat {
    pub fn row(&self, r: usize) -> usize {
        self.offset + r * self.cols
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Hyper {
    pub w1: Mat,
    pub b1: usize,
    pub w2: Mat,
    pub b2: usize,
}

/// Indices into the hypernetwork array.
pub(crate) const U_H: usize = 0;
pub(crate) const V_H: usize = 1;
pub(crate) const B_H: usize = 2;
pub(crate) const U_L: usize = 3;
pub(crate) const V_L: usize = 4;
pub(crate) const B_L: usize = 5;

#[derive(Debug, Clone)]
pub(crate) struct Block {
    /// Prefix width F = (j-1)E.
    pub f: usize,
    pub hyper: [Hyper; 6],
    pub proj_w: Mat,
    pub proj_b: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct SubLayout {
    pub col: usize,
    pub j: usize,
    pub domain: usize,
    pub head_w: Mat,
    pub head_b: usize,
    pub temp: usize,
    pub learn_temperature: bool,
    pub block: Option<Block>,
    /// Predicate value / operator embeddings and wildcard; absent for the key column.
    pub pred_val: Option<Mat>,
    pub pred_op: Option<Mat>,
    pub wildcard: Option<usize>,
    /// Value embedding used when this sub-column is a prefix of a later one.
    pub prefix_emb: Option<Mat>,
}

#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub hp: Hyperparams,
    pub columns: Vec<ColumnShape>,
    pub in_dim: usize,
    /// `in_end[m]`: inputs of degree <= m form the prefix `[0, in_end[m])`.
    pub in_end: Vec<usize>,
    /// Degree of each hidden unit, ascending.
    pub hid_deg: Vec<usize>,
    /// `hid_end[m]`: hidden units of degree <= m form the prefix `[0, hid_end[m])`.
    pub hid_end: Vec<usize>,
    /// Start of column t's block in the input vector, for non-key columns.
    pub col_in: Vec<usize>,
    pub sos: usize,
    pub w_in: Mat,
    pub b_in: usize,
    pub w_res: Vec<Mat>,
    pub b_res: Vec<usize>,
    pub mix: usize,
    pub subs: Vec<SubLayout>,
    /// First flat sub-column index of each column.
    pub col_sub: Vec<usize>,
    pub sections: Vec<Section>,
    pub total: usize,
}

pub(crate) const N_ACT: usize = 4;

struct Alloc {
    next: usize,
    sections: Vec<Section>,
}

impl Alloc {
    fn vec(&mut self, name: String, len: usize) -> usize {
        let offset = self.next;
        self.next += len;
        self.sections.push(Section { name, offset, len });
        offset
    }

    fn mat(&mut self, name: String, rows: usize, cols: usize) -> Mat {
        Mat { offset: self.vec(name, rows * cols), rows, cols }
    }
}

impl Layout {
    pub fn new(hp: Hyperparams, columns: Vec<ColumnShape>) -> Result<Self> {
        let n = columns.len();
        if n == 0 {
            return Err(Error::Shape("model needs at least one column".into()));
        }
        if hp.embed_dim == 0 || hp.layers == 0 || hp.hyper_width == 0 {
            return Err(Error::Shape("embedding width, depth and hypernetwork width must be positive".into()));
        }
        if hp.hidden < n {
            return Err(Error::Mask(format!("{} hidden units cannot carry {n} autoregressive degrees", hp.hidden)));
        }
        if columns.iter().any(|c| c.sub_domains.is_empty() || c.sub_domains.contains(&0)) {
            return Err(Error::Shape("every column needs non-empty sub-domains".into()));
        }
        let e = hp.embed_dim;
        let h = hp.hidden;

        let mut col_in = Vec::with_capacity(n - 1);
        let mut in_end = Vec::with_capacity(n);
        let mut off = e;
        in_end.push(e);
        for c in &columns[..n - 1] {
            col_in.push(off);
            off += c.sub_domains.len() * e;
            in_end.push(off);
        }
        let in_dim = off;

        let hid_deg: Vec<usize> = (0..h).map(|k| k * n / h).collect();
        let hid_end: Vec<usize> = (0..n).map(|m| hid_deg.iter().filter(|&&d| d <= m).count()).collect();

        let mut a = Alloc { next: 0, sections: Vec::new() };
        let sos = a.vec("sos".into(), e);
        let w_in = a.mat("trunk.in.w".into(), h, in_dim);
        let b_in = a.vec("trunk.in.b".into(), h);
        let mut w_res = Vec::new();
        let mut b_res = Vec::new();
        for l in 1..hp.layers {
            w_res.push(a.mat(format!("trunk.res{l}.w"), h, h));
            b_res.push(a.vec(format!("trunk.res{l}.b"), h));
        }
        let mix = a.vec("trunk.mix".into(), N_ACT);

        let mut subs = Vec::new();
        let mut col_sub = Vec::with_capacity(n);
        for (i, c) in columns.iter().enumerate() {
            col_sub.push(subs.len());
            let k = c.sub_domains.len();
            for (j, &d) in c.sub_domains.iter().enumerate() {
                let tag = format!("c{i}.s{j}");
                let is_key = i + 1 == n;
                let (pred_val, pred_op, wildcard) = if is_key {
                    (None, None, None)
                } else {
                    (
                        Some(a.mat(format!("{tag}.pred_val"), d, e)),
                        Some(a.mat(format!("{tag}.pred_op"), 5, e)),
                        Some(a.vec(format!("{tag}.wildcard"), e)),
                    )
                };
                let prefix_emb = (j + 1 < k).then(|| a.mat(format!("{tag}.prefix_emb"), d, e));
                let out_dim = if j == 0 { d } else { j * e };
                let head_w = a.mat(format!("{tag}.head.w"), out_dim, h);
                let head_b = a.vec(format!("{tag}.head.b"), out_dim);
                let block = (j > 0).then(|| {
                    let f = j * e;
                    let outs = [f, e, e, e, f, f];
                    let names = ["u_h", "v_h", "b_h", "u_l", "v_l", "b_l"];
                    let hyper = std::array::from_fn(|q| Hyper {
                        w1: a.mat(format!("{tag}.hyper.{}.w1", names[q]), hp.hyper_width, f),
                        b1: a.vec(format!("{tag}.hyper.{}.b1", names[q]), hp.hyper_width),
                        w2: a.mat(format!("{tag}.hyper.{}.w2", names[q]), outs[q], hp.hyper_width),
                        b2: a.vec(format!("{tag}.hyper.{}.b2", names[q]), outs[q]),
                    });
                    Block {
                        f,
                        hyper,
                        proj_w: a.mat(format!("{tag}.proj.w"), d, f),
                        proj_b: a.vec(format!("{tag}.proj.b"), d),
                    }
                });
                let temp = a.vec(format!("{tag}.log_temp"), 1);
                subs.push(SubLayout {
                    col: i,
                    j,
                    domain: d,
                    head_w,
                    head_b,
                    temp,
                    learn_temperature: c.learn_temperature,
                    block,
                    pred_val,
                    pred_op,
                    wildcard,
                    prefix_emb,
                });
            }
        }
        Ok(Self {
            hp,
            columns,
            in_dim,
            in_end,
            hid_deg,
            hid_end,
            col_in,
            sos,
            w_in,
            b_in,
            w_res,
            b_res,
            mix,
            subs,
            col_sub,
            total: a.next,
            sections: a.sections,
        })
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    /// Input prefix visible to hidden unit `k` of the input layer.
    pub fn in_row_end(&self, k: usize) -> usize {
        self.in_end[self.hid_deg[k]]
    }

    /// Hidden prefix visible to hidden unit `k` of a residual layer.
    pub fn hid_row_end(&self, k: usize) -> usize {
        self.hid_end[self.hid_deg[k]]
    }

    /// Hidden prefix visible to the heads of column `i`.
    pub fn head_end(&self, i: usize) -> usize {
        self.hid_end[i]
    }

    pub fn subs_of(&self, col: usize) -> std::ops::Range<usize> {
        let start = self.col_sub[col];
        start..start + self.columns[col].sub_domains.len()
    }
}
