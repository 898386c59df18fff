//! Forward and backward passes, generic over the float type.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use super::layout::{Block, Layout, Mat, SubLayout, B_H, B_L, N_ACT, U_H, U_L, V_H, V_L};

pub trait Real: num_traits::Float + AddAssign + SubAssign + MulAssign + Send + Sync + Debug + 'static {
    fn c(x: f64) -> Self;
    fn f64(self) -> f64;
}

impl Real for f32 {
    fn c(x: f64) -> Self {
        x as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    fn c(x: f64) -> Self {
        x
    }
    fn f64(self) -> f64 {
        self
    }
}

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let (x, y) = (&a[c * 8..c * 8 + 8], &b[c * 8..c * 8 + 8]);
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut s = T::zero();
    for i in chunks * 8..n {
        s += a[i] * b[i];
    }
    for v in acc {
        s += v;
    }
    s
}

pub(crate) fn axpy<T: Real>(y: &mut [T], alpha: T, x: &[T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4;
const GELU_K: f64 = 0.044_715;

fn basis<T: Real>(z: T) -> [T; N_ACT] {
    let relu = if z > T::zero() { z } else { T::zero() };
    let c = T::c(GELU_C);
    let u = c * (z + T::c(GELU_K) * z * z * z);
    let gelu = T::c(0.5) * z * (T::one() + u.tanh());
    [relu, z.tanh(), z, gelu]
}

fn basis_grad<T: Real>(z: T) -> [T; N_ACT] {
    let relu = if z > T::zero() { T::one() } else { T::zero() };
    let th = z.tanh();
    let c = T::c(GELU_C);
    let k = T::c(GELU_K);
    let t = (c * (z + k * z * z * z)).tanh();
    let gelu = T::c(0.5) * (T::one() + t) + T::c(0.5) * z * (T::one() - t * t) * c * (T::one() + T::c(3.0) * k * z * z);
    [relu, T::one() - th * th, T::one(), gelu]
}

pub(crate) fn softmax_weights<T: Real>(alpha: &[T]) -> [T; N_ACT] {
    let m = alpha.iter().copied().fold(T::neg_infinity(), T::max);
    let mut w = [T::zero(); N_ACT];
    let mut s = T::zero();
    for (wi, &a) in w.iter_mut().zip(alpha) {
        *wi = (a - m).exp();
        s += *wi;
    }
    for wi in &mut w {
        *wi = *wi / s;
    }
    w
}

/// Softmax of `logits / tau` written into `out`.
fn softmax_t<T: Real>(logits: &[T], inv_tau: T, out: &mut [T]) {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut s = T::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = ((l - m) * inv_tau).exp();
        s += *o;
    }
    for o in out.iter_mut() {
        *o = *o / s;
    }
}

/// Model input for one predicate set: per non-key column, the canonical predicates as
/// (operator index, value sub-codes). An empty list is a wildcard.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct QueryInput {
    pub cols: Vec<Vec<(usize, Vec<u32>)>>,
}

pub(crate) struct Net<'a, T> {
    pub lay: &'a Layout,
    pub p: &'a [T],
}

struct BlockCache<T> {
    x: Vec<T>,
    g1: [Vec<T>; 6],
    out: [Vec<T>; 6],
    s: T,
    pre: Vec<T>,
    r: Vec<T>,
    t: T,
    y: Vec<T>,
}

struct SubCache<T> {
    o: Vec<T>,
    block: Option<BlockCache<T>>,
    z: Vec<T>,
    probs: Vec<T>,
}

pub(crate) struct BatchCache<T> {
    b: usize,
    x: Vec<T>,
    z: Vec<Vec<T>>,
    a: Vec<Vec<T>>,
    mixw: [T; N_ACT],
    /// `subs[s][b]`
    subs: Vec<Vec<SubCache<T>>>,
}

impl<T: Real> BatchCache<T> {
    pub fn probs(&self, sub: usize, b: usize) -> &[T] {
        &self.subs[sub][b].probs
    }
}

impl<'a, T: Real> Net<'a, T> {
    pub fn new(lay: &'a Layout, p: &'a [T]) -> Self {
        Self { lay, p }
    }

    fn v(&self, off: usize, len: usize) -> &'a [T] {
        &self.p[off..off + len]
    }

    fn mrow(&self, m: &Mat, r: usize) -> &'a [T] {
        let o = m.row(r);
        &self.p[o..o + m.cols]
    }

    fn inv_tau(&self, s: &SubLayout) -> T {
        if s.learn_temperature {
            (-self.p[s.temp]).exp()
        } else {
            T::one()
        }
    }

    fn act(&self, l: usize, z: T, mixw: &[T; N_ACT]) -> T {
        if l + 1 == self.lay.hp.layers {
            let b = basis(z);
            (0..N_ACT).fold(T::zero(), |acc, q| acc + mixw[q] * b[q])
        } else if z > T::zero() {
            z
        } else {
            T::zero()
        }
    }

    fn act_grad(&self, l: usize, z: T, mixw: &[T; N_ACT]) -> T {
        if l + 1 == self.lay.hp.layers {
            let g = basis_grad(z);
            (0..N_ACT).fold(T::zero(), |acc, q| acc + mixw[q] * g[q])
        } else if z > T::zero() {
            T::one()
        } else {
            T::zero()
        }
    }

    pub fn build_input(&self, q: &QueryInput, x: &mut [T]) {
        let lay = self.lay;
        let e = lay.hp.embed_dim;
        x[..e].copy_from_slice(self.v(lay.sos, e));
        for (t, preds) in q.cols.iter().enumerate() {
            for (j, si) in lay.subs_of(t).enumerate() {
                let s = &lay.subs[si];
                let dst = &mut x[lay.col_in[t] + j * e..lay.col_in[t] + (j + 1) * e];
                if preds.is_empty() {
                    dst.copy_from_slice(self.v(s.wildcard.unwrap(), e));
                } else {
                    dst.fill(T::zero());
                    for (op, sub) in preds {
                        axpy(dst, T::one(), self.mrow(s.pred_val.as_ref().unwrap(), sub[j] as usize));
                        axpy(dst, T::one(), self.mrow(s.pred_op.as_ref().unwrap(), *op));
                    }
                }
            }
        }
    }

    fn input_backward(&self, q: &QueryInput, dx: &[T], g: &mut [T]) {
        let lay = self.lay;
        let e = lay.hp.embed_dim;
        axpy(&mut g[lay.sos..lay.sos + e], T::one(), &dx[..e]);
        for (t, preds) in q.cols.iter().enumerate() {
            for (j, si) in lay.subs_of(t).enumerate() {
                let s = &lay.subs[si];
                let src = &dx[lay.col_in[t] + j * e..lay.col_in[t] + (j + 1) * e];
                if preds.is_empty() {
                    let w = s.wildcard.unwrap();
                    axpy(&mut g[w..w + e], T::one(), src);
                } else {
                    for (op, sub) in preds {
                        let r = s.pred_val.as_ref().unwrap().row(sub[j] as usize);
                        axpy(&mut g[r..r + e], T::one(), src);
                        let r = s.pred_op.as_ref().unwrap().row(*op);
                        axpy(&mut g[r..r + e], T::one(), src);
                    }
                }
            }
        }
    }

    /// Trunk over a batch; returns per-layer pre-activations and activations.
    fn trunk(&self, x: &[T], b: usize) -> (Vec<Vec<T>>, Vec<Vec<T>>, [T; N_ACT]) {
        let lay = self.lay;
        let h = lay.hp.hidden;
        let d = lay.in_dim;
        let mixw = softmax_weights(self.v(lay.mix, N_ACT));
        let mut zs = Vec::with_capacity(lay.hp.layers);
        let mut as_ = Vec::with_capacity(lay.hp.layers);
        let mut z = vec![T::zero(); b * h];
        let mut a = vec![T::zero(); b * h];
        for n in 0..b {
            let xr = &x[n * d..(n + 1) * d];
            for k in 0..h {
                let end = lay.in_row_end(k);
                let v = dot(&self.mrow(&lay.w_in, k)[..end], &xr[..end]) + self.p[lay.b_in + k];
                z[n * h + k] = v;
                a[n * h + k] = self.act(0, v, &mixw);
            }
        }
        zs.push(z);
        as_.push(a);
        for l in 1..lay.hp.layers {
            let w = &lay.w_res[l - 1];
            let bias = lay.b_res[l - 1];
            let prev = &as_[l - 1];
            let mut z = vec![T::zero(); b * h];
            let mut a = prev.clone();
            for n in 0..b {
                let ar = &prev[n * h..(n + 1) * h];
                for k in 0..h {
                    let end = lay.hid_row_end(k);
                    let v = dot(&self.mrow(w, k)[..end], &ar[..end]) + self.p[bias + k];
                    z[n * h + k] = v;
                    a[n * h + k] += self.act(l, v, &mixw);
                }
            }
            zs.push(z);
            as_.push(a);
        }
        (zs, as_, mixw)
    }

    fn head(&self, s: &SubLayout, a_top: &[T]) -> Vec<T> {
        let end = self.lay.head_end(s.col);
        (0..s.head_w.rows).map(|r| dot(&self.mrow(&s.head_w, r)[..end], &a_top[..end]) + self.p[s.head_b + r]).collect()
    }

    fn block_forward(&self, blk: &Block, h: &[T], x: Vec<T>) -> (BlockCache<T>, Vec<T>) {
        let hw = self.lay.hp.hyper_width;
        let mut g1: [Vec<T>; 6] = Default::default();
        let mut out: [Vec<T>; 6] = Default::default();
        for (q, hy) in blk.hyper.iter().enumerate() {
            g1[q] = (0..hw)
                .map(|u| {
                    let v = dot(self.mrow(&hy.w1, u), &x) + self.p[hy.b1 + u];
                    if v > T::zero() {
                        v
                    } else {
                        T::zero()
                    }
                })
                .collect();
            out[q] = (0..hy.w2.rows).map(|r| dot(self.mrow(&hy.w2, r), &g1[q]) + self.p[hy.b2 + r]).collect();
        }
        let s = dot(h, &out[U_H]);
        let pre: Vec<T> = out[V_H].iter().zip(&out[B_H]).map(|(&v, &bb)| s * v + bb).collect();
        let r: Vec<T> = pre.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect();
        let t = dot(&r, &out[U_L]);
        let y: Vec<T> = out[V_L].iter().zip(&out[B_L]).map(|(&v, &bb)| t * v + bb).collect();
        let logits =
            (0..blk.proj_w.rows).map(|c| dot(self.mrow(&blk.proj_w, c), &y) + self.p[blk.proj_b + c]).collect();
        (BlockCache { x, g1, out, s, pre, r, t, y }, logits)
    }

    fn prefix_vec(&self, col: usize, j: usize, codes: &[u32]) -> Vec<T> {
        let lay = self.lay;
        let e = lay.hp.embed_dim;
        let mut x = Vec::with_capacity(j * e);
        for (l, si) in lay.subs_of(col).take(j).enumerate() {
            x.extend_from_slice(self.mrow(lay.subs[si].prefix_emb.as_ref().unwrap(), codes[l] as usize));
        }
        x
    }

    /// Logits for sub-column `s` given the trunk output and the sub-codes of earlier
    /// sub-columns of the same column.
    fn sub_logits(&self, s: &SubLayout, o: &[T], prefix_codes: &[u32]) -> (Option<BlockCache<T>>, Vec<T>) {
        match &s.block {
            None => (None, o.to_vec()),
            Some(blk) => {
                let x = self.prefix_vec(s.col, s.j, prefix_codes);
                let (c, l) = self.block_forward(blk, o, x);
                (Some(c), l)
            }
        }
    }

    /// Forward over a batch. `targets[b]` holds every sub-code of sample b in model order.
    pub fn forward_batch(&self, inputs: &[&QueryInput], targets: &[&[u32]]) -> BatchCache<T> {
        let lay = self.lay;
        let b = inputs.len();
        let (d, h) = (lay.in_dim, lay.hp.hidden);
        let mut x = vec![T::zero(); b * d];
        for (n, q) in inputs.iter().enumerate() {
            self.build_input(q, &mut x[n * d..(n + 1) * d]);
        }
        let (z, a, mixw) = self.trunk(&x, b);
        let top = a.last().unwrap();
        let subs = lay
            .subs
            .iter()
            .enumerate()
            .map(|(si, s)| {
                let inv_tau = self.inv_tau(s);
                let first = lay.col_sub[s.col];
                (0..b)
                    .map(|n| {
                        let o = self.head(s, &top[n * h..(n + 1) * h]);
                        let (block, logits) = self.sub_logits(s, &o, &targets[n][first..si]);
                        let mut probs = vec![T::zero(); s.domain];
                        softmax_t(&logits, inv_tau, &mut probs);
                        let z = logits.iter().map(|&l| l * inv_tau).collect();
                        SubCache { o, block, z, probs }
                    })
                    .collect()
            })
            .collect();
        BatchCache { b, x, z, a, mixw, subs }
    }

    /// Summed negative log-likelihood over the batch.
    pub fn nll(&self, cache: &BatchCache<T>, targets: &[&[u32]]) -> f64 {
        let mut total = 0.0;
        for (si, sc) in cache.subs.iter().enumerate() {
            for (n, c) in sc.iter().enumerate() {
                total -= c.probs[targets[n][si] as usize].f64().max(f64::MIN_POSITIVE).ln();
            }
        }
        total
    }

    /// Accumulates `scale * d(nll)/d(params)` into `g`.
    pub fn backward(&self, cache: &BatchCache<T>, inputs: &[&QueryInput], targets: &[&[u32]], scale: T, g: &mut [T]) {
        let lay = self.lay;
        let (b, h, d) = (cache.b, lay.hp.hidden, lay.in_dim);
        let top = cache.a.last().unwrap();
        let mut da = vec![T::zero(); b * h];

        for (si, s) in lay.subs.iter().enumerate() {
            let inv_tau = self.inv_tau(s);
            let end = lay.head_end(s.col);
            let first = lay.col_sub[s.col];
            for n in 0..b {
                let c = &cache.subs[si][n];
                let tgt = targets[n][si] as usize;
                let mut dz: Vec<T> = c.probs.clone();
                dz[tgt] -= T::one();
                for v in &mut dz {
                    *v *= scale;
                }
                if s.learn_temperature {
                    let dtheta = dz.iter().zip(&c.z).fold(T::zero(), |acc, (&a, &zz)| acc - a * zz);
                    g[s.temp] += dtheta;
                }
                let dlogits: Vec<T> = dz.iter().map(|&v| v * inv_tau).collect();
                let d_o = match (&s.block, &c.block) {
                    (None, _) => dlogits,
                    (Some(blk), Some(bc)) => {
                        let prefix = &targets[n][first..si];
                        self.block_backward(blk, s, bc, &c.o, &dlogits, prefix, g)
                    }
                    _ => unreachable!(),
                };
                let a_top = &top[n * h..n * h + end];
                let da_n = &mut da[n * h..n * h + end];
                for (r, &dv) in d_o.iter().enumerate() {
                    if dv == T::zero() {
                        continue;
                    }
                    let wr = s.head_w.row(r);
                    axpy(&mut g[wr..wr + end], dv, a_top);
                    g[s.head_b + r] += dv;
                    axpy(da_n, dv, &self.mrow(&s.head_w, r)[..end]);
                }
            }
        }

        let mut dmix = [T::zero(); N_ACT];
        let last = lay.hp.layers - 1;
        for l in (1..lay.hp.layers).rev() {
            let w = &lay.w_res[l - 1];
            let bias = lay.b_res[l - 1];
            let (z, prev) = (&cache.z[l], &cache.a[l - 1]);
            let mut da_prev = da.clone();
            for n in 0..b {
                for k in 0..h {
                    let zi = z[n * h + k];
                    let up = da[n * h + k];
                    if l == last {
                        let bs = basis(zi);
                        for q in 0..N_ACT {
                            dmix[q] += up * bs[q];
                        }
                    }
                    let dzk = up * self.act_grad(l, zi, &cache.mixw);
                    if dzk == T::zero() {
                        continue;
                    }
                    let end = lay.hid_row_end(k);
                    let wr = w.row(k);
                    axpy(&mut g[wr..wr + end], dzk, &prev[n * h..n * h + end]);
                    g[bias + k] += dzk;
                    axpy(&mut da_prev[n * h..n * h + end], dzk, &self.mrow(w, k)[..end]);
                }
            }
            da = da_prev;
        }
        let mut dx = vec![T::zero(); b * d];
        for n in 0..b {
            for k in 0..h {
                let zi = cache.z[0][n * h + k];
                let up = da[n * h + k];
                if last == 0 {
                    let bs = basis(zi);
                    for q in 0..N_ACT {
                        dmix[q] += up * bs[q];
                    }
                }
                let dzk = up * self.act_grad(0, zi, &cache.mixw);
                if dzk == T::zero() {
                    continue;
                }
                let end = lay.in_row_end(k);
                let wr = lay.w_in.row(k);
                axpy(&mut g[wr..wr + end], dzk, &cache.x[n * d..n * d + end]);
                g[lay.b_in + k] += dzk;
                axpy(&mut dx[n * d..n * d + end], dzk, &self.mrow(&lay.w_in, k)[..end]);
            }
        }
        let dot_w = (0..N_ACT).fold(T::zero(), |acc, q| acc + cache.mixw[q] * dmix[q]);
        for q in 0..N_ACT {
            g[lay.mix + q] += cache.mixw[q] * (dmix[q] - dot_w);
        }
        for (n, q) in inputs.iter().enumerate() {
            self.input_backward(q, &dx[n * d..(n + 1) * d], g);
        }
    }

    /// Backward through one block; returns the gradient w.r.t. the head output.
    #[allow(clippy::too_many_arguments)]
    fn block_backward(
        &self,
        blk: &Block,
        s: &SubLayout,
        bc: &BlockCache<T>,
        h: &[T],
        dlogits: &[T],
        prefix: &[u32],
        g: &mut [T],
    ) -> Vec<T> {
        let f = blk.f;
        let mut dy = vec![T::zero(); f];
        for (c, &dl) in dlogits.iter().enumerate() {
            if dl == T::zero() {
                continue;
            }
            let r = blk.proj_w.row(c);
            axpy(&mut g[r..r + f], dl, &bc.y);
            g[blk.proj_b + c] += dl;
            axpy(&mut dy, dl, self.mrow(&blk.proj_w, c));
        }
        let mut dout: [Vec<T>; 6] = std::array::from_fn(|q| vec![T::zero(); bc.out[q].len()]);
        dout[B_L].copy_from_slice(&dy);
        for (o, &v) in dout[V_L].iter_mut().zip(&dy) {
            *o = bc.t * v;
        }
        let dt = dot(&bc.out[V_L], &dy);
        for (o, &r) in dout[U_L].iter_mut().zip(&bc.r) {
            *o = dt * r;
        }
        let dpre: Vec<T> =
            bc.out[U_L].iter().zip(&bc.pre).map(|(&u, &p)| if p > T::zero() { dt * u } else { T::zero() }).collect();
        dout[B_H].copy_from_slice(&dpre);
        for (o, &v) in dout[V_H].iter_mut().zip(&dpre) {
            *o = bc.s * v;
        }
        let ds = dot(&bc.out[V_H], &dpre);
        for (o, &hv) in dout[U_H].iter_mut().zip(h) {
            *o = ds * hv;
        }
        let dh: Vec<T> = bc.out[U_H].iter().map(|&u| ds * u).collect();

        let hw = self.lay.hp.hyper_width;
        let mut dx = vec![T::zero(); f];
        for (q, hy) in blk.hyper.iter().enumerate() {
            let mut dg1 = vec![T::zero(); hw];
            for (r, &dv) in dout[q].iter().enumerate() {
                if dv == T::zero() {
                    continue;
                }
                let wr = hy.w2.row(r);
                axpy(&mut g[wr..wr + hw], dv, &bc.g1[q]);
                g[hy.b2 + r] += dv;
                axpy(&mut dg1, dv, self.mrow(&hy.w2, r));
            }
            for u in 0..hw {
                if bc.g1[q][u] <= T::zero() || dg1[u] == T::zero() {
                    continue;
                }
                let wr = hy.w1.row(u);
                axpy(&mut g[wr..wr + f], dg1[u], &bc.x);
                g[hy.b1 + u] += dg1[u];
                axpy(&mut dx, dg1[u], self.mrow(&hy.w1, u));
            }
        }
        let e = self.lay.hp.embed_dim;
        for (l, si) in self.lay.subs_of(s.col).take(s.j).enumerate() {
            let r = self.lay.subs[si].prefix_emb.as_ref().unwrap().row(prefix[l] as usize);
            axpy(&mut g[r..r + e], T::one(), &dx[l * e..(l + 1) * e]);
        }
        dh
    }

    /// Top trunk activation for a single query.
    pub fn trunk_single(&self, q: &QueryInput) -> Vec<T> {
        let mut x = vec![T::zero(); self.lay.in_dim];
        self.build_input(q, &mut x);
        let (_, mut a, _) = self.trunk(&x, 1);
        a.pop().unwrap()
    }

    /// Conditional distribution of sub-column `si` for every prefix combination of its
    /// column's earlier sub-columns, row-major.
    pub fn sub_conditionals(&self, si: usize, top: &[T]) -> Vec<f64> {
        let s = &self.lay.subs[si];
        let o = self.head(s, top);
        let inv_tau = self.inv_tau(s);
        let doms: Vec<usize> = self.lay.columns[s.col].sub_domains[..s.j].to_vec();
        let rows: usize = doms.iter().product();
        let mut out = Vec::with_capacity(rows * s.domain);
        let mut probs = vec![T::zero(); s.domain];
        let mut codes = vec![0u32; s.j];
        for r in 0..rows {
            let mut rem = r;
            for l in (0..s.j).rev() {
                codes[l] = (rem % doms[l]) as u32;
                rem /= doms[l];
            }
            let (_, logits) = self.sub_logits(s, &o, &codes);
            softmax_t(&logits, inv_tau, &mut probs);
            out.extend(probs.iter().map(|p| p.f64()));
        }
        out
    }

    /// Logits of block sub-column `si` with and without the block's modulation path,
    /// for one prefix. Used to check the block is not degenerate.
    #[cfg(test)]
    pub fn block_logits(&self, si: usize, top: &[T], prefix: &[u32]) -> Vec<T> {
        let s = &self.lay.subs[si];
        let o = self.head(s, top);
        self.sub_logits(s, &o, prefix).1
    }

    /// Hypernetwork outputs (u_h, v_h, u_l, v_l) of block sub-column `si` for one prefix.
    #[cfg(test)]
    pub fn block_factors(&self, si: usize, top: &[T], prefix: &[u32]) -> (Vec<T>, Vec<T>, Vec<T>, Vec<T>) {
        let s = &self.lay.subs[si];
        let o = self.head(s, top);
        let (c, _) = self.sub_logits(s, &o, prefix);
        let mut c = c.unwrap();
        (
            std::mem::take(&mut c.out[U_H]),
            std::mem::take(&mut c.out[V_H]),
            std::mem::take(&mut c.out[U_L]),
            std::mem::take(&mut c.out[V_L]),
        )
    }
}
