//! Computation graph: an append-only arena of tensor values with one
//! backward closure per node.
//!
//! Nodes are appended in forward order, so walking ids in reverse is a
//! topological order for backprop. Gradients are accumulated per node and
//! finalized by the time the reverse sweep reaches that node, which lets the
//! sweep `take` the upstream buffer instead of cloning it.

use super::{
    gelu_grad_scalar, gelu_scalar, matmul_nt_raw, matmul_raw, matmul_tn_raw, Tensor,
};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Value(pub(crate) usize);

/// (all node values, upstream gradient of this node, gradient store)
type BackFn = Box<dyn Fn(&[Tensor], &[f64], &mut [Vec<f64>])>;

#[derive(Default)]
pub struct Graph {
    values: Vec<Tensor>,
    needs: Vec<bool>,
    backs: Vec<Option<BackFn>>,
    grads: Vec<Vec<f64>>,
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, v: Value) -> &Tensor {
        &self.values[v.0]
    }

    /// Gradient of the last `backward` call w.r.t. node `v`, if any flowed.
    pub fn grad(&self, v: Value) -> Option<&[f64]> {
        self.grads.get(v.0).filter(|g| !g.is_empty()).map(|g| g.as_slice())
    }

    fn push(&mut self, t: Tensor, needs: bool, back: Option<BackFn>) -> Value {
        self.values.push(t);
        self.needs.push(needs);
        self.backs.push(if needs { back } else { None });
        Value(self.values.len() - 1)
    }

    /// Insert a leaf node. Gradients are tracked iff the tensor has
    /// `requires_grad` set.
    pub fn leaf(&mut self, t: Tensor) -> Value {
        let needs = t.requires_grad();
        self.push(t, needs, None)
    }

    /// Insert a leaf that never tracks gradients.
    pub fn constant(&mut self, t: Tensor) -> Value {
        self.push(t, false, None)
    }

    pub fn assert_finite(&self, v: Value, context: &str) -> Result<()> {
        if self.values[v.0].is_finite() {
            Ok(())
        } else {
            Err(Error::NonFinite(context.to_string()))
        }
    }

    fn dims2(&self, v: Value, op: &'static str) -> Result<(usize, usize)> {
        let t = &self.values[v.0];
        if t.ndim() != 2 {
            return Err(Error::ShapeMismatch {
                op,
                lhs: t.shape().to_vec(),
                rhs: vec![],
            });
        }
        Ok((t.shape()[0], t.shape()[1]))
    }

    // ── Binary ops ───────────────────────────────────────────────────

    /// C[p×r] = A[p×q] · B[q×r]
    pub fn matmul(&mut self, a: Value, b: Value) -> Result<Value> {
        let (p, q) = self.dims2(a, "matmul")?;
        let (q2, r) = self.dims2(b, "matmul")?;
        if q != q2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs: self.values[a.0].shape().to_vec(),
                rhs: self.values[b.0].shape().to_vec(),
            });
        }
        let out = matmul_raw(self.values[a.0].data(), self.values[b.0].data(), p, q, r);
        let out = Tensor::from_vec(vec![p, r], out)?;
        let (na, nb) = (self.needs[a.0], self.needs[b.0]);
        let back: BackFn = Box::new(move |vals, up, grads| {
            if na {
                let d = matmul_nt_raw(up, vals[b.0].data(), p, r, q);
                axpy(&mut grads[a.0], &d);
            }
            if nb {
                let d = matmul_tn_raw(vals[a.0].data(), up, p, q, r);
                axpy(&mut grads[b.0], &d);
            }
        });
        Ok(self.push(out, na || nb, Some(back)))
    }

    /// C[p×r] = A[p×q] · B[r×q]ᵀ  (rows of `b` are the columns of the product)
    pub fn matmul_nt(&mut self, a: Value, b: Value) -> Result<Value> {
        let (p, q) = self.dims2(a, "matmul_nt")?;
        let (r, q2) = self.dims2(b, "matmul_nt")?;
        if q != q2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                lhs: self.values[a.0].shape().to_vec(),
                rhs: self.values[b.0].shape().to_vec(),
            });
        }
        let out = matmul_nt_raw(self.values[a.0].data(), self.values[b.0].data(), p, q, r);
        let out = Tensor::from_vec(vec![p, r], out)?;
        let (na, nb) = (self.needs[a.0], self.needs[b.0]);
        let back: BackFn = Box::new(move |vals, up, grads| {
            if na {
                let d = matmul_raw(up, vals[b.0].data(), p, r, q);
                axpy(&mut grads[a.0], &d);
            }
            if nb {
                let d = matmul_tn_raw(up, vals[a.0].data(), p, r, q);
                axpy(&mut grads[b.0], &d);
            }
        });
        Ok(self.push(out, na || nb, Some(back)))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Value, b: Value) -> Result<Value> {
        if self.values[a.0].shape() != self.values[b.0].shape() {
            return Err(Error::ShapeMismatch {
                op: "add",
                lhs: self.values[a.0].shape().to_vec(),
                rhs: self.values[b.0].shape().to_vec(),
            });
        }
        let data = self.values[a.0]
            .data()
            .iter()
            .zip(self.values[b.0].data())
            .map(|(x, y)| x + y)
            .collect();
        let out = Tensor::from_vec(self.values[a.0].shape().to_vec(), data)?;
        let (na, nb) = (self.needs[a.0], self.needs[b.0]);
        let back: BackFn = Box::new(move |_vals, up, grads| {
            if na {
                axpy(&mut grads[a.0], up);
            }
            if nb {
                axpy(&mut grads[b.0], up);
            }
        });
        Ok(self.push(out, na || nb, Some(back)))
    }

    /// Adds a length-q bias row to every row of A[p×q].
    pub fn add_bias(&mut self, a: Value, bias: Value) -> Result<Value> {
        let (p, q) = self.dims2(a, "add_bias")?;
        let bt = &self.values[bias.0];
        if bt.shape() != [q] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: self.values[a.0].shape().to_vec(),
                rhs: bt.shape().to_vec(),
            });
        }
        let bd = bt.data();
        let data: Vec<f64> = self.values[a.0]
            .data()
            .chunks(q)
            .flat_map(|row| row.iter().zip(bd).map(|(x, y)| x + y).collect::<Vec<_>>())
            .collect();
        let out = Tensor::from_vec(vec![p, q], data)?;
        let (na, nb) = (self.needs[a.0], self.needs[bias.0]);
        let back: BackFn = Box::new(move |_vals, up, grads| {
            if na {
                axpy(&mut grads[a.0], up);
            }
            if nb {
                let g = &mut grads[bias.0];
                for row in up.chunks(q) {
                    for (gv, &uv) in g.iter_mut().zip(row) {
                        *gv += uv;
                    }
                }
            }
        });
        Ok(self.push(out, na || nb, Some(back)))
    }

    // ── Scaling ──────────────────────────────────────────────────────

    /// Multiply by a compile-time constant.
    pub fn scale(&mut self, a: Value, k: f64) -> Result<Value> {
        let data = self.values[a.0].data().iter().map(|x| k * x).collect();
        let out = Tensor::from_vec(self.values[a.0].shape().to_vec(), data)?;
        let na = self.needs[a.0];
        let back: BackFn = Box::new(move |_vals, up, grads| {
            if na {
                for (gv, &uv) in grads[a.0].iter_mut().zip(up) {
                    *gv += k * uv;
                }
            }
        });
        Ok(self.push(out, na, Some(back)))
    }

    /// Multiply every entry of `a` by a learnable scalar (shape `[1]`).
    pub fn scale_by(&mut self, a: Value, s: Value) -> Result<Value> {
        if self.values[s.0].numel() != 1 {
            return Err(Error::ShapeMismatch {
                op: "scale_by",
                lhs: self.values[a.0].shape().to_vec(),
                rhs: self.values[s.0].shape().to_vec(),
            });
        }
        let sv = self.values[s.0].data()[0];
        let data = self.values[a.0].data().iter().map(|x| sv * x).collect();
        let out = Tensor::from_vec(self.values[a.0].shape().to_vec(), data)?;
        let (na, ns) = (self.needs[a.0], self.needs[s.0]);
        let back: BackFn = Box::new(move |vals, up, grads| {
            if na {
                for (gv, &uv) in grads[a.0].iter_mut().zip(up) {
                    *gv += sv * uv;
                }
            }
            if ns {
                let dot: f64 = up.iter().zip(vals[a.0].data()).map(|(u, x)| u * x).sum();
                grads[s.0][0] += dot;
            }
        });
        Ok(self.push(out, na || ns, Some(back)))
    }

    // ── Nonlinearities ───────────────────────────────────────────────

    pub fn gelu(&mut self, a: Value) -> Result<Value> {
        let data = self.values[a.0].data().iter().map(|&x| gelu_scalar(x)).collect();
        let out = Tensor::from_vec(self.values[a.0].shape().to_vec(), data)?;
        let na = self.needs[a.0];
        let back: BackFn = Box::new(move |vals, up, grads| {
            if na {
                for ((gv, &uv), &xv) in grads[a.0].iter_mut().zip(up).zip(vals[a.0].data()) {
                    *gv += uv * gelu_grad_scalar(xv);
                }
            }
        });
        Ok(self.push(out, na, Some(back)))
    }

    /// Row-wise softmax, stabilized by row-max subtraction.
    ///
    /// NaN anywhere in the input is a numeric error; large finite logits are
    /// fine.
    pub fn softmax_rows(&mut self, a: Value) -> Result<Value> {
        let (p, q) = self.dims2(a, "softmax_rows")?;
        let src = self.values[a.0].data();
        if src.iter().any(|v| v.is_nan()) {
            return Err(Error::NonFinite("softmax_rows input".into()));
        }
        let mut data = vec![0.0; p * q];
        for i in 0..p {
            let row = &src[i * q..(i + 1) * q];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out_row = &mut data[i * q..(i + 1) * q];
            let mut sum = 0.0;
            for (o, &x) in out_row.iter_mut().zip(row) {
                *o = (x - m).exp();
                sum += *o;
            }
            for o in out_row.iter_mut() {
                *o /= sum;
            }
        }
        let out = Tensor::from_vec(vec![p, q], data)?;
        let na = self.needs[a.0];
        let out_id = self.values.len();
        let back: BackFn = Box::new(move |vals, up, grads| {
            if !na {
                return;
            }
            let probs = vals[out_id].data();
            let g = &mut grads[a.0];
            for i in 0..p {
                let pr = &probs[i * q..(i + 1) * q];
                let ur = &up[i * q..(i + 1) * q];
                let dot: f64 = pr.iter().zip(ur).map(|(x, y)| x * y).sum();
                let gr = &mut g[i * q..(i + 1) * q];
                for ((gv, &pv), &uv) in gr.iter_mut().zip(pr).zip(ur) {
                    *gv += pv * (uv - dot);
                }
            }
        });
        Ok(self.push(out, na, Some(back)))
    }

    /// Per-row normalization to zero mean / unit variance, then an affine
    /// map by `gain` and `bias` (both length d). Variance epsilon 1e-5.
    pub fn layer_norm(&mut self, x: Value, gain: Value, bias: Value) -> Result<Value> {
        const EPS: f64 = 1e-5;
        let (p, d) = self.dims2(x, "layer_norm")?;
        if self.values[gain.0].shape() != [d] || self.values[bias.0].shape() != [d] {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                lhs: vec![p, d],
                rhs: self.values[gain.0].shape().to_vec(),
            });
        }
        let src = self.values[x.0].data();
        let gd = self.values[gain.0].data();
        let bd = self.values[bias.0].data();
        let mut data = vec![0.0; p * d];
        let mut xhat = vec![0.0; p * d];
        let mut inv_std = vec![0.0; p];
        for i in 0..p {
            let row = &src[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std[i] = istd;
            for j in 0..d {
                let h = (row[j] - mean) * istd;
                xhat[i * d + j] = h;
                data[i * d + j] = h * gd[j] + bd[j];
            }
        }
        let out = Tensor::from_vec(vec![p, d], data)?;
        let (nx, ng, nb) = (self.needs[x.0], self.needs[gain.0], self.needs[bias.0]);
        let back: BackFn = Box::new(move |vals, up, grads| {
            let gd = vals[gain.0].data();
            for i in 0..p {
                let ur = &up[i * d..(i + 1) * d];
                let hr = &xhat[i * d..(i + 1) * d];
                if ng {
                    let gg = &mut grads[gain.0];
                    for j in 0..d {
                        gg[j] += ur[j] * hr[j];
                    }
                }
                if nb {
                    let gb = &mut grads[bias.0];
                    for j in 0..d {
                        gb[j] += ur[j];
                    }
                }
                if nx {
                    // dxhat = up ⊙ gain; dx = istd (dxhat − mean(dxhat) − xhat·mean(dxhat⊙xhat))
                    let istd = inv_std[i];
                    let mut sum_dh = 0.0;
                    let mut sum_dh_h = 0.0;
                    for j in 0..d {
                        let dh = ur[j] * gd[j];
                        sum_dh += dh;
                        sum_dh_h += dh * hr[j];
                    }
                    let m1 = sum_dh / d as f64;
                    let m2 = sum_dh_h / d as f64;
                    let gx = &mut grads[x.0][i * d..(i + 1) * d];
                    for j in 0..d {
                        let dh = ur[j] * gd[j];
                        gx[j] += istd * (dh - m1 - hr[j] * m2);
                    }
                }
            }
        });
        Ok(self.push(out, nx || ng || nb, Some(back)))
    }

    // ── Shape ops ────────────────────────────────────────────────────

    /// Stack 2-D tensors with equal column counts along the row axis.
    /// Zero-row parts are allowed and contribute nothing.
    pub fn concat_rows(&mut self, parts: &[Value]) -> Result<Value> {
        assert!(!parts.is_empty(), "concat_rows of zero parts");
        let q = self.dims2(parts[0], "concat_rows")?.1;
        let mut rows = 0;
        let mut data = Vec::new();
        let mut spans = Vec::with_capacity(parts.len());
        for &v in parts {
            let (pi, qi) = self.dims2(v, "concat_rows")?;
            if qi != q {
                return Err(Error::ShapeMismatch {
                    op: "concat_rows",
                    lhs: vec![rows, q],
                    rhs: self.values[v.0].shape().to_vec(),
                });
            }
            spans.push((v.0, rows, pi));
            rows += pi;
            data.extend_from_slice(self.values[v.0].data());
        }
        let out = Tensor::from_vec(vec![rows, q], data)?;
        let needs = parts.iter().any(|v| self.needs[v.0]);
        let needs_vec: Vec<bool> = parts.iter().map(|v| self.needs[v.0]).collect();
        let back: BackFn = Box::new(move |_vals, up, grads| {
            for ((id, at, pi), ni) in spans.iter().zip(&needs_vec) {
                if *ni {
                    axpy(&mut grads[*id], &up[at * q..(at + pi) * q]);
                }
            }
        });
        Ok(self.push(out, needs, Some(back)))
    }

    /// Contiguous row slice `[start, start+len)` of a 2-D tensor.
    pub fn slice_rows(&mut self, a: Value, start: usize, len: usize) -> Result<Value> {
        let (p, q) = self.dims2(a, "slice_rows")?;
        if start + len > p {
            return Err(Error::ShapeMismatch {
                op: "slice_rows",
                lhs: vec![p, q],
                rhs: vec![start, len],
            });
        }
        let data = self.values[a.0].data()[start * q..(start + len) * q].to_vec();
        let out = Tensor::from_vec(vec![len, q], data)?;
        let na = self.needs[a.0];
        let back: BackFn = Box::new(move |_vals, up, grads| {
            if na {
                axpy(&mut grads[a.0][start * q..(start + len) * q], up);
            }
        });
        Ok(self.push(out, na, Some(back)))
    }

    /// Contiguous column slice `[start, start+len)` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: Value, start: usize, len: usize) -> Result<Value> {
        let (p, q) = self.dims2(a, "slice_cols")?;
        if start + len > q {
            return Err(Error::ShapeMismatch {
                op: "slice_cols",
                lhs: vec![p, q],
                rhs: vec![start, len],
            });
        }
        let src = self.values[a.0].data();
        let mut data = Vec::with_capacity(p * len);
        for i in 0..p {
            data.extend_from_slice(&src[i * q + start..i * q + start + len]);
        }
        let out = Tensor::from_vec(vec![p, len], data)?;
        let na = self.needs[a.0];
        let back: BackFn = Box::new(move |_vals, up, grads| {
            if na {
                let g = &mut grads[a.0];
                for i in 0..p {
                    let gr = &mut g[i * q + start..i * q + start + len];
                    let ur = &up[i * len..(i + 1) * len];
                    for (gv, &uv) in gr.iter_mut().zip(ur) {
                        *gv += uv;
                    }
                }
            }
        });
        Ok(self.push(out, na, Some(back)))
    }

    /// Concatenate 2-D tensors with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Value]) -> Result<Value> {
        assert!(!parts.is_empty(), "concat_cols of zero parts");
        let p = self.dims2(parts[0], "concat_cols")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        let mut q_total = 0;
        for &v in parts {
            let (pi, qi) = self.dims2(v, "concat_cols")?;
            if pi != p {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    lhs: vec![p, q_total],
                    rhs: self.values[v.0].shape().to_vec(),
                });
            }
            widths.push((v.0, q_total, qi));
            q_total += qi;
        }
        let mut data = vec![0.0; p * q_total];
        for (id, at, qi) in &widths {
            let src = self.values[*id].data();
            for i in 0..p {
                data[i * q_total + at..i * q_total + at + qi]
                    .copy_from_slice(&src[i * qi..(i + 1) * qi]);
            }
        }
        let out = Tensor::from_vec(vec![p, q_total], data)?;
        let needs = parts.iter().any(|v| self.needs[v.0]);
        let needs_vec: Vec<bool> = parts.iter().map(|v| self.needs[v.0]).collect();
        let back: BackFn = Box::new(move |_vals, up, grads| {
            for ((id, at, qi), ni) in widths.iter().zip(&needs_vec) {
                if !ni {
                    continue;
                }
                let g = &mut grads[*id];
                for i in 0..p {
                    let gr = &mut g[i * qi..(i + 1) * qi];
                    let ur = &up[i * q_total + at..i * q_total + at + qi];
                    for (gv, &uv) in gr.iter_mut().zip(ur) {
                        *gv += uv;
                    }
                }
            }
        });
        Ok(self.push(out, needs, Some(back)))
    }

    /// Row lookup: out[i] = table[ids[i]]. Backward scatter-adds into the
    /// table rows (embedding gradient).
    pub fn gather_rows(&mut self, table: Value, ids: &[u32]) -> Result<Value> {
        let (v, d) = self.dims2(table, "gather_rows")?;
        for &id in ids {
            if id as usize >= v {
                return Err(Error::TokenOutOfRange(id));
            }
        }
        let src = self.values[table.0].data();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(&src[id as usize * d..(id as usize + 1) * d]);
        }
        let out = Tensor::from_vec(vec![ids.len(), d], data)?;
        let na = self.needs[table.0];
        let ids_owned: Vec<u32> = ids.to_vec();
        let back: BackFn = Box::new(move |_vals, up, grads| {
            if na {
                let g = &mut grads[table.0];
                for (i, &id) in ids_owned.iter().enumerate() {
                    let gr = &mut g[id as usize * d..(id as usize + 1) * d];
                    let ur = &up[i * d..(i + 1) * d];
                    for (gv, &uv) in gr.iter_mut().zip(ur) {
                        *gv += uv;
                    }
                }
            }
        });
        Ok(self.push(out, na, Some(back)))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul_elem(&mut self, a: Value, b: Value) -> Result<Value> {
        if self.values[a.0].shape() != self.values[b.0].shape() {
            return Err(Error::ShapeMismatch {
                op: "mul_elem",
                lhs: self.values[a.0].shape().to_vec(),
                rhs: self.values[b.0].shape().to_vec(),
            });
        }
        let data = self.values[a.0]
            .data()
            .iter()
            .zip(self.values[b.0].data())
            .map(|(x, y)| x * y)
            .collect();
        let out = Tensor::from_vec(self.values[a.0].shape().to_vec(), data)?;
        let (na, nb) = (self.needs[a.0], self.needs[b.0]);
        let back: BackFn = Box::new(move |vals, up, grads| {
            if na {
                for ((gv, &uv), &bv) in grads[a.0].iter_mut().zip(up).zip(vals[b.0].data()) {
                    *gv += uv * bv;
                }
            }
            if nb {
                for ((gv, &uv), &av) in grads[b.0].iter_mut().zip(up).zip(vals[a.0].data()) {
                    *gv += uv * av;
                }
            }
        });
        Ok(self.push(out, na || nb, Some(back)))
    }

    /// Sum of every entry, as a scalar node.
    pub fn sum_all(&mut self, a: Value) -> Result<Value> {
        let total: f64 = self.values[a.0].data().iter().sum();
        let out = Tensor::scalar(total);
        let na = self.needs[a.0];
        let back: BackFn = Box::new(move |_vals, up, grads| {
            if na {
                let u = up[0];
                for gv in grads[a.0].iter_mut() {
                    *gv += u;
                }
            }
        });
        Ok(self.push(out, na, Some(back)))
    }

    // ── Loss ─────────────────────────────────────────────────────────

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`, restricted to positions where `mask` is true. Masked
    /// positions contribute exactly zero. Errors if every position is
    /// masked.
    pub fn cross_entropy_logits(
        &mut self,
        logits: Value,
        targets: &[u32],
        mask: &[bool],
    ) -> Result<Value> {
        let (t, v) = self.dims2(logits, "cross_entropy_logits")?;
        if targets.len() != t || mask.len() != t {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy_logits",
                lhs: vec![t, v],
                rhs: vec![targets.len(), mask.len()],
            });
        }
        for (&id, &m) in targets.iter().zip(mask) {
            if m && id as usize >= v {
                return Err(Error::TokenOutOfRange(id));
            }
        }
        let count = mask.iter().filter(|&&m| m).count();
        if count == 0 {
            return Err(Error::AllMasked);
        }
        let src = self.values[logits.0].data();
        let mut total = 0.0;
        for i in 0..t {
            if !mask[i] {
                continue;
            }
            let row = &src[i * v..(i + 1) * v];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
            total += lse - row[targets[i] as usize];
        }
        let loss = total / count as f64;
        let out = Tensor::scalar(loss);
        let na = self.needs[logits.0];
        let targets_owned: Vec<u32> = targets.to_vec();
        let mask_owned: Vec<bool> = mask.to_vec();
        let back: BackFn = Box::new(move |vals, up, grads| {
            if !na {
                return;
            }
            let scale = up[0] / count as f64;
            let src = vals[logits.0].data();
            let g = &mut grads[logits.0];
            for i in 0..t {
                if !mask_owned[i] {
                    continue;
                }
                let row = &src[i * v..(i + 1) * v];
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut exps: Vec<f64> = row.iter().map(|&x| (x - m).exp()).collect();
                let sum: f64 = exps.iter().sum();
                for e in exps.iter_mut() {
                    *e /= sum;
                }
                let gr = &mut g[i * v..(i + 1) * v];
                for (gv, &pv) in gr.iter_mut().zip(&exps) {
                    *gv += scale * pv;
                }
                gr[targets_owned[i] as usize] -= scale;
            }
        });
        Ok(self.push(out, na, Some(back)))
    }

    // ── Backward ─────────────────────────────────────────────────────

    /// Reverse sweep from a scalar root. Populates per-node gradients,
    /// readable through [`Graph::grad`].
    pub fn backward(&mut self, root: Value) -> Result<()> {
        if self.values[root.0].numel() != 1 {
            return Err(Error::ShapeMismatch {
                op: "backward",
                lhs: self.values[root.0].shape().to_vec(),
                rhs: vec![1],
            });
        }
        let mut grads: Vec<Vec<f64>> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, t)| {
                if self.needs[i] && i <= root.0 {
                    vec![0.0; t.numel()]
                } else {
                    Vec::new()
                }
            })
            .collect();
        if grads[root.0].is_empty() {
            // Root does not require grad anywhere upstream; nothing to do.
            self.grads = grads;
            return Ok(());
        }
        grads[root.0][0] = 1.0;
        for id in (0..=root.0).rev() {
            if grads[id].is_empty() {
                continue;
            }
            if let Some(back) = &self.backs[id] {
                let up = std::mem::take(&mut grads[id]);
                back(&self.values, &up, &mut grads);
                grads[id] = up;
            }
        }
        self.grads = grads;
        Ok(())
    }
}

fn axpy(dst: &mut [f64], src: &[f64]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}
