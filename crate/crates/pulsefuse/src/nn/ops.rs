//! Differentiable primitive operations.
//!
//! Binary operations accept equal shapes, a one-element scalar on the
//! right, or a right operand whose shape is a trailing suffix of the left
//! shape (broadcast over the leading axes, gradients reduce-summed back).

use super::rng::DropKey;
use super::tensor::{Tensor, TensorError};

fn shapes_str(a: &[usize], b: &[usize]) -> String {
    format!("{a:?} vs {b:?}")
}

/// Validates the broadcast contract and returns the right operand's length.
fn broadcast_len(op: &'static str, a: &Tensor, b: &Tensor) -> Result<usize, TensorError> {
    let (sa, sb) = (a.shape(), b.shape());
    if b.len() == 1 {
        return Ok(1);
    }
    if sb.len() <= sa.len() && sa[sa.len() - sb.len()..] == *sb {
        return Ok(b.len());
    }
    Err(TensorError::ShapeMismatch { op, detail: shapes_str(sa, sb) })
}

fn binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: fn(f64, f64) -> f64,
    dfa: fn(f64, f64) -> f64,
    dfb: fn(f64, f64) -> f64,
) -> Result<Tensor, TensorError> {
    let blen = broadcast_len(op, a, b)?;
    let av = a.values();
    let bv = b.values();
    let out: Vec<f64> = if blen == 1 {
        let y = bv[0];
        av.iter().map(|x| f(*x, y)).collect()
    } else {
        let mut out = Vec::with_capacity(av.len());
        for chunk in av.chunks(blen) {
            out.extend(chunk.iter().zip(&*bv).map(|(x, y)| f(*x, *y)));
        }
        out
    };
    let shape = a.shape().to_vec();
    drop(av);
    drop(bv);
    Tensor::from_op(
        op,
        shape,
        out,
        vec![a.clone(), b.clone()],
        Box::new(move |g, parents| {
            let (pa, pb) = (&parents[0], &parents[1]);
            let av = pa.values();
            let bv = pb.values();
            if pa.needs_grad() {
                let contrib: Vec<f64> = if blen == 1 {
                    let y = bv[0];
                    g.iter().zip(&*av).map(|(gi, x)| gi * dfa(*x, y)).collect()
                } else {
                    let mut contrib = Vec::with_capacity(g.len());
                    for (gc, ac) in g.chunks(blen).zip(av.chunks(blen)) {
                        contrib.extend(
                            gc.iter()
                                .zip(ac)
                                .zip(&*bv)
                                .map(|((gi, x), y)| gi * dfa(*x, *y)),
                        );
                    }
                    contrib
                };
                drop(av);
                pa.accumulate_grad_owned(contrib);
            }
            if pb.needs_grad() {
                let av = pa.values();
                let mut contrib = vec![0.0; blen];
                if blen == 1 {
                    let y = bv[0];
                    contrib[0] = g.iter().zip(&*av).map(|(gi, x)| gi * dfb(*x, y)).sum();
                } else {
                    for (gc, ac) in g.chunks(blen).zip(av.chunks(blen)) {
                        for ((ci, gi), (x, y)) in
                            contrib.iter_mut().zip(gc).zip(ac.iter().zip(&*bv))
                        {
                            *ci += gi * dfb(*x, *y);
                        }
                    }
                }
                drop(av);
                drop(bv);
                pb.accumulate_grad_owned(contrib);
            }
        }),
    )
}

fn unary(
    op: &'static str,
    a: &Tensor,
    f: fn(f64) -> f64,
    df: fn(f64) -> f64,
) -> Result<Tensor, TensorError> {
    let out: Vec<f64> = a.values().iter().map(|x| f(*x)).collect();
    Tensor::from_op(
        op,
        a.shape().to_vec(),
        out,
        vec![a.clone()],
        Box::new(move |g, parents| {
            let p = &parents[0];
            let av = p.values();
            let contrib: Vec<f64> = g.iter().zip(av.iter()).map(|(gi, x)| gi * df(*x)).collect();
            drop(av);
            p.accumulate_grad_owned(contrib);
        }),
    )
}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn stable_softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Tensor {
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        binary("add", self, rhs, |a, b| a + b, |_, _| 1.0, |_, _| 1.0)
    }

    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        binary("sub", self, rhs, |a, b| a - b, |_, _| 1.0, |_, _| -1.0)
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        binary("mul", self, rhs, |a, b| a * b, |_, b| b, |a, _| a)
    }

    pub fn div(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        binary("div", self, rhs, |a, b| a / b, |_, b| 1.0 / b, |a, b| -a / (b * b))
    }

    pub fn neg(&self) -> Result<Tensor, TensorError> {
        unary("neg", self, |x| -x, |_| -1.0)
    }

    /// Multiply by a compile-time constant (not a graph node).
    pub fn scale(&self, c: f64) -> Result<Tensor, TensorError> {
        let out: Vec<f64> = self.values().iter().map(|x| x * c).collect();
        Tensor::from_op(
            "scale",
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let contrib: Vec<f64> = g.iter().map(|gi| gi * c).collect();
                parents[0].accumulate_grad_owned(contrib);
            }),
        )
    }

    /// Add a constant to every element.
    pub fn add_scalar(&self, c: f64) -> Result<Tensor, TensorError> {
        let out: Vec<f64> = self.values().iter().map(|x| x + c).collect();
        Tensor::from_op(
            "add_scalar",
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(|g, parents| parents[0].accumulate_grad(g)),
        )
    }

    pub fn silu(&self) -> Result<Tensor, TensorError> {
        unary(
            "silu",
            self,
            |x| x * stable_sigmoid(x),
            |x| {
                let s = stable_sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn softplus(&self) -> Result<Tensor, TensorError> {
        unary("softplus", self, stable_softplus, stable_sigmoid)
    }

    pub fn sigmoid(&self) -> Result<Tensor, TensorError> {
        unary("sigmoid", self, stable_sigmoid, |x| {
            let s = stable_sigmoid(x);
            s * (1.0 - s)
        })
    }

    pub fn exp(&self) -> Result<Tensor, TensorError> {
        unary("exp", self, f64::exp, f64::exp)
    }

    pub fn ln(&self) -> Result<Tensor, TensorError> {
        unary("ln", self, f64::ln, |x| 1.0 / x)
    }

    pub fn sqrt(&self) -> Result<Tensor, TensorError> {
        unary("sqrt", self, f64::sqrt, |x| 0.5 / x.sqrt())
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&self) -> Result<Tensor, TensorError> {
        let total: f64 = self.values().iter().sum();
        Tensor::from_op(
            "sum",
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(|g, parents| {
                let contrib = vec![g[0]; parents[0].len()];
                parents[0].accumulate_grad_owned(contrib);
            }),
        )
    }

    /// Mean of all elements, as a one-element tensor.
    pub fn mean(&self) -> Result<Tensor, TensorError> {
        if self.is_empty() {
            return Err(TensorError::InvalidArg("mean of empty tensor"));
        }
        let n = self.len() as f64;
        let total: f64 = self.values().iter().sum();
        Tensor::from_op(
            "mean",
            vec![1],
            vec![total / n],
            vec![self.clone()],
            Box::new(move |g, parents| {
                let contrib = vec![g[0] / n; parents[0].len()];
                parents[0].accumulate_grad_owned(contrib);
            }),
        )
    }

    /// Sum over the last `k` axes, dropping them from the shape.
    pub fn sum_trailing(&self, k: usize) -> Result<Tensor, TensorError> {
        let nd = self.shape().len();
        if k == 0 || k > nd {
            return Err(TensorError::InvalidArg("sum_trailing axis count out of range"));
        }
        let keep = nd - k;
        let outer: usize = self.shape()[..keep].iter().product();
        let inner: usize = self.shape()[keep..].iter().product();
        let v = self.values();
        let out: Vec<f64> = (0..outer).map(|o| v[o * inner..(o + 1) * inner].iter().sum()).collect();
        drop(v);
        let shape = if keep == 0 { vec![1] } else { self.shape()[..keep].to_vec() };
        Tensor::from_op(
            "sum_trailing",
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut contrib = vec![0.0; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        contrib[o * inner + i] = g[o];
                    }
                }
                parents[0].accumulate_grad_owned(contrib);
            }),
        )
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Result<Tensor, TensorError> {
        if shape.iter().product::<usize>() != self.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                detail: shapes_str(self.shape(), &shape),
            });
        }
        Tensor::from_op(
            "reshape",
            shape,
            self.to_vec(),
            vec![self.clone()],
            Box::new(|g, parents| parents[0].accumulate_grad(g)),
        )
    }

    /// Slice `[start, end)` along one axis.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Tensor, TensorError> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() || start >= end || end > shape[axis] {
            return Err(TensorError::InvalidArg("slice bounds out of range"));
        }
        let outer: usize = shape[..axis].iter().product();
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let span = end - start;
        let v = self.values();
        let mut out = Vec::with_capacity(outer * span * inner);
        for o in 0..outer {
            let base = (o * axis_len + start) * inner;
            out.extend_from_slice(&v[base..base + span * inner]);
        }
        drop(v);
        let mut new_shape = shape.clone();
        new_shape[axis] = span;
        Tensor::from_op(
            "slice",
            new_shape,
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut contrib = vec![0.0; outer * axis_len * inner];
                for o in 0..outer {
                    let dst = (o * axis_len + start) * inner;
                    let src = o * span * inner;
                    contrib[dst..dst + span * inner].copy_from_slice(&g[src..src + span * inner]);
                }
                parents[0].accumulate_grad_owned(contrib);
            }),
        )
    }

    /// Concatenate along one axis; all other axes must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor, TensorError> {
        if parts.is_empty() {
            return Err(TensorError::InvalidArg("concat of zero tensors"));
        }
        let first = parts[0].shape().to_vec();
        if axis >= first.len() {
            return Err(TensorError::InvalidArg("concat axis out of range"));
        }
        for p in parts {
            let s = p.shape();
            if s.len() != first.len()
                || s.iter().zip(&first).enumerate().any(|(i, (a, b))| i != axis && a != b)
            {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    detail: shapes_str(s, &first),
                });
            }
        }
        let outer: usize = first[..axis].iter().product();
        let inner: usize = first[axis + 1..].iter().product();
        let spans: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total_span: usize = spans.iter().sum();
        let mut out = vec![0.0; outer * total_span * inner];
        let mut offset = 0usize;
        for (p, span) in parts.iter().zip(&spans) {
            let v = p.values();
            for o in 0..outer {
                let src = o * span * inner;
                let dst = (o * total_span + offset) * inner;
                out[dst..dst + span * inner].copy_from_slice(&v[src..src + span * inner]);
            }
            offset += span;
        }
        let mut shape = first;
        shape[axis] = total_span;
        let spans_bw = spans.clone();
        Tensor::from_op(
            "concat",
            shape,
            out,
            parts.to_vec(),
            Box::new(move |g, parents| {
                let mut offset = 0usize;
                for (p, span) in parents.iter().zip(&spans_bw) {
                    if p.needs_grad() {
                        let mut contrib = vec![0.0; outer * span * inner];
                        for o in 0..outer {
                            let src = (o * total_span + offset) * inner;
                            let dst = o * span * inner;
                            contrib[dst..dst + span * inner]
                                .copy_from_slice(&g[src..src + span * inner]);
                        }
                        p.accumulate_grad_owned(contrib);
                    }
                    offset += span;
                }
            }),
        )
    }

    /// 2-D matrix product `(M,K) x (K,N) -> (M,N)`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor, TensorError> {
        let (sa, sb) = (self.shape(), rhs.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch { op: "matmul", detail: shapes_str(sa, sb) });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let av = self.values();
        let bv = rhs.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let a_ip = av[i * k + p];
                if a_ip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, b) in orow.iter_mut().zip(brow) {
                    *o += a_ip * b;
                }
            }
        }
        drop(av);
        drop(bv);
        Tensor::from_op(
            "matmul",
            vec![m, n],
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |g, parents| {
                let (pa, pb) = (&parents[0], &parents[1]);
                if pa.needs_grad() {
                    // dA = G * B^T, as row dots so both operands stream.
                    let bv = pb.values();
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        let drow = &mut da[i * k..(i + 1) * k];
                        for (p, d) in drow.iter_mut().enumerate() {
                            let brow = &bv[p * n..(p + 1) * n];
                            *d = grow.iter().zip(brow).map(|(g, b)| g * b).sum();
                        }
                    }
                    drop(bv);
                    pa.accumulate_grad_owned(da);
                }
                if pb.needs_grad() {
                    // dB = A^T * G
                    let av = pa.values();
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let a_ip = av[i * k + p];
                            if a_ip == 0.0 {
                                continue;
                            }
                            let grow = &g[i * n..(i + 1) * n];
                            let drow = &mut db[p * n..(p + 1) * n];
                            for (d, gv) in drow.iter_mut().zip(grow) {
                                *d += a_ip * gv;
                            }
                        }
                    }
                    drop(av);
                    pb.accumulate_grad_owned(db);
                }
            }),
        )
    }

    /// 2-D transpose.
    pub fn transpose2(&self) -> Result<Tensor, TensorError> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(TensorError::InvalidArg("transpose2 needs a 2-D tensor"));
        }
        let (m, n) = (s[0], s[1]);
        let v = self.values();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        drop(v);
        Tensor::from_op(
            "transpose2",
            vec![n, m],
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let mut contrib = vec![0.0; m * n];
                for j in 0..n {
                    for i in 0..m {
                        contrib[i * n + j] = g[j * m + i];
                    }
                }
                parents[0].accumulate_grad_owned(contrib);
            }),
        )
    }

    /// Permute the axes of a 4-D tensor.
    pub fn permute4(&self, perm: [usize; 4]) -> Result<Tensor, TensorError> {
        let s = self.shape();
        if s.len() != 4 {
            return Err(TensorError::InvalidArg("permute4 needs a 4-D tensor"));
        }
        {
            let mut seen = [false; 4];
            for p in perm {
                if p >= 4 || seen[p] {
                    return Err(TensorError::InvalidArg("permute4 needs a permutation of 0..4"));
                }
                seen[p] = true;
            }
        }
        let src_shape = [s[0], s[1], s[2], s[3]];
        let dst_shape = [s[perm[0]], s[perm[1]], s[perm[2]], s[perm[3]]];
        let out = permute4_copy(&self.values(), src_shape, perm);
        Tensor::from_op(
            "permute4",
            dst_shape.to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                // The inverse permutation maps gradients back.
                let mut inv = [0usize; 4];
                for (i, p) in perm.iter().enumerate() {
                    inv[*p] = i;
                }
                let contrib = permute4_copy(g, dst_shape, inv);
                parents[0].accumulate_grad_owned(contrib);
            }),
        )
    }

    /// Layer normalization over the last axis with learnable gain and bias.
    pub fn layer_norm(&self, gamma: &Tensor, beta: &Tensor) -> Result<Tensor, TensorError> {
        const EPS: f64 = 1e-5;
        let s = self.shape();
        let d = *s.last().ok_or(TensorError::InvalidArg("layer_norm on 0-d tensor"))?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                detail: format!("gamma {:?} beta {:?} for feature dim {}", gamma.shape(), beta.shape(), d),
            });
        }
        let rows = self.len() / d;
        let x = self.values();
        let gv = gamma.values();
        let bv = beta.values();
        let mut out = vec![0.0; self.len()];
        for r in 0..rows {
            let row = &x[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rstd = 1.0 / (var + EPS).sqrt();
            for i in 0..d {
                out[r * d + i] = (row[i] - mean) * rstd * gv[i] + bv[i];
            }
        }
        drop(x);
        drop(gv);
        drop(bv);
        Tensor::from_op(
            "layer_norm",
            s.to_vec(),
            out,
            vec![self.clone(), gamma.clone(), beta.clone()],
            Box::new(move |g, parents| {
                let (px, pg, pb) = (&parents[0], &parents[1], &parents[2]);
                let x = px.values();
                let gv = pg.values();
                let mut dx = vec![0.0; x.len()];
                let mut dgamma = vec![0.0; d];
                let mut dbeta = vec![0.0; d];
                for r in 0..rows {
                    let row = &x[r * d..(r + 1) * d];
                    let grow = &g[r * d..(r + 1) * d];
                    let mean = row.iter().sum::<f64>() / d as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                    let rstd = 1.0 / (var + EPS).sqrt();
                    let mut mean_gx = 0.0;
                    let mut mean_gxx = 0.0;
                    for i in 0..d {
                        let xh = (row[i] - mean) * rstd;
                        let gx = grow[i] * gv[i];
                        mean_gx += gx;
                        mean_gxx += gx * xh;
                        dgamma[i] += grow[i] * xh;
                        dbeta[i] += grow[i];
                    }
                    mean_gx /= d as f64;
                    mean_gxx /= d as f64;
                    for i in 0..d {
                        let xh = (row[i] - mean) * rstd;
                        let gx = grow[i] * gv[i];
                        dx[r * d + i] = rstd * (gx - mean_gx - xh * mean_gxx);
                    }
                }
                drop(x);
                drop(gv);
                px.accumulate_grad_owned(dx);
                pg.accumulate_grad_owned(dgamma);
                pb.accumulate_grad_owned(dbeta);
            }),
        )
    }

    /// Inverted dropout with a deterministic counter-based mask derived
    /// from `key`. Identity when `train` is false or `p` is zero.
    pub fn dropout(&self, p: f64, key: DropKey, train: bool) -> Result<Tensor, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::InvalidArg("dropout rate must be in [0, 1)"));
        }
        if !train || p == 0.0 {
            return Tensor::from_op(
                "dropout",
                self.shape().to_vec(),
                self.to_vec(),
                vec![self.clone()],
                Box::new(|g, parents| parents[0].accumulate_grad(g)),
            );
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.len() as u64)
            .map(|i| if key.unit(i) >= p { keep } else { 0.0 })
            .collect();
        let out: Vec<f64> = self.values().iter().zip(&mask).map(|(x, m)| x * m).collect();
        Tensor::from_op(
            "dropout",
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, parents| {
                let contrib: Vec<f64> = g.iter().zip(&mask).map(|(gi, m)| gi * m).collect();
                parents[0].accumulate_grad_owned(contrib);
            }),
        )
    }
}

fn permute4_copy(src: &[f64], src_shape: [usize; 4], perm: [usize; 4]) -> Vec<f64> {
    let dst_shape = [
        src_shape[perm[0]],
        src_shape[perm[1]],
        src_shape[perm[2]],
        src_shape[perm[3]],
    ];
    let src_strides = [
        src_shape[1] * src_shape[2] * src_shape[3],
        src_shape[2] * src_shape[3],
        src_shape[3],
        1,
    ];
    // Stride of destination axis k in the source layout.
    let stride = [
        src_strides[perm[0]],
        src_strides[perm[1]],
        src_strides[perm[2]],
        src_strides[perm[3]],
    ];
    let mut out = Vec::with_capacity(src.len());
    for a in 0..dst_shape[0] {
        for b in 0..dst_shape[1] {
            for c in 0..dst_shape[2] {
                let base = a * stride[0] + b * stride[1] + c * stride[2];
                for e in 0..dst_shape[3] {
                    out.push(src[base + e * stride[3]]);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::leaf(shape.to_vec(), v.to_vec(), true).unwrap()
    }

    #[test]
    fn add_and_backward() {
        let a = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let b = t(&[2, 2], &[10.0, 20.0, 30.0, 40.0]);
        let s = a.add(&b).unwrap().sum().unwrap();
        assert_eq!(s.item().unwrap(), 110.0);
        s.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0; 4]);
        assert_eq!(b.grad().unwrap(), vec![1.0; 4]);
    }

    #[test]
    fn suffix_broadcast_add() {
        let a = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[3], &[10.0, 20.0, 30.0]);
        let s = a.add(&b).unwrap();
        assert_eq!(s.to_vec(), vec![11.0, 22.0, 33.0, 14.0, 25.0, 36.0]);
        let l = s.sum().unwrap();
        l.backward().unwrap();
        assert_eq!(b.grad().unwrap(), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn scalar_broadcast_div() {
        let a = t(&[4], &[2.0, 4.0, 6.0, 8.0]);
        let b = t(&[1], &[2.0]);
        let q = a.div(&b).unwrap();
        assert_eq!(q.to_vec(), vec![1.0, 2.0, 3.0, 4.0]);
        q.sum().unwrap().backward().unwrap();
        // d(sum(a/b))/db = -sum(a)/b^2 = -20/4 = -5.
        assert_eq!(b.grad().unwrap(), vec![-5.0]);
    }

    #[test]
    fn mismatched_broadcast_is_rejected() {
        let a = t(&[2, 3], &[0.0; 6]);
        let b = t(&[2], &[0.0; 2]);
        assert!(matches!(a.add(&b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn matmul_hand_value() {
        let a = t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = t(&[3, 2], &[7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.to_vec(), vec![58.0, 64.0, 139.0, 154.0]);
        c.sum().unwrap().backward().unwrap();
        // dA = ones(2,2) * B^T.
        assert_eq!(a.grad().unwrap(), vec![15.0, 19.0, 23.0, 15.0, 19.0, 23.0]);
    }

    #[test]
    fn division_by_zero_is_caught() {
        let a = t(&[2], &[1.0, 2.0]);
        let b = t(&[2], &[1.0, 0.0]);
        assert!(matches!(a.div(&b), Err(TensorError::NonFiniteValue { .. })));
    }

    #[test]
    fn ln_of_negative_is_caught() {
        let a = t(&[2], &[1.0, -1.0]);
        assert!(matches!(a.ln(), Err(TensorError::NonFiniteValue { .. })));
    }

    #[test]
    fn softplus_is_stable_at_extremes() {
        let a = t(&[3], &[-800.0, 0.0, 800.0]);
        let y = a.softplus().unwrap();
        let v = y.to_vec();
        assert_eq!(v[0], 0.0);
        assert_relative_eq!(v[1], 2f64.ln());
        assert_eq!(v[2], 800.0);
    }

    #[test]
    fn slice_and_concat_round_trip() {
        let a = t(&[2, 4], &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        let left = a.slice(1, 0, 2).unwrap();
        let right = a.slice(1, 2, 4).unwrap();
        assert_eq!(left.to_vec(), vec![0.0, 1.0, 4.0, 5.0]);
        let back = Tensor::concat(&[left, right], 1).unwrap();
        assert_eq!(back.to_vec(), a.to_vec());
        back.sum().unwrap().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0; 8]);
    }

    #[test]
    fn permute4_round_trip() {
        let vals: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let a = t(&[2, 3, 2, 2], &vals);
        let p = a.permute4([1, 0, 3, 2]).unwrap();
        assert_eq!(p.shape(), &[3, 2, 2, 2]);
        let back = p.permute4([1, 0, 3, 2]).unwrap();
        assert_eq!(back.to_vec(), vals);
    }

    #[test]
    fn permute4_moves_values_correctly() {
        // (T=2, C=3) with singleton spatial dims: permute to (C, T, ., .).
        let a = t(&[2, 3, 1, 1], &[0.0, 1.0, 2.0, 10.0, 11.0, 12.0]);
        let p = a.permute4([1, 0, 2, 3]).unwrap();
        assert_eq!(p.shape(), &[3, 2, 1, 1]);
        assert_eq!(p.to_vec(), vec![0.0, 10.0, 1.0, 11.0, 2.0, 12.0]);
    }

    #[test]
    fn layer_norm_normalizes_rows() {
        let a = t(&[2, 4], &[1.0, 2.0, 3.0, 4.0, -2.0, 0.0, 2.0, 8.0]);
        let gamma = t(&[4], &[1.0, 1.0, 1.0, 1.0]);
        let beta = t(&[4], &[0.0, 0.0, 0.0, 0.0]);
        let y = a.layer_norm(&gamma, &beta).unwrap();
        let v = y.to_vec();
        for row in v.chunks(4) {
            let mean: f64 = row.iter().sum::<f64>() / 4.0;
            let var: f64 = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
            assert_relative_eq!(mean, 0.0, epsilon = 1e-12);
            assert_relative_eq!(var, 1.0, epsilon = 1e-4);
        }
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let a = t(&[8], &[1.0; 8]);
        let key = DropKey::new(7, "layer", 0);
        let y = a.dropout(0.5, key, false).unwrap();
        assert_eq!(y.to_vec(), vec![1.0; 8]);
    }

    #[test]
    fn dropout_mask_is_deterministic_and_scaled() {
        let a = t(&[1000], &[1.0; 1000]);
        let key = DropKey::new(7, "layer", 3);
        let y1 = a.dropout(0.25, key, true).unwrap().to_vec();
        let y2 = a.dropout(0.25, DropKey::new(7, "layer", 3), true).unwrap().to_vec();
        assert_eq!(y1, y2);
        let other = a.dropout(0.25, DropKey::new(7, "layer", 4), true).unwrap().to_vec();
        assert_ne!(y1, other);
        let kept = y1.iter().filter(|v| **v > 0.0).count();
        assert!((650..=850).contains(&kept), "kept {kept}");
        for v in y1 {
            assert!(v == 0.0 || (v - 4.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_backward_accumulates() {
        let a = t(&[2], &[3.0, 4.0]);
        let l1 = a.mul(&a).unwrap().sum().unwrap();
        l1.backward().unwrap();
        let g1 = a.grad().unwrap();
        assert_eq!(g1, vec![6.0, 8.0]);
        let l2 = a.mul(&a).unwrap().sum().unwrap();
        l2.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![12.0, 16.0]);
        a.zero_grad();
        let l3 = a.mul(&a).unwrap().sum().unwrap();
        l3.backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![6.0, 8.0]);
    }
}
