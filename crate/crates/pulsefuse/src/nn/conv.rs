//! 3-D convolution and spatial pooling over (C, T, H, W) tensors.

use super::tensor::{Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pad {
    /// Output keeps the input extent (ceil-divided by stride); input is
    /// zero-padded, splitting the excess low/high with the extra sample high.
    Same,
    /// No padding; kernel placements must fit entirely inside the input.
    Valid,
}

struct ConvPlan {
    c_in: usize,
    t_in: usize,
    h_in: usize,
    w_in: usize,
    c_out: usize,
    kt: usize,
    kh: usize,
    kw: usize,
    t_out: usize,
    h_out: usize,
    w_out: usize,
    stride: usize,
    pad_t: isize,
    pad_h: isize,
    pad_w: isize,
}

fn same_pad_lo(out: usize, stride: usize, k: usize, input: usize) -> isize {
    let total = ((out - 1) * stride + k).saturating_sub(input);
    (total / 2) as isize
}

fn plan(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    pad: Pad,
) -> Result<ConvPlan, TensorError> {
    let si = input.shape();
    let sw = weight.shape();
    if si.len() != 4 || sw.len() != 5 {
        return Err(TensorError::ShapeMismatch {
            op: "conv3d",
            detail: format!("input {si:?} (want 4-D), weight {sw:?} (want 5-D)"),
        });
    }
    if stride == 0 {
        return Err(TensorError::InvalidArg("conv3d stride must be positive"));
    }
    let (c_in, t_in, h_in, w_in) = (si[0], si[1], si[2], si[3]);
    let (c_out, wc_in, kt, kh, kw) = (sw[0], sw[1], sw[2], sw[3], sw[4]);
    if wc_in != c_in {
        return Err(TensorError::ShapeMismatch {
            op: "conv3d",
            detail: format!("input has {c_in} channels, weight expects {wc_in}"),
        });
    }
    let (t_out, h_out, w_out, pad_t, pad_h, pad_w) = match pad {
        Pad::Same => {
            let h_out = h_in.div_ceil(stride);
            let w_out = w_in.div_ceil(stride);
            (
                t_in,
                h_out,
                w_out,
                same_pad_lo(t_in, 1, kt, t_in),
                same_pad_lo(h_out, stride, kh, h_in),
                same_pad_lo(w_out, stride, kw, w_in),
            )
        }
        Pad::Valid => {
            if kt > t_in || kh > h_in || kw > w_in {
                return Err(TensorError::ShapeMismatch {
                    op: "conv3d",
                    detail: format!("kernel ({kt},{kh},{kw}) larger than input ({t_in},{h_in},{w_in})"),
                });
            }
            ((t_in - kt) + 1, (h_in - kh) / stride + 1, (w_in - kw) / stride + 1, 0, 0, 0)
        }
    };
    Ok(ConvPlan {
        c_in,
        t_in,
        h_in,
        w_in,
        c_out,
        kt,
        kh,
        kw,
        t_out,
        h_out,
        w_out,
        stride,
        pad_t,
        pad_h,
        pad_w,
    })
}

/// Output index range [lo, hi) for which `out_idx * stride + k - pad` lands
/// inside [0, input_len).
fn valid_range(out_len: usize, stride: usize, k: usize, pad: isize, in_len: usize) -> (usize, usize) {
    let off = k as isize - pad;
    let lo = if off >= 0 { 0 } else { ((-off) as usize).div_ceil(stride) };
    // Largest out with out*stride + off <= in_len - 1.
    let max_in = in_len as isize - 1 - off;
    if max_in < 0 {
        return (0, 0);
    }
    let hi = (max_in as usize / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

/// 3-D convolution: input (C_in, T, H, W), weight (C_out, C_in, kT, kH, kW),
/// optional bias (C_out). The stride applies to H and W only; time always
/// advances one frame per output sample.
pub fn conv3d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    pad: Pad,
) -> Result<Tensor, TensorError> {
    let p = plan(input, weight, stride, pad)?;
    if let Some(b) = bias {
        if b.shape() != [p.c_out] {
            return Err(TensorError::ShapeMismatch {
                op: "conv3d",
                detail: format!("bias {:?} for {} output channels", b.shape(), p.c_out),
            });
        }
    }
    let out_len = p.c_out * p.t_out * p.h_out * p.w_out;
    let mut out = vec![0.0; out_len];
    if let Some(b) = bias {
        let bv = b.values();
        let per_c = p.t_out * p.h_out * p.w_out;
        for co in 0..p.c_out {
            out[co * per_c..(co + 1) * per_c].fill(bv[co]);
        }
    }
    {
        let iv = input.values();
        let wv = weight.values();
        accumulate_forward(&p, &iv, &wv, &mut out);
    }
    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let shape = vec![p.c_out, p.t_out, p.h_out, p.w_out];
    Tensor::from_op(
        "conv3d",
        shape,
        out,
        parents,
        Box::new(move |g, parents| {
            let (pi, pw) = (&parents[0], &parents[1]);
            let iv = pi.values();
            let wv = pw.values();
            let mut d_in = if pi.needs_grad() { Some(vec![0.0; iv.len()]) } else { None };
            let mut d_w = if pw.needs_grad() { Some(vec![0.0; wv.len()]) } else { None };
            accumulate_backward(&p, &iv, &wv, g, d_in.as_deref_mut(), d_w.as_deref_mut());
            drop(iv);
            drop(wv);
            if let Some(d) = d_in {
                pi.accumulate_grad_owned(d);
            }
            if let Some(d) = d_w {
                pw.accumulate_grad_owned(d);
            }
            if let Some(pb) = parents.get(2) {
                if pb.needs_grad() {
                    let per_c = p.t_out * p.h_out * p.w_out;
                    let db: Vec<f64> =
                        (0..p.c_out).map(|co| g[co * per_c..(co + 1) * per_c].iter().sum()).collect();
                    pb.accumulate_grad_owned(db);
                }
            }
        }),
    )
}

/// Per-tap geometry shared by the forward and backward sweeps. Output rows
/// y in [y_lo, y_hi) and columns x in [x_lo, x_hi) keep this tap in bounds;
/// the input column for x_lo is x_lo*stride + dx and the input row for y_lo
/// is y_lo*stride + dy.
struct Tap {
    ci: usize,
    dt: isize,
    y_lo: usize,
    y_hi: usize,
    x_lo: usize,
    n: usize,
    in_y0: usize,
    in_x0: usize,
    w_idx_rel: usize,
}

fn taps(p: &ConvPlan) -> Vec<Tap> {
    let mut taps = Vec::with_capacity(p.c_in * p.kt * p.kh * p.kw);
    for ci in 0..p.c_in {
        for kt in 0..p.kt {
            for kh in 0..p.kh {
                let (y_lo, y_hi) = valid_range(p.h_out, p.stride, kh, p.pad_h, p.h_in);
                let dy = kh as isize - p.pad_h;
                for kw in 0..p.kw {
                    let (x_lo, x_hi) = valid_range(p.w_out, p.stride, kw, p.pad_w, p.w_in);
                    if x_lo >= x_hi || y_lo >= y_hi {
                        continue;
                    }
                    let dx = kw as isize - p.pad_w;
                    taps.push(Tap {
                        ci,
                        dt: kt as isize - p.pad_t,
                        y_lo,
                        y_hi,
                        x_lo,
                        n: x_hi - x_lo,
                        in_y0: (y_lo as isize * p.stride as isize + dy) as usize,
                        in_x0: (x_lo as isize * p.stride as isize + dx) as usize,
                        w_idx_rel: ((ci * p.kt + kt) * p.kh + kh) * p.kw + kw,
                    });
                }
            }
        }
    }
    taps
}

fn saxpy(acc: &mut [f64], row: &[f64], w: f64) {
    for (o, i) in acc.iter_mut().zip(row) {
        *o += w * i;
    }
}

// Eight independent partial sums break the addition latency chain; the
// combination order is fixed, so results are deterministic everywhere.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 8];
    let (a8, a_tail) = a.split_at(a.len() - a.len() % 8);
    let (b8, b_tail) = b.split_at(a8.len());
    for (ca, cb) in a8.chunks_exact(8).zip(b8.chunks_exact(8)) {
        for i in 0..8 {
            lanes[i] += ca[i] * cb[i];
        }
    }
    let mut acc = ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5]))
        + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]));
    for (x, y) in a_tail.iter().zip(b_tail) {
        acc += x * y;
    }
    acc
}

/// Pointwise convolutions reduce to a channel mix over the whole volume,
/// which runs as one long fused multiply-add per channel pair.
fn is_channel_mix(p: &ConvPlan) -> bool {
    p.kt == 1 && p.kh == 1 && p.kw == 1 && p.stride == 1
}

/// Gathers frame t's receptive-field rows into `patch`, laid out as one
/// length-h_out*w_out row per kernel tap. Rows for taps that fall outside
/// the input stay zero, so the weight sweep needs no validity checks.
fn fill_patch(p: &ConvPlan, taps: &[Tap], iv: &[f64], t: usize, patch: &mut [f64]) {
    let in_chw = p.t_in * p.h_in * p.w_in;
    let in_hw = p.h_in * p.w_in;
    let out_hw = p.h_out * p.w_out;
    patch.fill(0.0);
    for tap in taps {
        let ti = t as isize + tap.dt;
        if ti < 0 || ti >= p.t_in as isize {
            continue;
        }
        let row_step = p.stride * p.w_in;
        let mut in_base = tap.ci * in_chw + ti as usize * in_hw + tap.in_y0 * p.w_in + tap.in_x0;
        let mut dst = tap.w_idx_rel * out_hw + tap.y_lo * p.w_out + tap.x_lo;
        if p.stride == 1 {
            for _ in tap.y_lo..tap.y_hi {
                patch[dst..dst + tap.n].copy_from_slice(&iv[in_base..in_base + tap.n]);
                in_base += row_step;
                dst += p.w_out;
            }
        } else {
            for _ in tap.y_lo..tap.y_hi {
                for k in 0..tap.n {
                    patch[dst + k] = iv[in_base + k * p.stride];
                }
                in_base += row_step;
                dst += p.w_out;
            }
        }
    }
}

// Both sweeps accumulate every output element's terms in (ci, kt, kh, kw)
// order, exactly as the plain quintuple loop would, so results match it
// bitwise. Out-of-range taps contribute an explicit zero, which leaves
// finite sums unchanged.
fn accumulate_forward(p: &ConvPlan, iv: &[f64], wv: &[f64], out: &mut [f64]) {
    let out_thw = p.t_out * p.h_out * p.w_out;
    let out_hw = p.h_out * p.w_out;
    let k_len = p.c_in * p.kt * p.kh * p.kw;
    if is_channel_mix(p) {
        let in_chw = p.t_in * p.h_in * p.w_in;
        for co in 0..p.c_out {
            let out_vol = &mut out[co * out_thw..(co + 1) * out_thw];
            for ci in 0..p.c_in {
                saxpy(out_vol, &iv[ci * in_chw..(ci + 1) * in_chw], wv[co * k_len + ci]);
            }
        }
        return;
    }
    let taps = taps(p);
    let mut patch = vec![0.0; k_len * out_hw];
    for t in 0..p.t_out {
        fill_patch(p, &taps, iv, t, &mut patch);
        for co in 0..p.c_out {
            let w_row = &wv[co * k_len..(co + 1) * k_len];
            let out_base = co * out_thw + t * out_hw;
            let out_row = &mut out[out_base..out_base + out_hw];
            for (k, w) in w_row.iter().enumerate() {
                saxpy(out_row, &patch[k * out_hw..(k + 1) * out_hw], *w);
            }
        }
    }
}

fn accumulate_backward(
    p: &ConvPlan,
    iv: &[f64],
    wv: &[f64],
    g: &[f64],
    mut d_in: Option<&mut [f64]>,
    mut d_w: Option<&mut [f64]>,
) {
    let in_chw = p.t_in * p.h_in * p.w_in;
    let out_thw = p.t_out * p.h_out * p.w_out;
    let out_hw = p.h_out * p.w_out;
    let k_len = p.c_in * p.kt * p.kh * p.kw;
    if is_channel_mix(p) {
        for co in 0..p.c_out {
            let g_vol = &g[co * out_thw..(co + 1) * out_thw];
            for ci in 0..p.c_in {
                let in_vol = &iv[ci * in_chw..(ci + 1) * in_chw];
                if let Some(d) = d_w.as_deref_mut() {
                    d[co * k_len + ci] += dot(g_vol, in_vol);
                }
                if let Some(d) = d_in.as_deref_mut() {
                    saxpy(&mut d[ci * in_chw..(ci + 1) * in_chw], g_vol, wv[co * k_len + ci]);
                }
            }
        }
        return;
    }
    let taps = taps(p);
    let mut patch = vec![0.0; k_len * out_hw];
    let mut dpatch = vec![0.0; k_len * out_hw];
    for t in 0..p.t_out {
        if d_w.is_some() {
            fill_patch(p, &taps, iv, t, &mut patch);
        }
        if d_in.is_some() {
            dpatch.fill(0.0);
        }
        for co in 0..p.c_out {
            let g_base = co * out_thw + t * out_hw;
            let g_row = &g[g_base..g_base + out_hw];
            let w_row = &wv[co * k_len..(co + 1) * k_len];
            if let Some(d) = d_w.as_deref_mut() {
                let dw_row = &mut d[co * k_len..(co + 1) * k_len];
                for (k, dw) in dw_row.iter_mut().enumerate() {
                    *dw += dot(g_row, &patch[k * out_hw..(k + 1) * out_hw]);
                }
            }
            if d_in.is_some() {
                for (k, w) in w_row.iter().enumerate() {
                    saxpy(&mut dpatch[k * out_hw..(k + 1) * out_hw], g_row, *w);
                }
            }
        }
        if let Some(d) = d_in.as_deref_mut() {
            // Scatter the patch adjoint back onto the input, reversing
            // fill_patch's gather.
            let in_hw = p.h_in * p.w_in;
            for tap in &taps {
                let ti = t as isize + tap.dt;
                if ti < 0 || ti >= p.t_in as isize {
                    continue;
                }
                let row_step = p.stride * p.w_in;
                let mut in_base =
                    tap.ci * in_chw + ti as usize * in_hw + tap.in_y0 * p.w_in + tap.in_x0;
                let mut src = tap.w_idx_rel * out_hw + tap.y_lo * p.w_out + tap.x_lo;
                if p.stride == 1 {
                    for _ in tap.y_lo..tap.y_hi {
                        saxpy(&mut d[in_base..in_base + tap.n], &dpatch[src..src + tap.n], 1.0);
                        in_base += row_step;
                        src += p.w_out;
                    }
                } else {
                    for _ in tap.y_lo..tap.y_hi {
                        for k in 0..tap.n {
                            d[in_base + k * p.stride] += dpatch[src + k];
                        }
                        in_base += row_step;
                        src += p.w_out;
                    }
                }
            }
        }
    }
}

/// 2x2 spatial max pooling with stride 2; time and channels pass through.
/// Both spatial extents must be even.
pub fn maxpool_spatial2(input: &Tensor) -> Result<Tensor, TensorError> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(TensorError::InvalidArg("maxpool_spatial2 needs a 4-D tensor"));
    }
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    if h % 2 != 0 || w % 2 != 0 || h == 0 || w == 0 {
        return Err(TensorError::OddSpatialDims { h, w });
    }
    let (ho, wo) = (h / 2, w / 2);
    let v = input.values();
    let mut out = vec![0.0; c * t * ho * wo];
    let mut argmax = vec![0usize; out.len()];
    for ct in 0..c * t {
        let in_base = ct * h * w;
        let out_base = ct * ho * wo;
        for y in 0..ho {
            for x in 0..wo {
                let i00 = in_base + (2 * y) * w + 2 * x;
                let cand = [i00, i00 + 1, i00 + w, i00 + w + 1];
                let mut best = cand[0];
                for idx in &cand[1..] {
                    if v[*idx] > v[best] {
                        best = *idx;
                    }
                }
                out[out_base + y * wo + x] = v[best];
                argmax[out_base + y * wo + x] = best;
            }
        }
    }
    drop(v);
    let in_len = input.len();
    Tensor::from_op(
        "maxpool_spatial2",
        vec![c, t, ho, wo],
        out,
        vec![input.clone()],
        Box::new(move |g, parents| {
            let mut contrib = vec![0.0; in_len];
            for (gi, src) in g.iter().zip(&argmax) {
                contrib[*src] += gi;
            }
            parents[0].accumulate_grad_owned(contrib);
        }),
    )
}

/// Mean over both spatial axes: (C, T, H, W) -> (C, T, 1, 1).
pub fn avgpool_spatial_to1(input: &Tensor) -> Result<Tensor, TensorError> {
    let s = input.shape();
    if s.len() != 4 {
        return Err(TensorError::InvalidArg("avgpool_spatial_to1 needs a 4-D tensor"));
    }
    let (c, t, h, w) = (s[0], s[1], s[2], s[3]);
    if h * w == 0 {
        return Err(TensorError::InvalidArg("avgpool on empty spatial extent"));
    }
    input
        .sum_trailing(2)?
        .scale(1.0 / (h * w) as f64)?
        .reshape(vec![c, t, 1, 1])
}
