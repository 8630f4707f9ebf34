//! Input-dependent linear recurrence over a flattened sequence.
//!
//! For sequence position t, channel d, state n:
//!
//! ```text
//! abar[t,d,n] = exp(delta[t,d] * a[d,n])
//! h[t,d,n]    = abar[t,d,n] * h[t-1,d,n] + delta[t,d] * b[t,n] * x[t,d]
//! y[t,d]      = sum_n c[t,n] * h[t,d,n]
//! ```
//!
//! with h[-1] = 0. Stability requires a <= 0; callers produce `a` as
//! -softplus(raw) so that abar stays in (0, 1] for nonnegative delta.
//!
//! The backward pass replays the recurrence in reverse, carrying the
//! adjoint of the state. Per (d, n), with gh the running state adjoint:
//!
//! ```text
//! gh       += gy[t,d] * c[t,n]
//! da[d,n]  += gh * h[t-1,d,n] * abar * delta[t,d]
//! ddelta   += gh * (h[t-1,d,n] * abar * a[d,n] + b[t,n] * x[t,d])
//! db[t,n]  += gh * delta[t,d] * x[t,d]
//! dx[t,d]  += gh * delta[t,d] * b[t,n]
//! dc[t,n]  += gy[t,d] * h[t,d,n]
//! gh       *= abar                  (carried to step t-1)
//! ```

use super::tensor::{Tensor, TensorError};

/// Runs the recurrence. Shapes: x (L,D), delta (L,D), a (D,N), b (L,N),
/// c (L,N); output y is (L,D).
pub fn scan(
    x: &Tensor,
    delta: &Tensor,
    a: &Tensor,
    b: &Tensor,
    c: &Tensor,
) -> Result<Tensor, TensorError> {
    let (l, d) = match x.shape() {
        [l, d] => (*l, *d),
        s => {
            return Err(TensorError::ShapeMismatch {
                op: "scan",
                detail: format!("x must be 2-D, got {s:?}"),
            })
        }
    };
    let n = match a.shape() {
        [ad, n] if *ad == d => *n,
        s => {
            return Err(TensorError::ShapeMismatch {
                op: "scan",
                detail: format!("a must be ({d}, N), got {s:?}"),
            })
        }
    };
    for (name, tensor, want) in [
        ("delta", delta, [l, d]),
        ("b", b, [l, n]),
        ("c", c, [l, n]),
    ] {
        if tensor.shape() != want {
            return Err(TensorError::ShapeMismatch {
                op: "scan",
                detail: format!("{name} must be {want:?}, got {:?}", tensor.shape()),
            });
        }
    }

    let xv = x.values();
    let dv = delta.values();
    let av = a.values();
    let bv = b.values();
    let cv = c.values();

    // h and abar for every step feed the reverse sweep.
    let mut h_all = vec![0.0; l * d * n];
    let mut abar_all = vec![0.0; l * d * n];
    let mut y = vec![0.0; l * d];
    for t in 0..l {
        let (h_prev, h_rest) = if t == 0 {
            (None, &mut h_all[..])
        } else {
            let (done, rest) = h_all.split_at_mut(t * d * n);
            (Some(&done[(t - 1) * d * n..]), rest)
        };
        let h_t = &mut h_rest[..d * n];
        let abar_t = &mut abar_all[t * d * n..(t + 1) * d * n];
        for di in 0..d {
            let dt = dv[t * d + di];
            let xt = xv[t * d + di];
            let mut acc = 0.0;
            for ni in 0..n {
                let abar = (dt * av[di * n + ni]).exp();
                let prev = h_prev.map_or(0.0, |hp| hp[di * n + ni]);
                let h = abar * prev + dt * bv[t * n + ni] * xt;
                h_t[di * n + ni] = h;
                abar_t[di * n + ni] = abar;
                acc += cv[t * n + ni] * h;
            }
            y[t * d + di] = acc;
        }
    }
    drop(xv);
    drop(dv);
    drop(av);
    drop(bv);
    drop(cv);

    Tensor::from_op(
        "scan",
        vec![l, d],
        y,
        vec![x.clone(), delta.clone(), a.clone(), b.clone(), c.clone()],
        Box::new(move |gy, parents| {
            let (px, pd, pa, pb, pc) = (&parents[0], &parents[1], &parents[2], &parents[3], &parents[4]);
            let xv = px.values();
            let dv = pd.values();
            let av = pa.values();
            let bv = pb.values();
            let cv = pc.values();
            let mut dx = vec![0.0; l * d];
            let mut ddelta = vec![0.0; l * d];
            let mut da = vec![0.0; d * n];
            let mut db = vec![0.0; l * n];
            let mut dc = vec![0.0; l * n];
            let mut gh = vec![0.0; d * n];
            for t in (0..l).rev() {
                let h_t = &h_all[t * d * n..(t + 1) * d * n];
                let h_prev: Option<&[f64]> = if t == 0 {
                    None
                } else {
                    Some(&h_all[(t - 1) * d * n..t * d * n])
                };
                let abar_t = &abar_all[t * d * n..(t + 1) * d * n];
                for di in 0..d {
                    let g = gy[t * d + di];
                    let dt = dv[t * d + di];
                    let xt = xv[t * d + di];
                    let mut ddelta_acc = 0.0;
                    let mut dx_acc = 0.0;
                    for ni in 0..n {
                        let idx = di * n + ni;
                        let ghv = gh[idx] + g * cv[t * n + ni];
                        let abar = abar_t[idx];
                        let prev = h_prev.map_or(0.0, |hp| hp[idx]);
                        da[idx] += ghv * prev * abar * dt;
                        ddelta_acc += ghv * (prev * abar * av[idx] + bv[t * n + ni] * xt);
                        db[t * n + ni] += ghv * dt * xt;
                        dx_acc += ghv * dt * bv[t * n + ni];
                        dc[t * n + ni] += g * h_t[idx];
                        gh[idx] = ghv * abar;
                    }
                    ddelta[t * d + di] += ddelta_acc;
                    dx[t * d + di] += dx_acc;
                }
            }
            drop(xv);
            drop(dv);
            drop(av);
            drop(bv);
            drop(cv);
            if px.needs_grad() {
                px.accumulate_grad_owned(dx);
            }
            if pd.needs_grad() {
                pd.accumulate_grad_owned(ddelta);
            }
            if pa.needs_grad() {
                pa.accumulate_grad_owned(da);
            }
            if pb.needs_grad() {
                pb.accumulate_grad_owned(db);
            }
            if pc.needs_grad() {
                pc.accumulate_grad_owned(dc);
            }
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::rng::InitStream;
    use approx::assert_relative_eq;

    fn leaf(shape: &[usize], v: Vec<f64>) -> Tensor {
        Tensor::leaf(shape.to_vec(), v, true).unwrap()
    }

    #[test]
    fn two_step_hand_value() {
        // L=2, D=1, N=1, delta=1, a=-1, b=c=1, x=[1,1].
        let x = leaf(&[2, 1], vec![1.0, 1.0]);
        let delta = leaf(&[2, 1], vec![1.0, 1.0]);
        let a = leaf(&[1, 1], vec![-1.0]);
        let b = leaf(&[2, 1], vec![1.0, 1.0]);
        let c = leaf(&[2, 1], vec![1.0, 1.0]);
        let y = scan(&x, &delta, &a, &b, &c).unwrap();
        let e = (-1.0f64).exp();
        assert_relative_eq!(y.to_vec()[0], 1.0, epsilon = 1e-15);
        assert_relative_eq!(y.to_vec()[1], e + 1.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_delta_freezes_the_state() {
        // delta = 0 makes abar = 1 and kills the input drive, so h stays 0.
        let x = leaf(&[3, 2], vec![1.0; 6]);
        let delta = leaf(&[3, 2], vec![0.0; 6]);
        let a = leaf(&[2, 2], vec![-0.5; 4]);
        let b = leaf(&[3, 2], vec![1.0; 6]);
        let c = leaf(&[3, 2], vec![1.0; 6]);
        let y = scan(&x, &delta, &a, &b, &c).unwrap();
        assert_eq!(y.to_vec(), vec![0.0; 6]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (l, d, n) = (5, 3, 2);
        let mut s = InitStream::new(99, "scan-test");
        let xv = s.fill_normal(l * d, 0.7);
        let dv: Vec<f64> = s.fill_uniform(l * d, 0.05, 0.9);
        let av: Vec<f64> = s.fill_uniform(d * n, -1.5, -0.1);
        let bv = s.fill_normal(l * n, 0.8);
        let cv = s.fill_normal(l * n, 0.8);
        let shapes: [(&[usize], &Vec<f64>); 5] = [
            (&[l, d], &xv),
            (&[l, d], &dv),
            (&[d, n], &av),
            (&[l, n], &bv),
            (&[l, n], &cv),
        ];
        let build = |vals: &[Vec<f64>]| {
            let ts: Vec<Tensor> = vals
                .iter()
                .zip(shapes.iter())
                .map(|(v, (s, _))| leaf(s, v.clone()))
                .collect();
            (scan(&ts[0], &ts[1], &ts[2], &ts[3], &ts[4]).unwrap(), ts)
        };
        let all: Vec<Vec<f64>> = shapes.iter().map(|(_, v)| (*v).clone()).collect();
        let (y, ts) = build(&all);
        // Weighted sum keeps every entry of y in play.
        let wv: Vec<f64> = (0..l * d).map(|i| 0.3 + 0.1 * i as f64).collect();
        let w = Tensor::constant(vec![l, d], wv.clone()).unwrap();
        y.mul(&w).unwrap().sum().unwrap().backward().unwrap();
        let eps = 1e-6;
        for (which, vals) in all.iter().enumerate() {
            let analytic = ts[which].grad().unwrap();
            for probe in 0..vals.len() {
                let mut lo_in = all.clone();
                let mut hi_in = all.clone();
                lo_in[which][probe] -= eps;
                hi_in[which][probe] += eps;
                let f = |input: &[Vec<f64>]| {
                    let (y, _) = build(input);
                    y.to_vec().iter().zip(&wv).map(|(a, b)| a * b).sum::<f64>()
                };
                let num = (f(&hi_in) - f(&lo_in)) / (2.0 * eps);
                assert_relative_eq!(analytic[probe], num, epsilon = 1e-6, max_relative = 1e-5);
            }
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let x = leaf(&[4, 2], vec![0.0; 8]);
        let delta = leaf(&[4, 2], vec![0.1; 8]);
        let a = leaf(&[3, 2], vec![-1.0; 6]);
        let b = leaf(&[4, 2], vec![0.0; 8]);
        let c = leaf(&[4, 2], vec![0.0; 8]);
        assert!(matches!(
            scan(&x, &delta, &a, &b, &c),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }
}
