//! Selective scan parameters and the single-view scan path.

use super::{param_full, param_normal, param_with_values, softplus_inv};
use crate::nn::{scan, InitStream, ParamStore, Tensor, TensorError};

/// Input-dependent state-space layer of width D with N states per channel.
///
/// The state matrix is stored as raw values `a_raw` and materialized as
/// A = -softplus(a_raw), which keeps every discretized transition
/// exp(delta * A) inside (0, 1] for any positive delta.
pub struct SsmCore {
    pub(crate) a_raw: Tensor,
    pub(crate) delta_w: Tensor,
    pub(crate) delta_b: Tensor,
    pub(crate) b_w: Tensor,
    pub(crate) c_w: Tensor,
    pub(crate) d_skip: Option<Tensor>,
    pub(crate) d: usize,
    pub(crate) n: usize,
}

impl SsmCore {
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        prefix: &str,
        d: usize,
        n: usize,
        with_skip: bool,
    ) -> Result<Self, TensorError> {
        // One shared state ladder A_n = -(n+1) per channel row.
        let a_vals: Vec<f64> = (0..d * n)
            .map(|i| softplus_inv((i % n + 1) as f64))
            .collect();
        let a_raw = param_with_values(store, &format!("{prefix}.a_raw"), vec![d, n], a_vals)?;
        let sd = (1.0 / d as f64).sqrt();
        let delta_w = param_normal(store, seed, &format!("{prefix}.delta_w"), vec![d, d], sd)?;
        // Timescale bias drawn log-uniform in [1e-3, 1e-1] pre-softplus.
        let mut stream = InitStream::new(seed, &format!("{prefix}.delta_b"));
        let db_vals: Vec<f64> = (0..d)
            .map(|_| {
                let dt = stream.uniform((1e-3f64).ln(), (1e-1f64).ln()).exp();
                softplus_inv(dt)
            })
            .collect();
        let delta_b = param_with_values(store, &format!("{prefix}.delta_b"), vec![d], db_vals)?;
        let b_w = param_normal(store, seed, &format!("{prefix}.b_w"), vec![d, n], sd)?;
        let c_w = param_normal(store, seed, &format!("{prefix}.c_w"), vec![d, n], sd)?;
        let d_skip = if with_skip {
            Some(param_full(store, &format!("{prefix}.d_skip"), vec![d], 1.0)?)
        } else {
            None
        };
        Ok(Self {
            a_raw,
            delta_w,
            delta_b,
            b_w,
            c_w,
            d_skip,
            d,
            n,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.d, self.n)
    }

    pub(crate) fn a_neg(&self) -> Result<Tensor, TensorError> {
        self.a_raw.softplus()?.neg()
    }

    pub(crate) fn delta_of(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        x.matmul(&self.delta_w)?.add(&self.delta_b)?.softplus()
    }

    pub(crate) fn b_of(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        x.matmul(&self.b_w)
    }

    pub(crate) fn c_of(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        x.matmul(&self.c_w)
    }

    pub(crate) fn apply_skip(&self, y: Tensor, x: &Tensor) -> Result<Tensor, TensorError> {
        match &self.d_skip {
            Some(d) => y.add(&x.mul(d)?),
            None => Ok(y),
        }
    }

    /// y_t = C_t . h_t + d_skip * x_t over the input-conditioned recurrence
    /// h_t = exp(delta_t A) h_{t-1} + delta_t B_t x_t.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let delta = self.delta_of(x)?;
        let b = self.b_of(x)?;
        let c = self.c_of(x)?;
        let y = scan(x, &delta, &self.a_neg()?, &b, &c)?;
        self.apply_skip(y, x)
    }
}
