//! Central-difference verification of backward passes.

use super::rng::{splitmix64, InitStream};
use super::tensor::{Tensor, TensorError};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub name: String,
    /// Coordinates actually probed.
    pub n_coords: usize,
    /// max over coords of |analytic - numeric| / max(1, |analytic|).
    pub max_err: f64,
    /// (input index, coordinate, analytic, numeric) at the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.n_coords > 0 && self.max_err <= tol
    }
}

/// Compares analytic gradients of `f` against central differences.
///
/// `inputs` must be gradient-tracking leaves; `f` is re-evaluated with
/// perturbed leaf values, so it must read the leaves fresh on every call.
/// `sample` limits the probe to a pseudo-random coordinate subset.
pub fn grad_check<F>(
    name: &str,
    f: F,
    inputs: &[Tensor],
    eps: f64,
    sample: Option<(usize, u64)>,
) -> Result<GradCheckReport, TensorError>
where
    F: Fn(&[Tensor]) -> Result<Tensor, TensorError>,
{
    if eps <= 0.0 {
        return Err(TensorError::InvalidArg("grad_check eps must be positive"));
    }
    for t in inputs {
        t.zero_grad();
    }
    let loss = f(inputs)?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = inputs
        .iter()
        .map(|t| {
            if t.needs_grad() {
                t.grad().unwrap_or_else(|| vec![0.0; t.len()])
            } else {
                Vec::new()
            }
        })
        .collect();

    let mut coords: Vec<(usize, usize)> = Vec::new();
    for (i, t) in inputs.iter().enumerate() {
        if t.needs_grad() {
            coords.extend((0..t.len()).map(|j| (i, j)));
        }
    }
    if let Some((k, seed)) = sample {
        if coords.len() > k {
            let total = coords.len();
            for i in 0..k {
                let j = i + (splitmix64(seed.wrapping_add(i as u64)) as usize) % (total - i);
                coords.swap(i, j);
            }
            coords.truncate(k);
        }
    }

    let mut max_err = 0.0f64;
    let mut worst = None;
    for &(i, j) in &coords {
        let orig = inputs[i].values()[j];
        let mut vals = inputs[i].to_vec();
        vals[j] = orig + eps;
        inputs[i].set_values(&vals)?;
        let hi = f(inputs)?.item()?;
        vals[j] = orig - eps;
        inputs[i].set_values(&vals)?;
        let lo = f(inputs)?.item()?;
        vals[j] = orig;
        inputs[i].set_values(&vals)?;
        let numeric = (hi - lo) / (2.0 * eps);
        let a = analytic[i][j];
        let err = (a - numeric).abs() / 1.0f64.max(a.abs());
        if err > max_err {
            max_err = err;
            worst = Some((i, j, a, numeric));
        }
    }
    Ok(GradCheckReport { name: name.to_string(), n_coords: coords.len(), max_err, worst })
}

/// Random tensors with every pairwise value gap above `min_gap`, so that
/// order-dependent ops (max pooling) stay differentiable at the probe.
pub fn separated_values(stream: &mut InitStream, n: usize, min_gap: f64) -> Vec<f64> {
    loop {
        let vals = stream.fill_normal(n, 1.0);
        let mut sorted = vals.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.windows(2).all(|w| w[1] - w[0] > min_gap) {
            return vals;
        }
    }
}
