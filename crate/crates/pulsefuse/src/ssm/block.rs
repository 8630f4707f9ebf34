//! One branch stage: temporal-difference conv, gated scan, spatial pooling.

use super::{to_feature_map, to_sequence, MambaLayer, TemporalDiffConv};
use crate::nn::{maxpool_spatial2, ParamStore, Tensor, TensorError};

/// TDC -> flatten -> gated SSM -> un-flatten -> 2x2 maxpool. Three chained
/// blocks take the branch input spatially to one eighth.
pub struct BranchBlock {
    pub tdc: TemporalDiffConv,
    pub mamba: MambaLayer,
}

impl BranchBlock {
    pub fn new(
        store: &mut ParamStore,
        seed: u64,
        prefix: &str,
        channels: usize,
        d_state: usize,
        theta: f64,
    ) -> Result<Self, TensorError> {
        Ok(Self {
            tdc: TemporalDiffConv::new(
                store,
                seed,
                &format!("{prefix}.tdc"),
                channels,
                channels,
                theta,
            )?,
            mamba: MambaLayer::new(store, seed, &format!("{prefix}.mamba"), channels, 1, d_state)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor, TensorError> {
        let f = self.tdc.forward(x)?;
        let s = f.shape().to_vec();
        let seq = to_sequence(&f)?;
        let m = self.mamba.forward(&seq)?;
        let back = to_feature_map(&m, s[1], s[2], s[3])?;
        maxpool_spatial2(&back)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::splitmix64;

    fn rand_vals(n: usize, key: u64) -> Vec<f64> {
        (0..n)
            .map(|i| (splitmix64(key + i as u64) >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
            .collect()
    }

    #[test]
    fn halves_spatial_dims() {
        let mut store = ParamStore::new();
        let b = BranchBlock::new(&mut store, 4, "b0", 8, 8, 0.5).unwrap();
        let x = Tensor::leaf(vec![8, 4, 16, 16], rand_vals(8 * 4 * 256, 3), false).unwrap();
        let out = b.forward(&x).unwrap();
        assert_eq!(out.shape(), &[8, 4, 8, 8]);
    }

    #[test]
    fn three_blocks_reach_one_eighth() {
        let mut store = ParamStore::new();
        let blocks: Vec<BranchBlock> = (0..3)
            .map(|i| BranchBlock::new(&mut store, 4, &format!("b{i}"), 4, 4, 0.5).unwrap())
            .collect();
        let mut cur = Tensor::leaf(vec![4, 3, 16, 16], rand_vals(4 * 3 * 256, 4), false).unwrap();
        for b in &blocks {
            cur = b.forward(&cur).unwrap();
        }
        assert_eq!(cur.shape(), &[4, 3, 2, 2]);
    }

    #[test]
    fn odd_spatial_dims_are_rejected() {
        let mut store = ParamStore::new();
        let b = BranchBlock::new(&mut store, 4, "b0", 2, 4, 0.5).unwrap();
        let x = Tensor::leaf(vec![2, 3, 5, 6], rand_vals(2 * 3 * 30, 5), false).unwrap();
        assert!(matches!(
            b.forward(&x),
            Err(TensorError::OddSpatialDims { .. })
        ));
    }
}
