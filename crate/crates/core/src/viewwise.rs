//! Per-view quality features and the network that runs along the camera path.

use rand::Rng;
use rayon::prelude::*;

use crate::image_io::ViewImage;
use crate::nn::{Bound, FusedMbConv, Linear, MbConv, ParamId, ParamStore};
use crate::nss::{nss_features, NssError, NSS_DIM};
use crate::tensor::{Result, Tensor, TensorError, Var};

/// NSS features of every view, as columns of a `36 × L` matrix in the given order.
pub fn view_feature_matrix(images: &[&ViewImage]) -> std::result::Result<Tensor, NssError> {
    let feats: Vec<Vec<f64>> = images
        .par_iter()
        .map(|im| nss_features(im))
        .collect::<std::result::Result<_, _>>()?;
    Ok(columns_to_matrix(&feats))
}

/// `rows[k]` becomes column `k`.
pub fn columns_to_matrix(cols: &[Vec<f64>]) -> Tensor {
    let f = cols.first().map_or(NSS_DIM, Vec::len);
    let l = cols.len();
    Tensor::from_fn(&[f, l], |i| cols[i % l][i / l] as f32)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ViewwiseConfig {
    pub input: usize,
    /// Widths of the two repeated Fused-MBConv stages; the MBConv blocks keep the second.
    pub stage_widths: [usize; 2],
    pub output: usize,
    pub expansion: usize,
    pub se_reduction: usize,
}

impl Default for ViewwiseConfig {
    fn default() -> Self {
        Self {
            input: NSS_DIM,
            stage_widths: [64, 128],
            output: 64,
            expansion: 4,
            se_reduction: 4,
        }
    }
}

/// Path stack: two sets of two Fused-MBConv blocks each followed by a
/// stride-2 max pool, two MBConv blocks, global max pool, and a linear layer.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewwiseNet {
    pub config: ViewwiseConfig,
    /// Per-feature affine standardization applied to the raw NSS input.
    pub norm_scale: ParamId,
    pub norm_shift: ParamId,
    pub fused: [FusedMbConv; 4],
    pub mbconv: [MbConv; 2],
    pub head: Linear,
}

impl ViewwiseNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: ViewwiseConfig, rng: &mut R) -> Self {
        let [w1, w2] = cfg.stage_widths;
        let e = cfg.expansion;
        let norm_scale = store.add("view.norm.scale", Tensor::full(&[cfg.input], 1.0), false);
        let norm_shift = store.add("view.norm.shift", Tensor::zeros(&[cfg.input]), false);
        let fused = [
            FusedMbConv::new(store, "view.fused0", cfg.input, w1, e, rng),
            FusedMbConv::new(store, "view.fused1", w1, w1, e, rng),
            FusedMbConv::new(store, "view.fused2", w1, w2, e, rng),
            FusedMbConv::new(store, "view.fused3", w2, w2, e, rng),
        ];
        let mbconv = [
            MbConv::new(store, "view.mbconv0", w2, w2, e, cfg.se_reduction, rng),
            MbConv::new(store, "view.mbconv1", w2, w2, e, cfg.se_reduction, rng),
        ];
        let head = Linear::new(store, "view.head", w2, cfg.output, rng);
        Self {
            config: cfg,
            norm_scale,
            norm_shift,
            fused,
            mbconv,
            head,
        }
    }

    /// `feats` is `F × L` with `L ≥ 1`; returns a vector of length `output`.
    pub fn forward<'g>(&self, p: &Bound<'g>, feats: Var<'g>) -> Result<Var<'g>> {
        let shape = feats.shape();
        if shape.len() != 2 || shape[0] != self.config.input || shape[1] == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "viewwise",
                lhs: vec![self.config.input, 0],
                rhs: shape,
            });
        }
        let mut h = feats
            .scale_channels(p.var(self.norm_scale))?
            .add_channel_bias(p.var(self.norm_shift))?;
        for (k, block) in self.fused.iter().enumerate() {
            h = block.forward(p, h)?;
            if k % 2 == 1 {
                h = h.max_pool1d(2, 2)?;
            }
        }
        for block in &self.mbconv {
            h = block.forward(p, h)?;
        }
        self.head.forward(p, h.max_pool_global()?)?.silu()
    }

    /// Sets the input standardization from per-feature mean and standard
    /// deviation; near-constant features are only centred.
    pub fn set_normalization(&self, store: &mut ParamStore, mean: &[f64], std: &[f64]) -> Result<()> {
        let scale: Vec<f32> = std.iter().map(|&s| if s > 1e-8 { (1.0 / s) as f32 } else { 1.0 }).collect();
        let shift: Vec<f32> = mean.iter().zip(&scale).map(|(&m, &s)| -(m as f32) * s).collect();
        store.set(self.norm_scale, Tensor::from_vec(scale))?;
        store.set(self.norm_shift, Tensor::from_vec(shift))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check_store, project_to_scalar};
    use crate::tensor::{CoordSelection, Graph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ViewwiseConfig {
        ViewwiseConfig {
            input: 5,
            stage_widths: [4, 6],
            output: 3,
            expansion: 2,
            se_reduction: 2,
        }
    }

    #[test]
    fn output_dim_is_independent_of_path_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let net = ViewwiseNet::new(&mut store, ViewwiseConfig::default(), &mut rng);
        for l in [1, 7, 300] {
            let g = Graph::new();
            let p = store.bind(&g);
            let x = g.constant(Tensor::randn(&[NSS_DIM, l], 1.0, &mut rng));
            assert_eq!(net.forward(&p, x).unwrap().shape(), [64]);
        }
    }

    #[test]
    fn gradients_through_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let net = ViewwiseNet::new(&mut store, small(), &mut rng);
        let x = Tensor::randn(&[5, 5], 1.0, &mut rng);
        let err = grad_check_store(
            &store,
            &[x],
            |g, p, v| project_to_scalar(g, net.forward(p, v[0])?, 9),
            1e-3,
            CoordSelection::Sample { per_tensor: 12, seed: 2 },
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn columns_follow_view_order() {
        let m = columns_to_matrix(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]);
        assert_eq!(m.shape(), [2, 3]);
        assert_eq!(m.data(), &[1.0, 3.0, 5.0, 2.0, 4.0, 6.0]);
    }

    #[test]
    fn rejects_wrong_feature_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let net = ViewwiseNet::new(&mut store, small(), &mut rng);
        let g = Graph::new();
        let p = store.bind(&g);
        assert!(net.forward(&p, g.constant(Tensor::zeros(&[4, 3]))).is_err());
    }
}
