//! Per-point distillation of PNSG tensors and order-free aggregation over points.

use rand::Rng;

use crate::nn::{Bound, Conv1d, Conv3d, Linear, ParamId, ParamStore};
use crate::pnsg::{PnsgRecord, PnsgTensor};
use crate::tensor::{conv1d_output_len, Graph, Result, Tensor, TensorError, Var};

/// Network input for one point: the masked PNSG volume with RGB moved to the
/// channel axis (`3 × 2 × b × L`) and the point position normalized to the
/// scene's sampled bounding box.
#[derive(Clone, Debug, PartialEq)]
pub struct PointInput {
    pub volume: Tensor,
    pub xyz: [f32; 3],
}

/// `[2, b, L, 3]` → `[3, 2, b, L]` with masked bins zeroed.
pub fn channel_first(t: &PnsgTensor) -> Tensor {
    let (b, l) = (t.bins(), t.resample());
    let src = t.values.data();
    let cells = 2 * b * l;
    Tensor::from_fn(&[3, 2, b, l], |i| {
        let (c, cell) = (i / cells, i % cells);
        if t.mask[cell / l] == 0 {
            0.0
        } else {
            src[cell * 3 + c]
        }
    })
}

/// Centre and uniformly scale positions so the bounding box fits `[−1, 1]³`.
/// A single point (or coincident points) maps to the origin.
pub fn normalize_positions(xyz: &[[f64; 3]]) -> Vec<[f32; 3]> {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in xyz {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let half = (0..3).map(|a| 0.5 * (hi[a] - lo[a])).fold(0.0, f64::max);
    xyz.iter()
        .map(|p| {
            let mut q = [0f32; 3];
            for a in 0..3 {
                let c = 0.5 * (lo[a] + hi[a]);
                q[a] = if half > 0.0 { ((p[a] - c) / half).clamp(-1.0, 1.0) as f32 } else { 0.0 };
            }
            q
        })
        .collect()
}

pub fn point_inputs(records: &[PnsgRecord]) -> Vec<PointInput> {
    let xyz: Vec<[f64; 3]> = records.iter().map(|r| r.xyz).collect();
    records
        .iter()
        .zip(normalize_positions(&xyz))
        .map(|(r, xyz)| PointInput {
            volume: channel_first(&r.tensor),
            xyz,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PointwiseConfig {
    pub bins: usize,
    pub resample: usize,
    pub conv_channels: [usize; 4],
    pub point_dim: usize,
    pub point_hidden: usize,
    pub shared_width: usize,
    pub output: usize,
}

impl Default for PointwiseConfig {
    fn default() -> Self {
        Self {
            bins: crate::pnsg::DEFAULT_BINS,
            resample: crate::pnsg::DEFAULT_RESAMPLE,
            conv_channels: [16, 32, 32, 32],
            point_dim: 64,
            point_hidden: 128,
            shared_width: 128,
            output: 64,
        }
    }
}

/// Four 3-D convolutions and an MLP per point, then a shared per-point layer
/// on `[embedding, xyz]`, a channelwise max over points, and a linear layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PointwiseNet {
    pub config: PointwiseConfig,
    /// Per-channel scale applied to the PNSG volume.
    pub norm_scale: ParamId,
    pub convs: [Conv3d; 4],
    pub mlp: [Linear; 2],
    pub shared: Conv1d,
    pub head: Linear,
}

impl PointwiseNet {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, cfg: PointwiseConfig, rng: &mut R) -> Self {
        let ch = cfg.conv_channels;
        let norm_scale = store.add("point.norm.scale", Tensor::full(&[3], 1.0), false);
        let pad = [1, 1, 1];
        let convs = [
            Conv3d::new(store, "point.conv0", 3, ch[0], 3, [1, 1, 1], pad, rng),
            Conv3d::new(store, "point.conv1", ch[0], ch[1], 3, [1, 1, 2], pad, rng),
            Conv3d::new(store, "point.conv2", ch[1], ch[2], 3, [1, 1, 1], pad, rng),
            Conv3d::new(store, "point.conv3", ch[2], ch[3], 3, [1, 1, 1], pad, rng),
        ];
        let flat = ch[3] * 2 * cfg.bins * Self::reduced_len(cfg.resample);
        let mlp = [
            Linear::new(store, "point.mlp0", flat, cfg.point_hidden, rng),
            Linear::new(store, "point.mlp1", cfg.point_hidden, cfg.point_dim, rng),
        ];
        let shared = Conv1d::new(store, "point.shared", cfg.point_dim + 3, cfg.shared_width, 1, 0, 1, rng);
        let head = Linear::new(store, "point.head", cfg.shared_width, cfg.output, rng);
        Self {
            config: cfg,
            norm_scale,
            convs,
            mlp,
            shared,
            head,
        }
    }

    /// Position-axis length after the single stride-2 convolution.
    fn reduced_len(l: usize) -> usize {
        conv1d_output_len(l, 3, 2, 1, "pointwise").expect("kernel fits padded length")
    }

    /// Embedding of one `3 × 2 × b × L` volume.
    pub fn distill<'g>(&self, p: &Bound<'g>, volume: Var<'g>) -> Result<Var<'g>> {
        let want = [3, 2, self.config.bins, self.config.resample];
        if volume.shape() != want {
            return Err(TensorError::ShapeMismatch {
                op: "distill_point",
                lhs: want.to_vec(),
                rhs: volume.shape(),
            });
        }
        let mut h = volume.scale_channels(p.var(self.norm_scale))?;
        for conv in &self.convs {
            h = conv.forward(p, h)?.silu()?;
        }
        let h = self.mlp[0].forward(p, h.flatten()?)?.silu()?;
        self.mlp[1].forward(p, h)
    }

    /// Max over points of the shared layer applied to `[embedding, xyz]`.
    pub fn aggregate<'g>(&self, g: &'g Graph, p: &Bound<'g>, points: &[(Var<'g>, [f32; 3])]) -> Result<Var<'g>> {
        if points.is_empty() {
            return Err(TensorError::EmptyInput { op: "aggregate_points" });
        }
        let cols = points
            .iter()
            .map(|(e, xyz)| g.concat(&[*e, g.constant(Tensor::from_vec(xyz.to_vec()))]))
            .collect::<Result<Vec<_>>>()?;
        let h = self.shared.forward(p, g.stack_columns(&cols)?)?.silu()?;
        self.head.forward(p, h.max_pool_global()?)?.silu()
    }

    pub fn forward<'g>(&self, g: &'g Graph, p: &Bound<'g>, points: &[PointInput]) -> Result<Var<'g>> {
        let embedded = points
            .iter()
            .map(|pt| Ok((self.distill(p, g.constant(pt.volume.clone()))?, pt.xyz)))
            .collect::<Result<Vec<_>>>()?;
        self.aggregate(g, p, &embedded)
    }

    pub fn set_normalization(&self, store: &mut ParamStore, rms: &[f64; 3]) -> Result<()> {
        let s = rms.map(|r| if r > 1e-12 { (1.0 / r) as f32 } else { 1.0 });
        store.set(self.norm_scale, Tensor::from_vec(s.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check_store, project_to_scalar};
    use crate::tensor::CoordSelection;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> PointwiseConfig {
        PointwiseConfig {
            bins: 2,
            resample: 4,
            conv_channels: [2, 3, 3, 2],
            point_dim: 4,
            point_hidden: 5,
            shared_width: 6,
            output: 3,
        }
    }

    fn random_points(n: usize, cfg: &PointwiseConfig, rng: &mut ChaCha8Rng) -> Vec<PointInput> {
        (0..n)
            .map(|_| PointInput {
                volume: Tensor::randn(&[3, 2, cfg.bins, cfg.resample], 1.0, rng),
                xyz: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            })
            .collect()
    }

    #[test]
    fn channel_first_moves_rgb_and_applies_mask() {
        let values = Tensor::from_fn(&[2, 1, 2, 3], |i| i as f32);
        let t = PnsgTensor {
            values,
            mask: vec![1, 0],
        };
        let v = channel_first(&t);
        assert_eq!(v.shape(), [3, 2, 1, 2]);
        // channel c, axis 0, position k ← values[0, 0, k, c] = 3k + c
        assert_eq!(&v.data()[0..2], &[0.0, 3.0]);
        assert_eq!(&v.data()[4..6], &[1.0, 4.0]);
        assert_eq!(&v.data()[8..10], &[2.0, 5.0]);
        // axis 1 is masked
        assert!([2, 3, 6, 7, 10, 11].iter().all(|&i| v.data()[i] == 0.0));
    }

    #[test]
    fn positions_fit_unit_box() {
        let q = normalize_positions(&[[0.0, 0.0, 0.0], [2.0, 1.0, 0.0], [1.0, 0.5, 4.0]]);
        assert!(q.iter().flatten().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(q[2][2], 1.0);
        assert_eq!(normalize_positions(&[[3.0, 3.0, 3.0]]), vec![[0.0; 3]]);
    }

    #[test]
    fn aggregation_is_permutation_and_duplication_invariant() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let net = PointwiseNet::new(&mut store, cfg, &mut rng);
        let pts = random_points(6, &cfg, &mut rng);
        let run = |pts: &[PointInput]| {
            let g = Graph::new();
            let p = store.bind(&g);
            net.forward(&g, &p, pts).unwrap().value().data().to_vec()
        };
        let base = run(&pts);
        let mut perm = pts.clone();
        perm.reverse();
        perm.swap(0, 3);
        assert_eq!(run(&perm), base);
        let mut dup = pts.clone();
        dup.push(pts[2].clone());
        dup.insert(0, pts[4].clone());
        assert_eq!(run(&dup), base);
    }

    #[test]
    fn single_point_equals_direct_branch() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::new();
        let net = PointwiseNet::new(&mut store, cfg, &mut rng);
        let pt = random_points(1, &cfg, &mut rng).remove(0);
        let g = Graph::new();
        let p = store.bind(&g);
        let agg = net.forward(&g, &p, std::slice::from_ref(&pt)).unwrap().value().data().to_vec();
        // direct: shared layer as a matrix product on the single column, no pooling
        let e = net.distill(&p, g.constant(pt.volume.clone())).unwrap();
        let col = g.concat(&[e, g.constant(Tensor::from_vec(pt.xyz.to_vec()))]).unwrap();
        let w = store.get(net.shared.weight);
        let w2 = g.constant(w.reshape(&[w.shape()[0], w.shape()[1]]).unwrap());
        let h = w2
            .matmul(col.reshape(&[cfg.point_dim + 3, 1]).unwrap())
            .unwrap()
            .reshape(&[cfg.shared_width])
            .unwrap()
            .add(p.var(net.shared.bias))
            .unwrap()
            .silu()
            .unwrap();
        let direct = net.head.forward(&p, h).unwrap().silu().unwrap();
        for (a, b) in agg.iter().zip(direct.value().data()) {
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} {b}");
        }
    }

    #[test]
    fn zero_volume_gives_deterministic_embedding() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let net = PointwiseNet::new(&mut store, cfg, &mut rng);
        let run = || {
            let g = Graph::new();
            let p = store.bind(&g);
            let e = net.distill(&p, g.constant(Tensor::zeros(&[3, 2, 2, 4]))).unwrap();
            e.value().data().to_vec()
        };
        let a = run();
        assert_eq!(a.len(), cfg.point_dim);
        assert_eq!(a, run());
    }

    #[test]
    fn gradients_through_pointwise_branch() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let net = PointwiseNet::new(&mut store, cfg, &mut rng);
        let pts = random_points(3, &cfg, &mut rng);
        let vols: Vec<Tensor> = pts.iter().map(|p| p.volume.clone()).collect();
        let err = grad_check_store(
            &store,
            &vols,
            |g, p, v| {
                let emb = v
                    .iter()
                    .zip(&pts)
                    .map(|(&vol, pt)| Ok((net.distill(p, vol)?, pt.xyz)))
                    .collect::<Result<Vec<_>>>()?;
                project_to_scalar(g, net.aggregate(g, p, &emb)?, 4)
            },
            1e-3,
            CoordSelection::Sample { per_tensor: 10, seed: 1 },
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn rejects_empty_and_misshapen_inputs() {
        let cfg = small();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let net = PointwiseNet::new(&mut store, cfg, &mut rng);
        let g = Graph::new();
        let p = store.bind(&g);
        assert!(net.forward(&g, &p, &[]).is_err());
        assert!(net.distill(&p, g.constant(Tensor::zeros(&[3, 2, 2, 5]))).is_err());
    }
}
