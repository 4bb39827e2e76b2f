//! Parameter storage and the layers used by the quality model.

use rand::Rng;

use crate::tensor::{grad_check_many, CoordSelection, Graph, Result, Tensor, TensorError, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named tensors in insertion order. Non-trainable entries are buffers
/// (normalization statistics) that are saved with the model but never
/// updated by the optimizer.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    trainable: Vec<bool>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor, trainable: bool) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        self.trainable.push(trainable);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        self.trainable[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Number of trainable scalars.
    pub fn trainable_count(&self) -> usize {
        self.ids()
            .filter(|&id| self.is_trainable(id))
            .map(|id| self.get(id).numel())
            .sum()
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, id: ParamId, t: Tensor) -> Result<()> {
        if t.shape() != self.tensors[id.0].shape() {
            return Err(TensorError::ShapeMismatch {
                op: "ParamStore::set",
                lhs: self.tensors[id.0].shape().to_vec(),
                rhs: t.shape().to_vec(),
            });
        }
        self.tensors[id.0] = t;
        Ok(())
    }

    /// Puts every tensor on `g`: trainable ones as gradient leaves, buffers as constants.
    pub fn bind<'g>(&self, g: &'g Graph) -> Bound<'g> {
        let vars = self
            .tensors
            .iter()
            .zip(&self.trainable)
            .map(|(t, &tr)| if tr { g.param(t.clone()) } else { g.constant(t.clone()) })
            .collect();
        Bound { vars }
    }
}

/// A [`ParamStore`] placed on a graph.
#[derive(Clone, Debug)]
pub struct Bound<'g> {
    vars: Vec<Var<'g>>,
}

impl<'g> Bound<'g> {
    pub fn from_vars(vars: Vec<Var<'g>>) -> Self {
        Self { vars }
    }

    pub fn var(&self, id: ParamId) -> Var<'g> {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var<'g>] {
        &self.vars
    }
}

fn init_weight<R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor {
    Tensor::randn(shape, (1.0 / fan_in.max(1) as f32).sqrt(), rng)
}

/// `y = x·W + b` on a vector, `W` is `[in × out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut R) -> Self {
        Self {
            weight: store.add(format!("{name}.weight"), init_weight(&[input, output], input, rng), true),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[output]), true),
            input,
            output,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        x.reshape(&[1, self.input])?
            .matmul(p.var(self.weight))?
            .reshape(&[self.output])?
            .add(p.var(self.bias))
    }
}

/// 1-D convolution with bias over a `C×L` sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        padding: usize,
        groups: usize,
        rng: &mut R,
    ) -> Self {
        let per_group = input / groups;
        Self {
            weight: store.add(
                format!("{name}.weight"),
                init_weight(&[output, per_group, kernel], per_group * kernel, rng),
                true,
            ),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[output]), true),
            stride: 1,
            padding,
            groups,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        x.conv1d(p.var(self.weight), self.stride, self.padding, self.groups)?
            .add_channel_bias(p.var(self.bias))
    }
}

/// 3-D convolution with bias over a `C×D×H×W` volume, cubic kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv3d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
}

impl Conv3d {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        kernel: usize,
        stride: [usize; 3],
        padding: [usize; 3],
        rng: &mut R,
    ) -> Self {
        let fan_in = input * kernel * kernel * kernel;
        Self {
            weight: store.add(
                format!("{name}.weight"),
                init_weight(&[output, input, kernel, kernel, kernel], fan_in, rng),
                true,
            ),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[output]), true),
            stride,
            padding,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        x.conv3d(p.var(self.weight), self.stride, self.padding)?
            .add_channel_bias(p.var(self.bias))
    }
}

/// Channel gating: mean over the sequence, bottleneck MLP, sigmoid gates.
#[derive(Clone, Debug, PartialEq)]
pub struct SqueezeExcite {
    pub reduce: Linear,
    pub expand: Linear,
}

impl SqueezeExcite {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, channels: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            reduce: Linear::new(store, &format!("{name}.reduce"), channels, hidden, rng),
            expand: Linear::new(store, &format!("{name}.expand"), hidden, channels, rng),
        }
    }

    pub fn gates<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let s = x.mean_pool_global()?;
        let h = self.reduce.forward(p, s)?.silu()?;
        self.expand.forward(p, h)?.sigmoid()
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let gates = self.gates(p, x)?;
        x.scale_channels(gates)
    }
}

/// Kernel-3 expansion convolution then kernel-1 projection, with a residual
/// connection when input and output widths agree.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedMbConv {
    pub expand: Conv1d,
    pub project: Conv1d,
    pub residual: bool,
}

impl FusedMbConv {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        ratio: usize,
        rng: &mut R,
    ) -> Self {
        let mid = input * ratio;
        Self {
            expand: Conv1d::new(store, &format!("{name}.expand"), input, mid, 3, 1, 1, rng),
            project: Conv1d::new(store, &format!("{name}.project"), mid, output, 1, 0, 1, rng),
            residual: input == output,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let h = self.expand.forward(p, x)?.silu()?;
        let y = self.project.forward(p, h)?;
        if self.residual {
            y.add(x)
        } else {
            Ok(y)
        }
    }
}

/// Kernel-1 expansion, depthwise kernel-3 convolution, squeeze-excitation,
/// kernel-1 projection, residual when widths agree.
#[derive(Clone, Debug, PartialEq)]
pub struct MbConv {
    pub expand: Conv1d,
    pub depthwise: Conv1d,
    pub se: SqueezeExcite,
    pub project: Conv1d,
    pub residual: bool,
}

impl MbConv {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        ratio: usize,
        se_reduction: usize,
        rng: &mut R,
    ) -> Self {
        let mid = input * ratio;
        Self {
            expand: Conv1d::new(store, &format!("{name}.expand"), input, mid, 1, 0, 1, rng),
            depthwise: Conv1d::new(store, &format!("{name}.depthwise"), mid, mid, 3, 1, mid, rng),
            se: SqueezeExcite::new(store, &format!("{name}.se"), mid, (input / se_reduction).max(1), rng),
            project: Conv1d::new(store, &format!("{name}.project"), mid, output, 1, 0, 1, rng),
            residual: input == output,
        }
    }

    pub fn forward<'g>(&self, p: &Bound<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let h = self.expand.forward(p, x)?.silu()?;
        let h = self.depthwise.forward(p, h)?.silu()?;
        let h = self.se.forward(p, h)?;
        let y = self.project.forward(p, h)?;
        if self.residual {
            y.add(x)
        } else {
            Ok(y)
        }
    }
}

/// Central-difference check of a function of every tensor in `store` plus
/// extra `inputs`. The closure receives the bound store and the input vars.
pub fn grad_check_store<F>(store: &ParamStore, inputs: &[Tensor], f: F, eps: f32, coords: CoordSelection) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &Bound<'g>, &[Var<'g>]) -> Result<Var<'g>>,
{
    let n = store.len();
    let mut all = store.tensors().to_vec();
    all.extend_from_slice(inputs);
    grad_check_many(
        |g, vars| {
            let bound = Bound::from_vars(vars[..n].to_vec());
            f(g, &bound, &vars[n..])
        },
        &all,
        eps,
        coords,
    )
}

/// Fixed random projection of `y` to a scalar, so every output coordinate
/// contributes a distinct gradient.
pub fn project_to_scalar<'g>(g: &'g Graph, y: Var<'g>, seed: u64) -> Result<Var<'g>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::uniform(&y.shape(), -1.0, 1.0, &mut rng);
    y.mul(g.constant(w))?.sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-3;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    #[test]
    fn linear_matches_manual_product() {
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "l", 3, 2, &mut rng());
        store.set(lin.weight, Tensor::new(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap()).unwrap();
        store.set(lin.bias, Tensor::from_vec(vec![0.5, -0.5])).unwrap();
        let g = Graph::new();
        let p = store.bind(&g);
        let y = lin.forward(&p, g.constant(Tensor::from_vec(vec![1., 0., -1.]))).unwrap();
        assert_eq!(y.value().data(), &[-3.5, -4.5]);
    }

    #[test]
    fn store_bookkeeping() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::zeros(&[2, 3]), true);
        let b = store.add("b", Tensor::zeros(&[4]), false);
        assert_eq!(store.find("b"), Some(b));
        assert_eq!(store.trainable_count(), 6);
        assert!(store.set(a, Tensor::zeros(&[3, 2])).is_err());
        let g = Graph::new();
        let p = store.bind(&g);
        let loss = p.var(a).sum().unwrap().add(p.var(b).sum().unwrap()).unwrap();
        let grads = g.backward(loss).unwrap();
        assert!(grads.get(p.var(b)).is_none());
        assert_eq!(grads.wrt(p.var(a)).data(), &[1.0; 6]);
    }

    #[test]
    fn se_gates_in_open_unit_interval_and_half_at_zero_logits() {
        let mut store = ParamStore::new();
        let se = SqueezeExcite::new(&mut store, "se", 8, 2, &mut rng());
        let x = Tensor::randn(&[8, 5], 1.0, &mut rng());
        let g = Graph::new();
        let p = store.bind(&g);
        let gates = se.gates(&p, g.constant(x.clone())).unwrap();
        assert!(gates.value().data().iter().all(|&v| v > 0.0 && v < 1.0));

        // zero logits: gates are exactly 0.5, so scaling by 2 restores the input
        store.set(se.expand.weight, Tensor::zeros(&[2, 8])).unwrap();
        let g = Graph::new();
        let p = store.bind(&g);
        let xv = g.constant(x.clone());
        let gates = se.gates(&p, xv).unwrap();
        assert!(gates.value().data().iter().all(|&v| v == 0.5));
        let y = se.forward(&p, xv).unwrap().scale(2.0).unwrap();
        assert_eq!(y.value().data(), x.data());
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        let mut r = rng();
        let coords = CoordSelection::Sample { per_tensor: 24, seed: 3 };

        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "lin", 6, 4, &mut r);
        let x = Tensor::randn(&[6], 1.0, &mut r);
        let err = grad_check_store(&store, &[x], |g, p, v| project_to_scalar(g, lin.forward(p, v[0])?.silu()?, 1), 1e-3, coords).unwrap();
        assert!(err < TOL, "linear {err}");

        let mut store = ParamStore::new();
        let conv = Conv3d::new(&mut store, "c3", 2, 3, 3, [1, 1, 2], [1, 1, 1], &mut r);
        let x = Tensor::randn(&[2, 2, 3, 4], 1.0, &mut r);
        let err = grad_check_store(&store, &[x], |g, p, v| project_to_scalar(g, conv.forward(p, v[0])?, 2), 1e-3, coords).unwrap();
        assert!(err < TOL, "conv3d {err}");

        let mut store = ParamStore::new();
        let se = SqueezeExcite::new(&mut store, "se", 6, 2, &mut r);
        let x = Tensor::randn(&[6, 5], 1.0, &mut r);
        let err = grad_check_store(&store, &[x], |g, p, v| project_to_scalar(g, se.forward(p, v[0])?, 3), 1e-3, coords).unwrap();
        assert!(err < TOL, "se {err}");

        let mut store = ParamStore::new();
        let fused = FusedMbConv::new(&mut store, "f", 4, 4, 2, &mut r);
        let x = Tensor::randn(&[4, 5], 1.0, &mut r);
        let err = grad_check_store(&store, &[x], |g, p, v| project_to_scalar(g, fused.forward(p, v[0])?, 4), 1e-3, coords).unwrap();
        assert!(err < TOL, "fused {err}");

        let mut store = ParamStore::new();
        let mb = MbConv::new(&mut store, "m", 4, 4, 2, 2, &mut r);
        let x = Tensor::randn(&[4, 5], 1.0, &mut r);
        let err = grad_check_store(&store, &[x], |g, p, v| project_to_scalar(g, mb.forward(p, v[0])?, 5), 1e-3, coords).unwrap();
        assert!(err < TOL, "mbconv {err}");
    }

    #[test]
    fn residual_only_when_widths_match() {
        let mut store = ParamStore::new();
        let a = FusedMbConv::new(&mut store, "a", 4, 4, 2, &mut rng());
        let b = FusedMbConv::new(&mut store, "b", 4, 8, 2, &mut rng());
        assert!(a.residual && !b.residual);
        let g = Graph::new();
        let p = store.bind(&g);
        let y = b.forward(&p, g.constant(Tensor::zeros(&[4, 3]))).unwrap();
        assert_eq!(y.shape(), [8, 3]);
    }
}
