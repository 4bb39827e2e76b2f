use std::cell::RefCell;
use std::rc::Rc;

use super::conv::{Conv1dGeometry, Conv3dGeometry};
use super::{matmul_raw, transpose_raw, Result, Tensor, TensorError};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Silu,
}

impl Activation {
    #[inline]
    fn sigmoid(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 / (1.0 + (-x).exp())
        } else {
            let e = x.exp();
            e / (1.0 + e)
        }
    }

    pub fn apply(self, x: f32) -> f32 {
        let x = x as f64;
        let y = match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => Self::sigmoid(x),
            Activation::Silu => x * Self::sigmoid(x),
        };
        y as f32
    }

    pub fn derivative(self, x: f32) -> f32 {
        let x = x as f64;
        let d = match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = Self::sigmoid(x);
                s * (1.0 - s)
            }
            Activation::Silu => {
                let s = Self::sigmoid(x);
                s + x * s * (1.0 - s)
            }
        };
        d as f32
    }
}

/// Kind of a recorded operation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Leaf,
    Add,
    Sub,
    Mul,
    Scale,
    Matmul,
    Transpose,
    Reshape,
    Conv1d,
    Conv3d,
    Activation(Activation),
    MaxPoolGlobal,
    MaxPool1d,
    MeanPoolGlobal,
    ScaleChannels,
    AddChannelBias,
    Concat,
    StackColumns,
    Sum,
    Mse,
}

type Backward = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    op: OpKind,
    inputs: Vec<NodeId>,
    value: Rc<Tensor>,
    requires_grad: bool,
    backward: Option<Backward>,
}

/// Append-only tape of operations. Node ids are a topological order.
#[derive(Default)]
pub struct Graph {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy)]
pub struct Var<'g> {
    graph: &'g Graph,
    id: NodeId,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.shape())
            .finish()
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Tensor> {
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    /// Gradient with respect to `var`, zeros when it did not influence the output.
    pub fn wrt(&self, var: Var<'_>) -> Tensor {
        self.get(var)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(var.value().shape()))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(op, input ids, output id)` for every recorded node.
    pub fn records(&self) -> Vec<(OpKind, Vec<NodeId>, NodeId)> {
        self.nodes
            .borrow()
            .iter()
            .enumerate()
            .map(|(id, n)| (n.op, n.inputs.clone(), id))
            .collect()
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, t: Tensor) -> Var<'_> {
        self.leaf(t, true)
    }

    /// Leaf that does not receive a gradient.
    pub fn constant(&self, t: Tensor) -> Var<'_> {
        self.leaf(t, false)
    }

    fn leaf(&self, t: Tensor, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            op: OpKind::Leaf,
            inputs: Vec::new(),
            value: Rc::new(t),
            requires_grad,
            backward: None,
        });
        Var {
            graph: self,
            id: nodes.len() - 1,
        }
    }

    fn push(
        &self,
        op: OpKind,
        inputs: &[Var<'_>],
        value: Tensor,
        op_name: &'static str,
        backward: Backward,
    ) -> Result<Var<'_>> {
        let value = value.check_finite(op_name)?;
        let mut nodes = self.nodes.borrow_mut();
        let requires_grad = inputs.iter().any(|v| nodes[v.id].requires_grad);
        nodes.push(Node {
            op,
            inputs: inputs.iter().map(|v| v.id).collect(),
            value: Rc::new(value),
            requires_grad,
            backward: requires_grad.then_some(backward),
        });
        Ok(Var {
            graph: self,
            id: nodes.len() - 1,
        })
    }

    /// Reverse pass from a one-element output. Each node is visited once.
    pub fn backward(&self, output: Var<'_>) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let out = &nodes[output.id];
        if out.value.numel() != 1 {
            return Err(TensorError::Invalid(format!(
                "backward requires a scalar output, got shape {:?}",
                out.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        grads[output.id] = Some(Tensor::full(out.value.shape(), 1.0));
        for id in (0..=output.id).rev() {
            let node = &nodes[id];
            let Some(backward) = node.backward.as_ref() else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let input_grads = backward(&g);
            grads[id] = Some(g);
            for (&inp, ig) in node.inputs.iter().zip(input_grads) {
                if !nodes[inp].requires_grad {
                    continue;
                }
                if !ig.is_finite() {
                    return Err(TensorError::NonFinite { op: "backward" });
                }
                match &mut grads[inp] {
                    Some(acc) => acc.add_assign(&ig),
                    slot @ None => *slot = Some(ig),
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Concatenate 1-D tensors.
    pub fn concat<'g>(&'g self, parts: &[Var<'g>]) -> Result<Var<'g>> {
        if parts.is_empty() {
            return Err(TensorError::EmptyInput { op: "concat" });
        }
        let mut data = Vec::new();
        let mut lens = Vec::with_capacity(parts.len());
        for p in parts {
            let v = p.value();
            if v.ndim() != 1 {
                return Err(TensorError::ShapeMismatch {
                    op: "concat",
                    lhs: v.shape().to_vec(),
                    rhs: vec![],
                });
            }
            lens.push(v.numel());
            data.extend_from_slice(v.data());
        }
        let total = data.len();
        self.push(
            OpKind::Concat,
            parts,
            Tensor::new(&[total], data)?,
            "concat",
            Box::new(move |g| {
                let mut off = 0;
                lens.iter()
                    .map(|&n| {
                        let t = Tensor::from_vec(g.data()[off..off + n].to_vec());
                        off += n;
                        t
                    })
                    .collect()
            }),
        )
    }

    /// Stack `n` vectors of length `D` as the columns of a `D×n` matrix.
    pub fn stack_columns<'g>(&'g self, cols: &[Var<'g>]) -> Result<Var<'g>> {
        if cols.is_empty() {
            return Err(TensorError::EmptyInput { op: "stack_columns" });
        }
        let d = cols[0].value().numel();
        let n = cols.len();
        let mut data = vec![0f32; d * n];
        for (j, c) in cols.iter().enumerate() {
            let v = c.value();
            if v.ndim() != 1 || v.numel() != d {
                return Err(TensorError::ShapeMismatch {
                    op: "stack_columns",
                    lhs: vec![d],
                    rhs: v.shape().to_vec(),
                });
            }
            for (i, &x) in v.data().iter().enumerate() {
                data[i * n + j] = x;
            }
        }
        self.push(
            OpKind::StackColumns,
            cols,
            Tensor::new(&[d, n], data)?,
            "stack_columns",
            Box::new(move |g| {
                (0..n)
                    .map(|j| Tensor::from_vec((0..d).map(|i| g.data()[i * n + j]).collect()))
                    .collect()
            }),
        )
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

impl<'g> Var<'g> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.graph.nodes.borrow()[self.id].value.clone()
    }

    pub fn shape(&self) -> Vec<usize> {
        self.graph.nodes.borrow()[self.id].value.shape().to_vec()
    }

    pub fn add(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x + y).collect();
        self.graph.push(
            OpKind::Add,
            &[self, other],
            Tensor::new(a.shape(), data)?,
            "add",
            Box::new(|g| vec![g.clone(), g.clone()]),
        )
    }

    pub fn sub(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x - y).collect();
        self.graph.push(
            OpKind::Sub,
            &[self, other],
            Tensor::new(a.shape(), data)?,
            "sub",
            Box::new(|g| {
                let neg = Tensor::new(g.shape(), g.data().iter().map(|v| -v).collect()).unwrap();
                vec![g.clone(), neg]
            }),
        )
    }

    pub fn mul(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        let data = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
        self.graph.push(
            OpKind::Mul,
            &[self, other],
            Tensor::new(a.shape(), data)?,
            "mul",
            Box::new(move |g| {
                let ga = g.data().iter().zip(b.data()).map(|(g, y)| g * y).collect();
                let gb = g.data().iter().zip(a.data()).map(|(g, x)| g * x).collect();
                vec![
                    Tensor::new(g.shape(), ga).unwrap(),
                    Tensor::new(g.shape(), gb).unwrap(),
                ]
            }),
        )
    }

    pub fn scale(self, factor: f32) -> Result<Var<'g>> {
        let a = self.value();
        let data = a.data().iter().map(|x| x * factor).collect();
        self.graph.push(
            OpKind::Scale,
            &[self],
            Tensor::new(a.shape(), data)?,
            "scale",
            Box::new(move |g| {
                vec![Tensor::new(g.shape(), g.data().iter().map(|v| v * factor).collect()).unwrap()]
            }),
        )
    }

    /// `m×k` times `k×n`.
    pub fn matmul(self, other: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), other.value());
        if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: a.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        let out = matmul_raw(a.data(), b.data(), m, k, n);
        self.graph.push(
            OpKind::Matmul,
            &[self, other],
            Tensor::new(&[m, n], out)?,
            "matmul",
            Box::new(move |g| {
                // dA = G·Bᵀ, dB = Aᵀ·G
                let bt = transpose_raw(b.data(), k, n);
                let at = transpose_raw(a.data(), m, k);
                vec![
                    Tensor::new(&[m, k], matmul_raw(g.data(), &bt, m, n, k)).unwrap(),
                    Tensor::new(&[k, n], matmul_raw(&at, g.data(), k, m, n)).unwrap(),
                ]
            }),
        )
    }

    pub fn transpose(self) -> Result<Var<'g>> {
        let a = self.value();
        if a.ndim() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "transpose",
                lhs: a.shape().to_vec(),
                rhs: vec![],
            });
        }
        let (r, c) = (a.shape()[0], a.shape()[1]);
        self.graph.push(
            OpKind::Transpose,
            &[self],
            Tensor::new(&[c, r], transpose_raw(a.data(), r, c))?,
            "transpose",
            Box::new(move |g| vec![Tensor::new(&[r, c], transpose_raw(g.data(), c, r)).unwrap()]),
        )
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'g>> {
        let a = self.value();
        let old = a.shape().to_vec();
        let out = a.reshape(shape)?;
        self.graph.push(
            OpKind::Reshape,
            &[self],
            out,
            "reshape",
            Box::new(move |g| vec![g.reshape(&old).unwrap()]),
        )
    }

    pub fn flatten(self) -> Result<Var<'g>> {
        let n = self.value().numel();
        self.reshape(&[n])
    }

    /// Grouped 1-D convolution of `C_in×L` input with a `C_out×(C_in/groups)×K` kernel.
    pub fn conv1d(self, kernel: Var<'g>, stride: usize, padding: usize, groups: usize) -> Result<Var<'g>> {
        let (x, w) = (self.value(), kernel.value());
        let geo = Conv1dGeometry::new(x.shape(), w.shape(), stride, padding, groups)?;
        let out = geo.forward(x.data(), w.data());
        let (xs, ws) = (x.shape().to_vec(), w.shape().to_vec());
        self.graph.push(
            OpKind::Conv1d,
            &[self, kernel],
            Tensor::new(&[geo.c_out, geo.out_len], out)?,
            "conv1d",
            Box::new(move |g| {
                let (gx, gw) = geo.backward(x.data(), w.data(), g.data());
                vec![Tensor::new(&xs, gx).unwrap(), Tensor::new(&ws, gw).unwrap()]
            }),
        )
    }

    /// Dense 3-D convolution of `C_in×D×H×W` input with a `C_out×C_in×Kd×Kh×Kw` kernel.
    pub fn conv3d(self, kernel: Var<'g>, stride: [usize; 3], padding: [usize; 3]) -> Result<Var<'g>> {
        let (x, w) = (self.value(), kernel.value());
        let geo = Conv3dGeometry::new(x.shape(), w.shape(), stride, padding)?;
        let out = geo.forward(x.data(), w.data());
        let (xs, ws) = (x.shape().to_vec(), w.shape().to_vec());
        self.graph.push(
            OpKind::Conv3d,
            &[self, kernel],
            Tensor::new(&geo.output_shape(), out)?,
            "conv3d",
            Box::new(move |g| {
                let (gx, gw) = geo.backward(x.data(), w.data(), g.data());
                vec![Tensor::new(&xs, gx).unwrap(), Tensor::new(&ws, gw).unwrap()]
            }),
        )
    }

    pub fn activation(self, kind: Activation) -> Result<Var<'g>> {
        let a = self.value();
        let data = a.data().iter().map(|&x| kind.apply(x)).collect();
        self.graph.push(
            OpKind::Activation(kind),
            &[self],
            Tensor::new(a.shape(), data)?,
            "activation",
            Box::new(move |g| {
                let gx = g
                    .data()
                    .iter()
                    .zip(a.data())
                    .map(|(g, &x)| g * kind.derivative(x))
                    .collect();
                vec![Tensor::new(g.shape(), gx).unwrap()]
            }),
        )
    }

    pub fn relu(self) -> Result<Var<'g>> {
        self.activation(Activation::Relu)
    }

    pub fn sigmoid(self) -> Result<Var<'g>> {
        self.activation(Activation::Sigmoid)
    }

    pub fn silu(self) -> Result<Var<'g>> {
        self.activation(Activation::Silu)
    }

    fn channels_and_len(&self, op: &'static str) -> Result<(usize, usize)> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: s,
                rhs: vec![],
            });
        }
        if s[1] == 0 {
            return Err(TensorError::EmptyInput { op });
        }
        Ok((s[0], s[1]))
    }

    /// Per-channel maximum of a `C×L` tensor. Gradient goes to the first argmax.
    pub fn max_pool_global(self) -> Result<Var<'g>> {
        let (c, l) = self.channels_and_len("max_pool_global")?;
        let a = self.value();
        let mut out = Vec::with_capacity(c);
        let mut arg = Vec::with_capacity(c);
        for ch in 0..c {
            let row = &a.data()[ch * l..(ch + 1) * l];
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            out.push(row[best]);
            arg.push(best);
        }
        self.graph.push(
            OpKind::MaxPoolGlobal,
            &[self],
            Tensor::new(&[c], out)?,
            "max_pool_global",
            Box::new(move |g| {
                let mut gx = vec![0f32; c * l];
                for ch in 0..c {
                    gx[ch * l + arg[ch]] = g.data()[ch];
                }
                vec![Tensor::new(&[c, l], gx).unwrap()]
            }),
        )
    }

    /// Windowed max pooling along `L` of a `C×L` tensor; the last window may be
    /// partial, so the output length is `ceil((L - window) / stride) + 1` for
    /// `L ≥ window` and 1 otherwise.
    pub fn max_pool1d(self, window: usize, stride: usize) -> Result<Var<'g>> {
        let (c, l) = self.channels_and_len("max_pool1d")?;
        if window == 0 || stride == 0 {
            return Err(TensorError::Invalid("max_pool1d: window and stride must be positive".into()));
        }
        let out_len = if l <= window { 1 } else { (l - window).div_ceil(stride) + 1 };
        let a = self.value();
        let mut out = Vec::with_capacity(c * out_len);
        let mut arg = Vec::with_capacity(c * out_len);
        for ch in 0..c {
            let row = &a.data()[ch * l..(ch + 1) * l];
            for o in 0..out_len {
                let start = o * stride;
                let end = (start + window).min(l);
                let mut best = start;
                for i in start + 1..end {
                    if row[i] > row[best] {
                        best = i;
                    }
                }
                out.push(row[best]);
                arg.push(ch * l + best);
            }
        }
        self.graph.push(
            OpKind::MaxPool1d,
            &[self],
            Tensor::new(&[c, out_len], out)?,
            "max_pool1d",
            Box::new(move |g| {
                let mut gx = vec![0f32; c * l];
                for (gv, &i) in g.data().iter().zip(&arg) {
                    gx[i] += gv;
                }
                vec![Tensor::new(&[c, l], gx).unwrap()]
            }),
        )
    }

    /// Per-channel mean of a `C×L` tensor.
    pub fn mean_pool_global(self) -> Result<Var<'g>> {
        let (c, l) = self.channels_and_len("mean_pool_global")?;
        let a = self.value();
        let out = (0..c)
            .map(|ch| {
                let s: f64 = a.data()[ch * l..(ch + 1) * l].iter().map(|&v| v as f64).sum();
                (s / l as f64) as f32
            })
            .collect();
        self.graph.push(
            OpKind::MeanPoolGlobal,
            &[self],
            Tensor::new(&[c], out)?,
            "mean_pool_global",
            Box::new(move |g| {
                let inv = 1.0 / l as f32;
                let gx = (0..c * l).map(|i| g.data()[i / l] * inv).collect();
                vec![Tensor::new(&[c, l], gx).unwrap()]
            }),
        )
    }

    fn leading_channels(&self, op: &'static str, c: usize) -> Result<usize> {
        let s = self.shape();
        if s.is_empty() || s[0] != c {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: s,
                rhs: vec![c],
            });
        }
        Ok(s[1..].iter().product())
    }

    /// Multiply every channel of a `C×…` tensor by the matching entry of `scales` (`[C]`).
    pub fn scale_channels(self, scales: Var<'g>) -> Result<Var<'g>> {
        let (x, s) = (self.value(), scales.value());
        if s.ndim() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "scale_channels",
                lhs: x.shape().to_vec(),
                rhs: s.shape().to_vec(),
            });
        }
        let c = s.numel();
        let inner = self.leading_channels("scale_channels", c)?;
        let out = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v * s.data()[i / inner])
            .collect();
        self.graph.push(
            OpKind::ScaleChannels,
            &[self, scales],
            Tensor::new(x.shape(), out)?,
            "scale_channels",
            Box::new(move |g| {
                let gx = g
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &gv)| gv * s.data()[i / inner])
                    .collect();
                let gs = (0..c)
                    .map(|ch| {
                        let r = ch * inner..(ch + 1) * inner;
                        g.data()[r.clone()]
                            .iter()
                            .zip(&x.data()[r])
                            .map(|(&gv, &xv)| gv as f64 * xv as f64)
                            .sum::<f64>() as f32
                    })
                    .collect();
                vec![
                    Tensor::new(x.shape(), gx).unwrap(),
                    Tensor::new(&[c], gs).unwrap(),
                ]
            }),
        )
    }

    /// Add `bias[c]` to every element of channel `c` of a `C×…` tensor.
    pub fn add_channel_bias(self, bias: Var<'g>) -> Result<Var<'g>> {
        let (x, b) = (self.value(), bias.value());
        if b.ndim() != 1 {
            return Err(TensorError::ShapeMismatch {
                op: "add_channel_bias",
                lhs: x.shape().to_vec(),
                rhs: b.shape().to_vec(),
            });
        }
        let c = b.numel();
        let inner = self.leading_channels("add_channel_bias", c)?;
        let out = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| v + b.data()[i / inner])
            .collect();
        let xs = x.shape().to_vec();
        self.graph.push(
            OpKind::AddChannelBias,
            &[self, bias],
            Tensor::new(&xs, out)?,
            "add_channel_bias",
            Box::new(move |g| {
                let gb = (0..c)
                    .map(|ch| {
                        g.data()[ch * inner..(ch + 1) * inner]
                            .iter()
                            .map(|&v| v as f64)
                            .sum::<f64>() as f32
                    })
                    .collect();
                vec![g.clone(), Tensor::new(&[c], gb).unwrap()]
            }),
        )
    }

    pub fn sum(self) -> Result<Var<'g>> {
        let a = self.value();
        let s: f64 = a.data().iter().map(|&v| v as f64).sum();
        let shape = a.shape().to_vec();
        self.graph.push(
            OpKind::Sum,
            &[self],
            Tensor::scalar(s as f32),
            "sum",
            Box::new(move |g| vec![Tensor::full(&shape, g.item())]),
        )
    }

    /// Mean squared difference to `target` (same shape), as a scalar.
    pub fn mse(self, target: Var<'g>) -> Result<Var<'g>> {
        let (a, b) = (self.value(), target.value());
        same_shape("mse", &a, &b)?;
        if a.numel() == 0 {
            return Err(TensorError::EmptyInput { op: "mse" });
        }
        let n = a.numel() as f64;
        let s: f64 = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| {
                let d = x as f64 - y as f64;
                d * d
            })
            .sum();
        self.graph.push(
            OpKind::Mse,
            &[self, target],
            Tensor::scalar((s / n) as f32),
            "mse",
            Box::new(move |g| {
                let scale = 2.0 * g.item() as f64 / n;
                let ga: Vec<f32> = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(&x, &y)| (scale * (x as f64 - y as f64)) as f32)
                    .collect();
                let gb = ga.iter().map(|v| -v).collect();
                vec![
                    Tensor::new(a.shape(), ga).unwrap(),
                    Tensor::new(a.shape(), gb).unwrap(),
                ]
            }),
        )
    }
}
