//! Central finite-difference checks of tape gradients.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Result, Tensor, TensorError, Var};

/// Which coordinates of each input are perturbed.
#[derive(Clone, Copy, Debug)]
pub enum CoordSelection {
    All,
    /// At most `per_tensor` coordinates per input, chosen with `seed`.
    Sample { per_tensor: usize, seed: u64 },
}

/// Max relative error between the tape gradient of a scalar function of one
/// input and its central difference. The error of one coordinate is
/// `|analytic − numeric| / max(1, |analytic|)`.
pub fn grad_check<F>(f: F, x: &Tensor, eps: f32) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, Var<'g>) -> Result<Var<'g>>,
{
    grad_check_many(|g, vars| f(g, vars[0]), std::slice::from_ref(x), eps, CoordSelection::All)
}

/// [`grad_check`] over several inputs at once.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor], eps: f32, coords: CoordSelection) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph, &[Var<'g>]) -> Result<Var<'g>>,
{
    if !(eps > 0.0) {
        return Err(TensorError::Invalid("grad_check: eps must be positive".into()));
    }
    let g = Graph::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&g, &vars)?;
    if out.value().numel() != 1 {
        return Err(TensorError::Invalid("grad_check: function must be scalar-valued".into()));
    }
    let grads = g.backward(out)?;
    let analytic: Vec<Tensor> = vars.iter().map(|&v| grads.wrt(v)).collect();

    let eval = |perturbed: &[Tensor]| -> Result<f64> {
        let g = Graph::new();
        let vars: Vec<Var<'_>> = perturbed.iter().map(|t| g.constant(t.clone())).collect();
        let v = f(&g, &vars)?.value().item() as f64;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(TensorError::NonFinite { op: "grad_check" })
        }
    };

    let mut worst = 0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ti, input) in inputs.iter().enumerate() {
        let n = input.numel();
        let chosen: Vec<usize> = match coords {
            CoordSelection::All => (0..n).collect(),
            CoordSelection::Sample { per_tensor, seed } if per_tensor < n => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (ti as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let mut idx = sample(&mut rng, n, per_tensor).into_vec();
                idx.sort_unstable();
                idx
            }
            CoordSelection::Sample { .. } => (0..n).collect(),
        };
        for j in chosen {
            let x0 = input.data()[j];
            let hi = x0 + eps;
            let lo = x0 - eps;
            work[ti].data_mut()[j] = hi;
            let f_hi = eval(&work)?;
            work[ti].data_mut()[j] = lo;
            let f_lo = eval(&work)?;
            work[ti].data_mut()[j] = x0;
            // the realised step after f32 rounding
            let numeric = (f_hi - f_lo) / (hi as f64 - lo as f64);
            let a = analytic[ti].data()[j] as f64;
            let err = (a - numeric).abs() / a.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}
