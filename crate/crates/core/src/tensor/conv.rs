//! Direct convolution kernels (forward and backward) used by the graph ops.

use super::{Result, TensorError};

/// Output length of a 1-D convolution, or an error when the kernel does not
/// fit inside the padded input.
pub fn conv1d_output_len(
    len: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    op: &'static str,
) -> Result<usize> {
    if stride == 0 {
        return Err(TensorError::Invalid(format!("{op}: stride must be positive")));
    }
    let padded = len + 2 * padding;
    if kernel == 0 || kernel > padded {
        return Err(TensorError::KernelTooLarge {
            op,
            kernel,
            padded,
        });
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output positions `o` in `[start, end)` for which `o*stride + k - pad`
/// indexes inside `[0, in_len)`.
#[inline]
fn valid_range(out_len: usize, in_len: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
    let (s, k, p, n) = (stride as isize, k as isize, pad as isize, in_len as isize);
    let start = if p > k { (p - k + s - 1) / s } else { 0 };
    let last = n - 1 + p - k;
    if last < 0 {
        return (0, 0);
    }
    let end = (last / s + 1).min(out_len as isize);
    let start = start.min(end);
    (start as usize, end as usize)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Conv1dGeometry {
    pub c_in: usize,
    pub len: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub groups: usize,
    pub out_len: usize,
}

impl Conv1dGeometry {
    pub fn new(
        input: &[usize],
        kernel: &[usize],
        stride: usize,
        pad: usize,
        groups: usize,
    ) -> Result<Self> {
        const OP: &str = "conv1d";
        if input.len() != 2 || kernel.len() != 3 {
            return Err(TensorError::ShapeMismatch {
                op: OP,
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        let (c_in, len) = (input[0], input[1]);
        let (c_out, cin_g, k) = (kernel[0], kernel[1], kernel[2]);
        if groups == 0 || c_in % groups != 0 || c_out % groups != 0 || cin_g * groups != c_in {
            return Err(TensorError::ShapeMismatch {
                op: OP,
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        let out_len = conv1d_output_len(len, k, stride, pad, OP)?;
        Ok(Self {
            c_in,
            len,
            c_out,
            k,
            stride,
            pad,
            groups,
            out_len,
        })
    }

    fn cin_g(&self) -> usize {
        self.c_in / self.groups
    }

    fn cout_g(&self) -> usize {
        self.c_out / self.groups
    }

    pub fn forward(&self, input: &[f32], kernel: &[f32]) -> Vec<f32> {
        let (cin_g, cout_g) = (self.cin_g(), self.cout_g());
        let mut out = vec![0f32; self.c_out * self.out_len];
        let mut acc = vec![0f64; self.out_len];
        for oc in 0..self.c_out {
            let g = oc / cout_g;
            acc.iter_mut().for_each(|a| *a = 0.0);
            for icl in 0..cin_g {
                let ic = g * cin_g + icl;
                let x = &input[ic * self.len..(ic + 1) * self.len];
                for kk in 0..self.k {
                    let w = kernel[(oc * cin_g + icl) * self.k + kk] as f64;
                    let (lo, hi) = valid_range(self.out_len, self.len, self.stride, kk, self.pad);
                    for o in lo..hi {
                        acc[o] += w * x[o * self.stride + kk - self.pad] as f64;
                    }
                }
            }
            for (dst, a) in out[oc * self.out_len..(oc + 1) * self.out_len].iter_mut().zip(&acc) {
                *dst = *a as f32;
            }
        }
        out
    }

    /// Returns `(grad_input, grad_kernel)`.
    pub fn backward(&self, input: &[f32], kernel: &[f32], grad_out: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let (cin_g, cout_g) = (self.cin_g(), self.cout_g());
        let mut gin = vec![0f64; self.c_in * self.len];
        let mut gk = vec![0f32; kernel.len()];
        for oc in 0..self.c_out {
            let g = oc / cout_g;
            let go = &grad_out[oc * self.out_len..(oc + 1) * self.out_len];
            for icl in 0..cin_g {
                let ic = g * cin_g + icl;
                let x = &input[ic * self.len..(ic + 1) * self.len];
                let gx = &mut gin[ic * self.len..(ic + 1) * self.len];
                for kk in 0..self.k {
                    let widx = (oc * cin_g + icl) * self.k + kk;
                    let w = kernel[widx] as f64;
                    let (lo, hi) = valid_range(self.out_len, self.len, self.stride, kk, self.pad);
                    let mut sum = 0f64;
                    for o in lo..hi {
                        let i = o * self.stride + kk - self.pad;
                        let gv = go[o] as f64;
                        sum += gv * x[i] as f64;
                        gx[i] += w * gv;
                    }
                    gk[widx] = sum as f32;
                }
            }
        }
        (gin.into_iter().map(|v| v as f32).collect(), gk)
    }
}

/// Shape bookkeeping for a dense 3-D convolution over `C×D×H×W` input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv3dGeometry {
    pub c_in: usize,
    pub dims: [usize; 3],
    pub c_out: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub out_dims: [usize; 3],
}

impl Conv3dGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: [usize; 3], pad: [usize; 3]) -> Result<Self> {
        const OP: &str = "conv3d";
        if input.len() != 4 || kernel.len() != 5 || kernel[1] != input[0] {
            return Err(TensorError::ShapeMismatch {
                op: OP,
                lhs: input.to_vec(),
                rhs: kernel.to_vec(),
            });
        }
        let dims = [input[1], input[2], input[3]];
        let ks = [kernel[2], kernel[3], kernel[4]];
        let mut out_dims = [0; 3];
        for a in 0..3 {
            out_dims[a] = conv1d_output_len(dims[a], ks[a], stride[a], pad[a], OP)?;
        }
        Ok(Self {
            c_in: input[0],
            dims,
            c_out: kernel[0],
            kernel: ks,
            stride,
            pad,
            out_dims,
        })
    }

    pub fn output_shape(&self) -> [usize; 4] {
        [self.c_out, self.out_dims[0], self.out_dims[1], self.out_dims[2]]
    }

    fn in_vol(&self) -> usize {
        self.dims.iter().product()
    }

    fn out_vol(&self) -> usize {
        self.out_dims.iter().product()
    }

    fn kvol(&self) -> usize {
        self.kernel.iter().product()
    }

    /// Visits every (output index, input index) pair for a kernel offset.
    #[inline]
    fn for_each_tap(&self, kd: usize, kh: usize, kw: usize, mut f: impl FnMut(usize, usize)) {
        let [d, h, w] = self.dims;
        let [od_n, oh_n, ow_n] = self.out_dims;
        let [sd, sh, sw] = self.stride;
        let [pd, ph, pw] = self.pad;
        let (d0, d1) = valid_range(od_n, d, sd, kd, pd);
        let (h0, h1) = valid_range(oh_n, h, sh, kh, ph);
        let (w0, w1) = valid_range(ow_n, w, sw, kw, pw);
        for od in d0..d1 {
            let id = od * sd + kd - pd;
            for oh in h0..h1 {
                let ih = oh * sh + kh - ph;
                let obase = (od * oh_n + oh) * ow_n;
                let ibase = (id * h + ih) * w;
                for ow in w0..w1 {
                    f(obase + ow, ibase + ow * sw + kw - pw);
                }
            }
        }
    }

    pub(crate) fn forward(&self, input: &[f32], kernel: &[f32]) -> Vec<f32> {
        let (iv, ov, kv) = (self.in_vol(), self.out_vol(), self.kvol());
        let [_, kh_n, kw_n] = self.kernel;
        let mut out = vec![0f32; self.c_out * ov];
        let mut acc = vec![0f64; ov];
        for oc in 0..self.c_out {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for ic in 0..self.c_in {
                let x = &input[ic * iv..(ic + 1) * iv];
                let wbase = (oc * self.c_in + ic) * kv;
                for t in 0..kv {
                    let w = kernel[wbase + t] as f64;
                    if w == 0.0 {
                        continue;
                    }
                    let (kd, kh, kw) = (t / (kh_n * kw_n), (t / kw_n) % kh_n, t % kw_n);
                    self.for_each_tap(kd, kh, kw, |o, i| acc[o] += w * x[i] as f64);
                }
            }
            for (dst, a) in out[oc * ov..(oc + 1) * ov].iter_mut().zip(&acc) {
                *dst = *a as f32;
            }
        }
        out
    }

    /// Returns `(grad_input, grad_kernel)`.
    pub(crate) fn backward(&self, input: &[f32], kernel: &[f32], grad_out: &[f32]) -> (Vec<f32>, Vec<f32>) {
        let (iv, ov, kv) = (self.in_vol(), self.out_vol(), self.kvol());
        let [_, kh_n, kw_n] = self.kernel;
        let mut gin = vec![0f64; self.c_in * iv];
        let mut gk = vec![0f32; kernel.len()];
        for oc in 0..self.c_out {
            let go = &grad_out[oc * ov..(oc + 1) * ov];
            for ic in 0..self.c_in {
                let x = &input[ic * iv..(ic + 1) * iv];
                let gx = &mut gin[ic * iv..(ic + 1) * iv];
                let wbase = (oc * self.c_in + ic) * kv;
                for t in 0..kv {
                    let w = kernel[wbase + t] as f64;
                    let (kd, kh, kw) = (t / (kh_n * kw_n), (t / kw_n) % kh_n, t % kw_n);
                    let mut sum = 0f64;
                    self.for_each_tap(kd, kh, kw, |o, i| {
                        let gv = go[o] as f64;
                        sum += gv * x[i] as f64;
                        gx[i] += w * gv;
                    });
                    gk[wbase + t] = sum as f32;
                }
            }
        }
        (gin.into_iter().map(|v| v as f32).collect(), gk)
    }
}
