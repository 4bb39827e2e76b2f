//! Natural-scene statistics of a single view: generalized Gaussian fits to
//! mean-subtracted contrast-normalized (MSCN) coefficients and their
//! neighbour products, at two scales.

use std::sync::OnceLock;

use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::image_io::ViewImage;

pub const NSS_DIM: usize = 36;
pub const MIN_SIZE: usize = 16;
/// Stabilizer in the MSCN denominator for intensities in `[0, 1]`.
pub const MSCN_C: f64 = 1.0 / 255.0;
const WINDOW: usize = 7;
const WINDOW_SIGMA: f64 = 7.0 / 6.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NssError {
    #[error("image {width}x{height} is smaller than {min}x{min}")]
    TooSmall { width: usize, height: usize, min: usize },
    #[error("plane of {len} values does not match {width}x{height}")]
    BadPlane { len: usize, width: usize, height: usize },
}

/// A row-major single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, NssError> {
        if data.len() != width * height {
            return Err(NssError::BadPlane {
                len: data.len(),
                width,
                height,
            });
        }
        Ok(Self { width, height, data })
    }

    fn at(&self, i: isize, j: isize) -> f64 {
        let i = i.clamp(0, self.width as isize - 1) as usize;
        let j = j.clamp(0, self.height as isize - 1) as usize;
        self.data[j * self.width + i]
    }

    /// 2×2 box average; odd trailing rows/columns are dropped.
    pub fn downsample(&self) -> Self {
        let (w, h) = (self.width / 2, self.height / 2);
        let mut data = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                let (x, y) = (2 * i as isize, 2 * j as isize);
                data.push(0.25 * (self.at(x, y) + self.at(x + 1, y) + self.at(x, y + 1) + self.at(x + 1, y + 1)));
            }
        }
        Self { width: w, height: h, data }
    }
}

fn gaussian_window() -> [[f64; WINDOW]; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let mut w = [[0.0; WINDOW]; WINDOW];
    let mut total = 0.0;
    for (a, row) in w.iter_mut().enumerate() {
        for (b, v) in row.iter_mut().enumerate() {
            let (dx, dy) = (a as f64 - r, b as f64 - r);
            *v = (-(dx * dx + dy * dy) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
            total += *v;
        }
    }
    for v in w.iter_mut().flatten() {
        *v /= total;
    }
    w
}

/// MSCN coefficients with replicated borders. Local moments are accumulated
/// from differences to the centre pixel, so constant regions give exactly 0.
pub fn mscn(p: &Plane) -> Plane {
    let w = gaussian_window();
    let r = (WINDOW / 2) as isize;
    let mut out = Vec::with_capacity(p.data.len());
    for j in 0..p.height as isize {
        for i in 0..p.width as isize {
            let c = p.at(i, j);
            let (mut m1, mut m2) = (0.0, 0.0);
            for (a, row) in w.iter().enumerate() {
                for (b, &wt) in row.iter().enumerate() {
                    let d = p.at(i + a as isize - r, j + b as isize - r) - c;
                    m1 += wt * d;
                    m2 += wt * d * d;
                }
            }
            let sigma = (m2 - m1 * m1).max(0.0).sqrt();
            out.push(-m1 / (sigma + MSCN_C));
        }
    }
    Plane {
        width: p.width,
        height: p.height,
        data: out,
    }
}

/// `Γ(1/α)Γ(3/α)/Γ(2/α)²`, decreasing in α.
fn ggd_ratio(alpha: f64) -> f64 {
    (ln_gamma(1.0 / alpha) + ln_gamma(3.0 / alpha) - 2.0 * ln_gamma(2.0 / alpha)).exp()
}

const ALPHA_MIN: f64 = 0.2;
const ALPHA_MAX: f64 = 10.0;
const ALPHA_STEP: f64 = 0.001;

fn alpha_grid() -> &'static [(f64, f64)] {
    static GRID: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    GRID.get_or_init(|| {
        let n = ((ALPHA_MAX - ALPHA_MIN) / ALPHA_STEP).round() as usize;
        (0..n)
            .map(|k| {
                let a = ALPHA_MIN + k as f64 * ALPHA_STEP;
                (a, ggd_ratio(a))
            })
            .collect()
    })
}

/// Grid value of α whose ratio is closest to `target`.
fn solve_shape(target: f64) -> f64 {
    alpha_grid()
        .iter()
        .min_by(|p, q| (p.1 - target).abs().total_cmp(&(q.1 - target).abs()))
        .map(|p| p.0)
        .expect("non-empty grid")
}

/// Moment-matching generalized Gaussian fit: `(shape, variance)`.
/// All-zero input gives `(2, 0)`.
pub fn fit_ggd(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let var = x.iter().map(|v| v * v).sum::<f64>() / n;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    if !(mean_abs > 0.0) {
        return (2.0, 0.0);
    }
    (solve_shape(var / (mean_abs * mean_abs)), var)
}

/// Moment-matching asymmetric generalized Gaussian fit:
/// `(shape, mean, left variance, right variance)`. All-zero input gives
/// `(2, 0, 0, 0)`.
pub fn fit_aggd(x: &[f64]) -> (f64, f64, f64, f64) {
    let (mut sl, mut nl, mut sr, mut nr) = (0.0, 0usize, 0.0, 0usize);
    for &v in x {
        if v < 0.0 {
            sl += v * v;
            nl += 1;
        } else if v > 0.0 {
            sr += v * v;
            nr += 1;
        }
    }
    let var_l = if nl > 0 { sl / nl as f64 } else { 0.0 };
    let var_r = if nr > 0 { sr / nr as f64 } else { 0.0 };
    let n = x.len().max(1) as f64;
    let mean_abs = x.iter().map(|v| v.abs()).sum::<f64>() / n;
    let mean_sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    if !(mean_sq > 0.0) {
        return (2.0, 0.0, 0.0, 0.0);
    }
    let (sigma_l, sigma_r) = (var_l.sqrt(), var_r.sqrt());
    // one-sided data: fall back to the symmetric estimate on that side
    let gamma = if sigma_l > 0.0 && sigma_r > 0.0 { sigma_l / sigma_r } else { 1.0 };
    let r_hat = mean_abs * mean_abs / mean_sq;
    let r_norm = r_hat * (gamma.powi(3) + 1.0) * (gamma + 1.0) / (gamma * gamma + 1.0).powi(2);
    let alpha = solve_shape(1.0 / r_norm);
    let scale = (ln_gamma(1.0 / alpha) - ln_gamma(3.0 / alpha)).exp().sqrt();
    let (beta_l, beta_r) = (sigma_l * scale, sigma_r * scale);
    let eta = (beta_r - beta_l) * (ln_gamma(2.0 / alpha) - ln_gamma(1.0 / alpha)).exp();
    (alpha, eta, var_l, var_r)
}

fn scale_features(m: &Plane, out: &mut Vec<f64>) {
    let (shape, var) = fit_ggd(&m.data);
    out.extend([shape, var]);
    let (w, h) = (m.width as isize, m.height as isize);
    for (di, dj) in [(1isize, 0isize), (0, 1), (1, 1), (-1, 1)] {
        let mut prods = Vec::with_capacity(m.data.len());
        for j in 0..h {
            for i in 0..w {
                let (x, y) = (i + di, j + dj);
                if x >= 0 && x < w && y < h {
                    prods.push(m.at(i, j) * m.at(x, y));
                }
            }
        }
        let (a, eta, l, r) = fit_aggd(&prods);
        out.extend([a, eta, l, r]);
    }
}

/// The 36-value summary of a luma plane.
pub fn nss_plane(p: &Plane) -> Result<Vec<f64>, NssError> {
    if p.width < MIN_SIZE || p.height < MIN_SIZE {
        return Err(NssError::TooSmall {
            width: p.width,
            height: p.height,
            min: MIN_SIZE,
        });
    }
    let mut out = Vec::with_capacity(NSS_DIM);
    scale_features(&mscn(p), &mut out);
    scale_features(&mscn(&p.downsample()), &mut out);
    Ok(out)
}

pub fn nss_features(image: &ViewImage) -> Result<Vec<f64>, NssError> {
    nss_plane(&Plane::new(image.width(), image.height(), image.luma())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1, StandardNormal};

    fn noise_plane(seed: u64, n: usize) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n * n).map(|_| StandardNormal.sample(&mut rng)).collect();
        Plane::new(n, n, data).unwrap()
    }

    #[test]
    fn constant_image_has_zero_mscn_and_conventional_fits() {
        let p = Plane::new(20, 18, vec![0.37; 360]).unwrap();
        assert!(mscn(&p).data.iter().all(|&v| v == 0.0));
        let f = nss_plane(&p).unwrap();
        assert_eq!(f.len(), NSS_DIM);
        assert_eq!(&f[..2], &[2.0, 0.0]);
        assert_eq!(&f[2..6], &[2.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn ratio_oracle_at_known_shapes() {
        // Gaussian: E[x²]/E[|x|]² = π/2; Laplacian: 2
        assert!((ggd_ratio(2.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert!((ggd_ratio(1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ggd_fit_recovers_gaussian_and_laplacian_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g: Vec<f64> = (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (a, v) = fit_ggd(&g);
        assert!((a - 2.0).abs() < 0.05 && (v - 1.0).abs() < 0.02, "{a} {v}");
        // difference of two unit exponentials is Laplacian
        let l: Vec<f64> = (0..200_000)
            .map(|_| {
                let (p, q): (f64, f64) = (Exp1.sample(&mut rng), Exp1.sample(&mut rng));
                p - q
            })
            .collect();
        let (a, _) = fit_ggd(&l);
        assert!((a - 1.0).abs() < 0.05, "{a}");
    }

    #[test]
    fn aggd_of_symmetric_gaussian_has_zero_mean_and_shape_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g: Vec<f64> = (0..200_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let (a, eta, l, r) = fit_aggd(&g);
        assert!((a - 2.0).abs() < 0.05, "{a}");
        assert!(eta.abs() < 0.02 && (l - 1.0).abs() < 0.03 && (r - 1.0).abs() < 0.03);
    }

    #[test]
    fn white_noise_shape_near_gaussian() {
        for seed in 0..5 {
            let p = noise_plane(seed, 64);
            let (shape, var) = fit_ggd(&p.data);
            assert!((1.8..=2.2).contains(&shape), "seed {seed}: shape {shape}");
            assert!((var - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn mscn_of_white_noise_is_bounded_and_platykurtic() {
        // self-normalization over a small window caps |MSCN|, pushing the
        // shape above the Gaussian value
        let f = nss_plane(&noise_plane(0, 64)).unwrap();
        assert!(f.iter().all(|v| v.is_finite()));
        assert!(f[0] > 2.0 && f[18] > 2.0, "{} {}", f[0], f[18]);
    }

    #[test]
    fn shift_changes_features_only_through_rounding() {
        let p = noise_plane(9, 32);
        let shifted = Plane::new(32, 32, p.data.iter().map(|v| v + 0.1).collect()).unwrap();
        let (a, b) = (nss_plane(&p).unwrap(), nss_plane(&shifted).unwrap());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-3 * 0.1 * x.abs().max(1.0), "{x} {y}");
        }
    }

    #[test]
    fn rejects_small_images() {
        assert!(nss_plane(&Plane::new(15, 20, vec![0.0; 300]).unwrap()).is_err());
    }
}
