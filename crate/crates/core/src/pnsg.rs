//! Normalized spherical gradients of pixel colour around surface points.
//!
//! A point seen from several viewpoints gives a set of rays with spherical
//! angles in the point's local frame. Rays are grouped into bins along one
//! angle, ordered along the other, and adjacent rays give colour differences
//! divided by their angular separation.

use std::f64::consts::PI;
use std::io::{Read, Write};

use rayon::prelude::*;
use thiserror::Error;

use crate::colmap::SparsePoint;
use crate::geometry::{angular_disparity, observe_point, GeometryError, LocalFrame, ObservationRay, PosedView, Vec3, Visibility};
use crate::tensor::Tensor;

pub const DEFAULT_BINS: usize = 8;
pub const DEFAULT_RESAMPLE: usize = 16;
pub const DEFAULT_EPS_ANGLE: f64 = 1e-6;

pub const DUMP_MAGIC: &[u8; 8] = b"NQAPNSG1";
pub const DUMP_VERSION: u32 = 1;
const FLAG_WRAP_AZIMUTH: u32 = 1;

#[derive(Debug, Error)]
pub enum PnsgError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("angular disparity {disparity} rad is below the threshold")]
    DegeneratePair { disparity: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed feature dump: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, PnsgError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PnsgConfig {
    pub bins: usize,
    pub resample: usize,
    pub eps_angle: f64,
    /// Close the azimuthal sequence of each bin across ±π.
    pub wrap_azimuth: bool,
}

impl Default for PnsgConfig {
    fn default() -> Self {
        Self {
            bins: DEFAULT_BINS,
            resample: DEFAULT_RESAMPLE,
            eps_angle: DEFAULT_EPS_ANGLE,
            wrap_azimuth: false,
        }
    }
}

impl PnsgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(PnsgError::Config("bin count must be at least 1".into()));
        }
        if self.resample == 0 {
            return Err(PnsgError::Config("resample length must be at least 1".into()));
        }
        if !(self.eps_angle >= 0.0) {
            return Err(PnsgError::Config("angle threshold must be non-negative".into()));
        }
        Ok(())
    }
}

/// A sparse point and the rays that observe it.
#[derive(Clone, Debug)]
pub struct SurfacePointObservations {
    pub point: SparsePoint,
    pub rays: Vec<ObservationRay>,
    pub frame: LocalFrame,
}

impl SurfacePointObservations {
    pub fn observe(point: &SparsePoint, views: &[PosedView], mode: Visibility) -> Result<Self> {
        let (rays, frame) = observe_point(&point.xyz, &point.track_image_ids(), views, mode)?;
        Ok(Self {
            point: point.clone(),
            rays,
            frame,
        })
    }
}

/// Colour change per radian between two rays.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NsgSample {
    pub gradient: [f64; 3],
    pub mid_azimuth: f64,
    pub mid_polar: f64,
}

pub fn nsg(xi: &ObservationRay, xj: &ObservationRay, o: &Vec3, eps_angle: f64) -> Result<NsgSample> {
    let disparity = match angular_disparity(&xi.viewpoint, &xj.viewpoint, o) {
        Ok(d) => d,
        Err(GeometryError::DegenerateDirection) => 0.0,
        Err(e) => return Err(e.into()),
    };
    if !(disparity > eps_angle) {
        return Err(PnsgError::DegeneratePair { disparity });
    }
    let mut gradient = [0.0; 3];
    for (c, g) in gradient.iter_mut().enumerate() {
        *g = (xi.pixel_value[c] - xj.pixel_value[c]) / disparity;
    }
    let mid_azimuth = (xi.azimuth.sin() + xj.azimuth.sin()).atan2(xi.azimuth.cos() + xj.azimuth.cos());
    Ok(NsgSample {
        gradient,
        mid_azimuth,
        mid_polar: 0.5 * (xi.polar + xj.polar),
    })
}

/// Which angular gradient a bin set carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Bins over polar angle, rays ordered by azimuth.
    Azimuthal,
    /// Bins over azimuth, rays ordered by polar angle.
    Polar,
}

impl Axis {
    /// Index of the nearest of `b` evenly spaced bin centres; a value exactly
    /// halfway between two centres goes to the lower index.
    pub fn bin_index(self, ray: &ObservationRay, b: usize) -> usize {
        let (angle, lo, span) = match self {
            Axis::Azimuthal => (ray.polar, 0.0, PI),
            Axis::Polar => (ray.azimuth, -PI, 2.0 * PI),
        };
        (0..b - 1)
            .filter(|&k| lo + (k + 1) as f64 * span / (b as f64) < angle)
            .count()
    }

    fn sort_key(self, ray: &ObservationRay) -> f64 {
        match self {
            Axis::Azimuthal => ray.azimuth,
            Axis::Polar => ray.polar,
        }
    }
}

/// Rays grouped and ordered for both gradient directions.
#[derive(Clone, Debug, PartialEq)]
pub struct BinnedRays {
    pub azi: Vec<Vec<ObservationRay>>,
    pub pol: Vec<Vec<ObservationRay>>,
}

pub fn bin_axis(rays: &[ObservationRay], b: usize, axis: Axis) -> Vec<Vec<ObservationRay>> {
    let mut bins = vec![Vec::new(); b];
    for r in rays {
        bins[axis.bin_index(r, b)].push(*r);
    }
    for bin in &mut bins {
        bin.sort_by(|p, q| {
            axis.sort_key(p)
                .total_cmp(&axis.sort_key(q))
                .then(p.path_index.cmp(&q.path_index))
        });
    }
    bins
}

pub fn bin_rays(obs: &SurfacePointObservations, b: usize) -> Result<BinnedRays> {
    if b == 0 {
        return Err(PnsgError::Config("bin count must be at least 1".into()));
    }
    Ok(BinnedRays {
        azi: bin_axis(&obs.rays, b, Axis::Azimuthal),
        pol: bin_axis(&obs.rays, b, Axis::Polar),
    })
}

/// Adjacent-pair gradients within each sorted bin. Pairs closer than
/// `eps_angle` are skipped. With `wrap`, bins of three or more rays also pair
/// the last ray with the first.
pub fn nsg_axis(bins: &[Vec<ObservationRay>], o: &Vec3, eps_angle: f64, wrap: bool) -> Result<Vec<Vec<NsgSample>>> {
    bins.iter()
        .map(|bin| {
            let mut pairs: Vec<(usize, usize)> = (1..bin.len()).map(|j| (j - 1, j)).collect();
            if wrap && bin.len() >= 3 {
                pairs.push((bin.len() - 1, 0));
            }
            let mut out = Vec::with_capacity(pairs.len());
            for (i, j) in pairs {
                match nsg(&bin[i], &bin[j], o, eps_angle) {
                    Ok(s) => out.push(s),
                    Err(PnsgError::DegeneratePair { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect()
}

/// Both gradient sets of one point.
#[derive(Clone, Debug, PartialEq)]
pub struct PnsgFeature {
    pub point_id: u64,
    pub point_xyz: Vec3,
    pub azi_bins: Vec<Vec<NsgSample>>,
    pub pol_bins: Vec<Vec<NsgSample>>,
}

impl PnsgFeature {
    pub fn sample_count(&self) -> usize {
        self.azi_bins.iter().chain(&self.pol_bins).map(Vec::len).sum()
    }

    pub fn max_abs_gradient(&self) -> f64 {
        self.azi_bins
            .iter()
            .chain(&self.pol_bins)
            .flatten()
            .flat_map(|s| s.gradient)
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

pub fn pnsg_point(obs: &SurfacePointObservations, cfg: &PnsgConfig) -> Result<PnsgFeature> {
    cfg.validate()?;
    let binned = bin_rays(obs, cfg.bins)?;
    let o = obs.point.xyz;
    Ok(PnsgFeature {
        point_id: obs.point.id,
        point_xyz: o,
        azi_bins: nsg_axis(&binned.azi, &o, cfg.eps_angle, cfg.wrap_azimuth)?,
        pol_bins: nsg_axis(&binned.pol, &o, cfg.eps_angle, false)?,
    })
}

/// Features for every point, ordered by point id.
pub fn pnsg_scene(points: &[SurfacePointObservations], cfg: &PnsgConfig) -> Result<Vec<PnsgFeature>> {
    cfg.validate()?;
    let mut out = points
        .par_iter()
        .map(|p| pnsg_point(p, cfg))
        .collect::<Result<Vec<_>>>()?;
    out.sort_by_key(|f| f.point_id);
    Ok(out)
}

/// Linear resampling of a sequence onto `len` evenly spaced positions over
/// its index range. A single value is repeated; `len == 1` takes the centre.
pub fn resample_linear(seq: &[f64], len: usize) -> Vec<f64> {
    match seq.len() {
        0 => vec![0.0; len],
        1 => vec![seq[0]; len],
        m => (0..len)
            .map(|k| {
                let t = if len == 1 {
                    0.5 * (m - 1) as f64
                } else {
                    k as f64 * (m - 1) as f64 / (len - 1) as f64
                };
                let i = (t.floor() as usize).min(m - 2);
                let w = t - i as f64;
                seq[i] * (1.0 - w) + seq[i + 1] * w
            })
            .collect(),
    }
}

/// Fixed-shape encoding: `values` is `[2, b, L, 3]` (azimuthal then polar,
/// bin, position, RGB); `mask` has `2·b` entries, 0 for bins without samples.
#[derive(Clone, Debug, PartialEq)]
pub struct PnsgTensor {
    pub values: Tensor,
    pub mask: Vec<u8>,
}

impl PnsgTensor {
    pub fn bins(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn resample(&self) -> usize {
        self.values.shape()[2]
    }
}

pub fn to_tensor(f: &PnsgFeature, len: usize) -> Result<PnsgTensor> {
    if len == 0 {
        return Err(PnsgError::Config("resample length must be at least 1".into()));
    }
    let b = f.azi_bins.len();
    if f.pol_bins.len() != b || b == 0 {
        return Err(PnsgError::Config("feature must have the same non-zero bin count on both axes".into()));
    }
    let mut data = vec![0f32; 2 * b * len * 3];
    let mut mask = vec![0u8; 2 * b];
    for (a, bins) in [&f.azi_bins, &f.pol_bins].into_iter().enumerate() {
        for (i, bin) in bins.iter().enumerate() {
            if bin.is_empty() {
                continue;
            }
            mask[a * b + i] = 1;
            for c in 0..3 {
                let seq: Vec<f64> = bin.iter().map(|s| s.gradient[c]).collect();
                for (k, v) in resample_linear(&seq, len).into_iter().enumerate() {
                    data[((a * b + i) * len + k) * 3 + c] = v as f32;
                }
            }
        }
    }
    let values = Tensor::new(&[2, b, len, 3], data).expect("shape matches buffer");
    Ok(PnsgTensor { values, mask })
}

/// One point of a feature dump.
#[derive(Clone, Debug, PartialEq)]
pub struct PnsgRecord {
    pub point_id: u64,
    pub xyz: [f64; 3],
    pub tensor: PnsgTensor,
}

impl PnsgRecord {
    pub fn from_feature(f: &PnsgFeature, len: usize) -> Result<Self> {
        Ok(Self {
            point_id: f.point_id,
            xyz: [f.point_xyz.x, f.point_xyz.y, f.point_xyz.z],
            tensor: to_tensor(f, len)?,
        })
    }
}

/// Contents of a feature dump.
#[derive(Clone, Debug, PartialEq)]
pub struct PnsgDump {
    pub bins: usize,
    pub resample: usize,
    pub wrap_azimuth: bool,
    pub records: Vec<PnsgRecord>,
}

/// Little-endian layout: magic (8 bytes), version u32, flags u32, bins u32,
/// resample u32, record count u64, then per record: id u64, xyz 3×f64, mask
/// 2·b bytes, values 2·b·L·3 f32.
pub fn write_dump<W: Write>(w: &mut W, dump: &PnsgDump) -> Result<()> {
    let (b, l) = (dump.bins, dump.resample);
    w.write_all(DUMP_MAGIC)?;
    w.write_all(&DUMP_VERSION.to_le_bytes())?;
    let flags = if dump.wrap_azimuth { FLAG_WRAP_AZIMUTH } else { 0 };
    w.write_all(&flags.to_le_bytes())?;
    w.write_all(&(b as u32).to_le_bytes())?;
    w.write_all(&(l as u32).to_le_bytes())?;
    w.write_all(&(dump.records.len() as u64).to_le_bytes())?;
    for r in &dump.records {
        if r.tensor.values.shape() != [2, b, l, 3] || r.tensor.mask.len() != 2 * b {
            return Err(PnsgError::Format(format!("record {} does not match {b} bins × {l}", r.point_id)));
        }
        w.write_all(&r.point_id.to_le_bytes())?;
        for v in r.xyz {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&r.tensor.mask)?;
        for v in r.tensor.values.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_dump<R: Read>(r: &mut R) -> Result<PnsgDump> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<&[u8]> {
        if bytes.len() - pos < n {
            return Err(PnsgError::Format(format!("truncated {what} at byte {pos}")));
        }
        pos += n;
        Ok(&bytes[pos - n..pos])
    };
    if take(8, "magic")? != DUMP_MAGIC {
        return Err(PnsgError::Format("bad magic".into()));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let version = u32_at(take(4, "version")?);
    if version != DUMP_VERSION {
        return Err(PnsgError::Format(format!("unsupported version {version}")));
    }
    let flags = u32_at(take(4, "flags")?);
    let b = u32_at(take(4, "bin count")?) as usize;
    let l = u32_at(take(4, "resample length")?) as usize;
    let count = u64::from_le_bytes(take(8, "record count")?.try_into().unwrap());
    if b == 0 || l == 0 {
        return Err(PnsgError::Format("zero bin count or resample length".into()));
    }
    let n = 2 * b * l * 3;
    let mut records = Vec::new();
    for _ in 0..count {
        let point_id = u64::from_le_bytes(take(8, "point id")?.try_into().unwrap());
        let mut xyz = [0.0; 3];
        for v in &mut xyz {
            *v = f64::from_le_bytes(take(8, "xyz")?.try_into().unwrap());
        }
        let mask = take(2 * b, "mask")?.to_vec();
        let data: Vec<f32> = take(4 * n, "values")?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        records.push(PnsgRecord {
            point_id,
            xyz,
            tensor: PnsgTensor {
                values: Tensor::new(&[2, b, l, 3], data).expect("sized above"),
                mask,
            },
        });
    }
    if pos != bytes.len() {
        return Err(PnsgError::Format(format!("{} trailing bytes", bytes.len() - pos)));
    }
    Ok(PnsgDump {
        bins: b,
        resample: l,
        wrap_azimuth: flags & FLAG_WRAP_AZIMUTH != 0,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ray(azimuth: f64, polar: f64, rgb: [f64; 3], path_index: usize) -> ObservationRay {
        let frame = LocalFrame::world();
        ObservationRay {
            viewpoint: crate::geometry::from_spherical(azimuth, polar, &frame),
            pixel_value: rgb,
            azimuth,
            polar,
            path_index,
        }
    }

    fn point(id: u64) -> SparsePoint {
        SparsePoint {
            id,
            xyz: Vec3::zeros(),
            rgb: [0; 3],
            reproj_error: 0.0,
            track: vec![],
        }
    }

    fn obs(rays: Vec<ObservationRay>) -> SurfacePointObservations {
        SurfacePointObservations {
            point: point(0),
            rays,
            frame: LocalFrame::world(),
        }
    }

    #[test]
    fn nsg_direct_substitution() {
        // two viewpoints on one meridian, 0.3 rad apart
        let a = ray(0.0, 1.0, [0.8, 0.4, 0.2], 0);
        let b = ray(0.0, 1.3, [0.2, 0.4, 0.8], 1);
        let s = nsg(&a, &b, &Vec3::zeros(), DEFAULT_EPS_ANGLE).unwrap();
        for (g, e) in s.gradient.iter().zip([2.0, 0.0, -2.0]) {
            assert_abs_diff_eq!(*g, e, epsilon = 1e-12);
        }
        let r = nsg(&b, &a, &Vec3::zeros(), DEFAULT_EPS_ANGLE).unwrap();
        for (g, h) in s.gradient.iter().zip(r.gradient) {
            assert_eq!(*g, -h);
        }
        let same = nsg(&a, &ObservationRay { pixel_value: a.pixel_value, ..b }, &Vec3::zeros(), 1e-6).unwrap();
        assert_eq!(same.gradient, [0.0; 3]);
    }

    #[test]
    fn coincident_rays_are_rejected() {
        let a = ray(0.5, 0.5, [1.0; 3], 0);
        assert!(matches!(
            nsg(&a, &a, &Vec3::zeros(), DEFAULT_EPS_ANGLE),
            Err(PnsgError::DegeneratePair { .. })
        ));
    }

    #[test]
    fn single_bin_sorts_by_azimuth() {
        let rays = vec![ray(0.4, 0.1, [0.0; 3], 0), ray(-1.0, 2.0, [0.0; 3], 1), ray(2.0, 1.0, [0.0; 3], 2)];
        let binned = bin_rays(&obs(rays), 1).unwrap();
        let order: Vec<usize> = binned.azi[0].iter().map(|r| r.path_index).collect();
        assert_eq!(order, [1, 0, 2]);
        let order: Vec<usize> = binned.pol[0].iter().map(|r| r.path_index).collect();
        assert_eq!(order, [0, 2, 1]);
    }

    #[test]
    fn halfway_polar_goes_to_lower_bin() {
        // centres of 4 bins over [0, π] at π/8, 3π/8, ...; the boundary π/4
        // is equidistant from the first two
        let r = ray(0.0, PI / 4.0, [0.0; 3], 0);
        assert_eq!(Axis::Azimuthal.bin_index(&r, 4), 0);
        let r = ray(0.0, PI / 4.0 + 1e-12, [0.0; 3], 0);
        assert_eq!(Axis::Azimuthal.bin_index(&r, 4), 1);
        let r = ray(-PI + 2.0 * PI / 4.0, 0.0, [0.0; 3], 0);
        assert_eq!(Axis::Polar.bin_index(&r, 4), 0);
        assert_eq!(Axis::Polar.bin_index(&ray(PI - 1e-9, 0.0, [0.0; 3], 0), 4), 3);
        assert_eq!(Axis::Azimuthal.bin_index(&ray(0.0, PI, [0.0; 3], 0), 4), 3);
    }

    #[test]
    fn binning_conserves_rays_against_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for b in 1..=9 {
            let rays: Vec<_> = (0..40)
                .map(|i| ray(rng.random_range(-PI..PI), rng.random_range(0.0..PI), [0.0; 3], i))
                .collect();
            let binned = bin_rays(&obs(rays.clone()), b).unwrap();
            for (axis, bins) in [(Axis::Azimuthal, &binned.azi), (Axis::Polar, &binned.pol)] {
                assert_eq!(bins.iter().map(Vec::len).sum::<usize>(), rays.len());
                for (i, bin) in bins.iter().enumerate() {
                    // brute force: nearest centre by distance
                    let members: Vec<usize> = rays
                        .iter()
                        .filter(|r| {
                            let (angle, lo, span) = match axis {
                                Axis::Azimuthal => (r.polar, 0.0, PI),
                                Axis::Polar => (r.azimuth, -PI, 2.0 * PI),
                            };
                            let d = |k: usize| (angle - (lo + (k as f64 + 0.5) * span / b as f64)).abs();
                            (0..b).min_by(|&p, &q| d(p).total_cmp(&d(q))).unwrap() == i
                        })
                        .map(|r| r.path_index)
                        .collect();
                    let mut got: Vec<usize> = bin.iter().map(|r| r.path_index).collect();
                    assert!(bin.windows(2).all(|w| axis.sort_key(&w[0]) <= axis.sort_key(&w[1])));
                    got.sort_unstable();
                    assert_eq!(got, members);
                }
            }
        }
    }

    #[test]
    fn bin_sample_counts() {
        let o = Vec3::zeros();
        let one = vec![vec![ray(0.0, 1.0, [0.0; 3], 0)]];
        assert!(nsg_axis(&one, &o, 1e-6, false).unwrap()[0].is_empty());
        let three = vec![vec![
            ray(-1.0, 1.0, [0.1, 0.2, 0.3], 0),
            ray(0.0, 1.0, [0.5, 0.2, 0.3], 1),
            ray(1.0, 1.0, [0.5, 0.2, 0.3], 2),
        ]];
        let s = nsg_axis(&three, &o, 1e-6, false).unwrap();
        assert_eq!(s[0].len(), 2);
        assert!(s[0][0].gradient[0] < 0.0);
        assert_eq!(s[0][1].gradient, [0.0; 3]);
        assert_eq!(nsg_axis(&three, &o, 1e-6, true).unwrap()[0].len(), 3);
    }

    #[test]
    fn constant_colour_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rays: Vec<_> = (0..30)
            .map(|i| ray(rng.random_range(-PI..PI), rng.random_range(0.0..PI), [0.3, 0.6, 0.9], i))
            .collect();
        let f = pnsg_point(&obs(rays), &PnsgConfig::default()).unwrap();
        assert!(f.sample_count() > 0);
        assert_eq!(f.max_abs_gradient(), 0.0);
    }

    #[test]
    fn resample_preserves_length_l_and_masks_empty_bins() {
        let samples: Vec<NsgSample> = (0..4)
            .map(|k| NsgSample {
                gradient: [k as f64, -(k as f64), 0.5],
                mid_azimuth: 0.0,
                mid_polar: 0.0,
            })
            .collect();
        let f = PnsgFeature {
            point_id: 1,
            point_xyz: Vec3::zeros(),
            azi_bins: vec![samples.clone(), vec![]],
            pol_bins: vec![vec![], samples[..1].to_vec()],
        };
        let t = to_tensor(&f, 4).unwrap();
        assert_eq!(t.values.shape(), [2, 2, 4, 3]);
        assert_eq!(t.mask, [1, 0, 0, 1]);
        let v = t.values.data();
        for k in 0..4 {
            assert_eq!(&v[k * 3..k * 3 + 3], &[k as f32, -(k as f32), 0.5]);
        }
        assert!(v[12..36].iter().all(|&x| x == 0.0));
        assert!(v[36..].chunks(3).all(|c| c == [0.0, 0.0, 0.5]));
    }

    #[test]
    fn resample_round_trip_within_lipschitz_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = rng.random_range(2..20);
            let len = rng.random_range(2..40);
            let seq: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lip = seq.windows(2).map(|w| (w[1] - w[0]).abs()).fold(0.0, f64::max);
            let back = resample_linear(&resample_linear(&seq, len), m);
            // the coarse grid spacing in original index units
            let h = (m - 1) as f64 / (len - 1) as f64;
            for (a, b) in seq.iter().zip(&back) {
                assert!((a - b).abs() <= lip * h / 2.0 + 1e-12, "m={m} len={len}");
            }
        }
    }

    #[test]
    fn dump_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rays: Vec<_> = (0..12)
            .map(|i| ray(rng.random_range(-PI..PI), rng.random_range(0.0..PI), [rng.random(), rng.random(), rng.random()], i))
            .collect();
        let cfg = PnsgConfig {
            bins: 3,
            resample: 5,
            ..Default::default()
        };
        let f = pnsg_point(&obs(rays), &cfg).unwrap();
        let dump = PnsgDump {
            bins: 3,
            resample: 5,
            wrap_azimuth: true,
            records: vec![PnsgRecord::from_feature(&f, 5).unwrap()],
        };
        let mut buf = Vec::new();
        write_dump(&mut buf, &dump).unwrap();
        assert_eq!(&buf[..8], DUMP_MAGIC);
        assert_eq!(buf.len(), 32 + 8 + 24 + 6 + 4 * 90);
        assert_eq!(read_dump(&mut buf.as_slice()).unwrap(), dump);
        buf.push(0);
        assert!(read_dump(&mut buf.as_slice()).is_err());
        assert!(read_dump(&mut &buf[..20]).is_err());
    }
}
