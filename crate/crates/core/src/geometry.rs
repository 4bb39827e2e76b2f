//! Pinhole cameras, rigid poses, projection, and spherical coordinates about
//! a surface point.
//!
//! Pixel convention: texel `(i, j)` has its centre at `(u, v) = (i, j)`, so a
//! projection is in view when `0 ≤ u ≤ width − 1` and `0 ≤ v ≤ height − 1`.

use std::f64::consts::PI;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::image_io::ViewImage;

pub type Vec3 = Vector3<f64>;

/// World "up" used to orient local spherical frames.
pub const WORLD_UP: Vec3 = Vector3::new(0.0, 0.0, 1.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("quaternion norm {norm} is not unit")]
    NonUnitQuaternion { norm: f64 },
    #[error("point coincides with the camera centre")]
    PointAtCameraCenter,
    #[error("zero-length direction")]
    DegenerateDirection,
    #[error("sample coordinates ({u}, {v}) outside a {width}x{height} image")]
    OutOfRange {
        u: f64,
        v: f64,
        width: usize,
        height: usize,
    },
    #[error("image is {got_w}x{got_h} but camera expects {want_w}x{want_h}")]
    ImageSizeMismatch {
        got_w: usize,
        got_h: usize,
        want_w: usize,
        want_h: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl PinholeCamera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self, GeometryError> {
        let cam = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(GeometryError::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }
}

/// World→camera rigid transform, `x_cam = R·x_world + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vec3,
}

impl RigidPose {
    pub const UNIT_TOLERANCE: f64 = 1e-6;

    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Builds a pose from `(w, x, y, z)` coefficients that must already be unit
    /// length to within [`Self::UNIT_TOLERANCE`].
    pub fn from_wxyz(q: [f64; 4], translation: Vec3) -> Result<Self, GeometryError> {
        let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
        let norm = quat.norm();
        if (norm - 1.0).abs() > Self::UNIT_TOLERANCE {
            return Err(GeometryError::NonUnitQuaternion { norm });
        }
        Ok(Self {
            rotation: UnitQuaternion::new_normalize(quat),
            translation,
        })
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn world_to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation.transform_vector(p) + self.translation
    }

    /// Camera centre in world coordinates, `−Rᵀt`.
    pub fn camera_center(&self) -> Vec3 {
        -(self.rotation.inverse_transform_vector(&self.translation))
    }

    /// Pose of a camera at `eye` looking at `target`. Camera axes follow the
    /// x-right, y-down, z-forward convention; `up` only fixes the roll.
    pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Result<Self, GeometryError> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or(GeometryError::DegenerateDirection)?;
        let mut right = forward.cross(up);
        if right.norm() < 1e-9 {
            // up parallel to the view direction: pick any perpendicular
            let alt = if forward.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            right = forward.cross(&alt);
        }
        let right = right.normalize();
        let down = forward.cross(&right);
        let rot = nalgebra::Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let rotation = UnitQuaternion::from_matrix(&rot);
        let translation = -(rotation.transform_vector(eye));
        Ok(Self { rotation, translation })
    }
}

pub fn camera_center(pose: &RigidPose) -> Vec3 {
    pose.camera_center()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosedView {
    pub image: ViewImage,
    pub camera: PinholeCamera,
    pub pose: RigidPose,
    /// Ordinal along the camera trajectory; unique within a scene.
    pub path_index: usize,
    /// Identifier used by sparse-reconstruction tracks.
    pub image_id: u32,
    pub name: String,
}

impl PosedView {
    pub fn new(
        image: ViewImage,
        camera: PinholeCamera,
        pose: RigidPose,
        path_index: usize,
        image_id: u32,
        name: impl Into<String>,
    ) -> Result<Self, GeometryError> {
        if image.width() != camera.width || image.height() != camera.height {
            return Err(GeometryError::ImageSizeMismatch {
                got_w: image.width(),
                got_h: image.height(),
                want_w: camera.width,
                want_h: camera.height,
            });
        }
        Ok(Self {
            image,
            camera,
            pose,
            path_index,
            image_id,
            name: name.into(),
        })
    }

    pub fn center(&self) -> Vec3 {
        self.pose.camera_center()
    }
}

/// Result of projecting a world point into a view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Projection {
    InView { u: f64, v: f64, depth: f64 },
    OutOfView,
}

/// Pinhole projection without distortion.
pub fn project(point: &Vec3, camera: &PinholeCamera, pose: &RigidPose) -> Result<Projection, GeometryError> {
    let pc = pose.world_to_camera(point);
    if pc.norm() == 0.0 {
        return Err(GeometryError::PointAtCameraCenter);
    }
    if pc.z <= 0.0 {
        return Ok(Projection::OutOfView);
    }
    let u = camera.fx * pc.x / pc.z + camera.cx;
    let v = camera.fy * pc.y / pc.z + camera.cy;
    if camera.contains(u, v) {
        Ok(Projection::InView { u, v, depth: pc.z })
    } else {
        Ok(Projection::OutOfView)
    }
}

pub fn project_into(point: &Vec3, view: &PosedView) -> Result<Projection, GeometryError> {
    project(point, &view.camera, &view.pose)
}

/// Bilinear RGB sample at a sub-pixel location.
pub fn sample_pixel(image: &ViewImage, u: f64, v: f64) -> Result<[f64; 3], GeometryError> {
    let (w, h) = (image.width(), image.height());
    let inside = u >= 0.0 && v >= 0.0 && u <= (w - 1) as f64 && v <= (h - 1) as f64;
    if !inside || w == 0 || h == 0 {
        return Err(GeometryError::OutOfRange {
            u,
            v,
            width: w,
            height: h,
        });
    }
    let (i0, j0) = (u.floor() as usize, v.floor() as usize);
    let (i1, j1) = ((i0 + 1).min(w - 1), (j0 + 1).min(h - 1));
    let (fu, fv) = (u - i0 as f64, v - j0 as f64);
    let mut out = [0.0; 3];
    let taps = [
        (i0, j0, (1.0 - fu) * (1.0 - fv)),
        (i1, j0, fu * (1.0 - fv)),
        (i0, j1, (1.0 - fu) * fv),
        (i1, j1, fu * fv),
    ];
    for (i, j, wt) in taps {
        if wt == 0.0 {
            continue;
        }
        let px = image.pixel(i, j);
        for c in 0..3 {
            out[c] += wt * px[c] as f64;
        }
    }
    Ok(out)
}

/// Orthonormal basis centred on a surface point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFrame {
    pub x: Vec3,
    pub y: Vec3,
    pub z: Vec3,
}

impl LocalFrame {
    pub fn world() -> Self {
        Self {
            x: Vec3::x(),
            y: Vec3::y(),
            z: Vec3::z(),
        }
    }

    /// Frame with `z` along `axis` and `x` along the tangential part of
    /// [`WORLD_UP`] (world x when `axis` is parallel to up).
    pub fn from_axis(axis: &Vec3) -> Result<Self, GeometryError> {
        let z = axis.try_normalize(1e-12).ok_or(GeometryError::DegenerateDirection)?;
        let tangent_up = WORLD_UP - z * WORLD_UP.dot(&z);
        let x = match tangent_up.try_normalize(1e-9) {
            Some(x) => x,
            None => {
                let wx = Vec3::x();
                (wx - z * wx.dot(&z)).normalize()
            }
        };
        let y = z.cross(&x);
        Ok(Self { x, y, z })
    }

    /// Frame whose `z` axis is the mean unit direction from `origin` towards
    /// the viewpoints. Falls back to [`WORLD_UP`] when the directions cancel.
    pub fn from_viewpoints(origin: &Vec3, viewpoints: &[Vec3]) -> Result<Self, GeometryError> {
        let mut sum = Vec3::zeros();
        for vp in viewpoints {
            let d = (vp - origin).try_normalize(0.0).ok_or(GeometryError::DegenerateDirection)?;
            sum += d;
        }
        match sum.try_normalize(1e-9) {
            Some(z) => Self::from_axis(&z),
            None => Self::from_axis(&WORLD_UP),
        }
    }
}

/// `(azimuth, polar)` of `viewpoint` seen from `origin` in `frame`.
/// Polar is measured from the frame's z axis in `[0, π]`; azimuth is in `[−π, π)`.
pub fn to_spherical(viewpoint: &Vec3, origin: &Vec3, frame: &LocalFrame) -> Result<(f64, f64), GeometryError> {
    let d = viewpoint - origin;
    let len = d.norm();
    if len == 0.0 || !len.is_finite() {
        return Err(GeometryError::DegenerateDirection);
    }
    let (lx, ly, lz) = (d.dot(&frame.x), d.dot(&frame.y), d.dot(&frame.z));
    let polar = lx.hypot(ly).atan2(lz);
    let mut azimuth = ly.atan2(lx);
    if azimuth >= PI {
        azimuth -= 2.0 * PI;
    }
    Ok((azimuth, polar))
}

/// Unit world direction for `(azimuth, polar)` in `frame`.
pub fn from_spherical(azimuth: f64, polar: f64, frame: &LocalFrame) -> Vec3 {
    let (sp, cp) = polar.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    frame.x * (sp * ca) + frame.y * (sp * sa) + frame.z * cp
}

/// Angle `∠aob` in `[0, π]`.
pub fn angular_disparity(a: &Vec3, b: &Vec3, o: &Vec3) -> Result<f64, GeometryError> {
    let da = (a - o).try_normalize(0.0).ok_or(GeometryError::DegenerateDirection)?;
    let db = (b - o).try_normalize(0.0).ok_or(GeometryError::DegenerateDirection)?;
    // atan2 of |cross| and dot is accurate near 0 and π, unlike acos alone
    let angle = da.cross(&db).norm().atan2(da.dot(&db));
    Ok(angle.clamp(0.0, PI))
}

/// One pixel observing a surface point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservationRay {
    pub viewpoint: Vec3,
    pub pixel_value: [f64; 3],
    pub azimuth: f64,
    pub polar: f64,
    pub path_index: usize,
}

/// How views are chosen before the geometric in-bounds test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Visibility {
    /// Only views listed in the point's reconstruction track.
    #[default]
    Track,
    /// Every view the point projects into.
    Geometric,
}

/// Observation rays for a point, sorted by `path_index`. Views where the
/// point is behind the camera or outside the image are skipped; with
/// [`Visibility::Track`] only views whose `image_id` is in `track` are
/// considered. Spherical angles are left at zero; see
/// [`observe_point`] for the full construction.
pub fn visibility_filter(
    point: &Vec3,
    track: &[u32],
    views: &[PosedView],
    mode: Visibility,
) -> Result<Vec<ObservationRay>, GeometryError> {
    let mut rays = Vec::new();
    for view in views {
        if mode == Visibility::Track && !track.contains(&view.image_id) {
            continue;
        }
        let proj = match project_into(point, view) {
            Ok(p) => p,
            Err(GeometryError::PointAtCameraCenter) => continue,
            Err(e) => return Err(e),
        };
        if let Projection::InView { u, v, .. } = proj {
            rays.push(ObservationRay {
                viewpoint: view.center(),
                pixel_value: sample_pixel(&view.image, u, v)?,
                azimuth: 0.0,
                polar: 0.0,
                path_index: view.path_index,
            });
        }
    }
    rays.sort_by_key(|r| r.path_index);
    Ok(rays)
}

/// Visible rays for a point together with the local frame they were
/// expressed in. Fewer than one ray yields an empty list and a world frame.
pub fn observe_point(
    point: &Vec3,
    track: &[u32],
    views: &[PosedView],
    mode: Visibility,
) -> Result<(Vec<ObservationRay>, LocalFrame), GeometryError> {
    let mut rays = visibility_filter(point, track, views, mode)?;
    if rays.is_empty() {
        return Ok((rays, LocalFrame::world()));
    }
    let viewpoints: Vec<Vec3> = rays.iter().map(|r| r.viewpoint).collect();
    let frame = LocalFrame::from_viewpoints(point, &viewpoints)?;
    for r in &mut rays {
        let (az, pol) = to_spherical(&r.viewpoint, point, &frame)?;
        r.azimuth = az;
        r.polar = pol;
    }
    Ok((rays, frame))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::Matrix4;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> RigidPose {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        RigidPose {
            rotation: UnitQuaternion::new_normalize(q),
            translation: Vec3::new(
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-3.0..3.0),
            ),
        }
    }

    /// Homogeneous world→camera matrix from raw quaternion coefficients.
    fn homogeneous(pose: &RigidPose) -> Matrix4<f64> {
        let [w, x, y, z] = pose.wxyz();
        let t = pose.translation;
        Matrix4::new(
            1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y), t.x,
            2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x), t.y,
            2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y), t.z,
            0.0, 0.0, 0.0, 1.0,
        )
    }

    #[test]
    fn camera_center_examples() {
        assert_eq!(RigidPose::identity().camera_center(), Vec3::zeros());
        let pose = RigidPose::from_wxyz([1.0, 0.0, 0.0, 0.0], Vec3::new(1.0, 2.0, 3.0)).unwrap();
        assert_eq!(pose.camera_center(), Vec3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn camera_center_matches_matrix_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let pose = random_pose(&mut rng);
            let inv = homogeneous(&pose).try_inverse().unwrap();
            let c = pose.camera_center();
            for i in 0..3 {
                assert_abs_diff_eq!(c[i], inv[(i, 3)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        assert!(matches!(
            RigidPose::from_wxyz([1.1, 0.0, 0.0, 0.0], Vec3::zeros()),
            Err(GeometryError::NonUnitQuaternion { .. })
        ));
    }

    #[test]
    fn camera_validation() {
        assert!(PinholeCamera::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(PinholeCamera::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
        assert!(PinholeCamera::new(1.0, 1.0, 3.5, 0.0, 4, 4).is_ok());
    }

    #[test]
    fn projection_examples() {
        let cam = PinholeCamera::new(100.0, 100.0, 50.0, 40.0, 200, 100).unwrap();
        let pose = RigidPose::identity();
        assert_eq!(
            project(&Vec3::new(0.0, 0.0, 5.0), &cam, &pose).unwrap(),
            Projection::InView {
                u: 50.0,
                v: 40.0,
                depth: 5.0
            }
        );
        match project(&Vec3::new(1.0, 0.0, 2.0), &cam, &pose).unwrap() {
            Projection::InView { u, .. } => assert_eq!(u, 100.0),
            other => panic!("{other:?}"),
        }
        assert_eq!(project(&Vec3::new(0.0, 0.0, -1.0), &cam, &pose).unwrap(), Projection::OutOfView);
        assert_eq!(project(&Vec3::new(10.0, 0.0, 1.0), &cam, &pose).unwrap(), Projection::OutOfView);
        assert_eq!(project(&Vec3::zeros(), &cam, &pose), Err(GeometryError::PointAtCameraCenter));
    }

    #[test]
    fn look_at_centres_the_target() {
        let cam = PinholeCamera::new(60.0, 60.0, 31.5, 31.5, 64, 64).unwrap();
        let eye = Vec3::new(3.0, -2.0, 1.5);
        let pose = RigidPose::look_at(&eye, &Vec3::zeros(), &WORLD_UP).unwrap();
        assert!((pose.camera_center() - eye).norm() < 1e-12);
        match project(&Vec3::zeros(), &cam, &pose).unwrap() {
            Projection::InView { u, v, .. } => {
                assert_abs_diff_eq!(u, 31.5, epsilon = 1e-9);
                assert_abs_diff_eq!(v, 31.5, epsilon = 1e-9);
            }
            other => panic!("{other:?}"),
        }
        // world up appears towards the top of the image (smaller v)
        match project(&Vec3::new(0.0, 0.0, 0.2), &cam, &pose).unwrap() {
            Projection::InView { v, .. } => assert!(v < 31.5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bilinear_sampling() {
        let img = ViewImage::from_fn(3, 2, |i, j| [i as f32, j as f32, (i + j) as f32]);
        assert_eq!(sample_pixel(&img, 2.0, 1.0).unwrap(), [2.0, 1.0, 3.0]);
        assert_eq!(sample_pixel(&img, 0.5, 0.0).unwrap(), [0.5, 0.0, 0.5]);
        assert!(sample_pixel(&img, 2.5, 0.0).is_err());
        assert!(sample_pixel(&img, -0.1, 0.0).is_err());

        // weighted-sum oracle at random coordinates
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = ViewImage::from_fn(5, 4, |i, j| [(i * 7 + j * 3) as f32 * 0.01, (i * j) as f32 * 0.02, 0.5]);
        for _ in 0..100 {
            let u: f64 = rng.random_range(0.0..4.0);
            let v: f64 = rng.random_range(0.0..3.0);
            let got = sample_pixel(&img, u, v).unwrap();
            let mut expect = [0.0; 3];
            for j in 0..4 {
                for i in 0..5 {
                    let wu = (1.0 - (u - i as f64).abs()).max(0.0);
                    let wv = (1.0 - (v - j as f64).abs()).max(0.0);
                    let px = img.pixel(i, j);
                    for c in 0..3 {
                        expect[c] += wu * wv * px[c] as f64;
                    }
                }
            }
            for c in 0..3 {
                assert_abs_diff_eq!(got[c], expect[c], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn spherical_axes() {
        let f = LocalFrame::world();
        let o = Vec3::zeros();
        let (_, pol) = to_spherical(&Vec3::new(0.0, 0.0, 2.0), &o, &f).unwrap();
        assert_eq!(pol, 0.0);
        let (az, pol) = to_spherical(&Vec3::new(3.0, 0.0, 0.0), &o, &f).unwrap();
        assert_eq!(az, 0.0);
        assert_abs_diff_eq!(pol, PI / 2.0, epsilon = 1e-15);
        // the negative x axis maps to −π, not π
        let (az, _) = to_spherical(&Vec3::new(-1.0, 0.0, 0.0), &o, &f).unwrap();
        assert_eq!(az, -PI);
        assert!(to_spherical(&o, &o, &f).is_err());
    }

    #[test]
    fn frame_from_axis_is_orthonormal_with_up_fallback() {
        for axis in [Vec3::new(0.3, -0.2, 0.9), WORLD_UP, -WORLD_UP, Vec3::x()] {
            let f = LocalFrame::from_axis(&axis).unwrap();
            assert_abs_diff_eq!(f.x.norm(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f.y.norm(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f.x.dot(&f.z), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f.y.dot(&f.z), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(f.x.cross(&f.y).dot(&f.z), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn angular_disparity_examples() {
        let o = Vec3::zeros();
        let (a, b) = (Vec3::x(), Vec3::y());
        assert_abs_diff_eq!(angular_disparity(&a, &b, &o).unwrap(), PI / 2.0, epsilon = 1e-15);
        assert_eq!(angular_disparity(&a, &a, &o).unwrap(), 0.0);
        assert_abs_diff_eq!(angular_disparity(&a, &(-a), &o).unwrap(), PI, epsilon = 1e-15);
        assert!(angular_disparity(&o, &b, &o).is_err());
    }
}
