//! Analytic scenes rendered from posed pinhole cameras. The world is z-up;
//! surfaces are centred at the origin.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::colmap::{self, ColmapError, ImageRecord, Point2D, SceneBundle, SparseModel, SparsePoint, TrackEntry};
use crate::geometry::{
    from_spherical, project, to_spherical, GeometryError, LocalFrame, PinholeCamera, PosedView, Projection,
    RigidPose, Vec3,
};
use crate::image_io::ViewImage;
use crate::pipeline::{ManifestView, PipelineError, SceneManifest};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Surface {
    /// Square in the z = 0 plane with normal +z.
    Plane { half_size: f64 },
    Sphere { radius: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Albedo {
    Constant { rgb: [f64; 3] },
    /// Alternating squares of side `cell` in world x/y.
    Checker { a: [f64; 3], b: [f64; 3], cell: f64 },
    /// `base + amplitude·sin(frequency·x)·cos(frequency·y)` per channel.
    Sinusoid { base: [f64; 3], amplitude: [f64; 3], frequency: f64 },
}

impl Albedo {
    pub fn at(&self, p: &Vec3) -> [f64; 3] {
        match *self {
            Albedo::Constant { rgb } => rgb,
            Albedo::Checker { a, b, cell } => {
                let k = (p.x / cell).floor() as i64 + (p.y / cell).floor() as i64;
                if k.rem_euclid(2) == 0 {
                    a
                } else {
                    b
                }
            }
            Albedo::Sinusoid {
                base,
                amplitude,
                frequency,
            } => {
                let s = (frequency * p.x).sin() * (frequency * p.y).cos();
                [0, 1, 2].map(|c| base[c] + amplitude[c] * s)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shading {
    /// View-independent colour.
    Lambertian { albedo: Albedo },
    /// `base + k_azi·azimuth + k_pol·polar` in every channel, with the camera's
    /// angles measured in the shading frame of the hit point.
    AngularLinear { base: [f64; 3], k_azi: f64, k_pol: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rig {
    /// `count` cameras evenly spaced in azimuth at a fixed polar angle.
    Orbit { count: usize, radius: f64, polar: f64 },
    /// Every polar angle combined with `azimuths` evenly spaced azimuths,
    /// ring by ring.
    Grid { polars: Vec<f64>, azimuths: usize, radius: f64 },
    /// `count` cameras at one azimuth with polar angles evenly spaced over
    /// `[polar_min, polar_max]`.
    PolarArc {
        count: usize,
        radius: f64,
        polar_min: f64,
        polar_max: f64,
        azimuth: f64,
    },
}

impl Rig {
    pub fn centers(&self) -> Vec<Vec3> {
        let w = LocalFrame::world();
        match self {
            Rig::Orbit { count, radius, polar } => (0..*count)
                .map(|k| from_spherical(2.0 * PI * k as f64 / *count as f64, *polar, &w) * *radius)
                .collect(),
            Rig::Grid { polars, azimuths, radius } => polars
                .iter()
                .flat_map(|&p| (0..*azimuths).map(move |k| (p, 2.0 * PI * k as f64 / *azimuths as f64)))
                .map(|(p, a)| from_spherical(a, p, &w) * *radius)
                .collect(),
            Rig::PolarArc {
                count,
                radius,
                polar_min,
                polar_max,
                azimuth,
            } => (0..*count)
                .map(|k| {
                    let t = if *count > 1 { k as f64 / (*count - 1) as f64 } else { 0.5 };
                    from_spherical(*azimuth, polar_min + t * (polar_max - polar_min), &w) * *radius
                })
                .collect(),
        }
    }
}

/// Per-view constant colour offset added to surface pixels, drawn from
/// `sigma·N(0, 1)` per channel with stream `path_index`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewNoise {
    pub sigma: f64,
    pub seed: u64,
}

impl ViewNoise {
    pub fn offset(&self, path_index: usize) -> [f64; 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(path_index as u64);
        [0; 3].map(|_| {
            let n: f64 = StandardNormal.sample(&mut rng);
            self.sigma * n
        })
    }
}

/// View-dependent colour error added on the surface:
/// `amplitude·sin(azimuth_frequency·azimuth + polar_frequency·polar + phase[c])`
/// with the camera angles measured in the shading frame of the hit point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AngularWave {
    pub amplitude: f64,
    pub azimuth_frequency: f64,
    pub polar_frequency: f64,
    pub phase: [f64; 3],
}

impl AngularWave {
    pub fn at(&self, azimuth: f64, polar: f64) -> [f64; 3] {
        let t = self.azimuth_frequency * azimuth + self.polar_frequency * polar;
        self.phase.map(|p| self.amplitude * (t + p).sin())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub surface: Surface,
    pub shading: Shading,
    pub rig: Rig,
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in degrees.
    pub fov_deg: f64,
    pub background: [f64; 3],
    pub noise: Option<ViewNoise>,
    #[serde(default)]
    pub angular_noise: Option<AngularWave>,
    /// Sparse points form a `points_per_side²` grid (plane) or a Fibonacci
    /// set of that many points (sphere).
    pub points_per_side: usize,
    /// Fraction of the half-size (plane) covered by the point grid.
    pub point_extent: f64,
}

impl Default for AnalyticScene {
    /// Lambertian unit plane seen by an 8-view orbit.
    fn default() -> Self {
        Self {
            surface: Surface::Plane { half_size: 1.0 },
            shading: Shading::Lambertian {
                albedo: Albedo::Constant { rgb: [0.6, 0.4, 0.3] },
            },
            rig: Rig::Orbit {
                count: 8,
                radius: 4.0,
                polar: PI / 4.0,
            },
            width: 64,
            height: 64,
            fov_deg: 50.0,
            background: [0.5; 3],
            noise: None,
            angular_noise: None,
            points_per_side: 6,
            point_extent: 0.5,
        }
    }
}

pub const CAMERA_ID: u32 = 1;

impl AnalyticScene {
    pub fn camera(&self) -> Result<PinholeCamera, GeometryError> {
        let cx = (self.width as f64 - 1.0) / 2.0;
        let cy = (self.height as f64 - 1.0) / 2.0;
        let f = (self.width as f64 / 2.0) / (self.fov_deg.to_radians() / 2.0).tan();
        PinholeCamera::new(f, f, cx, cy, self.width, self.height)
    }

    pub fn poses(&self) -> Result<Vec<RigidPose>, GeometryError> {
        self.rig
            .centers()
            .iter()
            .map(|c| RigidPose::look_at(c, &Vec3::zeros(), &Vec3::z()))
            .collect()
    }

    /// Nearest hit of a ray with the surface and the outward normal there.
    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(Vec3, Vec3)> {
        match self.surface {
            Surface::Plane { half_size } => {
                if dir.z.abs() < 1e-15 {
                    return None;
                }
                let t = -origin.z / dir.z;
                let p = origin + dir * t;
                (t > 0.0 && p.x.abs() <= half_size && p.y.abs() <= half_size).then(|| (p, Vec3::z()))
            }
            Surface::Sphere { radius } => {
                let b = origin.dot(dir);
                let c = origin.norm_squared() - radius * radius;
                let disc = b * b - c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let t = if -b - s > 0.0 { -b - s } else { -b + s };
                (t > 0.0).then(|| {
                    let p = origin + dir * t;
                    (p, p / radius)
                })
            }
        }
    }

    /// Shading frame at a surface point: z is the normal, x the world x axis
    /// projected onto the tangent plane (world y when x is normal).
    pub fn shading_frame(normal: &Vec3) -> LocalFrame {
        let seed = if normal.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let x = (seed - normal * seed.dot(normal)).normalize();
        LocalFrame {
            x,
            y: normal.cross(&x),
            z: *normal,
        }
    }

    pub fn shade(&self, hit: &Vec3, normal: &Vec3, eye: &Vec3) -> [f64; 3] {
        let angles = || to_spherical(eye, hit, &Self::shading_frame(normal)).unwrap_or((0.0, 0.0));
        let c = match self.shading {
            Shading::Lambertian { albedo } => albedo.at(hit),
            Shading::AngularLinear { base, k_azi, k_pol } => {
                let (az, pol) = angles();
                base.map(|b| b + k_azi * az + k_pol * pol)
            }
        };
        match &self.angular_noise {
            Some(w) => {
                let (az, pol) = angles();
                let e = w.at(az, pol);
                [0, 1, 2].map(|k| c[k] + e[k])
            }
            None => c,
        }
    }

    pub fn render(&self, camera: &PinholeCamera, pose: &RigidPose, path_index: usize) -> ViewImage {
        let eye = pose.camera_center();
        let offset = self.noise.map_or([0.0; 3], |n| n.offset(path_index));
        ViewImage::from_fn(camera.width, camera.height, |i, j| {
            let d_cam = Vec3::new((i as f64 - camera.cx) / camera.fx, (j as f64 - camera.cy) / camera.fy, 1.0);
            let dir = pose.rotation.inverse_transform_vector(&d_cam).normalize();
            match self.intersect(&eye, &dir) {
                Some((hit, n)) => {
                    let c = self.shade(&hit, &n, &eye);
                    [0, 1, 2].map(|k| (c[k] + offset[k]) as f32)
                }
                None => self.background.map(|v| v as f32),
            }
        })
    }

    /// Rendered views in rig order; `path_index` is the rig position and
    /// image ids start at 1.
    pub fn views(&self) -> Result<Vec<PosedView>, GeometryError> {
        let camera = self.camera()?;
        let poses = self.poses()?;
        poses
            .par_iter()
            .enumerate()
            .map(|(k, pose)| {
                let image = self.render(&camera, pose, k);
                PosedView::new(image, camera, *pose, k, k as u32 + 1, format!("view_{k:03}.ppm"))
            })
            .collect()
    }

    pub fn surface_points(&self) -> Vec<(Vec3, Vec3)> {
        let n = self.points_per_side;
        match self.surface {
            Surface::Plane { half_size } => {
                let e = half_size * self.point_extent;
                let coord = |k: usize| if n > 1 { -e + 2.0 * e * k as f64 / (n - 1) as f64 } else { 0.0 };
                (0..n * n)
                    .map(|k| (Vec3::new(coord(k % n), coord(k / n), 0.0), Vec3::z()))
                    .collect()
            }
            Surface::Sphere { radius } => {
                let golden = PI * (3.0 - 5f64.sqrt());
                let m = n * n;
                (0..m)
                    .map(|k| {
                        let z = 1.0 - 2.0 * (k as f64 + 0.5) / m as f64;
                        let r = (1.0 - z * z).sqrt();
                        let a = golden * k as f64;
                        let u = Vec3::new(r * a.cos(), r * a.sin(), z);
                        (u * radius, u)
                    })
                    .collect()
            }
        }
    }

    /// Ground-truth sparse model: exact poses, and points whose tracks list
    /// every view they project into while facing the camera, with the
    /// interpolation footprint on the surface.
    pub fn sparse_model(&self, views: &[PosedView]) -> Result<SparseModel, GeometryError> {
        let camera = self.camera()?;
        let mut images: Vec<ImageRecord> = views
            .iter()
            .map(|v| ImageRecord {
                image_id: v.image_id,
                pose: v.pose,
                camera_id: CAMERA_ID,
                name: v.name.clone(),
                points2d: Vec::new(),
            })
            .collect();
        let mut points = Vec::new();
        for (k, (p, n)) in self.surface_points().into_iter().enumerate() {
            let id = k as u64 + 1;
            let mut track = Vec::new();
            for (vi, v) in views.iter().enumerate() {
                if n.dot(&(v.center() - p)) <= 0.0 {
                    continue;
                }
                if let Projection::InView { u, v: vv, .. } = project(&p, &camera, &v.pose)? {
                    if !self.footprint_on_surface(&camera, &v.pose, u, vv) {
                        continue;
                    }
                    let rec = &mut images[vi];
                    track.push(TrackEntry {
                        image_id: rec.image_id,
                        point2d_idx: rec.points2d.len() as u32,
                    });
                    rec.points2d.push(Point2D {
                        x: u,
                        y: vv,
                        point3d_id: Some(id),
                    });
                }
            }
            let c = match self.shading {
                Shading::Lambertian { albedo } => albedo.at(&p),
                Shading::AngularLinear { base, .. } => base,
            };
            points.push(SparsePoint {
                id,
                xyz: p,
                rgb: c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
                reproj_error: 0.0,
                track,
            });
        }
        Ok(SparseModel {
            cameras: BTreeMap::from([(CAMERA_ID, camera)]),
            images,
            points,
        })
    }

    /// Whether all four pixels a bilinear lookup at `(u, v)` touches see the
    /// surface, so sampled colours carry no background.
    fn footprint_on_surface(&self, camera: &PinholeCamera, pose: &RigidPose, u: f64, v: f64) -> bool {
        let eye = pose.camera_center();
        let (i, j) = (u.floor(), v.floor());
        [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]
            .iter()
            .all(|(di, dj)| self.intersect(&eye, &pixel_ray(camera, pose, i + di, j + dj)).is_some())
    }

    /// In-memory scene with rendered views and ground-truth points.
    pub fn bundle(&self) -> Result<SceneBundle, GeometryError> {
        let views = self.views()?;
        let model = self.sparse_model(&views)?;
        Ok(SceneBundle {
            cameras: model.cameras,
            views,
            points: model.points,
        })
    }

    /// Writes `images/<name>.ppm` and a binary model in `sparse/` under `dir`.
    pub fn export(&self, dir: &Path) -> Result<SceneBundle, ColmapError> {
        let views = self.views()?;
        let model = self.sparse_model(&views)?;
        let images = dir.join("images");
        let sparse = dir.join("sparse");
        for d in [&images, &sparse] {
            std::fs::create_dir_all(d).map_err(|source| ColmapError::Io {
                path: d.display().to_string(),
                source,
            })?;
        }
        for v in &views {
            v.image.save(&images.join(&v.name))?;
        }
        colmap::write_model_bin(&sparse, &model)?;
        Ok(SceneBundle {
            cameras: model.cameras,
            views,
            points: model.points,
        })
    }
}

/// Exports `scene` to `dir` (images, sparse model, `manifest.json`) and
/// returns the manifest. Identity fields come from `template`; its views and
/// model directory are replaced.
pub fn write_scene(scene: &AnalyticScene, dir: &Path, template: SceneManifest) -> Result<SceneManifest, PipelineError> {
    let bundle = scene.export(dir)?;
    let manifest = SceneManifest {
        views: bundle
            .views
            .iter()
            .map(|v| ManifestView {
                path: Path::new("images").join(&v.name),
                path_index: v.path_index,
                name: None,
            })
            .collect(),
        colmap_dir: "sparse".into(),
        ..template
    };
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

/// Unit direction of the ray through pixel `(u, v)` in world coordinates.
pub fn pixel_ray(camera: &PinholeCamera, pose: &RigidPose, u: f64, v: f64) -> Vec3 {
    let d = Vec3::new((u - camera.cx) / camera.fx, (v - camera.cy) / camera.fy, 1.0);
    pose.rotation.inverse_transform_vector(&d).normalize()
}

/// Largest angular-noise amplitude in [`learning_corpus`].
pub const CORPUS_MAX_AMPLITUDE: f64 = 0.08;

/// Reference quality of a corpus scene: 0 JOD without noise, −3 JOD at
/// [`CORPUS_MAX_AMPLITUDE`].
pub fn corpus_label(amplitude: f64) -> f64 {
    -3.0 * amplitude / CORPUS_MAX_AMPLITUDE
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusScene {
    pub scene_id: String,
    pub scene: AnalyticScene,
    pub amplitude: f64,
    pub label: f64,
}

/// `n` scenes sharing one textured plane and a 24-view grid rig. Each adds
/// an [`AngularWave`] with amplitude drawn uniformly from
/// `[0, CORPUS_MAX_AMPLITUDE]` and random per-channel phases. Labels are
/// affine in the amplitude; everything else is held fixed so the angular
/// noise is the only quality factor.
pub fn learning_corpus(n: usize, seed: u64) -> Vec<CorpusScene> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|k| {
            let amplitude = rng.random_range(0.0..CORPUS_MAX_AMPLITUDE);
            let phase = [0; 3].map(|_| rng.random_range(0.0..2.0 * PI));
            let scene = AnalyticScene {
                surface: Surface::Plane { half_size: 1.0 },
                shading: Shading::Lambertian {
                    albedo: Albedo::Sinusoid {
                        base: [0.5, 0.45, 0.4],
                        amplitude: [0.15, 0.1, 0.12],
                        frequency: 2.5,
                    },
                },
                rig: Rig::Grid {
                    polars: vec![0.6, 0.8, 1.0],
                    azimuths: 8,
                    radius: 4.0,
                },
                angular_noise: Some(AngularWave {
                    amplitude,
                    azimuth_frequency: 2.0,
                    polar_frequency: 3.0,
                    phase,
                }),
                ..Default::default()
            };
            CorpusScene {
                scene_id: format!("scene_{k:03}"),
                scene,
                amplitude,
                label: corpus_label(amplitude),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::project_into;

    #[test]
    fn orbit_views_all_see_the_centre_at_the_principal_point() {
        let scene = AnalyticScene::default();
        let views = scene.views().unwrap();
        assert_eq!(views.len(), 8);
        for v in &views {
            match project_into(&Vec3::zeros(), v).unwrap() {
                Projection::InView { u, v: vv, .. } => {
                    assert!((u - v.camera.cx).abs() < 1e-9 && (vv - v.camera.cy).abs() < 1e-9);
                }
                Projection::OutOfView => panic!("centre out of view"),
            }
        }
    }

    #[test]
    fn lambertian_colour_is_view_independent() {
        let scene = AnalyticScene {
            shading: Shading::Lambertian {
                albedo: Albedo::Sinusoid {
                    base: [0.5; 3],
                    amplitude: [0.2, 0.1, 0.3],
                    frequency: 3.0,
                },
            },
            ..Default::default()
        };
        let p = Vec3::new(0.2, -0.1, 0.0);
        let a = scene.shade(&p, &Vec3::z(), &Vec3::new(3.0, 0.0, 3.0));
        let b = scene.shade(&p, &Vec3::z(), &Vec3::new(-1.0, 2.0, 1.0));
        assert_eq!(a, b);
    }

    #[test]
    fn angular_linear_difference_is_k_times_polar_difference() {
        let scene = AnalyticScene {
            shading: Shading::AngularLinear {
                base: [0.2; 3],
                k_azi: 0.0,
                k_pol: 0.5,
            },
            ..Default::default()
        };
        let p = Vec3::zeros();
        let w = LocalFrame::world();
        let (p1, p2) = (0.3, 0.9);
        let a = scene.shade(&p, &Vec3::z(), &(from_spherical(0.4, p1, &w) * 3.0));
        let b = scene.shade(&p, &Vec3::z(), &(from_spherical(0.4, p2, &w) * 3.0));
        for c in 0..3 {
            assert!((b[c] - a[c] - 0.5 * (p2 - p1)).abs() < 1e-12);
        }
    }

    #[test]
    fn render_hits_inverse_of_projection() {
        let scene = AnalyticScene::default();
        let camera = scene.camera().unwrap();
        let pose = scene.poses().unwrap()[3];
        let p = Vec3::new(0.3, -0.4, 0.0);
        let Projection::InView { u, v, .. } = project(&p, &camera, &pose).unwrap() else {
            panic!()
        };
        let dir = pixel_ray(&camera, &pose, u, v);
        let (hit, _) = scene.intersect(&pose.camera_center(), &dir).unwrap();
        assert!((hit - p).norm() < 1e-9);
    }

    #[test]
    fn tracks_match_projection_recount() {
        let scene = AnalyticScene {
            surface: Surface::Sphere { radius: 1.0 },
            ..Default::default()
        };
        let bundle = scene.bundle().unwrap();
        assert_eq!(bundle.points.len(), 36);
        // closed-form ray/unit-sphere test for the four lookup pixels
        let sees_sphere = |v: &PosedView, u: f64, w: f64| {
            let e = v.center();
            [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)].iter().all(|(di, dj)| {
                let d = pixel_ray(&v.camera, &v.pose, u.floor() + di, w.floor() + dj).normalize();
                let along = e.dot(&d);
                along < 0.0 && e.norm_squared() - along * along < 1.0
            })
        };
        let mut dropped = 0;
        for pt in &bundle.points {
            let normal = pt.xyz.normalize();
            let mut expect = Vec::new();
            for v in bundle.views.iter().filter(|v| normal.dot(&(v.center() - pt.xyz)) > 0.0) {
                if let Projection::InView { u, v: w, .. } = project_into(&pt.xyz, v).unwrap() {
                    if sees_sphere(v, u, w) {
                        expect.push(v.image_id);
                    } else {
                        dropped += 1;
                    }
                }
            }
            assert_eq!(pt.track_image_ids(), expect);
        }
        // the limb cut applies to some but not most observations
        assert!(dropped > 0);
    }

    #[test]
    fn noise_offsets_depend_on_view_and_seed() {
        let n = ViewNoise { sigma: 0.1, seed: 4 };
        assert_ne!(n.offset(0), n.offset(1));
        assert_eq!(n.offset(2), n.offset(2));
        assert_ne!(n.offset(0), ViewNoise { sigma: 0.1, seed: 5 }.offset(0));
    }

    #[test]
    fn background_outside_surface() {
        let scene = AnalyticScene::default();
        let camera = scene.camera().unwrap();
        let pose = scene.poses().unwrap()[0];
        let img = scene.render(&camera, &pose, 0);
        assert_eq!(img.pixel(0, 0), [0.5; 3]);
        assert_eq!(img.pixel(32, 32), [0.6, 0.4, 0.3]);
    }

    #[test]
    fn grid_and_arc_rigs() {
        let g = Rig::Grid {
            polars: vec![0.5, 1.0],
            azimuths: 4,
            radius: 2.0,
        };
        assert_eq!(g.centers().len(), 8);
        let a = Rig::PolarArc {
            count: 16,
            radius: 3.0,
            polar_min: 0.2,
            polar_max: 1.2,
            azimuth: 0.0,
        };
        let c = a.centers();
        assert_eq!(c.len(), 16);
        assert!(c.iter().all(|p| p.y.abs() < 1e-12 && (p.norm() - 3.0).abs() < 1e-12));
    }
}
