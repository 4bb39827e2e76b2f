//! Readers and writers for COLMAP sparse models (`cameras`, `images`,
//! `points3D`) in both the binary and text variants, plus the scene bundle
//! assembled from them and a seeded surface-point sampler.

mod binary;
mod text;

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{GeometryError, PinholeCamera, PosedView, RigidPose, Vec3};
use crate::image_io::{ImageError, ViewImage};

pub use binary::{
    parse_cameras_bin, parse_images_bin, parse_points3d_bin, write_cameras_bin, write_images_bin,
    write_points3d_bin,
};
pub use text::{
    parse_cameras_txt, parse_images_txt, parse_points3d_txt, write_cameras_txt, write_images_txt,
    write_points3d_txt,
};

pub const SIMPLE_PINHOLE: i32 = 0;
pub const PINHOLE: i32 = 1;

/// Largest quaternion norm deviation that is silently renormalised.
pub const QUATERNION_REPAIR_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum ColmapError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("truncated {what} at byte offset {offset}: need {needed} bytes, file has {len}")]
    Truncated {
        what: &'static str,
        offset: usize,
        needed: usize,
        len: usize,
    },
    #[error("{count} declared records end at byte {offset} but the file has {len} bytes")]
    TrailingBytes { count: u64, offset: usize, len: usize },
    #[error("unsupported camera model {0}")]
    UnsupportedModel(String),
    #[error("camera model {model} expects {expected} parameters, got {got}")]
    ParamCount {
        model: String,
        expected: usize,
        got: usize,
    },
    #[error("image name starting at byte offset {offset} has no null terminator")]
    MissingNul { offset: usize },
    #[error("image name starting at byte offset {offset} is not UTF-8")]
    BadName { offset: usize },
    #[error("image {image_id}: quaternion norm {norm} deviates from 1 by more than {tol}", tol = QUATERNION_REPAIR_TOLERANCE)]
    NonUnitQuaternion { image_id: u32, norm: f64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{what} {id} does not resolve")]
    Unresolved { what: &'static str, id: u64 },
    #[error("no {0}.bin or {0}.txt in model directory")]
    MissingFile(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

pub type Result<T> = std::result::Result<T, ColmapError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
    pub point3d_id: Option<u64>,
}

impl Point2D {
    pub(crate) const UNMATCHED: u64 = u64::MAX;
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageRecord {
    pub image_id: u32,
    pub pose: RigidPose,
    pub camera_id: u32,
    pub name: String,
    pub points2d: Vec<Point2D>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TrackEntry {
    pub image_id: u32,
    pub point2d_idx: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SparsePoint {
    pub id: u64,
    pub xyz: Vec3,
    pub rgb: [u8; 3],
    pub reproj_error: f64,
    pub track: Vec<TrackEntry>,
}

impl SparsePoint {
    /// Points read with an empty track are kept but are not registered.
    pub fn is_registered(&self) -> bool {
        !self.track.is_empty()
    }

    pub fn track_image_ids(&self) -> Vec<u32> {
        self.track.iter().map(|t| t.image_id).collect()
    }
}

/// Parsed contents of a sparse model directory.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseModel {
    pub cameras: BTreeMap<u32, PinholeCamera>,
    pub images: Vec<ImageRecord>,
    pub points: Vec<SparsePoint>,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| ColmapError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| ColmapError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn is_text(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "txt")
}

/// Reads `cameras.bin` or `cameras.txt` depending on the extension.
pub fn read_cameras(path: &Path) -> Result<BTreeMap<u32, PinholeCamera>> {
    if is_text(path) {
        parse_cameras_txt(&read_text(path)?)
    } else {
        parse_cameras_bin(&read_file(path)?)
    }
}

pub fn read_images(path: &Path) -> Result<Vec<ImageRecord>> {
    if is_text(path) {
        parse_images_txt(&read_text(path)?)
    } else {
        parse_images_bin(&read_file(path)?)
    }
}

pub fn read_points3d(path: &Path) -> Result<Vec<SparsePoint>> {
    if is_text(path) {
        parse_points3d_txt(&read_text(path)?)
    } else {
        parse_points3d_bin(&read_file(path)?)
    }
}

fn locate(dir: &Path, stem: &'static str) -> Result<PathBuf> {
    let bin = dir.join(format!("{stem}.bin"));
    if bin.exists() {
        return Ok(bin);
    }
    let txt = dir.join(format!("{stem}.txt"));
    if txt.exists() {
        return Ok(txt);
    }
    Err(ColmapError::MissingFile(stem))
}

/// Reads a model directory, preferring the binary files.
pub fn read_model(dir: &Path) -> Result<SparseModel> {
    Ok(SparseModel {
        cameras: read_cameras(&locate(dir, "cameras")?)?,
        images: read_images(&locate(dir, "images")?)?,
        points: read_points3d(&locate(dir, "points3D")?)?,
    })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|source| ColmapError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes `cameras.bin`, `images.bin` and `points3D.bin` into `dir`.
pub fn write_model_bin(dir: &Path, model: &SparseModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| ColmapError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(&dir.join("cameras.bin"), &write_cameras_bin(&model.cameras))?;
    write_file(&dir.join("images.bin"), &write_images_bin(&model.images))?;
    write_file(&dir.join("points3D.bin"), &write_points3d_bin(&model.points))
}

pub fn write_model_txt(dir: &Path, model: &SparseModel) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| ColmapError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(&dir.join("cameras.txt"), write_cameras_txt(&model.cameras).as_bytes())?;
    write_file(&dir.join("images.txt"), write_images_txt(&model.images).as_bytes())?;
    write_file(&dir.join("points3D.txt"), write_points3d_txt(&model.points).as_bytes())
}

/// Posed views plus the sparse points observing them.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub cameras: BTreeMap<u32, PinholeCamera>,
    pub views: Vec<PosedView>,
    pub points: Vec<SparsePoint>,
}

impl SceneBundle {
    /// Attaches images to a model. `ordering` lists image names along the
    /// camera path; without it views are ordered by name. Images missing from
    /// `ordering` are dropped.
    pub fn assemble(
        model: SparseModel,
        ordering: Option<&[String]>,
        mut load_image: impl FnMut(&ImageRecord) -> Result<ViewImage>,
    ) -> Result<Self> {
        let mut records = model.images;
        let order: Vec<String> = match ordering {
            Some(o) => o.to_vec(),
            None => {
                let mut names: Vec<String> = records.iter().map(|r| r.name.clone()).collect();
                names.sort();
                names
            }
        };
        let mut views = Vec::with_capacity(order.len());
        for (path_index, name) in order.iter().enumerate() {
            let pos = records
                .iter()
                .position(|r| &r.name == name)
                .ok_or(ColmapError::Unresolved {
                    what: "image name",
                    id: path_index as u64,
                })?;
            let rec = records.swap_remove(pos);
            let camera = *model.cameras.get(&rec.camera_id).ok_or(ColmapError::Unresolved {
                what: "camera id",
                id: rec.camera_id as u64,
            })?;
            let image = load_image(&rec)?;
            views.push(PosedView::new(image, camera, rec.pose, path_index, rec.image_id, rec.name)?);
        }
        let known: HashSet<u32> = views.iter().map(|v| v.image_id).collect();
        let known_all: HashSet<u32> = known.iter().copied().chain(records.iter().map(|r| r.image_id)).collect();
        for p in &model.points {
            for t in &p.track {
                if !known_all.contains(&t.image_id) {
                    return Err(ColmapError::Unresolved {
                        what: "track image id",
                        id: t.image_id as u64,
                    });
                }
            }
        }
        Ok(Self {
            cameras: model.cameras,
            views,
            points: model.points,
        })
    }

    /// Loads a model directory and reads each image from `image_dir/<name>`.
    pub fn load(model_dir: &Path, image_dir: &Path, ordering: Option<&[String]>) -> Result<Self> {
        let model = read_model(model_dir)?;
        Self::assemble(model, ordering, |rec| Ok(ViewImage::load(&image_dir.join(&rec.name))?))
    }
}

/// Keeps points whose reprojection error is at most `max_error`.
pub fn filter_by_error(points: &[SparsePoint], max_error: f64) -> Vec<SparsePoint> {
    points.iter().filter(|p| p.reproj_error <= max_error).cloned().collect()
}

/// Uniform subset of `count` points without replacement, a pure function of
/// `(seed, round)` and the point ids. Output is sorted by id.
pub fn sample_points(points: &[SparsePoint], count: usize, seed: u64, round: u64) -> Vec<SparsePoint> {
    let mut sorted: Vec<&SparsePoint> = points.iter().collect();
    sorted.sort_by_key(|p| p.id);
    if count >= sorted.len() {
        return sorted.into_iter().cloned().collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(round);
    let mut idx = sample(&mut rng, sorted.len(), count).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| sorted[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(n: u64) -> Vec<SparsePoint> {
        (0..n)
            .map(|id| SparsePoint {
                id,
                xyz: Vec3::new(id as f64, 0.0, 0.0),
                rgb: [0, 0, 0],
                reproj_error: id as f64 * 0.1,
                track: vec![],
            })
            .collect()
    }

    #[test]
    fn sample_takes_all_when_count_exceeds() {
        let p = pts(5);
        assert_eq!(sample_points(&p, 10, 1, 0).len(), 5);
        assert_eq!(sample_points(&p, 5, 1, 0), p);
    }

    #[test]
    fn sample_is_deterministic_and_input_order_free() {
        let p = pts(50);
        let a = sample_points(&p, 10, 3, 2);
        let mut rev = p.clone();
        rev.reverse();
        assert_eq!(a, sample_points(&rev, 10, 3, 2));
        assert_eq!(a.len(), 10);
        assert!(a.windows(2).all(|w| w[0].id < w[1].id));
        assert_ne!(a, sample_points(&p, 10, 3, 3));
    }

    #[test]
    fn error_filter() {
        let p = pts(10);
        assert_eq!(filter_by_error(&p, 0.45).len(), 5);
        assert_eq!(filter_by_error(&p, f64::INFINITY).len(), 10);
    }
}
