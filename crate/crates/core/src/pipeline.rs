//! Scene manifests and the feature extraction that turns a scene on disk into
//! network inputs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::colmap::{self, ColmapError, SceneBundle};
use crate::geometry::Visibility;
use crate::image_io::ViewImage;
use crate::nss::{NssError, NSS_DIM};
use crate::pnsg::{self, PnsgConfig, PnsgDump, PnsgError, PnsgRecord, SurfacePointObservations};
use crate::pointwise::point_inputs;
use crate::tensor::Tensor;
use crate::train::TrainingExample;
use crate::viewwise::view_feature_matrix;

pub const DEFAULT_POINTS: usize = 1024;
pub const DEFAULT_ROUNDS: usize = 10;
pub const VIEWS_FILE: &str = "views.csv";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path}: {message}")]
    Manifest { path: String, message: String },
    #[error(transparent)]
    Colmap(#[from] ColmapError),
    #[error(transparent)]
    Nss(#[from] NssError),
    #[error(transparent)]
    Pnsg(#[from] PnsgError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("feature directory {path}: {message}")]
    Features { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestView {
    /// Image file, relative to the manifest's directory.
    pub path: PathBuf,
    /// Position along the camera path, starting at 0.
    pub path_index: usize,
    /// Image name in the reconstruction; defaults to the file name of `path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl ManifestView {
    pub fn colmap_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            self.path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub scene_id: String,
    #[serde(default = "default_method")]
    pub method_id: String,
    #[serde(default = "default_dataset")]
    pub dataset: String,
    pub views: Vec<ManifestView>,
    /// Sparse model directory, relative to the manifest's directory.
    pub colmap_dir: PathBuf,
    /// Reference quality in JOD units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<f64>,
}

fn default_method() -> String {
    "default".into()
}

fn default_dataset() -> String {
    "default".into()
}

/// A manifest together with the directory its relative paths resolve against.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedManifest {
    pub manifest: SceneManifest,
    pub base: PathBuf,
    pub source: PathBuf,
}

impl SceneManifest {
    /// Checks the ordering covers `0..views.len()` exactly once.
    pub fn validate_ordering(&self) -> std::result::Result<(), String> {
        if self.scene_id.is_empty() {
            return Err("scene_id is empty".into());
        }
        if self.views.is_empty() {
            return Err("no views listed".into());
        }
        let mut seen = vec![false; self.views.len()];
        for v in &self.views {
            match seen.get_mut(v.path_index) {
                Some(s) if !*s => *s = true,
                Some(_) => return Err(format!("path_index {} appears twice", v.path_index)),
                None => {
                    return Err(format!(
                        "path_index {} out of range for {} views",
                        v.path_index,
                        self.views.len()
                    ))
                }
            }
        }
        Ok(())
    }

    /// Views sorted by `path_index`.
    pub fn ordered_views(&self) -> Vec<&ManifestView> {
        let mut v: Vec<&ManifestView> = self.views.iter().collect();
        v.sort_by_key(|v| v.path_index);
        v
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(io_err(path))
    }
}

impl LoadedManifest {
    /// Parses and validates a manifest; every referenced path must exist.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let bad = |message: String| PipelineError::Manifest {
            path: path.display().to_string(),
            message,
        };
        let manifest: SceneManifest = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        manifest.validate_ordering().map_err(bad)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let loaded = Self {
            manifest,
            base,
            source: path.to_path_buf(),
        };
        if !loaded.colmap_dir().is_dir() {
            return Err(bad(format!("colmap_dir {} is not a directory", loaded.colmap_dir().display())));
        }
        for v in &loaded.manifest.views {
            let p = loaded.base.join(&v.path);
            if !p.is_file() {
                return Err(bad(format!("view {} does not exist", p.display())));
            }
        }
        Ok(loaded)
    }

    pub fn colmap_dir(&self) -> PathBuf {
        self.base.join(&self.manifest.colmap_dir)
    }

    /// Model plus images in manifest path order.
    pub fn bundle(&self) -> Result<SceneBundle> {
        let ordered = self.manifest.ordered_views();
        let names: Vec<String> = ordered.iter().map(|v| v.colmap_name()).collect();
        let model = colmap::read_model(&self.colmap_dir())?;
        let by_name: std::collections::HashMap<String, PathBuf> = ordered
            .iter()
            .map(|v| (v.colmap_name(), self.base.join(&v.path)))
            .collect();
        Ok(SceneBundle::assemble(model, Some(&names), |rec| {
            Ok(ViewImage::load(&by_name[&rec.name])?)
        })?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractConfig {
    pub pnsg: PnsgConfig,
    pub points: usize,
    pub rounds: usize,
    pub seed: u64,
    pub visibility: Visibility,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        Self {
            pnsg: PnsgConfig::default(),
            points: DEFAULT_POINTS,
            rounds: DEFAULT_ROUNDS,
            seed: 0,
            visibility: Visibility::Track,
        }
    }
}

/// Network-ready features of one scene.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneFeatures {
    /// `36 × V` NSS matrix in path order.
    pub views: Tensor,
    pub view_names: Vec<String>,
    pub rounds: Vec<PnsgDump>,
}

/// PNSG dump for one sampling round.
pub fn extract_round(bundle: &SceneBundle, cfg: &ExtractConfig, round: u64) -> Result<PnsgDump> {
    let sampled = colmap::sample_points(&bundle.points, cfg.points, cfg.seed, round);
    let obs = sampled
        .iter()
        .map(|p| SurfacePointObservations::observe(p, &bundle.views, cfg.visibility))
        .collect::<pnsg::Result<Vec<_>>>()?;
    let feats = pnsg::pnsg_scene(&obs, &cfg.pnsg)?;
    let records = feats
        .iter()
        .map(|f| PnsgRecord::from_feature(f, cfg.pnsg.resample))
        .collect::<pnsg::Result<Vec<_>>>()?;
    Ok(PnsgDump {
        bins: cfg.pnsg.bins,
        resample: cfg.pnsg.resample,
        wrap_azimuth: cfg.pnsg.wrap_azimuth,
        records,
    })
}

pub fn extract(bundle: &SceneBundle, cfg: &ExtractConfig) -> Result<SceneFeatures> {
    cfg.pnsg.validate()?;
    if cfg.rounds == 0 {
        return Err(PnsgError::Config("at least one sampling round is required".into()).into());
    }
    let images: Vec<&ViewImage> = bundle.views.iter().map(|v| &v.image).collect();
    let views = view_feature_matrix(&images)?;
    let rounds = (0..cfg.rounds as u64)
        .map(|r| extract_round(bundle, cfg, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(SceneFeatures {
        views,
        view_names: bundle.views.iter().map(|v| v.name.clone()).collect(),
        rounds,
    })
}

pub fn round_file_name(round: usize) -> String {
    format!("round_{round:02}.pnsg")
}

impl SceneFeatures {
    /// Writes `views.csv` (one row per view: path_index, name, 36 features)
    /// and `round_XX.pnsg` per round into `dir`.
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let vpath = dir.join(VIEWS_FILE);
        let file = File::create(&vpath).map_err(io_err(&vpath))?;
        let mut w = csv::Writer::from_writer(BufWriter::new(file));
        let f = self.views.shape()[0];
        let l = self.views.shape()[1];
        let mut header = vec!["path_index".to_string(), "name".to_string()];
        header.extend((0..f).map(|k| format!("f{k:02}")));
        w.write_record(&header)?;
        for (k, name) in self.view_names.iter().enumerate() {
            let mut row = vec![k.to_string(), name.clone()];
            row.extend((0..f).map(|r| format!("{:?}", self.views.data()[r * l + k])));
            w.write_record(&row)?;
        }
        w.flush().map_err(io_err(&vpath))?;
        for (r, dump) in self.rounds.iter().enumerate() {
            let p = dir.join(round_file_name(r));
            let mut out = BufWriter::new(File::create(&p).map_err(io_err(&p))?);
            pnsg::write_dump(&mut out, dump)?;
            out.flush().map_err(io_err(&p))?;
        }
        Ok(())
    }

    /// Reads a directory written by [`SceneFeatures::write_dir`]. Rounds are
    /// read in order until the first missing index.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let bad = |message: String| PipelineError::Features {
            path: dir.display().to_string(),
            message,
        };
        let vpath = dir.join(VIEWS_FILE);
        let mut rdr = csv::Reader::from_reader(BufReader::new(File::open(&vpath).map_err(io_err(&vpath))?));
        let mut names = Vec::new();
        let mut cols: Vec<Vec<f64>> = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != NSS_DIM + 2 {
                return Err(bad(format!("{VIEWS_FILE} row {k} has {} fields", rec.len())));
            }
            if rec[0].parse::<usize>().ok() != Some(k) {
                return Err(bad(format!("{VIEWS_FILE} row {k} is out of path order")));
            }
            names.push(rec[1].to_string());
            let col = rec
                .iter()
                .skip(2)
                .map(|s| s.parse::<f32>().map(f64::from).map_err(|e| bad(format!("{VIEWS_FILE} row {k}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            cols.push(col);
        }
        if cols.is_empty() {
            return Err(bad(format!("{VIEWS_FILE} has no rows")));
        }
        let mut rounds = Vec::new();
        loop {
            let p = dir.join(round_file_name(rounds.len()));
            if !p.is_file() {
                break;
            }
            let mut r = BufReader::new(File::open(&p).map_err(io_err(&p))?);
            rounds.push(pnsg::read_dump(&mut r)?);
        }
        if rounds.is_empty() {
            return Err(bad(format!("no {}", round_file_name(0))));
        }
        Ok(Self {
            views: crate::viewwise::columns_to_matrix(&cols),
            view_names: names,
            rounds,
        })
    }

    pub fn training_example(&self, manifest: &SceneManifest, label: f64) -> TrainingExample {
        TrainingExample {
            scene_id: manifest.scene_id.clone(),
            method_id: manifest.method_id.clone(),
            dataset: manifest.dataset.clone(),
            views: self.views.clone(),
            rounds: self.point_rounds(),
            label,
        }
    }

    pub fn point_rounds(&self) -> Vec<Vec<crate::pointwise::PointInput>> {
        self.rounds.iter().map(|d| point_inputs(&d.records)).collect()
    }
}
