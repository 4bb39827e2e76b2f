//! Python bindings: scene manifests, feature extraction, the quality model,
//! training and the agreement metrics.

use std::fs::File;
use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nqa_core::fixtures::{learning_corpus, write_scene, AnalyticScene};
use nqa_core::geometry::{self, PinholeCamera, Projection, RigidPose, Vec3, Visibility};
use nqa_core::metrics::{self, EvalReport};
use nqa_core::model::{ModelConfig, QualityModel};
use nqa_core::pipeline::{extract, ExtractConfig, LoadedManifest, SceneFeatures, SceneManifest};
use nqa_core::pnsg::{self, PnsgConfig};
use nqa_core::train::{self, AdamConfig, TrainConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn vec3(v: [f64; 3]) -> Vec3 {
    Vec3::new(v[0], v[1], v[2])
}

fn report_dict<'py>(py: Python<'py>, r: &EvalReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("rmse", r.rmse)?;
    d.set_item("srcc", r.srcc)?;
    d.set_item("plcc", r.plcc)?;
    d.set_item("outlier_ratio", r.outlier_ratio)?;
    d.set_item("n", r.n)?;
    Ok(d)
}

/// A loaded and validated scene manifest.
#[pyclass(name = "Manifest", module = "nqa", frozen)]
struct Manifest(LoadedManifest);

#[pymethods]
impl Manifest {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        LoadedManifest::load(&path).map(Self).map_err(value_err)
    }

    #[getter]
    fn scene_id(&self) -> &str {
        &self.0.manifest.scene_id
    }

    #[getter]
    fn method_id(&self) -> &str {
        &self.0.manifest.method_id
    }

    #[getter]
    fn dataset(&self) -> &str {
        &self.0.manifest.dataset
    }

    #[getter]
    fn label(&self) -> Option<f64> {
        self.0.manifest.label
    }

    #[getter]
    fn view_count(&self) -> usize {
        self.0.manifest.views.len()
    }

    fn to_json(&self) -> String {
        self.0.manifest.to_json()
    }

    fn __repr__(&self) -> String {
        format!("Manifest(scene_id={:?}, views={})", self.0.manifest.scene_id, self.0.manifest.views.len())
    }
}

/// NSS view features and per-round point-gradient dumps of one scene.
#[pyclass(name = "Features", module = "nqa", frozen)]
struct Features(SceneFeatures);

#[pymethods]
impl Features {
    #[staticmethod]
    #[pyo3(signature = (manifest, bins=pnsg::DEFAULT_BINS, resample=pnsg::DEFAULT_RESAMPLE, points=nqa_core::pipeline::DEFAULT_POINTS, rounds=nqa_core::pipeline::DEFAULT_ROUNDS, seed=0, geometric=false))]
    fn extract(
        manifest: PathBuf,
        bins: usize,
        resample: usize,
        points: usize,
        rounds: usize,
        seed: u64,
        geometric: bool,
    ) -> PyResult<Self> {
        let cfg = extract_config(bins, resample, points, rounds, seed, geometric);
        scene_features(&manifest, &cfg).map(|(_, f)| Self(f))
    }

    #[staticmethod]
    fn read_dir(path: PathBuf) -> PyResult<Self> {
        SceneFeatures::read_dir(&path).map(Self).map_err(io_err)
    }

    fn write_dir(&self, path: PathBuf) -> PyResult<()> {
        self.0.write_dir(&path).map_err(io_err)
    }

    /// NSS features as rows of the `36 × V` matrix.
    fn view_matrix(&self) -> Vec<Vec<f32>> {
        let v = &self.0.views;
        let cols = v.shape()[1];
        v.data().chunks(cols.max(1)).map(<[f32]>::to_vec).collect()
    }

    #[getter]
    fn view_names(&self) -> Vec<String> {
        self.0.view_names.clone()
    }

    #[getter]
    fn rounds(&self) -> usize {
        self.0.rounds.len()
    }

    /// Number of sampled points in round `r`.
    fn points_in_round(&self, r: usize) -> PyResult<usize> {
        self.0
            .rounds
            .get(r)
            .map(|d| d.records.len())
            .ok_or_else(|| value_err(format!("round {r} out of range")))
    }

    fn __repr__(&self) -> String {
        format!("Features(views={}, rounds={})", self.0.view_names.len(), self.0.rounds.len())
    }
}

fn extract_config(bins: usize, resample: usize, points: usize, rounds: usize, seed: u64, geometric: bool) -> ExtractConfig {
    ExtractConfig {
        pnsg: PnsgConfig {
            bins,
            resample,
            ..Default::default()
        },
        points,
        rounds,
        seed,
        visibility: if geometric { Visibility::Geometric } else { Visibility::Track },
    }
}

fn scene_features(path: &Path, cfg: &ExtractConfig) -> PyResult<(LoadedManifest, SceneFeatures)> {
    let m = LoadedManifest::load(path).map_err(value_err)?;
    let bundle = m.bundle().map_err(value_err)?;
    let f = extract(&bundle, cfg).map_err(value_err)?;
    Ok((m, f))
}

/// The two-branch quality model.
#[pyclass(name = "Model", module = "nqa", frozen)]
struct Model(QualityModel);

#[pymethods]
impl Model {
    /// `preset` is `default`, `compact` or `tiny`; `config_json` overrides it.
    #[new]
    #[pyo3(signature = (preset="default", bins=pnsg::DEFAULT_BINS, resample=pnsg::DEFAULT_RESAMPLE, ablate_pointwise=false, seed=0, config_json=None))]
    fn new(
        preset: &str,
        bins: usize,
        resample: usize,
        ablate_pointwise: bool,
        seed: u64,
        config_json: Option<&str>,
    ) -> PyResult<Self> {
        let mut cfg = match (config_json, preset) {
            (Some(j), _) => serde_json::from_str::<ModelConfig>(j).map_err(value_err)?,
            (None, "default") => {
                let mut c = ModelConfig::default();
                c.pointwise.bins = bins;
                c.pointwise.resample = resample;
                c
            }
            (None, "compact") => ModelConfig::compact(bins, resample),
            (None, "tiny") => ModelConfig::tiny(),
            (None, other) => return Err(value_err(format!("unknown preset {other:?}"))),
        };
        cfg.ablate_pointwise |= ablate_pointwise;
        cfg.seed = seed;
        Ok(Self(QualityModel::new(cfg)))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        QualityModel::load(&path).map(Self).map_err(io_err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(&path).map_err(io_err)
    }

    /// Predicted JOD, averaged over the sampling rounds of `features`.
    fn predict(&self, features: &Features) -> PyResult<f64> {
        self.0
            .predict_rounds(&features.0.views, &features.0.point_rounds())
            .map_err(value_err)
    }

    #[getter]
    fn config_json(&self) -> String {
        serde_json::to_string(&self.0.config).expect("config serializes")
    }

    #[getter]
    fn config_hash(&self) -> String {
        self.0.config.hash()
    }

    #[getter]
    fn bins(&self) -> usize {
        self.0.config.pointwise.bins
    }

    #[getter]
    fn resample(&self) -> usize {
        self.0.config.pointwise.resample
    }
}

/// Trains `model` on labelled manifests. Returns the trained model and the
/// per-epoch `(epoch, train_loss, val_loss)` log.
#[pyfunction]
#[pyo3(signature = (model, manifests, epochs=200, batch_size=10, lr=1e-4, points=nqa_core::pipeline::DEFAULT_POINTS, rounds=nqa_core::pipeline::DEFAULT_ROUNDS, seed=0, validation=true))]
#[allow(clippy::too_many_arguments)]
fn train_model(
    py: Python<'_>,
    model: &Model,
    manifests: Vec<PathBuf>,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    points: usize,
    rounds: usize,
    seed: u64,
    validation: bool,
) -> PyResult<(Model, Vec<(usize, f64, Option<f64>)>)> {
    let cfg = extract_config(model.0.config.pointwise.bins, model.0.config.pointwise.resample, points, rounds, seed, false);
    let mut examples = Vec::with_capacity(manifests.len());
    for p in &manifests {
        let (m, f) = scene_features(p, &cfg)?;
        let label = m
            .manifest
            .label
            .ok_or_else(|| value_err(format!("manifest {} has no label", p.display())))?;
        examples.push(f.training_example(&m.manifest, label));
    }
    let tc = TrainConfig {
        epochs,
        batch_size,
        adam: AdamConfig {
            lr,
            ..Default::default()
        },
        seed,
        holdout_validation: validation,
        checkpoint_dir: None,
    };
    let start = model.0.clone();
    let outcome = py
        .detach(|| train::train(start, &examples, &tc))
        .map_err(value_err)?;
    let log = outcome.log.iter().map(|e| (e.epoch, e.train_loss, e.val_loss)).collect();
    Ok((Model(outcome.model), log))
}

/// Writes a synthetic scene (images, sparse model, manifest) to `out_dir`
/// and returns the manifest path. `scene_json` describes the scene; the
/// default is a Lambertian plane seen by an eight-view orbit.
#[pyfunction]
#[pyo3(signature = (out_dir, scene_json=None, scene_id="synthetic", method_id="default", dataset="synthetic", label=None))]
fn synth(
    out_dir: PathBuf,
    scene_json: Option<&str>,
    scene_id: &str,
    method_id: &str,
    dataset: &str,
    label: Option<f64>,
) -> PyResult<PathBuf> {
    let scene = match scene_json {
        Some(j) => serde_json::from_str::<AnalyticScene>(j).map_err(value_err)?,
        None => AnalyticScene::default(),
    };
    let template = SceneManifest {
        scene_id: scene_id.into(),
        method_id: method_id.into(),
        dataset: dataset.into(),
        views: Vec::new(),
        colmap_dir: PathBuf::new(),
        label,
    };
    write_scene(&scene, &out_dir, template).map_err(io_err)?;
    Ok(out_dir.join("manifest.json"))
}

/// Writes `n` labelled corpus scenes under `out_dir` and returns their
/// manifest paths.
#[pyfunction]
#[pyo3(signature = (out_dir, n, seed=0))]
fn synth_corpus(out_dir: PathBuf, n: usize, seed: u64) -> PyResult<Vec<PathBuf>> {
    learning_corpus(n, seed)
        .into_iter()
        .map(|c| {
            let dir = out_dir.join(&c.scene_id);
            let template = SceneManifest {
                scene_id: c.scene_id,
                method_id: "default".into(),
                dataset: "synthetic".into(),
                views: Vec::new(),
                colmap_dir: PathBuf::new(),
                label: Some(c.label),
            };
            write_scene(&c.scene, &dir, template).map_err(io_err)?;
            Ok(dir.join("manifest.json"))
        })
        .collect()
}

#[pyfunction]
fn rmse(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::rmse(&pred, &truth).map_err(value_err)
}

#[pyfunction]
fn srcc(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::srcc(&pred, &truth).map_err(value_err)
}

#[pyfunction]
fn plcc(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::plcc(&pred, &truth).map_err(value_err)
}

#[pyfunction]
fn outlier_ratio(pred: Vec<f64>, truth: Vec<f64>) -> PyResult<f64> {
    metrics::outlier_ratio(&pred, &truth).map_err(value_err)
}

/// All four agreement measures as a dict.
#[pyfunction]
fn evaluate<'py>(py: Python<'py>, pred: Vec<f64>, truth: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let r = EvalReport::compute(&pred, &truth).map_err(value_err)?;
    report_dict(py, &r)
}

/// Joins two score CSVs on `(scene_id, method_id)` and evaluates them.
#[pyfunction]
fn evaluate_csv<'py>(py: Python<'py>, pred: PathBuf, truth: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let p = File::open(&pred).map_err(io_err)?;
    let t = File::open(&truth).map_err(io_err)?;
    let r = metrics::evaluate_csv(p, t).map_err(value_err)?;
    report_dict(py, &r)
}

/// Colour change per radian between two observations of the point `origin`.
#[pyfunction]
#[pyo3(signature = (viewpoint_i, rgb_i, viewpoint_j, rgb_j, origin=[0.0; 3], eps_angle=pnsg::DEFAULT_EPS_ANGLE))]
fn nsg(
    viewpoint_i: [f64; 3],
    rgb_i: [f64; 3],
    viewpoint_j: [f64; 3],
    rgb_j: [f64; 3],
    origin: [f64; 3],
    eps_angle: f64,
) -> PyResult<[f64; 3]> {
    let ray = |vp: [f64; 3], rgb: [f64; 3], k: usize| geometry::ObservationRay {
        viewpoint: vec3(vp),
        pixel_value: rgb,
        azimuth: 0.0,
        polar: 0.0,
        path_index: k,
    };
    pnsg::nsg(&ray(viewpoint_i, rgb_i, 0), &ray(viewpoint_j, rgb_j, 1), &vec3(origin), eps_angle)
        .map(|s| s.gradient)
        .map_err(value_err)
}

/// Angle at `o` between the directions to `a` and `b`.
#[pyfunction]
fn angular_disparity(a: [f64; 3], b: [f64; 3], o: [f64; 3]) -> PyResult<f64> {
    geometry::angular_disparity(&vec3(a), &vec3(b), &vec3(o)).map_err(value_err)
}

/// Pixel `(u, v, depth)` of a world point, or `None` when it is behind the
/// camera or outside the image. `camera` is `(fx, fy, cx, cy, width, height)`
/// and `rotation` a unit quaternion `(w, x, y, z)` of the world-to-camera map.
#[pyfunction]
fn project(
    point: [f64; 3],
    camera: (f64, f64, f64, f64, usize, usize),
    rotation: [f64; 4],
    translation: [f64; 3],
) -> PyResult<Option<(f64, f64, f64)>> {
    let (fx, fy, cx, cy, w, h) = camera;
    let cam = PinholeCamera::new(fx, fy, cx, cy, w, h).map_err(value_err)?;
    let pose = RigidPose::from_wxyz(rotation, vec3(translation)).map_err(value_err)?;
    Ok(match geometry::project(&vec3(point), &cam, &pose).map_err(value_err)? {
        Projection::InView { u, v, depth } => Some((u, v, depth)),
        Projection::OutOfView => None,
    })
}

#[pymodule]
fn nqa(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Manifest>()?;
    m.add_class::<Features>()?;
    m.add_class::<Model>()?;
    m.add_function(wrap_pyfunction!(train_model, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_function(wrap_pyfunction!(synth_corpus, m)?)?;
    m.add_function(wrap_pyfunction!(rmse, m)?)?;
    m.add_function(wrap_pyfunction!(srcc, m)?)?;
    m.add_function(wrap_pyfunction!(plcc, m)?)?;
    m.add_function(wrap_pyfunction!(outlier_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate_csv, m)?)?;
    m.add_function(wrap_pyfunction!(nsg, m)?)?;
    m.add_function(wrap_pyfunction!(angular_disparity, m)?)?;
    m.add_function(wrap_pyfunction!(project, m)?)?;
    Ok(())
}
