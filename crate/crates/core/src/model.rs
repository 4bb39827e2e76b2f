//! The full quality model: viewwise and pointwise branches fused by an MLP.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::nn::{Bound, Linear, ParamId, ParamStore};
use crate::pointwise::{PointInput, PointwiseConfig, PointwiseNet};
use crate::tensor::{Graph, Tensor, TensorError, Var};
use crate::viewwise::{ViewwiseConfig, ViewwiseNet};

pub const MODEL_MAGIC: &[u8; 7] = b"NQAMDL1";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model file version {0}")]
    UnsupportedVersion(u32),
    #[error("config hash mismatch: stored {stored}, computed {computed}")]
    HashMismatch { stored: String, computed: String },
    #[error("malformed model file: {0}")]
    Malformed(String),
    #[error("input does not match model config: {0}")]
    InputMismatch(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub viewwise: ViewwiseConfig,
    pub pointwise: PointwiseConfig,
    pub fusion_hidden: usize,
    /// Drop the pointwise branch; the fusion MLP sees only the viewwise embedding.
    pub ablate_pointwise: bool,
    /// Seed of the weight initialization.
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            viewwise: ViewwiseConfig::default(),
            pointwise: PointwiseConfig::default(),
            fusion_hidden: 64,
            ablate_pointwise: false,
            seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small widths with two bins and four resampled positions, for gradient checks.
    pub fn tiny() -> Self {
        Self {
            viewwise: ViewwiseConfig {
                input: crate::nss::NSS_DIM,
                stage_widths: [4, 6],
                output: 4,
                expansion: 2,
                se_reduction: 2,
            },
            pointwise: PointwiseConfig {
                bins: 2,
                resample: 4,
                conv_channels: [2, 3, 3, 2],
                point_dim: 4,
                point_hidden: 5,
                shared_width: 6,
                output: 4,
            },
            fusion_hidden: 5,
            ablate_pointwise: false,
            seed: 0,
        }
    }

    /// Narrower layers for single-CPU training on small corpora, with the
    /// given PNSG shape.
    pub fn compact(bins: usize, resample: usize) -> Self {
        Self {
            viewwise: ViewwiseConfig {
                stage_widths: [32, 64],
                output: 32,
                ..Default::default()
            },
            pointwise: PointwiseConfig {
                bins,
                resample,
                conv_channels: [8, 16, 16, 16],
                point_dim: 32,
                point_hidden: 64,
                shared_width: 64,
                output: 32,
            },
            fusion_hidden: 32,
            ablate_pointwise: false,
            seed: 0,
        }
    }

    /// First 16 hex digits of the SHA-256 of the config's JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Inputs for one scene: NSS features as an `F × V` matrix in path order and
/// the sampled points of one round.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneInputs {
    pub views: Tensor,
    pub points: Vec<PointInput>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QualityModel {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub viewwise: ViewwiseNet,
    pub pointwise: Option<PointwiseNet>,
    pub fusion: [Linear; 2],
    /// Labels are learned in standardized units; these map them back.
    pub label_mean: ParamId,
    pub label_std: ParamId,
}

impl QualityModel {
    pub fn new(config: ModelConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut store = ParamStore::new();
        let viewwise = ViewwiseNet::new(&mut store, config.viewwise, &mut rng);
        let pointwise = (!config.ablate_pointwise).then(|| PointwiseNet::new(&mut store, config.pointwise, &mut rng));
        let fused_dim = config.viewwise.output + if config.ablate_pointwise { 0 } else { config.pointwise.output };
        let fusion = [
            Linear::new(&mut store, "fusion0", fused_dim, config.fusion_hidden, &mut rng),
            Linear::new(&mut store, "fusion1", config.fusion_hidden, 1, &mut rng),
        ];
        let label_mean = store.add("label.mean", Tensor::zeros(&[1]), false);
        let label_std = store.add("label.std", Tensor::full(&[1], 1.0), false);
        Self {
            config,
            store,
            viewwise,
            pointwise,
            fusion,
            label_mean,
            label_std,
        }
    }

    pub fn check_inputs(&self, inputs: &SceneInputs) -> Result<()> {
        let vs = inputs.views.shape();
        if vs.len() != 2 || vs[0] != self.config.viewwise.input || vs[1] == 0 {
            return Err(ModelError::InputMismatch(format!(
                "view features have shape {vs:?}, expected [{}, ≥1]",
                self.config.viewwise.input
            )));
        }
        if self.pointwise.is_some() {
            let pc = &self.config.pointwise;
            if inputs.points.is_empty() {
                return Err(ModelError::InputMismatch("no surface points".into()));
            }
            let want = [3, 2, pc.bins, pc.resample];
            if let Some(p) = inputs.points.iter().find(|p| p.volume.shape() != want) {
                return Err(ModelError::InputMismatch(format!(
                    "PNSG volume shape {:?}, expected {want:?} (bins {}, resample {})",
                    p.volume.shape(),
                    pc.bins,
                    pc.resample
                )));
            }
        }
        Ok(())
    }

    /// Output in standardized label units, shape `[1]`.
    pub fn forward<'g>(&self, g: &'g Graph, p: &Bound<'g>, inputs: &SceneInputs) -> Result<Var<'g>> {
        self.check_inputs(inputs)?;
        let dv = self.viewwise.forward(p, g.constant(inputs.views.clone()))?;
        let fused = match &self.pointwise {
            Some(net) => {
                let dq = net.forward(g, p, &inputs.points)?;
                g.concat(&[dv, dq])?
            }
            None => dv,
        };
        let h = self.fusion[0].forward(p, fused)?.silu()?;
        Ok(self.fusion[1].forward(p, h)?)
    }

    pub fn label_stats(&self) -> (f64, f64) {
        (
            self.store.get(self.label_mean).item() as f64,
            self.store.get(self.label_std).item() as f64,
        )
    }

    pub fn set_label_stats(&mut self, mean: f64, std: f64) -> Result<()> {
        let std = if std > 1e-12 { std } else { 1.0 };
        self.store.set(self.label_mean, Tensor::from_vec(vec![mean as f32]))?;
        self.store.set(self.label_std, Tensor::from_vec(vec![std as f32]))?;
        Ok(())
    }

    /// JOD estimate for one scene and one point sample.
    pub fn predict(&self, inputs: &SceneInputs) -> Result<f64> {
        let g = Graph::new();
        let p = self.store.bind(&g);
        let y = self.forward(&g, &p, inputs)?.value().item() as f64;
        let (mean, std) = self.label_stats();
        Ok(y * std + mean)
    }

    /// Mean estimate over several point samples of the same scene.
    pub fn predict_rounds(&self, views: &Tensor, rounds: &[Vec<PointInput>]) -> Result<f64> {
        if self.pointwise.is_none() || rounds.is_empty() {
            return self.predict(&SceneInputs {
                views: views.clone(),
                points: rounds.first().cloned().unwrap_or_default(),
            });
        }
        let mut total = 0.0;
        for pts in rounds {
            total += self.predict(&SceneInputs {
                views: views.clone(),
                points: pts.clone(),
            })?;
        }
        Ok(total / rounds.len() as f64)
    }

    /// Layout: magic (7 bytes), version u32, header length u64, JSON header
    /// `{config, config_hash, params: [{name, shape, trainable}]}`, then every
    /// tensor as little-endian f32 in header order.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let params: Vec<ParamEntry> = self
            .store
            .ids()
            .map(|id| ParamEntry {
                name: self.store.name(id).to_owned(),
                shape: self.store.get(id).shape().to_vec(),
                trainable: self.store.is_trainable(id),
            })
            .collect();
        let header = Header {
            config: self.config,
            config_hash: self.config.hash(),
            params,
        };
        let json = serde_json::to_vec(&header).map_err(|e| ModelError::Malformed(e.to_string()))?;
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&MODEL_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for t in self.store.tensors() {
            let mut buf = Vec::with_capacity(t.numel() * 4);
            for v in t.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic).map_err(|_| ModelError::BadMagic)?;
        if &magic != MODEL_MAGIC {
            return Err(ModelError::BadMagic);
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let version = u32::from_le_bytes(b4);
        if version != MODEL_VERSION {
            return Err(ModelError::UnsupportedVersion(version));
        }
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let len = u64::from_le_bytes(b8);
        if len > 1 << 30 {
            return Err(ModelError::Malformed(format!("header length {len}")));
        }
        let mut json = vec![0u8; len as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| ModelError::Malformed(e.to_string()))?;
        let computed = header.config.hash();
        if computed != header.config_hash {
            return Err(ModelError::HashMismatch {
                stored: header.config_hash,
                computed,
            });
        }
        let mut model = Self::new(header.config);
        if header.params.len() != model.store.len() {
            return Err(ModelError::Malformed(format!(
                "{} tensors listed, config implies {}",
                header.params.len(),
                model.store.len()
            )));
        }
        let ids: Vec<ParamId> = model.store.ids().collect();
        for (id, entry) in ids.into_iter().zip(&header.params) {
            let t = model.store.get(id);
            if entry.name != model.store.name(id) || entry.shape != t.shape() || entry.trainable != model.store.is_trainable(id) {
                return Err(ModelError::Malformed(format!("tensor '{}' does not match the config", entry.name)));
            }
            let mut buf = vec![0u8; t.numel() * 4];
            r.read_exact(&mut buf)?;
            let data: Vec<f32> = buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            let shape = entry.shape.clone();
            model.store.set(id, Tensor::new(&shape, data)?)?;
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(ModelError::Malformed(format!("{} trailing bytes", rest.len())));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    config_hash: String,
    params: Vec<ParamEntry>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check_store, project_to_scalar};
    use crate::tensor::CoordSelection;
    use rand::Rng;

    pub(crate) fn random_inputs(cfg: &ModelConfig, views: usize, points: usize, seed: u64) -> SceneInputs {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pc = cfg.pointwise;
        SceneInputs {
            views: Tensor::randn(&[cfg.viewwise.input, views], 1.0, &mut rng),
            points: (0..points)
                .map(|_| PointInput {
                    volume: Tensor::randn(&[3, 2, pc.bins, pc.resample], 1.0, &mut rng),
                    xyz: [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
                })
                .collect(),
        }
    }

    #[test]
    fn save_load_round_trip_is_bitwise() {
        let mut model = QualityModel::new(ModelConfig::tiny());
        model.set_label_stats(-1.5, 0.7).unwrap();
        let inputs = random_inputs(&model.config, 8, 4, 1);
        let before = model.predict(&inputs).unwrap();
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let back = QualityModel::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict(&inputs).unwrap().to_bits(), before.to_bits());
    }

    #[test]
    fn corrupted_files_are_rejected() {
        let model = QualityModel::new(ModelConfig::tiny());
        let mut buf = Vec::new();
        model.write_to(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(QualityModel::read_from(&mut bad.as_slice()), Err(ModelError::BadMagic)));
        let mut bad = buf.clone();
        bad[7] = 9;
        assert!(matches!(QualityModel::read_from(&mut bad.as_slice()), Err(ModelError::UnsupportedVersion(9))));
        // flip one hex digit of the stored hash
        let pos = buf.windows(13).position(|w| w == b"\"config_hash\"").unwrap() + 15;
        let mut bad = buf.clone();
        bad[pos] = if bad[pos] == b'0' { b'1' } else { b'0' };
        assert!(matches!(QualityModel::read_from(&mut bad.as_slice()), Err(ModelError::HashMismatch { .. })));
        let mut bad = buf;
        bad.pop();
        assert!(QualityModel::read_from(&mut bad.as_slice()).is_err());
    }

    #[test]
    fn predictions_are_deterministic() {
        let model = QualityModel::new(ModelConfig::tiny());
        let inputs = random_inputs(&model.config, 5, 3, 2);
        let a = model.predict(&inputs).unwrap();
        let b = QualityModel::new(ModelConfig::tiny()).predict(&inputs).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn ablated_model_ignores_points() {
        let cfg = ModelConfig {
            ablate_pointwise: true,
            ..ModelConfig::tiny()
        };
        let model = QualityModel::new(cfg);
        assert!(model.pointwise.is_none());
        let mut inputs = random_inputs(&cfg, 6, 4, 3);
        let a = model.predict(&inputs).unwrap();
        inputs.points = random_inputs(&cfg, 6, 9, 4).points;
        assert_eq!(model.predict(&inputs).unwrap().to_bits(), a.to_bits());
        inputs.points.clear();
        assert_eq!(model.predict(&inputs).unwrap().to_bits(), a.to_bits());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let model = QualityModel::new(ModelConfig::tiny());
        let mut inputs = random_inputs(&model.config, 5, 2, 5);
        inputs.points[1].volume = Tensor::zeros(&[3, 2, 3, 4]);
        assert!(matches!(model.predict(&inputs), Err(ModelError::InputMismatch(_))));
    }

    #[test]
    fn full_model_gradient_check() {
        let model = QualityModel::new(ModelConfig::tiny());
        let inputs = random_inputs(&model.config, 8, 4, 6);
        let err = grad_check_store(
            &model.store,
            &[],
            |g, p, _| project_to_scalar(g, model.forward(g, p, &inputs).map_err(|e| TensorError::Invalid(e.to_string()))?, 0),
            1e-3,
            CoordSelection::Sample { per_tensor: 6, seed: 7 },
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }
}
