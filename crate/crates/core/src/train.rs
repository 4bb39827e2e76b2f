//! ADAM and the training loop.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{ModelError, QualityModel, SceneInputs};
use crate::nn::ParamStore;
use crate::pointwise::PointInput;
use crate::tensor::{Graph, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("empty training set")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, last_finite: Box<QualityModel> },
    #[error("invalid training config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// ADAM with bias correction. Moments are kept in f64, one slot per tensor of
/// the store; buffers are skipped.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// `grads[i]` is the gradient of tensor `i`; `None` means zero.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(TrainError::Config(format!("{} gradients for {} tensors", grads.len(), store.len())));
        }
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(TrainError::Tensor(TensorError::NonFinite { op: "adam_step" }));
        }
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if !store.is_trainable(id) {
                continue;
            }
            let i = id.index();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            let p = store.get_mut(id).data_mut();
            for k in 0..p.len() {
                let g = grads[i].as_ref().map_or(0.0, |t| t.data()[k] as f64);
                m[k] = beta1 * m[k] + (1.0 - beta1) * g;
                v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p[k] = (p[k] as f64 - lr * mh / (vh.sqrt() + eps)) as f32;
            }
        }
        Ok(())
    }
}

/// One labelled scene. `rounds` holds independent point samples; epoch `e`
/// uses round `e mod rounds.len()`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingExample {
    pub scene_id: String,
    pub method_id: String,
    pub dataset: String,
    pub views: Tensor,
    pub rounds: Vec<Vec<PointInput>>,
    pub label: f64,
}

impl TrainingExample {
    fn inputs(&self, epoch: usize) -> SceneInputs {
        SceneInputs {
            views: self.views.clone(),
            points: if self.rounds.is_empty() {
                Vec::new()
            } else {
                self.rounds[epoch % self.rounds.len()].clone()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    /// Hold out one scene per dataset for checkpoint selection.
    pub holdout_validation: bool,
    /// When set, the latest and best checkpoints are written here every epoch.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 10,
            adam: AdamConfig::default(),
            seed: 0,
            holdout_validation: true,
            checkpoint_dir: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean squared error in label units over the training split.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: QualityModel,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
    pub validation_scenes: Vec<String>,
}

/// Number of optimizer steps in one epoch.
pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Scenes held out for validation: per dataset with at least two scenes, the
/// scene picked by the seeded generator.
pub fn validation_scenes(examples: &[TrainingExample], seed: u64) -> Vec<String> {
    let mut by_dataset: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in examples {
        let scenes = by_dataset.entry(&e.dataset).or_default();
        if !scenes.contains(&e.scene_id.as_str()) {
            scenes.push(&e.scene_id);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0F_DA7A);
    by_dataset
        .into_values()
        .filter(|s| s.len() >= 2)
        .map(|mut s| {
            s.sort_unstable();
            s.choose(&mut rng).expect("non-empty").to_string()
        })
        .collect()
}

/// Sets input and label standardization from the training examples.
pub fn fit_normalization(model: &mut QualityModel, examples: &[TrainingExample]) -> Result<()> {
    let f = model.config.viewwise.input;
    let (mut s1, mut s2, mut n) = (vec![0.0; f], vec![0.0; f], 0usize);
    for e in examples {
        let l = e.views.shape()[1];
        for (i, &v) in e.views.data().iter().enumerate() {
            s1[i / l] += v as f64;
            s2[i / l] += (v as f64) * (v as f64);
        }
        n += l;
    }
    let n = n.max(1) as f64;
    let mean: Vec<f64> = s1.iter().map(|s| s / n).collect();
    let std: Vec<f64> = s2.iter().zip(&mean).map(|(s, m)| (s / n - m * m).max(0.0).sqrt()).collect();
    model.viewwise.set_normalization(&mut model.store, &mean, &std)?;

    if let Some(net) = &model.pointwise {
        let (mut sq, mut cnt) = ([0.0f64; 3], [0usize; 3]);
        for pt in examples.iter().flat_map(|e| e.rounds.iter().flatten()) {
            let per = pt.volume.numel() / 3;
            for (i, &v) in pt.volume.data().iter().enumerate() {
                if v != 0.0 {
                    sq[i / per] += (v as f64) * (v as f64);
                    cnt[i / per] += 1;
                }
            }
        }
        let rms = [0, 1, 2].map(|c| if cnt[c] > 0 { (sq[c] / cnt[c] as f64).sqrt() } else { 0.0 });
        net.set_normalization(&mut model.store, &rms)?;
    }

    let labels: Vec<f64> = examples.iter().map(|e| e.label).collect();
    let m = labels.iter().sum::<f64>() / labels.len().max(1) as f64;
    let var = labels.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / labels.len().max(1) as f64;
    model.set_label_stats(m, var.sqrt())?;
    Ok(())
}

/// Squared error (standardized units) and gradients for one example.
fn example_gradients(model: &QualityModel, inputs: &SceneInputs, target: f32) -> Result<(f64, Vec<Option<Tensor>>)> {
    let g = Graph::new();
    let p = model.store.bind(&g);
    let y = model.forward(&g, &p, inputs)?;
    let loss = y.mse(g.constant(Tensor::from_vec(vec![target])))?;
    let value = loss.value().item() as f64;
    let grads = g.backward(loss)?;
    Ok((value, p.vars().iter().map(|&v| grads.get(v).cloned()).collect()))
}

/// Mean squared error in label units.
pub fn evaluate_loss(model: &QualityModel, examples: &[&TrainingExample], epoch: usize) -> Result<f64> {
    let errs = examples
        .par_iter()
        .map(|e| Ok((model.predict(&e.inputs(epoch))? - e.label).powi(2)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(errs.iter().sum::<f64>() / errs.len().max(1) as f64)
}

/// Trains `model` in place from its current weights; returns the checkpoint
/// with the lowest validation loss (training loss when nothing is held out).
pub fn train(mut model: QualityModel, examples: &[TrainingExample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if examples.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(TrainError::Config("epochs and batch size must be positive".into()));
    }
    let validation = if cfg.holdout_validation {
        validation_scenes(examples, cfg.seed)
    } else {
        Vec::new()
    };
    let (val, trn): (Vec<&TrainingExample>, Vec<&TrainingExample>) =
        examples.iter().partition(|e| validation.contains(&e.scene_id));
    let train_owned: Vec<TrainingExample> = trn.iter().map(|e| (*e).clone()).collect();
    fit_normalization(&mut model, &train_owned)?;
    let (label_mean, label_std) = model.label_stats();

    if let Some(dir) = &cfg.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(ModelError::from)?;
    }
    let mut adam = Adam::new(&model.store, cfg.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..trn.len()).collect();
    let mut best: Option<(f64, usize, QualityModel)> = None;
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let e = trn[i];
                    let target = ((e.label - label_mean) / label_std) as f32;
                    example_gradients(&model, &e.inputs(epoch), target)
                })
                .collect::<Vec<_>>();
            let mut sum: Vec<Option<Tensor>> = vec![None; model.store.len()];
            for r in results {
                let (loss, grads) = match r {
                    Ok(v) => v,
                    Err(TrainError::Tensor(TensorError::NonFinite { .. })) => {
                        return Err(diverged(epoch, best, &model));
                    }
                    Err(e) => return Err(e),
                };
                if !loss.is_finite() {
                    return Err(diverged(epoch, best, &model));
                }
                for (acc, g) in sum.iter_mut().zip(grads) {
                    match (acc.as_mut(), g) {
                        (Some(a), Some(g)) => a.add_assign(&g),
                        (None, Some(g)) => *acc = Some(g),
                        _ => {}
                    }
                }
            }
            let scale = 1.0 / batch.len() as f32;
            for t in sum.iter_mut().flatten() {
                t.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
            if let Err(e) = adam.step(&mut model.store, &sum) {
                return match e {
                    TrainError::Tensor(TensorError::NonFinite { .. }) => Err(diverged(epoch, best, &model)),
                    e => Err(e),
                };
            }
        }

        let train_loss = evaluate_loss(&model, &trn, epoch)?;
        let val_loss = if val.is_empty() { None } else { Some(evaluate_loss(&model, &val, epoch)?) };
        if !train_loss.is_finite() || val_loss.is_some_and(|v| !v.is_finite()) {
            return Err(diverged(epoch, best, &model));
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });
        let score = val_loss.unwrap_or(train_loss);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, epoch, model.clone()));
        }
        if let Some(dir) = &cfg.checkpoint_dir {
            model.save(&dir.join("last.nqa"))?;
            if best.as_ref().is_some_and(|(_, e, _)| *e == epoch) {
                model.save(&dir.join("best.nqa"))?;
            }
        }
        log::info!("epoch {epoch}: train {train_loss:.6} val {val_loss:?}");
    }
    let (_, best_epoch, model) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
        validation_scenes: validation,
    })
}

fn diverged(epoch: usize, best: Option<(f64, usize, QualityModel)>, current: &QualityModel) -> TrainError {
    let last_finite = best.map(|b| b.2).unwrap_or_else(|| current.clone());
    TrainError::Diverged {
        epoch,
        last_finite: Box::new(last_finite),
    }
}
