//! Agreement between predicted and reference quality scores.

use std::collections::BTreeMap;
use std::io::Read;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("{op}: length mismatch ({pred} predictions, {truth} references)")]
    LengthMismatch { op: &'static str, pred: usize, truth: usize },
    #[error("{op}: need at least {need} samples, got {got}")]
    TooFew { op: &'static str, need: usize, got: usize },
    #[error("{op}: {side} is constant, correlation undefined")]
    Constant { op: &'static str, side: &'static str },
    #[error("{op}: non-finite value at index {index}")]
    NonFinite { op: &'static str, index: usize },
    #[error("psnr: image sizes differ ({a} vs {b} samples)")]
    SizeMismatch { a: usize, b: usize },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv {file}: duplicate key (scene_id={scene_id}, method_id={method_id})")]
    DuplicateKey { file: &'static str, scene_id: String, method_id: String },
    #[error("no {file} row for key (scene_id={scene_id}, method_id={method_id})")]
    MissingKey { file: &'static str, scene_id: String, method_id: String },
}

pub type Result<T> = std::result::Result<T, MetricsError>;

fn check(op: &'static str, pred: &[f64], truth: &[f64], min: usize) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            op,
            pred: pred.len(),
            truth: truth.len(),
        });
    }
    if pred.len() < min {
        return Err(MetricsError::TooFew {
            op,
            need: min,
            got: pred.len(),
        });
    }
    if let Some(index) = pred.iter().chain(truth).position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite {
            op,
            index: index % pred.len(),
        });
    }
    Ok(())
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check("rmse", pred, truth, 1)?;
    let ss: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((ss / pred.len() as f64).sqrt())
}

fn pearson(op: &'static str, x: &[f64], y: &[f64]) -> Result<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(MetricsError::Constant { op, side: "pred" });
    }
    if syy == 0.0 {
        return Err(MetricsError::Constant { op, side: "truth" });
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

pub fn plcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check("plcc", pred, truth, 2)?;
    pearson("plcc", pred, truth)
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

pub fn srcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check("srcc", pred, truth, 2)?;
    pearson("srcc", &average_ranks(pred), &average_ranks(truth))
}

/// Type-7 quantile of sorted data: linear interpolation at `(n − 1)·q`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Fraction of residuals `pred − truth` strictly outside Tukey's fences.
pub fn outlier_ratio(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check("outlier_ratio", pred, truth, 4)?;
    let mut r: Vec<f64> = pred.iter().zip(truth).map(|(p, t)| p - t).collect();
    r.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&r, 0.25);
    let q3 = quantile_sorted(&r, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    Ok(r.iter().filter(|&&v| v < lo || v > hi).count() as f64 / r.len() as f64)
}

/// `10·log10(peak² / MSE)`; identical inputs give `+∞`.
pub fn psnr(a: &[f32], b: &[f32], peak: f64) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(MetricsError::SizeMismatch { a: a.len(), b: b.len() });
    }
    let mse = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.len() as f64;
    Ok(if mse == 0.0 { f64::INFINITY } else { 10.0 * (peak * peak / mse).log10() })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rmse: f64,
    pub srcc: f64,
    pub plcc: f64,
    pub outlier_ratio: f64,
    pub n: usize,
}

impl EvalReport {
    /// All four measures; needs at least four pairs for the quartiles.
    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Self {
            rmse: rmse(pred, truth)?,
            srcc: srcc(pred, truth)?,
            plcc: plcc(pred, truth)?,
            outlier_ratio: outlier_ratio(pred, truth)?,
            n: pred.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn table(&self) -> String {
        let rows = [
            ("n", self.n.to_string()),
            ("RMSE", format!("{:.4}", self.rmse)),
            ("SRCC", format!("{:.4}", self.srcc)),
            ("PLCC", format!("{:.4}", self.plcc)),
            ("OR", format!("{:.4}", self.outlier_ratio)),
        ];
        let mut s = format!("{:<8}{:>10}\n", "metric", "value");
        for (k, v) in rows {
            s.push_str(&format!("{k:<8}{v:>10}\n"));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub scene_id: String,
    pub method_id: String,
    pub score: f64,
}

/// Reads `scene_id,method_id,<score>` rows; the third column may be named
/// `pred`, `truth`, `jod` or anything else.
pub fn read_scores<R: Read>(reader: R, file: &'static str) -> Result<BTreeMap<(String, String), f64>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row: ScoreRow = rec.deserialize(None)?;
        let key = (row.scene_id, row.method_id);
        if out.contains_key(&key) {
            return Err(MetricsError::DuplicateKey {
                file,
                scene_id: key.0,
                method_id: key.1,
            });
        }
        out.insert(key, row.score);
    }
    Ok(out)
}

/// Pairs predictions with references by `(scene_id, method_id)`; every key
/// must appear on both sides.
pub fn join_scores(
    pred: &BTreeMap<(String, String), f64>,
    truth: &BTreeMap<(String, String), f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let missing = |file, k: &(String, String)| MetricsError::MissingKey {
        file,
        scene_id: k.0.clone(),
        method_id: k.1.clone(),
    };
    if let Some(k) = truth.keys().find(|k| !pred.contains_key(*k)) {
        return Err(missing("prediction", k));
    }
    let mut p = Vec::with_capacity(pred.len());
    let mut t = Vec::with_capacity(pred.len());
    for (k, v) in pred {
        p.push(*v);
        t.push(*truth.get(k).ok_or_else(|| missing("truth", k))?);
    }
    Ok((p, t))
}

pub fn evaluate_csv<R1: Read, R2: Read>(pred: R1, truth: R2) -> Result<EvalReport> {
    let p = read_scores(pred, "prediction")?;
    let t = read_scores(truth, "truth")?;
    let (p, t) = join_scores(&p, &t)?;
    EvalReport::compute(&p, &t)
}
