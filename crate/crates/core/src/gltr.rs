//! Rank-bin detector: token-rank histogram features fed to an L2-regularized
//! logistic regression chosen by stratified k-fold grid search over `C`.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Matrix5, Vector5};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Label, Tokenizer};
use crate::decoding::stream_rng;
use crate::error::{Error, Result};
use crate::evalkit::confusion_metrics;
use crate::lm_backend::{score_tokens, LanguageModel, ScoringMode, TokenScore};
use crate::remote_detector::{Detector, DetectorVerdict};

pub const FEATURE_VERSION: &str = "gltr-4bin-v1";

/// Upper rank of each of the first three bins; the fourth bin is the rest.
pub const BIN_EDGES: [u32; 3] = [10, 100, 1000];

/// Gradient norm the optimizer must reach.
pub const GRADIENT_TOLERANCE: f64 = 1e-6;

/// Fractions of tokens whose rank falls in [1,10], (10,100], (100,1000],
/// (1000,∞).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GltrFeatureVector {
    pub fractions: [f64; 4],
    pub token_count: usize,
}

impl GltrFeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.fractions
    }
}

pub fn rank_bin(rank: u32) -> usize {
    BIN_EDGES.iter().position(|&edge| rank <= edge).unwrap_or(3)
}

pub fn extract_features(scores: &[TokenScore]) -> Result<GltrFeatureVector> {
    if scores.is_empty() {
        return Err(Error::Precondition("cannot extract features from zero tokens".into()));
    }
    let mut counts = [0usize; 4];
    for s in scores {
        counts[rank_bin(s.rank)] += 1;
    }
    let n = scores.len() as f64;
    Ok(GltrFeatureVector {
        fractions: counts.map(|c| c as f64 / n),
        token_count: scores.len(),
    })
}

/// Tokenizes, truncates to `window`, scores and bins one document.
pub fn document_features(
    lm: &dyn LanguageModel,
    tokenizer: &Tokenizer,
    doc: &Document,
    window: usize,
    mode: ScoringMode,
) -> Result<GltrFeatureVector> {
    let seq = tokenizer.tokenize(&doc.text).truncate_to_window(window);
    extract_features(&score_tokens(lm, &seq, mode)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingGrid {
    pub penalty: Penalty,
    #[serde(rename = "C_values")]
    pub c_values: Vec<f64>,
    pub folds: usize,
}

impl Default for TrainingGrid {
    fn default() -> Self {
        TrainingGrid {
            penalty: Penalty::L2,
            c_values: vec![100.0, 10.0, 1.0, 0.1, 0.01],
            folds: 5,
        }
    }
}

impl TrainingGrid {
    pub fn single(c: f64) -> Self {
        TrainingGrid {
            c_values: vec![c],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_values.is_empty() {
            return Err(Error::invalid("training grid", "C_values is empty"));
        }
        if let Some(c) = self.c_values.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(Error::invalid("training grid", format!("C must be positive, got {c}")));
        }
        if self.folds < 2 {
            return Err(Error::invalid("training grid", "folds must be >= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GltrModel {
    pub weights: [f64; 4],
    pub bias: f64,
    #[serde(rename = "chosen_C")]
    pub chosen_c: f64,
    pub cv_score: f64,
    pub threshold: f64,
    pub feature_version: String,
}

impl GltrModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: GltrModel =
            serde_json::from_str(&raw).map_err(|e| Error::invalid("model file", e.to_string()))?;
        if model.feature_version != FEATURE_VERSION {
            return Err(Error::invalid(
                "model file",
                format!("feature_version {:?}, expected {FEATURE_VERSION:?}", model.feature_version),
            ));
        }
        if !model.weights.iter().chain([&model.bias]).all(|v| v.is_finite()) {
            return Err(Error::invalid("model file", "non-finite parameters"));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let raw = serde_json::to_string_pretty(self)?;
        fs::write(path, raw).map_err(|e| Error::io(path, e))
    }

    fn margin(&self, x: &[f64; 4]) -> f64 {
        self.weights.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Probability of the synthetic class.
    pub score: f64,
    pub label: Label,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn predict(model: &GltrModel, features: &GltrFeatureVector) -> Prediction {
    let score = sigmoid(model.margin(&features.fractions));
    Prediction {
        score,
        label: if score >= model.threshold {
            Label::Synthetic
        } else {
            Label::Real
        },
    }
}

/// `log(1 + exp(z))` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// The training objective for one `C`:
/// `(1/2C)·‖w‖² + Σ log(1 + exp(−y·(w·x + b)))`, bias unpenalized, y ∈ {−1, +1}.
#[derive(Debug, Clone, Copy)]
pub struct LogisticObjective<'a> {
    pub xs: &'a [[f64; 4]],
    pub ys: &'a [f64],
    pub c: f64,
}

impl LogisticObjective<'_> {
    fn margin(params: &Vector5<f64>, x: &[f64; 4]) -> f64 {
        params[0] * x[0] + params[1] * x[1] + params[2] * x[2] + params[3] * x[3] + params[4]
    }

    pub fn loss(&self, params: &Vector5<f64>) -> f64 {
        let reg = params.rows(0, 4).norm_squared() / (2.0 * self.c);
        reg + self
            .xs
            .iter()
            .zip(self.ys)
            .map(|(x, y)| softplus(-y * Self::margin(params, x)))
            .sum::<f64>()
    }

    pub fn gradient(&self, params: &Vector5<f64>) -> Vector5<f64> {
        let mut g = Vector5::zeros();
        for i in 0..4 {
            g[i] = params[i] / self.c;
        }
        for (x, &y) in self.xs.iter().zip(self.ys) {
            // d/dz softplus(-y z) = -y · sigmoid(-y z)
            let coeff = -y * sigmoid(-y * Self::margin(params, x));
            for i in 0..4 {
                g[i] += coeff * x[i];
            }
            g[4] += coeff;
        }
        g
    }

    fn hessian(&self, params: &Vector5<f64>) -> Matrix5<f64> {
        let mut h = Matrix5::zeros();
        for i in 0..4 {
            h[(i, i)] = 1.0 / self.c;
        }
        for x in self.xs {
            let s = sigmoid(Self::margin(params, x));
            let weight = s * (1.0 - s);
            let xe = Vector5::new(x[0], x[1], x[2], x[3], 1.0);
            h += weight * xe * xe.transpose();
        }
        h
    }

    /// Newton's method with Armijo backtracking from the origin.
    pub fn minimize(&self) -> Result<Vector5<f64>> {
        let mut params = Vector5::zeros();
        let mut loss = self.loss(&params);
        for _ in 0..200 {
            let grad = self.gradient(&params);
            if grad.norm() <= 1e-10 {
                break;
            }
            let hess = self.hessian(&params);
            let step = hess
                .cholesky()
                .map(|ch| ch.solve(&grad))
                .unwrap_or_else(|| {
                    let damped = hess + Matrix5::identity() * 1e-8;
                    damped.try_inverse().map(|inv| inv * grad).unwrap_or(grad)
                });
            let slope = grad.dot(&step);
            // full step first; near the optimum the loss can no longer resolve
            // the decrease, so a smaller gradient also counts as progress
            let full = params - step;
            let full_loss = self.loss(&full);
            if full_loss <= loss - 1e-4 * slope || self.gradient(&full).norm() < grad.norm() {
                params = full;
                loss = full_loss;
                continue;
            }
            let mut t = 0.5;
            let mut moved = false;
            while t > 1e-12 {
                let candidate = params - step * t;
                let cand_loss = self.loss(&candidate);
                if cand_loss < loss - 1e-4 * t * slope {
                    params = candidate;
                    loss = cand_loss;
                    moved = true;
                    break;
                }
                t *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let norm = self.gradient(&params).norm();
        if norm > GRADIENT_TOLERANCE || !norm.is_finite() {
            return Err(Error::Precondition(format!(
                "logistic regression did not converge (gradient norm {norm:e}, C = {})",
                self.c
            )));
        }
        Ok(params)
    }
}

fn check_training_set(features: &[GltrFeatureVector], labels: &[Label]) -> Result<(Vec<[f64; 4]>, Vec<f64>)> {
    if features.len() != labels.len() {
        return Err(Error::Precondition(format!(
            "{} feature vectors but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let mut ys = Vec::with_capacity(labels.len());
    for (i, l) in labels.iter().enumerate() {
        match l.target() {
            Some(1) => ys.push(1.0),
            Some(_) => ys.push(-1.0),
            None => return Err(Error::Precondition(format!("example {i} has no label"))),
        }
    }
    let xs: Vec<[f64; 4]> = features.iter().map(|f| f.fractions).collect();
    if let Some(i) = xs.iter().position(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Precondition(format!("feature vector {i} is not finite")));
    }
    let positives = ys.iter().filter(|y| **y > 0.0).count();
    let negatives = ys.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Precondition("training data contains a single class".into()));
    }
    if positives < 2 || negatives < 2 {
        return Err(Error::Precondition("need at least 2 examples per class".into()));
    }
    Ok((xs, ys))
}

/// Fits one model with a fixed `C` (no cross-validation).
pub fn fit(features: &[GltrFeatureVector], labels: &[Label], c: f64) -> Result<GltrModel> {
    let (xs, ys) = check_training_set(features, labels)?;
    let params = LogisticObjective { xs: &xs, ys: &ys, c }.minimize()?;
    Ok(model_from(params, c, f64::NAN))
}

fn model_from(params: Vector5<f64>, c: f64, cv_score: f64) -> GltrModel {
    GltrModel {
        weights: [params[0], params[1], params[2], params[3]],
        bias: params[4],
        chosen_c: c,
        cv_score,
        threshold: 0.5,
        feature_version: FEATURE_VERSION.to_string(),
    }
}

/// Fold index per example. Within each class, examples are shuffled by the
/// seed and dealt round-robin, so every fold sees both classes.
pub fn stratified_folds(positive: &[bool], folds: usize, seed: u64) -> Vec<usize> {
    let mut assignment = vec![0; positive.len()];
    for (stream, class) in [false, true].into_iter().enumerate() {
        let mut members: Vec<usize> = (0..positive.len()).filter(|&i| positive[i] == class).collect();
        members.shuffle(&mut stream_rng(seed, stream as u64));
        for (pos, idx) in members.into_iter().enumerate() {
            assignment[idx] = pos % folds;
        }
    }
    assignment
}

/// Grid search over `C` by mean stratified k-fold F1 (ties go to the larger
/// `C`), then a refit on all data. With fewer examples in a class than
/// `grid.folds`, the fold count drops to that class size.
pub fn train(features: &[GltrFeatureVector], labels: &[Label], grid: &TrainingGrid, seed: u64) -> Result<GltrModel> {
    grid.validate()?;
    let (xs, ys) = check_training_set(features, labels)?;
    let positive: Vec<bool> = ys.iter().map(|y| *y > 0.0).collect();
    let smallest_class = positive.iter().filter(|p| **p).count().min(positive.iter().filter(|p| !**p).count());
    let folds = grid.folds.min(smallest_class);
    let assignment = stratified_folds(&positive, folds, seed);

    let mut best: Option<(f64, f64)> = None;
    for &c in &grid.c_values {
        let mut total_f1 = 0.0;
        for fold in 0..folds {
            let (mut tx, mut ty, mut vx, mut vy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
            for i in 0..xs.len() {
                if assignment[i] == fold {
                    vx.push(xs[i]);
                    vy.push(ys[i]);
                } else {
                    tx.push(xs[i]);
                    ty.push(ys[i]);
                }
            }
            let params = LogisticObjective { xs: &tx, ys: &ty, c }.minimize()?;
            let model = model_from(params, c, f64::NAN);
            let preds: Vec<bool> = vx.iter().map(|x| sigmoid(model.margin(x)) >= model.threshold).collect();
            let truth: Vec<bool> = vy.iter().map(|y| *y > 0.0).collect();
            total_f1 += confusion_metrics(&preds, &truth)?.f1;
        }
        let mean = total_f1 / folds as f64;
        let better = match best {
            None => true,
            Some((score, best_c)) => mean > score + 1e-12 || ((mean - score).abs() <= 1e-12 && c > best_c),
        };
        if better {
            best = Some((mean, c));
        }
    }
    let (cv_score, chosen_c) = best.expect("grid is non-empty");
    let params = LogisticObjective {
        xs: &xs,
        ys: &ys,
        c: chosen_c,
    }
    .minimize()?;
    Ok(model_from(params, chosen_c, cv_score))
}

/// A trained model bound to the backend and tokenizer that produce its
/// features.
#[derive(Clone)]
pub struct GltrDetector {
    pub model: GltrModel,
    lm: Arc<dyn LanguageModel>,
    tokenizer: Tokenizer,
    window: usize,
    mode: ScoringMode,
    id: String,
}

impl GltrDetector {
    pub fn new(model: GltrModel, lm: Arc<dyn LanguageModel>, tokenizer: Tokenizer, window: usize, mode: ScoringMode) -> Self {
        GltrDetector {
            model,
            lm,
            tokenizer,
            window,
            mode,
            id: format!("gltr-{mode}"),
        }
    }

    pub fn features(&self, doc: &Document) -> Result<GltrFeatureVector> {
        document_features(self.lm.as_ref(), &self.tokenizer, doc, self.window, self.mode)
    }
}

impl Detector for GltrDetector {
    fn detector_id(&self) -> &str {
        &self.id
    }

    fn classify(&self, doc: &Document) -> Result<DetectorVerdict> {
        let p = predict(&self.model, &self.features(doc)?);
        Ok(DetectorVerdict {
            score: p.score,
            label: p.label,
            detector_id: self.id.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(ranks: &[u32]) -> Vec<TokenScore> {
        ranks
            .iter()
            .map(|&rank| TokenScore { token: 0, prob: 0.1, rank })
            .collect()
    }

    #[test]
    fn bin_arithmetic() {
        let f = extract_features(&scores(&[1, 5, 50, 500, 5000])).unwrap();
        assert_eq!(f.fractions, [0.4, 0.2, 0.2, 0.2]);
        assert_eq!(f.token_count, 5);
        assert_eq!(extract_features(&scores(&[1, 1, 1])).unwrap().fractions, [1.0, 0.0, 0.0, 0.0]);
        let f = extract_features(&scores(&[10, 100, 1000])).unwrap();
        for (got, want) in f.fractions.iter().zip([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, 0.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(extract_features(&[]).is_err());
    }

    fn fv(x: [f64; 4]) -> GltrFeatureVector {
        GltrFeatureVector {
            fractions: x,
            token_count: 10,
        }
    }

    #[test]
    fn predict_examples() {
        let mut model = model_from(Vector5::zeros(), 1.0, 0.0);
        let p = predict(&model, &fv([0.25; 4]));
        assert_eq!(p.score, 0.5);
        assert_eq!(p.label, Label::Synthetic);

        model.weights = [5.0, 0.0, 0.0, -5.0];
        let p = predict(&model, &fv([1.0, 0.0, 0.0, 0.0]));
        assert!((p.score - 0.993307).abs() < 1e-6);

        let lo = predict(&model, &fv([0.2, 0.3, 0.3, 0.2])).score;
        let hi = predict(&model, &fv([0.4, 0.3, 0.3, 0.2])).score;
        assert!(hi > lo);
    }

    #[test]
    fn separable_toy_set() {
        let features = vec![
            fv([0.9, 0.1, 0.0, 0.0]),
            fv([0.8, 0.2, 0.0, 0.0]),
            fv([0.1, 0.2, 0.6, 0.1]),
            fv([0.2, 0.1, 0.5, 0.2]),
        ];
        let labels = vec![Label::Synthetic, Label::Synthetic, Label::Real, Label::Real];
        let model = train(&features, &labels, &TrainingGrid::default(), 1).unwrap();
        let preds: Vec<bool> = features.iter().map(|f| predict(&model, f).label == Label::Synthetic).collect();
        let truth: Vec<bool> = labels.iter().map(|l| *l == Label::Synthetic).collect();
        assert_eq!(confusion_metrics(&preds, &truth).unwrap().f1, 1.0);
        assert!(model.cv_score >= 0.0 && model.cv_score <= 1.0);
        assert!(TrainingGrid::default().c_values.contains(&model.chosen_c));
    }

    #[test]
    fn rejects_bad_training_sets() {
        let f = vec![fv([1.0, 0.0, 0.0, 0.0]); 4];
        assert!(train(&f, &[Label::Real; 4], &TrainingGrid::default(), 0).is_err());
        assert!(train(&f, &[Label::Real; 3], &TrainingGrid::default(), 0).is_err());
        let mut bad = f.clone();
        bad[0].fractions[0] = f64::NAN;
        let labels = [Label::Real, Label::Real, Label::Synthetic, Label::Synthetic];
        assert!(train(&bad, &labels, &TrainingGrid::default(), 0).is_err());
    }

    #[test]
    fn folds_are_stratified() {
        let positive: Vec<bool> = (0..20).map(|i| i % 4 == 0).collect();
        let folds = stratified_folds(&positive, 5, 3);
        for fold in 0..5 {
            assert_eq!((0..20).filter(|&i| folds[i] == fold && positive[i]).count(), 1);
            assert_eq!((0..20).filter(|&i| folds[i] == fold && !positive[i]).count(), 3);
        }
        assert_eq!(folds, stratified_folds(&positive, 5, 3));
    }

    #[test]
    fn model_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let model = model_from(Vector5::new(1.0, 2.0, 3.0, 4.0, 5.0), 10.0, 0.9);
        model.save(&path).unwrap();
        let raw = fs::read_to_string(&path).unwrap();
        assert!(raw.contains("\"chosen_C\"") && raw.contains("gltr-4bin-v1"));
        assert_eq!(GltrModel::load(&path).unwrap(), model);
    }
}
