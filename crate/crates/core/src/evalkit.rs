//! Detection metrics, percentage deltas, evasion rate, and the
//! average-linkage distribution distance.

use serde::{Deserialize, Serialize};

use rayon::prelude::*;

use crate::attack::AttackResult;
use crate::corpus::Label;
use crate::error::{Error, Result};
use crate::remote_detector::Detector;

/// Counts with SYNTHETIC as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn tally(preds: &[bool], labels: &[bool]) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::Precondition(format!(
                "{} predictions but {} labels",
                preds.len(),
                labels.len()
            )));
        }
        if preds.is_empty() {
            return Err(Error::Precondition("no examples".into()));
        }
        let mut c = ConfusionCounts::default();
        for (&p, &l) in preds.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        Metrics {
            precision,
            recall,
            f1: f1_score(precision, recall),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision, recall and F1 of the synthetic class (`true` = synthetic).
pub fn confusion_metrics(preds: &[bool], labels: &[bool]) -> Result<Metrics> {
    Ok(ConfusionCounts::tally(preds, labels)?.metrics())
}

/// Area under the ROC curve as the Mann-Whitney statistic
/// `(concordant + ½·ties) / (n₊·n₋)`, computed from tie-averaged ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Precondition(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Precondition("AUC needs both classes".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Precondition("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // doubled ranks keep everything integral
    let mut pos_rank_sum2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank2 = (i + 1 + j + 1) as u64;
        for &idx in &order[i..=j] {
            if labels[idx] {
                pos_rank_sum2 += avg_rank2;
            }
        }
        i = j + 1;
    }
    let n_pos = n_pos as u64;
    let u2 = pos_rank_sum2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / 2.0 / (n_pos * n_neg as u64) as f64)
}

/// Signed percentage change `100·(new − baseline)/baseline`.
pub fn delta(new: f64, baseline: f64) -> Result<f64> {
    if baseline.is_nan() || baseline <= 0.0 {
        return Err(Error::Precondition(format!("baseline must be positive, got {baseline}")));
    }
    Ok(100.0 * (new - baseline) / baseline)
}

/// One-decimal display rounding, half away from zero.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

/// Fraction of verdicts that are `Some(true)` (evaded). Every entry must
/// carry a verdict.
pub fn evasion_rate_of(verdicts: &[Option<bool>]) -> Result<f64> {
    if verdicts.is_empty() {
        return Err(Error::Precondition("no attack results".into()));
    }
    let mut evaded = 0;
    for (i, v) in verdicts.iter().enumerate() {
        match v {
            Some(true) => evaded += 1,
            Some(false) => {}
            None => return Err(Error::Precondition(format!("attack result {i} has no detector verdict"))),
        }
    }
    Ok(evaded as f64 / verdicts.len() as f64)
}

/// Fraction of perturbed documents classified as real.
pub fn evasion_rate(results: &[AttackResult]) -> Result<f64> {
    let verdicts: Vec<Option<bool>> = results.iter().map(|r| r.evaded).collect();
    evasion_rate_of(&verdicts)
}

/// Classifies every perturbed document and records whether it passed as real.
pub fn attach_verdicts(results: &mut [AttackResult], detector: &dyn Detector) -> Result<()> {
    let verdicts: Vec<bool> = results
        .par_iter()
        .map(|r| detector.classify(&r.perturbed).map(|v| v.label == Label::Real))
        .collect::<Result<_>>()?;
    for (r, evaded) in results.iter_mut().zip(verdicts) {
        r.evaded = Some(evaded);
    }
    Ok(())
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean Euclidean distance over all cross pairs of `xs` and `ys`.
pub fn avg_linkage_distance<A: AsRef<[f64]>, B: AsRef<[f64]>>(xs: &[A], ys: &[B]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Precondition("average linkage needs two non-empty sets".into()));
    }
    let dim = xs[0].as_ref().len();
    let bad_dim = xs.iter().map(|x| x.as_ref().len()).chain(ys.iter().map(|y| y.as_ref().len())).find(|&d| d != dim);
    if let Some(d) = bad_dim {
        return Err(Error::Precondition(format!("dimension mismatch: {d} vs {dim}")));
    }
    let total: f64 = xs
        .iter()
        .map(|x| ys.iter().map(|y| euclidean(x.as_ref(), y.as_ref())).sum::<f64>())
        .sum();
    Ok(total / (xs.len() * ys.len()) as f64)
}

/// Detection report. Optional fields are absent when not computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    pub counts: ConfusionCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evasion_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_before: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_after: Option<f64>,
    #[serde(default)]
    pub provenance: serde_json::Value,
}

impl EvalReport {
    /// Builds a report from predictions, scores and truth (`true` = synthetic).
    /// AUC is omitted when only one class is present.
    pub fn from_predictions(name: impl Into<String>, preds: &[bool], scores: &[f64], labels: &[bool]) -> Result<Self> {
        let counts = ConfusionCounts::tally(preds, labels)?;
        let m = counts.metrics();
        Ok(EvalReport {
            name: name.into(),
            f1: m.f1,
            precision: m.precision,
            recall: m.recall,
            auc: auc(scores, labels).ok(),
            counts,
            baseline: None,
            delta_f1: None,
            delta_recall: None,
            evasion_rate: None,
            quality_before: None,
            quality_after: None,
            provenance: serde_json::Value::Null,
        })
    }

    /// Fills the delta fields relative to `baseline`. Metrics are compared as
    /// percentages; a zero baseline metric leaves that delta unset.
    pub fn with_baseline(mut self, baseline: &EvalReport) -> Self {
        self.baseline = Some(baseline.name.clone());
        self.delta_f1 = delta(self.f1, baseline.f1).ok();
        self.delta_recall = delta(self.recall, baseline.recall).ok();
        self
    }

    pub const CSV_HEADER: &'static str = "name,F1,dF1,P,R,dR,AUC,ER,GRN_before,GRN_after";

    /// One CSV row in percent, display-rounded to one decimal.
    pub fn csv_row(&self) -> String {
        let pct = |v: f64| format!("{:.1}", round1(100.0 * v));
        let opt = |v: Option<f64>, f: &dyn Fn(f64) -> String| v.map(f).unwrap_or_default();
        let signed = |v: f64| format!("{:+.1}", round1(v));
        let raw = |v: f64| format!("{v:.3}");
        [
            self.name.clone(),
            pct(self.f1),
            opt(self.delta_f1, &signed),
            pct(self.precision),
            pct(self.recall),
            opt(self.delta_recall, &signed),
            opt(self.auc, &pct),
            opt(self.evasion_rate, &pct),
            opt(self.quality_before, &raw),
            opt(self.quality_after, &raw),
        ]
        .join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_from_table_values() {
        assert!((100.0 * f1_score(0.917, 0.860) - 88.8).abs() < 0.05);
    }

    #[test]
    fn perfect_and_degenerate() {
        let m = confusion_metrics(&[true, false, true], &[true, false, true]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        let m = confusion_metrics(&[false, false], &[true, false]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert!(confusion_metrics(&[true], &[true, false]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.3, 0.2], &[true, true, false, false]).unwrap(), 1.0);
        assert_eq!(auc(&[0.4; 6], &[true, false, true, false, true, false]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[true, true]).is_err());
    }

    #[test]
    fn delta_examples() {
        assert!((delta(44.1, 98.5).unwrap() - -55.2).abs() <= 0.1);
        assert_eq!(delta(5.0, 5.0).unwrap(), 0.0);
        assert!((delta(94.9, 87.0).unwrap() - 9.1).abs() <= 0.1);
        assert!(delta(1.0, 0.0).is_err());
        assert_eq!(round1(delta(44.1, 98.5).unwrap()), -55.2);
        assert_eq!(round1(-0.25), -0.3);
    }

    #[test]
    fn evasion_examples() {
        let mut v = vec![Some(false); 1000];
        v[..913].fill(Some(true));
        assert!((evasion_rate_of(&v).unwrap() - 0.913).abs() < 1e-12);
        assert_eq!(evasion_rate_of(&[Some(false); 4]).unwrap(), 0.0);
        assert!(evasion_rate_of(&[]).is_err());
        assert!(evasion_rate_of(&[Some(true), None]).is_err());
    }

    #[test]
    fn linkage_examples() {
        assert_eq!(avg_linkage_distance(&[[0.0, 0.0]], &[[3.0, 4.0]]).unwrap(), 5.0);
        assert_eq!(avg_linkage_distance(&[[1.0, 2.0]], &[[1.0, 2.0]]).unwrap(), 0.0);
        let d = avg_linkage_distance(&[[0.0, 0.0], [0.0, 2.0]], &[[3.0, 4.0], [3.0, 0.0]]).unwrap();
        assert!((d - (5.0 + 3.0 + 2.0 * 13f64.sqrt()) / 4.0).abs() < 1e-12);
        assert!(avg_linkage_distance(&[vec![0.0]], &[vec![0.0, 1.0]]).is_err());
    }
}
