//! ROC and precision–recall curves of a scored gene list against known labels.

use serde::{Deserialize, Serialize};

use crate::error::{GmnbError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Roc,
    Pr,
}

/// Operating points of a curve and the trapezoidal area under them.
///
/// ROC points are `(FPR, TPR)`, PR points are `(recall, precision)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveResult {
    pub kind: CurveKind,
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
    pub n_positives: usize,
    pub n_negatives: usize,
}

/// Cumulative `(true positives, false positives)` after each distinct score,
/// scanning from the highest score down. Equal scores form one step.
fn threshold_steps(scores: &[f64], truth: &[bool]) -> Result<(Vec<(usize, usize)>, usize, usize)> {
    if scores.len() != truth.len() {
        return Err(GmnbError::Structural(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if let Some(i) = scores.iter().position(|s| s.is_nan()) {
        return Err(GmnbError::Validation(format!("score {i} is NaN")));
    }
    let n_pos = truth.iter().filter(|&&b| b).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(GmnbError::Structural(
            "curves need at least one positive and one negative label".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut steps = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        steps.push((tp, fp));
    }
    Ok((steps, n_pos, n_neg))
}

/// Area under a piecewise-linear curve by the trapezoid rule.
pub fn trapezoid(points: &[(f64, f64)]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum()
}

pub fn roc_curve(scores: &[f64], truth: &[bool]) -> Result<CurveResult> {
    let (steps, n_pos, n_neg) = threshold_steps(scores, truth)?;
    let mut points = Vec::with_capacity(steps.len() + 1);
    points.push((0.0, 0.0));
    points.extend(
        steps
            .iter()
            .map(|&(tp, fp)| (fp as f64 / n_neg as f64, tp as f64 / n_pos as f64)),
    );
    let auc = trapezoid(&points);
    Ok(CurveResult {
        kind: CurveKind::Roc,
        points,
        auc,
        n_positives: n_pos,
        n_negatives: n_neg,
    })
}

/// Precision–recall curve over the achievable operating points.
///
/// The curve opens at recall 0 with the precision of the first threshold,
/// and the area is the trapezoid over the stored points (no interpolation).
pub fn pr_curve(scores: &[f64], truth: &[bool]) -> Result<CurveResult> {
    let (steps, n_pos, n_neg) = threshold_steps(scores, truth)?;
    let precision = |tp: usize, fp: usize| tp as f64 / (tp + fp) as f64;
    let mut points = Vec::with_capacity(steps.len() + 1);
    let (tp0, fp0) = steps[0];
    points.push((0.0, precision(tp0, fp0)));
    points.extend(
        steps
            .iter()
            .map(|&(tp, fp)| (tp as f64 / n_pos as f64, precision(tp, fp))),
    );
    let auc = trapezoid(&points);
    Ok(CurveResult {
        kind: CurveKind::Pr,
        points,
        auc,
        n_positives: n_pos,
        n_negatives: n_neg,
    })
}

/// Sample mean and sample standard deviation of the AUCs.
pub fn aggregate_runs(results: &[CurveResult]) -> Result<(f64, f64)> {
    let aucs: Vec<f64> = results.iter().map(|r| r.auc).collect();
    mean_sd(&aucs)
}

/// Sample mean and (n - 1)-normalized standard deviation.
pub fn mean_sd(values: &[f64]) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(GmnbError::Validation(format!(
            "need at least two runs to aggregate, got {}",
            values.len()
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok((mean, var.sqrt()))
}
