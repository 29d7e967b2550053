//! Binary-label ranking and regression metrics.

use serde::Serialize;

use crate::data::{RatingDataset, Split};
use crate::model::{project_all, ModelParams};
use crate::{Error, Real, Result};

/// Paired prediction scores and 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    scores: Vec<Real>,
    labels: Vec<u8>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<Real>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::InvalidInput(
                "scores and labels differ in length".into(),
            ));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidInput("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidInput("non-finite score".into()));
        }
        Ok(Self { scores, labels })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn scores(&self) -> &[Real] {
        &self.scores
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn has_both_classes(&self) -> bool {
        self.labels.iter().any(|&l| l == 1) && self.labels.iter().any(|&l| l == 0)
    }
}

/// Probability that a uniformly random positive outscores a random
/// negative, ties counted one half. Computed by rank summation with
/// midranks in O(n log n).
pub fn roc_auc(sl: &ScoredLabels) -> Result<Real> {
    if !sl.has_both_classes() {
        return Err(Error::Metric(
            "ROC AUC needs both classes present".into(),
        ));
    }
    let n = sl.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| sl.scores[a].total_cmp(&sl.scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut n_pos = 0u64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && sl.scores[order[j + 1]] == sl.scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the whole tie group gets the midrank
        let midrank = (i + 1 + j + 1) as Real / 2.0;
        for &k in &order[i..=j] {
            if sl.labels[k] == 1 {
                rank_sum_pos += midrank;
                n_pos += 1;
            }
        }
        i = j + 1;
    }
    let n_neg = n as u64 - n_pos;
    let pos = n_pos as Real;
    Ok((rank_sum_pos - pos * (pos + 1.0) / 2.0) / (pos * n_neg as Real))
}

/// Root mean squared error of scores against labels.
pub fn rmse(sl: &ScoredLabels) -> Result<Real> {
    if sl.is_empty() {
        return Err(Error::Metric("RMSE of an empty set".into()));
    }
    let sum: Real = sl
        .scores
        .iter()
        .zip(&sl.labels)
        .map(|(s, &l)| (s - l as Real).powi(2))
        .sum();
    Ok((sum / sl.len() as Real).sqrt())
}

/// Metrics over one dataset split. `auc` is `None` when the split holds a
/// single class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub auc: Option<Real>,
    pub rmse: Real,
    pub n: usize,
}

/// Scores every interaction in the split and computes both metrics.
pub fn evaluate_model(params: &ModelParams, ds: &RatingDataset, split: Split) -> Result<EvalMetrics> {
    let sl = score_split(params, ds, split)?;
    let auc = if sl.has_both_classes() {
        Some(roc_auc(&sl)?)
    } else {
        None
    };
    let rmse = rmse(&sl)?;
    Ok(EvalMetrics {
        auc,
        rmse,
        n: sl.len(),
    })
}

/// Predicted scores and labels for a split, using dense common-space
/// tables so the per-pair cost is one dot product for every variant.
pub fn score_split(params: &ModelParams, ds: &RatingDataset, split: Split) -> Result<ScoredLabels> {
    if ds.split_len(split) == 0 {
        return Err(Error::Metric(format!("split {split} is empty")));
    }
    let d = params.max_dim;
    let users = project_all(&params.user_embeddings, params.user_projections.as_ref(), d);
    let items = project_all(&params.item_embeddings, params.item_projections.as_ref(), d);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for it in ds.split_interactions(split) {
        scores.push(crate::linalg::dot(
            users.row(it.user as usize),
            items.row(it.item as usize),
        ));
        labels.push(it.label as u8);
    }
    ScoredLabels::new(scores, labels)
}
