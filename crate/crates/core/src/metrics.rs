//! Target accuracy and training diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::Tensor2;
use crate::similarity::{pairwise_similarity, FeatureSet, SimilarityKind, SimilarityMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iteration: usize,
    pub accuracy: f64,
    /// NaN for classes absent from the truth.
    pub per_class: Vec<f64>,
    pub macro_accuracy: f64,
    pub mean_similarity: f64,
    pub pseudo_label_accuracy: f64,
}

pub fn accuracy(predictions: &[usize], truth: &[usize]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::shape("accuracy", truth.len(), predictions.len()));
    }
    if truth.is_empty() {
        return Err(Error::Config("accuracy of an empty set".into()));
    }
    let correct = predictions
        .iter()
        .zip(truth)
        .filter(|(p, t)| p == t)
        .count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Per-class recall; classes absent from `truth` are NaN.
pub fn per_class_accuracy(predictions: &[usize], truth: &[usize], classes: usize) -> Vec<f64> {
    let mut hits = vec![0usize; classes];
    let mut totals = vec![0usize; classes];
    for (&p, &t) in predictions.iter().zip(truth) {
        totals[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    hits.iter()
        .zip(&totals)
        .map(|(&h, &n)| {
            if n == 0 {
                f64::NAN
            } else {
                h as f64 / n as f64
            }
        })
        .collect()
}

/// Mean over the non-NaN entries.
pub fn macro_average(per_class: &[f64]) -> f64 {
    let present: Vec<f64> = per_class.iter().copied().filter(|v| !v.is_nan()).collect();
    if present.is_empty() {
        return f64::NAN;
    }
    present.iter().sum::<f64>() / present.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreMode {
    /// Mean φ over each anchor's positives, then over anchors.
    Averaged,
    /// Sum of φ over each anchor's positives, then mean over anchors.
    Literal,
}

/// Averaged and literal mean similarity scores from a precomputed matrix.
/// Positives of anchor `j` are the source entries labeled `anchor_labels[j]`;
/// anchors without positives are left out of both means.
pub fn mean_similarity_from_matrix(
    sim: &SimilarityMatrix,
    source_labels: &[usize],
    anchor_labels: &[usize],
) -> (f64, f64) {
    let mut averaged = 0.0;
    let mut literal = 0.0;
    let mut anchors = 0usize;
    for (j, &label) in anchor_labels.iter().enumerate() {
        let row = sim.row(j);
        let (sum, count) = row
            .iter()
            .zip(source_labels)
            .filter(|(_, &l)| l == label)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        if count > 0 {
            averaged += sum / count as f64;
            literal += sum;
            anchors += 1;
        }
    }
    if anchors == 0 {
        return (0.0, 0.0);
    }
    (averaged / anchors as f64, literal / anchors as f64)
}

pub fn mean_similarity_score<S: FeatureSet + ?Sized>(
    targets: &Tensor2,
    sources: &S,
    anchor_labels: &[usize],
    kind: SimilarityKind,
    mode: ScoreMode,
) -> Result<f64> {
    if anchor_labels.len() != targets.rows() {
        return Err(Error::shape(
            "mean_similarity_score",
            targets.rows(),
            anchor_labels.len(),
        ));
    }
    let sim = pairwise_similarity(targets, sources, kind, Execution::default())?;
    let labels: Vec<usize> = (0..sources.len()).map(|i| sources.label(i)).collect();
    let (avg, lit) = mean_similarity_from_matrix(&sim, &labels, anchor_labels);
    Ok(match mode {
        ScoreMode::Averaged => avg,
        ScoreMode::Literal => lit,
    })
}

/// Fraction of anchors whose pseudo-label equals the held-out label.
pub fn pseudo_label_accuracy(pseudo: &[usize], truth: &[usize]) -> Result<f64> {
    accuracy(pseudo, truth)
}
