//! Objective terms: supervised cross-entropy, the conditioned domain
//! discriminator loss, and the sample-consistency loss over a source batch
//! or the memory bank. Every term returns its gradient with respect to the
//! quantities it consumes.

use serde::{Deserialize, Serialize};

use crate::bank::MemoryBank;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{clamp_prob, log_sum_exp, norm, Tensor2, PROB_EPS};
use crate::similarity::{
    accumulate_similarity_grad, classifier_pseudo_label, knn_pseudo_labels, pairwise_similarity,
    FeatureSet, LabeledFeatures, PseudoLabel, SimilarityKind, SimilarityMatrix,
};

/// Loss values of one training iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub l_sup: f64,
    pub l_d: f64,
    pub l_adv: f64,
    pub l_sc: f64,
    pub total: f64,
    pub per_anchor: Vec<f64>,
    /// Anchors without any positive entry.
    pub skipped: usize,
}

/// `l_sup + λ_adv·l_adv + λ_sc·l_sc`.
pub fn total_loss(l_sup: f64, l_adv: f64, l_sc: f64, lambda_adv: f64, lambda_sc: f64) -> f64 {
    l_sup + lambda_adv * l_adv + lambda_sc * l_sc
}

/// Mean of `−log g[y]` over the batch. Returns the loss and its gradient
/// with respect to the probabilities (zero where the clamp is engaged).
pub fn supervised_loss(probs: &Tensor2, labels: &[usize]) -> Result<(f64, Tensor2)> {
    if probs.rows() != labels.len() {
        return Err(Error::shape("supervised_loss", probs.rows(), labels.len()));
    }
    if probs.rows() == 0 {
        return Err(Error::Config("empty source batch".into()));
    }
    let n = probs.rows() as f64;
    let mut grad = Tensor2::zeros(probs.rows(), probs.cols());
    let mut loss = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= probs.cols() {
            return Err(Error::Config(format!(
                "label {y} out of range for {} classes",
                probs.cols()
            )));
        }
        let p = probs.get(r, y);
        loss -= p.max(PROB_EPS).ln();
        if p >= PROB_EPS {
            grad.set(r, y, -1.0 / (n * p));
        }
    }
    Ok((loss / n, grad))
}

/// Flattened outer product `h[i·C + c] = f[i]·g[c]`.
pub fn multilinear_map(f: &[f64], g: &[f64]) -> Vec<f64> {
    f.iter()
        .flat_map(|&fi| g.iter().map(move |&gc| fi * gc))
        .collect()
}

/// Row-wise [`multilinear_map`].
pub fn multilinear_batch(f: &Tensor2, g: &Tensor2) -> Result<Tensor2> {
    if f.rows() != g.rows() {
        return Err(Error::shape("multilinear_batch", f.rows(), g.rows()));
    }
    let data = (0..f.rows())
        .flat_map(|r| multilinear_map(f.row(r), g.row(r)))
        .collect();
    Tensor2::from_vec(f.rows(), f.cols() * g.cols(), data)
}

/// Gradients of the outer-product map with respect to `f` and `g`.
pub fn multilinear_backward(f: &Tensor2, g: &Tensor2, dh: &Tensor2) -> (Tensor2, Tensor2) {
    let (d, c) = (f.cols(), g.cols());
    let mut df = Tensor2::zeros(f.rows(), d);
    let mut dg = Tensor2::zeros(g.rows(), c);
    for r in 0..f.rows() {
        let (fr, gr, hr) = (f.row(r), g.row(r), dh.row(r));
        for i in 0..d {
            let block = &hr[i * c..(i + 1) * c];
            df.set(r, i, block.iter().zip(gr).map(|(a, b)| a * b).sum());
            for (dgc, &h) in dg.row_mut(r).iter_mut().zip(block) {
                *dgc += h * fr[i];
            }
        }
    }
    (df, dg)
}

/// `L_d = mean_s −log p_s + mean_t −log(1 − p_t)`, with gradients with
/// respect to the (already clamped) probabilities. The adversarial loss is
/// `−L_d`.
pub fn discriminator_loss(p_source: &[f64], p_target: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    if p_source.is_empty() || p_target.is_empty() {
        return Err(Error::Config(
            "discriminator loss needs both domains".into(),
        ));
    }
    let (ns, nt) = (p_source.len() as f64, p_target.len() as f64);
    let ls: f64 = p_source.iter().map(|p| -clamp_prob(*p).ln()).sum::<f64>() / ns;
    let lt: f64 = p_target
        .iter()
        .map(|p| -(1.0 - clamp_prob(*p)).ln())
        .sum::<f64>()
        / nt;
    let ds = p_source.iter().map(|p| -1.0 / (ns * p)).collect();
    let dt = p_target.iter().map(|p| 1.0 / (nt * (1.0 - p))).collect();
    Ok((ls + lt, ds, dt))
}

/// How target anchors receive their class for the consistency loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnchorLabels<'a> {
    /// Majority vote among the `k` nearest source entries.
    Knn { k: usize },
    /// Externally supplied labels, e.g. classifier argmax.
    Given(&'a [usize]),
}

impl<'a> AnchorLabels<'a> {
    pub fn from_classifier(probs: &Tensor2) -> Vec<usize> {
        probs.iter_rows().map(classifier_pseudo_label).collect()
    }
}

/// Result of a sample-consistency evaluation.
#[derive(Debug, Clone)]
pub struct ConsistencyOutput {
    pub loss: f64,
    pub per_anchor: Vec<f64>,
    pub skipped: usize,
    /// Label assigned to every anchor.
    pub anchor_labels: Vec<usize>,
    /// kNN detail when labels came from the kNN vote.
    pub assignments: Option<Vec<PseudoLabel>>,
    pub similarity: SimilarityMatrix,
    /// `∂L/∂targets`.
    pub d_targets: Tensor2,
    /// `∂L/∂sources`, only when requested.
    pub d_sources: Option<Tensor2>,
}

/// Per-anchor term `LSE_all(φ/τ) − LSE_pos(φ/τ)` and `∂term/∂φ`.
/// `None` when the anchor has no positive entry.
pub fn anchor_term(
    row: &[f64],
    positive: impl Fn(usize) -> bool,
    tau: f64,
) -> Option<(f64, Vec<f64>)> {
    let scaled = row.iter().map(|v| v / tau);
    let lse_all = log_sum_exp(scaled.clone());
    let lse_pos = log_sum_exp(
        row.iter()
            .enumerate()
            .filter(|(i, _)| positive(*i))
            .map(|(_, v)| v / tau),
    );
    if lse_pos == f64::NEG_INFINITY {
        return None;
    }
    let loss = (lse_all - lse_pos).max(0.0);
    let grad = row
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let s = v / tau;
            let all = (s - lse_all).exp();
            let pos = if positive(i) {
                (s - lse_pos).exp()
            } else {
                0.0
            };
            (all - pos) / tau
        })
        .collect();
    Some((loss, grad))
}

/// Shared implementation of the batch and memory forms.
pub fn consistency_loss<S: FeatureSet + ?Sized>(
    targets: &Tensor2,
    sources: &S,
    tau: f64,
    kind: SimilarityKind,
    anchors: AnchorLabels<'_>,
    source_grad: bool,
    exec: Execution,
) -> Result<ConsistencyOutput> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Config(format!(
            "temperature must be positive, got {tau}"
        )));
    }
    if targets.rows() == 0 {
        return Err(Error::Config("empty target batch".into()));
    }
    let n_src = sources.len();
    let similarity = pairwise_similarity(targets, sources, kind, exec)?;
    let source_labels: Vec<usize> = (0..n_src).map(|i| sources.label(i)).collect();
    let (anchor_labels, assignments) = match anchors {
        AnchorLabels::Knn { k } => {
            let a = knn_pseudo_labels(&similarity, &source_labels, k, exec)?;
            (a.iter().map(|p| p.label).collect::<Vec<_>>(), Some(a))
        }
        AnchorLabels::Given(labels) => {
            if labels.len() != targets.rows() {
                return Err(Error::shape(
                    "consistency_loss anchor labels",
                    targets.rows(),
                    labels.len(),
                ));
            }
            (labels.to_vec(), None)
        }
    };

    let d = targets.cols();
    let source_norms: Vec<f64> = (0..n_src).map(|i| sources.norm(i)).collect();
    // Per-anchor loss, gradient w.r.t. the anchor, and φ-gradients for the
    // sources when requested.
    let terms = exec.map_indexed(targets.rows(), |j| {
        let row = similarity.row(j);
        let label = anchor_labels[j];
        let (loss, dphi) = anchor_term(row, |i| source_labels[i] == label, tau)?;
        let t = targets.row(j);
        let nt = norm(t);
        let mut g_anchor = vec![0.0; d];
        let mut g_src = if source_grad {
            vec![0.0; n_src * d]
        } else {
            Vec::new()
        };
        for (i, &w) in dphi.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            let gb = source_grad.then(|| &mut g_src[i * d..(i + 1) * d]);
            accumulate_similarity_grad(
                t,
                nt,
                sources.feature(i),
                source_norms[i],
                row[i],
                w,
                kind,
                &mut g_anchor,
                gb,
            );
        }
        Some((loss, g_anchor, g_src))
    });

    let nt = targets.rows() as f64;
    let mut per_anchor = Vec::with_capacity(targets.rows());
    let mut d_targets = Tensor2::zeros(targets.rows(), d);
    let mut d_sources = source_grad.then(|| Tensor2::zeros(n_src, d));
    let mut skipped = 0;
    let mut loss = 0.0;
    for (j, term) in terms.into_iter().enumerate() {
        match term {
            None => {
                skipped += 1;
                per_anchor.push(0.0);
            }
            Some((l, ga, gs)) => {
                loss += l;
                per_anchor.push(l);
                for (dst, g) in d_targets.row_mut(j).iter_mut().zip(ga) {
                    *dst = g / nt;
                }
                if let Some(ds) = d_sources.as_mut() {
                    for (dst, g) in ds.data_mut().iter_mut().zip(gs) {
                        *dst += g / nt;
                    }
                }
            }
        }
    }
    Ok(ConsistencyOutput {
        loss: loss / nt,
        per_anchor,
        skipped,
        anchor_labels,
        assignments,
        similarity,
        d_targets,
        d_sources,
    })
}

/// Consistency loss against the current source mini-batch. Pseudo-labels
/// come from the source batch; `source_grad` controls whether gradients
/// also reach the source features.
#[allow(clippy::too_many_arguments)]
pub fn sample_consistency_batch(
    targets: &Tensor2,
    sources: &Tensor2,
    source_labels: &[usize],
    tau: f64,
    anchors: AnchorLabels<'_>,
    kind: SimilarityKind,
    source_grad: bool,
    exec: Execution,
) -> Result<ConsistencyOutput> {
    let set = LabeledFeatures::new(sources, source_labels)?;
    if set.is_empty() {
        return Err(Error::Config("empty source batch".into()));
    }
    consistency_loss(targets, &set, tau, kind, anchors, source_grad, exec)
}

/// Consistency loss against the memory bank. Bank entries are constants.
pub fn sample_consistency_memory(
    targets: &Tensor2,
    bank: &MemoryBank,
    tau: f64,
    anchors: AnchorLabels<'_>,
    kind: SimilarityKind,
    exec: Execution,
) -> Result<ConsistencyOutput> {
    if let AnchorLabels::Knn { k } = anchors {
        if !bank.ready(k.max(1)) {
            return Err(Error::Gating {
                size: bank.len(),
                required: k.max(1),
            });
        }
    }
    consistency_loss(targets, bank, tau, kind, anchors, false, exec)
}
