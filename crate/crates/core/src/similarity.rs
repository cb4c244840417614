//! Similarity kernels, target-vs-source similarity matrices and kNN
//! pseudo-labeling.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::bank::MemoryBank;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::nn::{dot, norm, Tensor2};

/// Below this norm a feature has no usable direction.
pub const MIN_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum SimilarityKind {
    #[default]
    Cosine,
    /// Negated Euclidean distance.
    Euclidean,
    /// `exp(−‖a − b‖² / 2σ²)`.
    Gaussian { sigma: f64 },
}

impl SimilarityKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            SimilarityKind::Gaussian { sigma } if !(sigma > 0.0 && sigma.is_finite()) => Err(
                Error::Config(format!("gaussian sigma must be positive, got {sigma}")),
            ),
            _ => Ok(()),
        }
    }
}

/// A labeled collection of constant source features that targets are
/// compared against: the memory bank, or a plain source batch.
pub trait FeatureSet: Sync {
    fn len(&self) -> usize;
    fn feature(&self, i: usize) -> &[f64];
    fn norm(&self, i: usize) -> f64;
    fn label(&self, i: usize) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl FeatureSet for MemoryBank {
    fn len(&self) -> usize {
        MemoryBank::len(self)
    }
    fn feature(&self, i: usize) -> &[f64] {
        self.get(i).feature
    }
    fn norm(&self, i: usize) -> f64 {
        self.get(i).norm
    }
    fn label(&self, i: usize) -> usize {
        self.get(i).label
    }
}

/// Source features with labels, borrowed from a mini-batch.
pub struct LabeledFeatures<'a> {
    features: &'a Tensor2,
    labels: &'a [usize],
    norms: Vec<f64>,
}

impl<'a> LabeledFeatures<'a> {
    pub fn new(features: &'a Tensor2, labels: &'a [usize]) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::shape(
                "LabeledFeatures",
                features.rows(),
                labels.len(),
            ));
        }
        let norms = features.iter_rows().map(norm).collect();
        Ok(Self {
            features,
            labels,
            norms,
        })
    }
}

impl FeatureSet for LabeledFeatures<'_> {
    fn len(&self) -> usize {
        self.labels.len()
    }
    fn feature(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }
    fn norm(&self, i: usize) -> f64 {
        self.norms[i]
    }
    fn label(&self, i: usize) -> usize {
        self.labels[i]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Kernel evaluation with precomputed norms (only used by cosine).
#[inline]
fn kernel(a: &[f64], na: f64, b: &[f64], nb: f64, kind: SimilarityKind) -> f64 {
    match kind {
        SimilarityKind::Cosine => dot(a, b) / (na * nb),
        SimilarityKind::Euclidean => -sq_dist(a, b).sqrt(),
        SimilarityKind::Gaussian { sigma } => (-sq_dist(a, b) / (2.0 * sigma * sigma)).exp(),
    }
}

/// `φ(a, b)` for a single pair.
pub fn similarity(a: &[f64], b: &[f64], kind: SimilarityKind) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("similarity", a.len(), b.len()));
    }
    let (na, nb) = (norm(a), norm(b));
    if kind == SimilarityKind::Cosine {
        if na <= MIN_NORM {
            return Err(Error::Degenerate(
                "first feature has (near-)zero norm".into(),
            ));
        }
        if nb <= MIN_NORM {
            return Err(Error::Degenerate(
                "second feature has (near-)zero norm".into(),
            ));
        }
    }
    Ok(kernel(a, na, b, nb, kind))
}

/// `φ(a, b)` together with `∂φ/∂a` and `∂φ/∂b`.
///
/// The Euclidean kernel is not differentiable at `a = b`; the zero
/// subgradient is used there.
pub fn similarity_with_grad(
    a: &[f64],
    b: &[f64],
    kind: SimilarityKind,
) -> (f64, Vec<f64>, Vec<f64>) {
    match kind {
        SimilarityKind::Cosine => {
            let (na, nb) = (norm(a), norm(b));
            let phi = dot(a, b) / (na * nb);
            let ga = a
                .iter()
                .zip(b)
                .map(|(x, y)| y / (na * nb) - phi * x / (na * na))
                .collect();
            let gb = a
                .iter()
                .zip(b)
                .map(|(x, y)| x / (na * nb) - phi * y / (nb * nb))
                .collect();
            (phi, ga, gb)
        }
        SimilarityKind::Euclidean => {
            let d = sq_dist(a, b).sqrt();
            if d == 0.0 {
                return (0.0, vec![0.0; a.len()], vec![0.0; a.len()]);
            }
            let ga: Vec<f64> = a.iter().zip(b).map(|(x, y)| -(x - y) / d).collect();
            let gb = ga.iter().map(|g| -g).collect();
            (-d, ga, gb)
        }
        SimilarityKind::Gaussian { sigma } => {
            let s2 = sigma * sigma;
            let phi = (-sq_dist(a, b) / (2.0 * s2)).exp();
            let ga: Vec<f64> = a.iter().zip(b).map(|(x, y)| -phi * (x - y) / s2).collect();
            let gb = ga.iter().map(|g| -g).collect();
            (phi, ga, gb)
        }
    }
}

/// Adds `w·∂φ/∂a` into `ga` and, when given, `w·∂φ/∂b` into `gb`, reusing
/// the norms and the already computed `phi = φ(a, b)`.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_similarity_grad(
    a: &[f64],
    na: f64,
    b: &[f64],
    nb: f64,
    phi: f64,
    w: f64,
    kind: SimilarityKind,
    ga: &mut [f64],
    gb: Option<&mut [f64]>,
) {
    let (cb, ca) = match kind {
        // ∂φ/∂a = b/(|a||b|) − φ·a/|a|²
        SimilarityKind::Cosine => (w / (na * nb), -w * phi / (na * na)),
        SimilarityKind::Euclidean => {
            if phi == 0.0 {
                return;
            }
            // φ = −d, ∂φ/∂a = (b − a)/d
            (-w / phi, w / phi)
        }
        SimilarityKind::Gaussian { sigma } => {
            let c = w * phi / (sigma * sigma);
            (c, -c)
        }
    };
    for ((g, x), y) in ga.iter_mut().zip(a).zip(b) {
        *g += cb * y + ca * x;
    }
    if let Some(gb) = gb {
        let (cb_b, ca_b) = match kind {
            SimilarityKind::Cosine => (w / (na * nb), -w * phi / (nb * nb)),
            _ => (cb, ca),
        };
        for ((g, x), y) in gb.iter_mut().zip(a).zip(b) {
            *g += cb_b * x + ca_b * y;
        }
    }
}

/// `rows × cols` scores, entry `(j, i)` = `φ(target j, source i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix(pub Tensor2);

impl SimilarityMatrix {
    pub fn rows(&self) -> usize {
        self.0.rows()
    }
    pub fn cols(&self) -> usize {
        self.0.cols()
    }
    pub fn row(&self, j: usize) -> &[f64] {
        self.0.row(j)
    }
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.0.get(j, i)
    }
}

/// Scores every target row against every entry of `sources`.
pub fn pairwise_similarity<S: FeatureSet + ?Sized>(
    targets: &Tensor2,
    sources: &S,
    kind: SimilarityKind,
    exec: Execution,
) -> Result<SimilarityMatrix> {
    kind.validate()?;
    let n = sources.len();
    if n == 0 {
        return Err(Error::Gating {
            size: 0,
            required: 1,
        });
    }
    if targets.cols() != sources.feature(0).len() {
        return Err(Error::shape(
            "pairwise_similarity",
            sources.feature(0).len(),
            targets.cols(),
        ));
    }
    let target_norms: Vec<f64> = targets.iter_rows().map(norm).collect();
    if kind == SimilarityKind::Cosine {
        if let Some(j) = target_norms.iter().position(|&v| v <= MIN_NORM) {
            return Err(Error::Degenerate(format!(
                "target {j} has (near-)zero norm"
            )));
        }
        if let Some(i) = (0..n).find(|&i| sources.norm(i) <= MIN_NORM) {
            return Err(Error::Degenerate(format!(
                "source entry {i} has (near-)zero norm"
            )));
        }
    }
    let rows = exec.map_indexed(targets.rows(), |j| {
        let t = targets.row(j);
        let nt = target_norms[j];
        (0..n)
            .map(|i| kernel(t, nt, sources.feature(i), sources.norm(i), kind))
            .collect::<Vec<f64>>()
    });
    let data = rows.concat();
    Ok(SimilarityMatrix(Tensor2::from_vec(
        targets.rows(),
        n,
        data,
    )?))
}

/// kNN result for one target anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub label: usize,
    /// Source positions of the `k` nearest entries, most similar first.
    pub neighbors: Vec<usize>,
    /// `(class, votes)` for every class that received a vote, by class.
    pub votes: Vec<(usize, usize)>,
}

/// Majority vote among the `k` most similar entries.
///
/// Neighbors are ordered by similarity, then by source position. Vote ties
/// go to the class with the larger cumulative similarity among its
/// neighbors, then to the smaller class index.
pub fn knn_pseudo_label(row: &[f64], labels: &[usize], k: usize) -> Result<PseudoLabel> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if row.len() != labels.len() {
        return Err(Error::shape("knn_pseudo_label", labels.len(), row.len()));
    }
    if row.len() < k {
        return Err(Error::Gating {
            size: row.len(),
            required: k,
        });
    }
    let by_rank = |a: &usize, b: &usize| -> Ordering {
        row[*b]
            .partial_cmp(&row[*a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(b))
    };
    let mut idx: Vec<usize> = (0..row.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, by_rank);
        idx.truncate(k);
    }
    idx.sort_unstable_by(by_rank);

    // (class, count, cumulative similarity)
    let mut tally: Vec<(usize, usize, f64)> = Vec::with_capacity(k);
    for &i in &idx {
        let c = labels[i];
        match tally.iter_mut().find(|t| t.0 == c) {
            Some(t) => {
                t.1 += 1;
                t.2 += row[i];
            }
            None => tally.push((c, 1, row[i])),
        }
    }
    tally.sort_unstable_by_key(|t| t.0);
    let best = tally
        .iter()
        .copied()
        .reduce(|best, t| {
            let better = t.1 > best.1 || (t.1 == best.1 && t.2 > best.2);
            if better {
                t
            } else {
                best
            }
        })
        .expect("k >= 1");
    Ok(PseudoLabel {
        label: best.0,
        neighbors: idx,
        votes: tally.iter().map(|t| (t.0, t.1)).collect(),
    })
}

/// Pseudo-labels every row of `sim`.
pub fn knn_pseudo_labels(
    sim: &SimilarityMatrix,
    labels: &[usize],
    k: usize,
    exec: Execution,
) -> Result<Vec<PseudoLabel>> {
    exec.map_indexed(sim.rows(), |j| knn_pseudo_label(sim.row(j), labels, k))
        .into_iter()
        .collect()
}

/// Index of the first maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Pseudo-label from classifier probabilities: argmax, smallest index on ties.
pub fn classifier_pseudo_label(probs: &[f64]) -> usize {
    argmax(probs)
}
