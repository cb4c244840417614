//! Source/target sample collections, synthetic covariate-shift generators,
//! the feature-table file format and deterministic mini-batch sampling.
//!
//! Target labels never travel with training batches: a target
//! [`DomainDataset`] is split into an [`UnlabeledSet`], which is all the
//! trainer sees, and a [`TargetTruth`] reserved for evaluation.

mod sampler;
mod synth;
mod table;

pub use sampler::{batch_sampler, mix_seed, BatchSampler};
pub use synth::{
    apply_domain_shift, class_means, gen_gaussian_mixture, gen_shifted_pair, gen_two_moons,
    MixtureSpec, RotationMode, ShiftSpec,
};
pub use table::{
    format_feature_table, load_feature_table, parse_feature_table, write_feature_table,
    FeatureTable,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Domain {
    Source,
    Target,
}

/// Samples with their labels and a domain tag.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    pub samples: Tensor2,
    pub labels: Vec<usize>,
    pub classes: usize,
    pub domain: Domain,
}

impl DomainDataset {
    pub fn new(
        samples: Tensor2,
        labels: Vec<usize>,
        classes: usize,
        domain: Domain,
    ) -> Result<Self> {
        if samples.rows() != labels.len() {
            return Err(Error::shape("DomainDataset", samples.rows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Config(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        Ok(Self {
            samples,
            labels,
            classes,
            domain,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn into_source(self) -> LabeledSet {
        LabeledSet {
            samples: self.samples,
            labels: self.labels,
            classes: self.classes,
        }
    }

    /// Separates the training-visible samples from the evaluation labels.
    pub fn split_target(self) -> (UnlabeledSet, TargetTruth) {
        (
            UnlabeledSet {
                samples: self.samples,
            },
            TargetTruth {
                labels: self.labels,
                classes: self.classes,
            },
        )
    }
}

/// Labeled source samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    samples: Tensor2,
    labels: Vec<usize>,
    classes: usize,
}

impl LabeledSet {
    pub fn new(samples: Tensor2, labels: Vec<usize>, classes: usize) -> Result<Self> {
        Ok(DomainDataset::new(samples, labels, classes, Domain::Source)?.into_source())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn samples(&self) -> &Tensor2 {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn batch(&self, indices: &[usize]) -> SourceBatch {
        SourceBatch {
            indices: indices.to_vec(),
            x: self.samples.select_rows(indices),
            y: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Target samples as seen by the trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabeledSet {
    samples: Tensor2,
}

impl UnlabeledSet {
    pub fn new(samples: Tensor2) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn samples(&self) -> &Tensor2 {
        &self.samples
    }

    pub fn batch(&self, indices: &[usize]) -> TargetBatch {
        TargetBatch {
            indices: indices.to_vec(),
            x: self.samples.select_rows(indices),
        }
    }
}

/// Held-out target labels, for evaluation only.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTruth {
    labels: Vec<usize>,
    classes: usize,
}

impl TargetTruth {
    pub fn new(labels: Vec<usize>, classes: usize) -> Self {
        Self { labels, classes }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels_for(&self, batch: &TargetBatch) -> Vec<usize> {
        batch.indices.iter().map(|&i| self.labels[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceBatch {
    pub indices: Vec<usize>,
    pub x: Tensor2,
    pub y: Vec<usize>,
}

/// A target mini-batch. Carries no labels:
///
/// ```compile_fail
/// # use memsac_core::data::TargetBatch;
/// fn peek(b: &TargetBatch) -> &[usize] {
///     &b.y
/// }
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBatch {
    pub indices: Vec<usize>,
    pub x: Tensor2,
}
