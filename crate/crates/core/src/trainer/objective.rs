//! One forward/backward pass of the full objective over a source and a
//! target mini-batch.
//!
//! Encoder and classifier gradients are those of
//! `L_sup − c·λ_adv·L_d + λ_sc·L_sc` (the reversal layer with coefficient
//! `c` sits at the discriminator input); discriminator gradients are those
//! of `λ_adv·L_d`.

use super::config::PseudoLabelMode;
use crate::bank::MemoryBank;
use crate::error::Result;
use crate::exec::Execution;
use crate::losses::{
    discriminator_loss, multilinear_backward, multilinear_batch, sample_consistency_batch,
    sample_consistency_memory, supervised_loss, total_loss, AnchorLabels, ConsistencyOutput,
    LossReport,
};
use crate::nn::{
    gradient_reversal, gradient_reversal_forward, softmax_backward, MlpGrad, ModelBundle, Tensor2,
};
use crate::similarity::SimilarityKind;

/// Source samples for the consistency term, if it is active this step.
#[derive(Debug, Clone, Copy)]
pub enum ConsistencySource<'a> {
    Inactive,
    Batch { source_grad: bool },
    Memory(&'a MemoryBank),
}

#[derive(Debug, Clone, Copy)]
pub struct ObjectiveSettings<'a> {
    pub lambda_adv: f64,
    pub lambda_sc: f64,
    pub grl_coeff: f64,
    pub detach_conditioning: bool,
    pub tau: f64,
    pub k: usize,
    pub similarity: SimilarityKind,
    pub pseudo_label: PseudoLabelMode,
    pub consistency: ConsistencySource<'a>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub encoder: MlpGrad,
    pub classifier: MlpGrad,
    pub discriminator: MlpGrad,
}

impl Gradients {
    /// E, C, G gradients in [`ModelBundle::flatten`] order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.encoder.flatten();
        out.extend(self.classifier.flatten());
        out.extend(self.discriminator.flatten());
        out
    }
}

pub struct ObjectiveOutput {
    pub report: LossReport,
    pub grads: Gradients,
    /// Detached encoder features of the source batch.
    pub source_features: Tensor2,
    pub target_features: Tensor2,
    pub target_probs: Tensor2,
    pub consistency: Option<ConsistencyOutput>,
}

pub fn evaluate_objective(
    model: &ModelBundle,
    xs: &Tensor2,
    ys: &[usize],
    xt: &Tensor2,
    settings: &ObjectiveSettings<'_>,
    exec: Execution,
) -> Result<ObjectiveOutput> {
    let ns = xs.rows();
    let nt = xt.rows();
    let x = xs.vstack(xt)?;

    let enc = model.encoder.forward(&x)?;
    let features = enc.output();
    let cls = model.classifier.forward(features)?;
    let probs = &cls.probs;

    let (l_sup, d_probs_sup) = supervised_loss(&probs.slice_rows(0, ns), ys)?;

    let h = if model.arch.conditioning {
        multilinear_batch(features, probs)?
    } else {
        features.clone()
    };
    let disc = model.discriminator.forward(gradient_reversal_forward(&h))?;
    let (l_d, dp_s, dp_t) = discriminator_loss(&disc.probs[..ns], &disc.probs[ns..])?;
    let mut d_logit = Tensor2::zeros(ns + nt, 1);
    for (r, dp) in dp_s.iter().chain(&dp_t).enumerate() {
        if !disc.clamped[r] {
            let p = disc.probs[r];
            d_logit.set(r, 0, settings.lambda_adv * dp * p * (1.0 - p));
        }
    }
    let (disc_grad, dh) = model.discriminator.0.backward(&disc.tape, &d_logit);
    let dh_rev = gradient_reversal(&dh, settings.grl_coeff);

    let (mut d_features, mut d_probs) = if model.arch.conditioning {
        let (df, dg) = multilinear_backward(features, probs, &dh_rev);
        if settings.detach_conditioning {
            (df, Tensor2::zeros(ns + nt, probs.cols()))
        } else {
            (df, dg)
        }
    } else {
        (dh_rev, Tensor2::zeros(ns + nt, probs.cols()))
    };
    for r in 0..ns {
        for (a, b) in d_probs.row_mut(r).iter_mut().zip(d_probs_sup.row(r)) {
            *a += b;
        }
    }

    let target_features = features.slice_rows(ns, ns + nt);
    let target_probs = probs.slice_rows(ns, ns + nt);
    let classifier_labels;
    let anchors = match settings.pseudo_label {
        PseudoLabelMode::Knn => AnchorLabels::Knn { k: settings.k },
        PseudoLabelMode::Classifier => {
            classifier_labels = AnchorLabels::from_classifier(&target_probs);
            AnchorLabels::Given(&classifier_labels)
        }
    };
    let consistency = match settings.consistency {
        ConsistencySource::Inactive => None,
        ConsistencySource::Batch { source_grad } => Some(sample_consistency_batch(
            &target_features,
            &features.slice_rows(0, ns),
            ys,
            settings.tau,
            anchors,
            settings.similarity,
            source_grad,
            exec,
        )?),
        ConsistencySource::Memory(bank) => Some(sample_consistency_memory(
            &target_features,
            bank,
            settings.tau,
            anchors,
            settings.similarity,
            exec,
        )?),
    };
    let l_sc = consistency.as_ref().map_or(0.0, |c| c.loss);
    if let Some(c) = &consistency {
        for j in 0..nt {
            for (a, b) in d_features
                .row_mut(ns + j)
                .iter_mut()
                .zip(c.d_targets.row(j))
            {
                *a += settings.lambda_sc * b;
            }
        }
        if let Some(ds) = &c.d_sources {
            for i in 0..ns {
                for (a, b) in d_features.row_mut(i).iter_mut().zip(ds.row(i)) {
                    *a += settings.lambda_sc * b;
                }
            }
        }
    }

    let d_logits = softmax_backward(probs, &d_probs);
    let (cls_grad, d_from_cls) = model.classifier.0.backward(&cls.tape, &d_logits);
    d_features.add_assign(&d_from_cls);
    let (enc_grad, _) = model.encoder.0.backward(&enc, &d_features);

    let l_adv = -l_d;
    let report = LossReport {
        l_sup,
        l_d,
        l_adv,
        l_sc,
        total: total_loss(l_sup, l_adv, l_sc, settings.lambda_adv, settings.lambda_sc),
        per_anchor: consistency
            .as_ref()
            .map_or_else(Vec::new, |c| c.per_anchor.clone()),
        skipped: consistency.as_ref().map_or(0, |c| c.skipped),
    };
    Ok(ObjectiveOutput {
        report,
        grads: Gradients {
            encoder: enc_grad,
            classifier: cls_grad,
            discriminator: disc_grad,
        },
        source_features: features.slice_rows(0, ns),
        target_features,
        target_probs,
        consistency,
    })
}
