//! The training loop: bootstrap phase, bank population, loss assembly and
//! per-group SGD updates.

mod config;
mod objective;
mod optim;

pub use config::{ConsistencyMode, PseudoLabelMode, SimilarityName, TrainConfig, CONFIG_KEYS};
pub use objective::{
    evaluate_objective, ConsistencySource, Gradients, ObjectiveOutput, ObjectiveSettings,
};
pub use optim::{inverse_decay, lr_schedule, sgd_update, GroupRates, Sgd};

use serde::{Deserialize, Serialize};

use crate::bank::{momentum_update, MemoryBank};
use crate::data::{BatchSampler, LabeledSet, SourceBatch, TargetBatch, TargetTruth, UnlabeledSet};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::metrics::{
    accuracy, macro_average, mean_similarity_from_matrix, per_class_accuracy,
    pseudo_label_accuracy, EvalReport,
};
use crate::nn::ModelBundle;
use crate::similarity::{knn_pseudo_labels, pairwise_similarity};

/// Per-iteration metrics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub bootstrap: bool,
    pub l_sup: f64,
    pub l_d: f64,
    pub l_adv: f64,
    pub l_sc: f64,
    pub total: f64,
    /// Whether the consistency loss contributed to this update.
    pub sc_active: bool,
    pub mean_sim_avg: f64,
    pub mean_sim_literal: f64,
    /// Whether the similarity diagnostics were computed this iteration.
    pub diagnostics: bool,
    pub pl_acc: Option<f64>,
    pub skip_count: usize,
    pub lr_encoder: f64,
    pub lr_heads: f64,
    pub bank_size: usize,
}

/// Model, bank and optimizer state of a run in progress.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: ModelBundle,
    pub bank: Option<MemoryBank>,
    pub exec: Execution,
    encoder_opt: Sgd,
    heads_opt: Sgd,
    iteration: usize,
    last_good: Option<IterationRecord>,
}

impl Trainer {
    pub fn new(config: TrainConfig, input_dim: usize, classes: usize) -> Result<Self> {
        config.validate()?;
        let model = ModelBundle::new(
            &config.arch(input_dim, classes),
            crate::data::mix_seed(config.seed, 0),
        )?;
        let bank = match config.consistency {
            ConsistencyMode::Memory => Some(MemoryBank::new(config.bank_capacity)?),
            _ => None,
        };
        Ok(Self {
            encoder_opt: Sgd::new(config.sgd_momentum, config.weight_decay),
            heads_opt: Sgd::new(config.sgd_momentum, config.weight_decay),
            config,
            model,
            bank,
            exec: Execution::default(),
            iteration: 0,
            last_good: None,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn grl_coeff(&self) -> f64 {
        if self.config.adv_ramp {
            let p = self.iteration as f64 / self.config.total_iters as f64;
            2.0 / (1.0 + (-10.0 * p).exp()) - 1.0
        } else {
            1.0
        }
    }

    /// Tags numerical failures with the iteration and the last good losses.
    fn diagnose(&self, e: Error) -> Error {
        match e {
            Error::Numerical { detail, .. } => self.numerical(detail),
            other => other.at(self.iteration),
        }
    }

    fn numerical(&self, detail: String) -> Error {
        let context = match &self.last_good {
            Some(r) => format!(
                "{detail}; last good iteration {}: l_sup={} l_d={} l_sc={} total={}",
                r.iteration, r.l_sup, r.l_d, r.l_sc, r.total
            ),
            None => detail,
        };
        Error::Numerical {
            iteration: Some(self.iteration),
            detail: context,
        }
    }

    /// One iteration: forward/backward over both batches, one SGD update of
    /// each network, and bank maintenance. `truth` holds the target batch's
    /// held-out labels and only feeds the pseudo-label accuracy diagnostic.
    pub fn step(
        &mut self,
        source: &SourceBatch,
        target: &TargetBatch,
        truth: Option<&[usize]>,
    ) -> Result<IterationRecord> {
        let cfg = &self.config;
        if self.iteration >= cfg.total_iters {
            return Err(Error::Config(format!(
                "iteration {} is past total_iters {}",
                self.iteration, cfg.total_iters
            )));
        }
        let bootstrap = self.iteration < cfg.bootstrap_iters;
        let rates = lr_schedule(self.iteration, cfg);
        let kind = cfg.similarity_kind();
        let wants_sc = !bootstrap && cfg.lambda_sc > 0.0;
        let min_bank = cfg.min_bank_entries().max(cfg.k);

        let consistency = match (cfg.consistency, &self.bank) {
            (ConsistencyMode::Memory, Some(bank)) if wants_sc && bank.ready(min_bank) => {
                ConsistencySource::Memory(bank)
            }
            (ConsistencyMode::Batch, _)
                if wants_sc
                    && (cfg.pseudo_label == PseudoLabelMode::Classifier
                        || source.y.len() >= cfg.k) =>
            {
                ConsistencySource::Batch {
                    source_grad: cfg.batch_source_grad,
                }
            }
            _ => ConsistencySource::Inactive,
        };
        let sc_active = !matches!(consistency, ConsistencySource::Inactive);
        let settings = ObjectiveSettings {
            lambda_adv: cfg.lambda_adv,
            lambda_sc: cfg.lambda_sc,
            grl_coeff: self.grl_coeff(),
            detach_conditioning: cfg.detach_conditioning,
            tau: cfg.tau,
            k: cfg.k,
            similarity: kind,
            pseudo_label: cfg.pseudo_label,
            consistency,
        };
        let out = evaluate_objective(
            &self.model,
            &source.x,
            &source.y,
            &target.x,
            &settings,
            self.exec,
        )
        .map_err(|e| self.diagnose(e))?;
        if !out.report.total.is_finite() {
            return Err(self.numerical(format!("non-finite loss {:?}", out.report)));
        }

        // Similarity diagnostics against the bank (or the batch-form sources).
        let mut record = IterationRecord {
            iteration: self.iteration,
            bootstrap,
            l_sup: out.report.l_sup,
            l_d: out.report.l_d,
            l_adv: out.report.l_adv,
            l_sc: out.report.l_sc,
            total: out.report.total,
            sc_active,
            skip_count: out.report.skipped,
            lr_encoder: rates.encoder,
            lr_heads: rates.heads,
            ..IterationRecord::default()
        };
        let diag = match (&out.consistency, &self.bank) {
            (Some(c), _) => Some((
                c.similarity.clone(),
                source_labels_of(cfg, &self.bank, source),
                c.anchor_labels.clone(),
            )),
            (None, Some(bank)) if !bootstrap && bank.ready(min_bank) => {
                let sim = pairwise_similarity(&out.target_features, bank, kind, self.exec)?;
                let labels = bank.labels();
                let anchors = match cfg.pseudo_label {
                    PseudoLabelMode::Knn => knn_pseudo_labels(&sim, &labels, cfg.k, self.exec)?
                        .into_iter()
                        .map(|p| p.label)
                        .collect(),
                    PseudoLabelMode::Classifier => {
                        crate::losses::AnchorLabels::from_classifier(&out.target_probs)
                    }
                };
                Some((sim, labels, anchors))
            }
            _ => None,
        };
        if let Some((sim, labels, anchors)) = diag {
            let (avg, lit) = mean_similarity_from_matrix(&sim, &labels, &anchors);
            record.mean_sim_avg = avg;
            record.mean_sim_literal = lit;
            record.diagnostics = true;
            if let Some(t) = truth {
                record.pl_acc = Some(pseudo_label_accuracy(&anchors, t)?);
            }
        }

        let momentum_active = !bootstrap && self.config.momentum_mu > 0.0 && self.bank.is_some();
        if momentum_active && self.model.momentum.is_none() {
            self.model.momentum = Some(self.model.encoder.clone());
        }
        let bank_features = if !bootstrap && self.bank.is_some() {
            Some(match &self.model.momentum {
                Some(f) if momentum_active => f.forward(&source.x)?.output().clone(),
                _ => out.source_features.clone(),
            })
        } else {
            None
        };

        let it = self.iteration;
        if let Err(e) = self.encoder_opt.step(
            self.model.encoder.0.params_mut(),
            out.grads.encoder.slices(),
            rates.encoder,
        ) {
            return Err(self.diagnose(e));
        }
        let mut head_params = self.model.classifier.0.params_mut();
        head_params.extend(self.model.discriminator.0.params_mut());
        let mut head_grads = out.grads.classifier.slices();
        head_grads.extend(out.grads.discriminator.slices());
        if let Err(e) = self.heads_opt.step(head_params, head_grads, rates.heads) {
            return Err(self.diagnose(e));
        }

        if momentum_active {
            let enc = &self.model.encoder.0;
            if let Some(f) = self.model.momentum.as_mut() {
                momentum_update(&mut f.0, enc, self.config.momentum_mu)?;
            }
        }
        if let (Some(bank), Some(feats)) = (self.bank.as_mut(), bank_features) {
            bank.enqueue_batch(&feats, &source.y)
                .map_err(|e| e.at(it))?;
        }
        record.bank_size = self.bank.as_ref().map_or(0, MemoryBank::len);

        self.last_good = Some(record.clone());
        self.iteration += 1;
        Ok(record)
    }
}

fn source_labels_of(
    cfg: &TrainConfig,
    bank: &Option<MemoryBank>,
    source: &SourceBatch,
) -> Vec<usize> {
    match (cfg.consistency, bank) {
        (ConsistencyMode::Memory, Some(b)) => b.labels(),
        _ => source.y.clone(),
    }
}

/// Result of [`run_training`].
pub struct TrainOutcome {
    pub model: ModelBundle,
    pub history: Vec<IterationRecord>,
    /// Present when target labels were supplied for evaluation.
    pub eval: Option<EvalReport>,
}

/// Evaluates `model` on the whole target set. Diagnostic fields are means
/// over the last tenth of the iterations that computed them.
pub fn evaluate(
    model: &ModelBundle,
    target: &UnlabeledSet,
    truth: &TargetTruth,
    history: &[IterationRecord],
) -> Result<EvalReport> {
    let preds = model.predict(target.samples())?;
    let per_class = per_class_accuracy(&preds, truth.labels(), truth.classes());
    let diag: Vec<&IterationRecord> = history.iter().filter(|r| r.diagnostics).collect();
    let tail = &diag[diag.len() - (diag.len() / 10).max(diag.len().min(1))..];
    let mean = |f: &dyn Fn(&IterationRecord) -> Option<f64>| {
        let v: Vec<f64> = tail.iter().filter_map(|r| f(r)).collect();
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    Ok(EvalReport {
        iteration: history.last().map_or(0, |r| r.iteration),
        accuracy: accuracy(&preds, truth.labels())?,
        macro_accuracy: macro_average(&per_class),
        per_class,
        mean_similarity: mean(&|r| Some(r.mean_sim_avg)),
        pseudo_label_accuracy: mean(&|r| r.pl_acc),
    })
}

/// Runs `config.total_iters` iterations. Batches, initialisation and
/// updates are pure functions of `config.seed`.
pub fn run_training(
    config: &TrainConfig,
    source: &LabeledSet,
    target: &UnlabeledSet,
    truth: Option<&TargetTruth>,
    observer: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome> {
    run_training_exec(
        config,
        source,
        target,
        truth,
        Execution::default(),
        observer,
    )
}

/// [`run_training`] with an explicit execution strategy for the kernels.
/// Results do not depend on `exec`.
pub fn run_training_exec(
    config: &TrainConfig,
    source: &LabeledSet,
    target: &UnlabeledSet,
    truth: Option<&TargetTruth>,
    exec: Execution,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<TrainOutcome> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Config(
            "source and target sets must be nonempty".into(),
        ));
    }
    if source.dim() != target.dim() {
        return Err(Error::shape(
            "run_training input width",
            source.dim(),
            target.dim(),
        ));
    }
    if let Some(t) = truth {
        if t.labels().len() != target.len() {
            return Err(Error::shape(
                "run_training target truth",
                target.len(),
                t.labels().len(),
            ));
        }
    }
    let mut trainer = Trainer::new(config.clone(), source.dim(), source.classes())?;
    trainer.exec = exec;
    let mut src_sampler = BatchSampler::new(
        source.len(),
        config.batch_size,
        crate::data::mix_seed(config.seed, 1),
    );
    let mut tgt_sampler = BatchSampler::new(
        target.len(),
        config.batch_size,
        crate::data::mix_seed(config.seed, 2),
    );
    let mut history = Vec::with_capacity(config.total_iters);
    for it in 0..config.total_iters {
        let sb = source.batch(&src_sampler.batch(it));
        let tb = target.batch(&tgt_sampler.batch(it));
        let batch_truth = truth.map(|t| t.labels_for(&tb));
        let record = trainer.step(&sb, &tb, batch_truth.as_deref())?;
        observer(&record);
        history.push(record);
    }
    let eval = truth
        .map(|t| evaluate(&trainer.model, target, t, &history))
        .transpose()?;
    Ok(TrainOutcome {
        model: trainer.model,
        history,
        eval,
    })
}
