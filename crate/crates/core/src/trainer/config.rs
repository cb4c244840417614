use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ArchConfig;
use crate::similarity::SimilarityKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SimilarityName {
    Cosine,
    Euclidean,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PseudoLabelMode {
    /// Majority vote among the `k` nearest source entries.
    Knn,
    /// Classifier argmax on the target sample.
    Classifier,
}

/// Where the consistency loss finds its source samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConsistencyMode {
    /// FIFO memory bank of past source batches.
    Memory,
    /// The current source mini-batch only; no bank is built.
    Batch,
    /// No consistency machinery at all.
    Off,
}

/// Every hyperparameter of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_iters: usize,
    pub bootstrap_iters: usize,

    pub lambda_adv: f64,
    pub lambda_sc: f64,
    pub tau: f64,
    pub k: usize,
    pub bank_capacity: usize,
    /// Bank fill required before the consistency loss switches on;
    /// `None` means `5·k`.
    pub min_bank: Option<usize>,
    pub similarity: SimilarityName,
    pub sigma: f64,
    pub pseudo_label: PseudoLabelMode,
    pub consistency: ConsistencyMode,
    /// Let the batch-form consistency loss backpropagate into source features.
    pub batch_source_grad: bool,
    /// Ramp the reversal coefficient as `2/(1 + e^{−10p}) − 1`.
    pub adv_ramp: bool,
    /// Treat the classifier probabilities entering the multilinear map as
    /// constants for the adversarial gradient.
    pub detach_conditioning: bool,

    pub lr_encoder: f64,
    pub lr_heads: f64,
    pub lr_alpha: f64,
    pub lr_beta: f64,
    pub sgd_momentum: f64,
    pub weight_decay: f64,
    /// Momentum-encoder coefficient μ; 0 fills the bank from E directly.
    pub momentum_mu: f64,

    pub encoder_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub disc_hidden: usize,
    pub conditioning: bool,

    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 32,
            total_iters: 3000,
            bootstrap_iters: 500,
            lambda_adv: 1.0,
            lambda_sc: 0.1,
            tau: 0.07,
            k: 5,
            bank_capacity: 4096,
            min_bank: None,
            similarity: SimilarityName::Cosine,
            sigma: 1.0,
            pseudo_label: PseudoLabelMode::Knn,
            consistency: ConsistencyMode::Memory,
            batch_source_grad: false,
            adv_ramp: false,
            detach_conditioning: true,
            lr_encoder: 0.003,
            lr_heads: 0.03,
            lr_alpha: 10.0,
            lr_beta: 0.75,
            sgd_momentum: 0.9,
            weight_decay: 5e-4,
            momentum_mu: 0.0,
            encoder_hidden: vec![64, 64],
            feature_dim: 32,
            disc_hidden: 64,
            conditioning: true,
            seed: 0,
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in [`TrainConfig::entries`] order.
pub const CONFIG_KEYS: &[&str] = &[
    "batch_size",
    "total_iters",
    "bootstrap_iters",
    "lambda_adv",
    "lambda_sc",
    "tau",
    "k",
    "bank_capacity",
    "min_bank",
    "similarity",
    "sigma",
    "pseudo_label",
    "consistency",
    "batch_source_grad",
    "adv_ramp",
    "detach_conditioning",
    "lr_encoder",
    "lr_heads",
    "lr_alpha",
    "lr_beta",
    "sgd_momentum",
    "weight_decay",
    "momentum_mu",
    "encoder_hidden",
    "feature_dim",
    "disc_hidden",
    "conditioning",
    "seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value '{value}' for key '{key}'")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "invalid value '{value}' for key '{key}'"
        ))),
    }
}

impl TrainConfig {
    pub fn similarity_kind(&self) -> SimilarityKind {
        match self.similarity {
            SimilarityName::Cosine => SimilarityKind::Cosine,
            SimilarityName::Euclidean => SimilarityKind::Euclidean,
            SimilarityName::Gaussian => SimilarityKind::Gaussian { sigma: self.sigma },
        }
    }

    pub fn min_bank_entries(&self) -> usize {
        self.min_bank.unwrap_or(5 * self.k)
    }

    pub fn arch(&self, input_dim: usize, classes: usize) -> ArchConfig {
        ArchConfig {
            input_dim,
            encoder_hidden: self.encoder_hidden.clone(),
            feature_dim: self.feature_dim,
            classes,
            disc_hidden: self.disc_hidden,
            conditioning: self.conditioning,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.batch_size == 0 {
            return fail("batch_size must be at least 1".into());
        }
        if self.bootstrap_iters >= self.total_iters {
            return fail(format!(
                "bootstrap_iters ({}) must be below total_iters ({})",
                self.bootstrap_iters, self.total_iters
            ));
        }
        for (name, v) in [
            ("lr_encoder", self.lr_encoder),
            ("lr_heads", self.lr_heads),
            ("tau", self.tau),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return fail(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("lambda_adv", self.lambda_adv),
            ("lambda_sc", self.lambda_sc),
            ("lr_alpha", self.lr_alpha),
            ("lr_beta", self.lr_beta),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return fail(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(0.0..1.0).contains(&self.sgd_momentum) {
            return fail(format!(
                "sgd_momentum must lie in [0, 1), got {}",
                self.sgd_momentum
            ));
        }
        if !(0.0..=1.0).contains(&self.momentum_mu) {
            return fail(format!(
                "momentum_mu must lie in [0, 1], got {}",
                self.momentum_mu
            ));
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.bank_capacity == 0 {
            return fail("bank_capacity must be at least 1".into());
        }
        if self.consistency == ConsistencyMode::Memory
            && self.pseudo_label == PseudoLabelMode::Knn
            && self.min_bank_entries().max(self.k) > self.bank_capacity
        {
            return fail(format!(
                "bank_capacity {} can never reach the {} entries the consistency loss needs",
                self.bank_capacity,
                self.min_bank_entries().max(self.k)
            ));
        }
        self.similarity_kind().validate()?;
        if self.feature_dim == 0 || self.disc_hidden == 0 || self.encoder_hidden.contains(&0) {
            return fail("network widths must be positive".into());
        }
        Ok(())
    }

    /// Sets one key from its text form. Dashes and underscores are
    /// interchangeable in `key`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        let v = value.trim();
        match k {
            "batch_size" => self.batch_size = parse(k, v)?,
            "total_iters" => self.total_iters = parse(k, v)?,
            "bootstrap_iters" => self.bootstrap_iters = parse(k, v)?,
            "lambda_adv" => self.lambda_adv = parse(k, v)?,
            "lambda_sc" => self.lambda_sc = parse(k, v)?,
            "tau" => self.tau = parse(k, v)?,
            "k" => self.k = parse(k, v)?,
            "bank_capacity" => self.bank_capacity = parse(k, v)?,
            "min_bank" => {
                self.min_bank = match v {
                    "auto" | "" => None,
                    _ => Some(parse(k, v)?),
                }
            }
            "similarity" => {
                self.similarity = match v {
                    "cosine" => SimilarityName::Cosine,
                    "euclidean" => SimilarityName::Euclidean,
                    "gaussian" => SimilarityName::Gaussian,
                    _ => {
                        return Err(Error::Config(format!(
                            "invalid value '{v}' for key 'similarity'"
                        )))
                    }
                }
            }
            "sigma" => self.sigma = parse(k, v)?,
            "pseudo_label" => {
                self.pseudo_label = match v {
                    "knn" => PseudoLabelMode::Knn,
                    "classifier" => PseudoLabelMode::Classifier,
                    _ => {
                        return Err(Error::Config(format!(
                            "invalid value '{v}' for key 'pseudo_label'"
                        )))
                    }
                }
            }
            "consistency" => {
                self.consistency = match v {
                    "memory" => ConsistencyMode::Memory,
                    "batch" => ConsistencyMode::Batch,
                    "off" => ConsistencyMode::Off,
                    _ => {
                        return Err(Error::Config(format!(
                            "invalid value '{v}' for key 'consistency'"
                        )))
                    }
                }
            }
            "batch_source_grad" => self.batch_source_grad = parse_bool(k, v)?,
            "adv_ramp" => self.adv_ramp = parse_bool(k, v)?,
            "detach_conditioning" => self.detach_conditioning = parse_bool(k, v)?,
            "lr_encoder" => self.lr_encoder = parse(k, v)?,
            "lr_heads" => self.lr_heads = parse(k, v)?,
            "lr_alpha" => self.lr_alpha = parse(k, v)?,
            "lr_beta" => self.lr_beta = parse(k, v)?,
            "sgd_momentum" => self.sgd_momentum = parse(k, v)?,
            "weight_decay" => self.weight_decay = parse(k, v)?,
            "momentum_mu" => self.momentum_mu = parse(k, v)?,
            "encoder_hidden" => {
                self.encoder_hidden = if v.is_empty() {
                    Vec::new()
                } else {
                    v.split(',').map(|p| parse(k, p)).collect::<Result<_>>()?
                }
            }
            "feature_dim" => self.feature_dim = parse(k, v)?,
            "disc_hidden" => self.disc_hidden = parse(k, v)?,
            "conditioning" => self.conditioning = parse_bool(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Every key with its current value, re-loadable through [`Self::set`].
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let name = |s: SimilarityName| match s {
            SimilarityName::Cosine => "cosine",
            SimilarityName::Euclidean => "euclidean",
            SimilarityName::Gaussian => "gaussian",
        };
        let values = vec![
            self.batch_size.to_string(),
            self.total_iters.to_string(),
            self.bootstrap_iters.to_string(),
            self.lambda_adv.to_string(),
            self.lambda_sc.to_string(),
            self.tau.to_string(),
            self.k.to_string(),
            self.bank_capacity.to_string(),
            self.min_bank
                .map_or_else(|| "auto".to_string(), |m| m.to_string()),
            name(self.similarity).to_string(),
            self.sigma.to_string(),
            match self.pseudo_label {
                PseudoLabelMode::Knn => "knn",
                PseudoLabelMode::Classifier => "classifier",
            }
            .to_string(),
            match self.consistency {
                ConsistencyMode::Memory => "memory",
                ConsistencyMode::Batch => "batch",
                ConsistencyMode::Off => "off",
            }
            .to_string(),
            self.batch_source_grad.to_string(),
            self.adv_ramp.to_string(),
            self.detach_conditioning.to_string(),
            self.lr_encoder.to_string(),
            self.lr_heads.to_string(),
            self.lr_alpha.to_string(),
            self.lr_beta.to_string(),
            self.sgd_momentum.to_string(),
            self.weight_decay.to_string(),
            self.momentum_mu.to_string(),
            self.encoder_hidden
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join(","),
            self.feature_dim.to_string(),
            self.disc_hidden.to_string(),
            self.conditioning.to_string(),
            self.seed.to_string(),
        ];
        CONFIG_KEYS.iter().copied().zip(values).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_mirror_reference_values() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!((c.batch_size, c.k), (32, 5));
        assert_eq!((c.lambda_adv, c.lambda_sc, c.tau), (1.0, 0.1, 0.07));
        assert_eq!((c.lr_encoder, c.lr_heads), (0.003, 0.03));
        assert_eq!(c.min_bank_entries(), 25);
    }

    #[test]
    fn entries_round_trip_through_set() {
        let mut c = TrainConfig {
            similarity: SimilarityName::Gaussian,
            sigma: 0.5,
            min_bank: Some(40),
            consistency: ConsistencyMode::Batch,
            encoder_hidden: vec![8, 4],
            seed: 99,
            ..TrainConfig::default()
        };
        c.tau = 0.3;
        let mut back = TrainConfig::default();
        for (k, v) in c.entries() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = TrainConfig::default().set("lamda_sc", "0.1").unwrap_err();
        assert!(err.to_string().contains("lamda_sc"));
        let err = TrainConfig::default().set("tau", "warm").unwrap_err();
        assert!(err.to_string().contains("tau"));
    }

    #[test]
    fn dashed_keys_are_accepted() {
        let mut c = TrainConfig::default();
        c.set("lambda-sc", "0").unwrap();
        assert_eq!(c.lambda_sc, 0.0);
    }

    #[test]
    fn invalid_schedules_are_rejected() {
        let c = TrainConfig {
            bootstrap_iters: 10,
            total_iters: 10,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            lr_heads: 0.0,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
        let c = TrainConfig {
            bank_capacity: 10,
            ..TrainConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
