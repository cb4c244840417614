use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layer::{Activation, Mlp, MlpTape};
use super::ops::{clamp_prob, sigmoid, softmax_rows};
use super::tensor::Tensor2;
use crate::error::{Error, Result};

/// Widths of the three networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub feature_dim: usize,
    pub classes: usize,
    pub disc_hidden: usize,
    /// Feed the discriminator `f ⊗ g` instead of `f`.
    pub conditioning: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            input_dim: 16,
            encoder_hidden: vec![64, 64],
            feature_dim: 32,
            classes: 50,
            disc_hidden: 64,
            conditioning: true,
        }
    }
}

impl ArchConfig {
    pub fn disc_input(&self) -> usize {
        if self.conditioning {
            self.feature_dim * self.classes
        } else {
            self.feature_dim
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.feature_dim == 0 || self.disc_hidden == 0 {
            return Err(Error::Config("network widths must be positive".into()));
        }
        if self.classes < 2 {
            return Err(Error::Config("need at least two classes".into()));
        }
        if self.encoder_hidden.contains(&0) {
            return Err(Error::Config(
                "encoder hidden widths must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Feature extractor: tanh MLP ending in a linear projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder(pub Mlp);

/// Linear head producing class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier(pub Mlp);

/// Domain discriminator: two ReLU hidden layers and a scalar logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator(pub Mlp);

pub struct ClassifierOutput {
    pub tape: MlpTape,
    pub probs: Tensor2,
}

pub struct DiscriminatorOutput {
    pub tape: MlpTape,
    /// Sigmoid outputs clamped to `[ε, 1 − ε]`.
    pub probs: Vec<f64>,
    /// Whether the clamp was engaged for each row (zero local gradient).
    pub clamped: Vec<bool>,
}

impl Encoder {
    /// `f = E(x)`, caching activations for the backward pass.
    pub fn forward(&self, x: &Tensor2) -> Result<MlpTape> {
        self.0.forward(x)
    }

    pub fn feature_dim(&self) -> usize {
        self.0.output_width()
    }
}

impl Classifier {
    /// `g = softmax(C(f))`.
    pub fn forward(&self, features: &Tensor2) -> Result<ClassifierOutput> {
        let tape = self.0.forward(features)?;
        let probs = softmax_rows(tape.output())?;
        Ok(ClassifierOutput { tape, probs })
    }

    pub fn classes(&self) -> usize {
        self.0.output_width()
    }
}

impl Discriminator {
    pub fn forward(&self, h: &Tensor2) -> Result<DiscriminatorOutput> {
        let tape = self.0.forward(h)?;
        let (probs, clamped) = tape
            .output()
            .data()
            .iter()
            .map(|&z| {
                let p = sigmoid(z);
                let c = clamp_prob(p);
                (c, c != p)
            })
            .unzip();
        Ok(DiscriminatorOutput {
            tape,
            probs,
            clamped,
        })
    }
}

/// Parameters of E, C, G and the optional momentum copy of E.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub arch: ArchConfig,
    pub encoder: Encoder,
    pub classifier: Classifier,
    pub discriminator: Discriminator,
    pub momentum: Option<Encoder>,
}

impl ModelBundle {
    pub fn new(arch: &ArchConfig, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut widths = vec![arch.input_dim];
        widths.extend(&arch.encoder_hidden);
        widths.push(arch.feature_dim);
        let encoder = Mlp::glorot(&widths, Activation::Tanh, Activation::Identity, &mut rng);
        let classifier = Mlp::glorot(
            &[arch.feature_dim, arch.classes],
            Activation::Identity,
            Activation::Identity,
            &mut rng,
        );
        let discriminator = Mlp::glorot(
            &[arch.disc_input(), arch.disc_hidden, arch.disc_hidden, 1],
            Activation::Relu,
            Activation::Identity,
            &mut rng,
        );
        Ok(Self {
            arch: arch.clone(),
            encoder: Encoder(encoder),
            classifier: Classifier(classifier),
            discriminator: Discriminator(discriminator),
            momentum: None,
        })
    }

    /// Class predictions (argmax, smallest index on ties) for raw inputs.
    pub fn predict(&self, x: &Tensor2) -> Result<Vec<usize>> {
        let f = self.encoder.forward(x)?;
        let g = self.classifier.forward(f.output())?;
        Ok(g.probs.iter_rows().map(crate::similarity::argmax).collect())
    }

    /// Number of trainable parameters in E, C and G.
    pub fn param_count(&self) -> usize {
        self.encoder.0.param_count()
            + self.classifier.0.param_count()
            + self.discriminator.0.param_count()
    }

    /// E, C, G parameters flattened in that order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for mlp in [&self.encoder.0, &self.classifier.0, &self.discriminator.0] {
            for s in mlp.params() {
                out.extend_from_slice(s);
            }
        }
        out
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::shape(
                "ModelBundle::assign_flat",
                self.param_count(),
                flat.len(),
            ));
        }
        let mut offset = 0;
        for mlp in [
            &mut self.encoder.0,
            &mut self.classifier.0,
            &mut self.discriminator.0,
        ] {
            for s in mlp.params_mut() {
                s.copy_from_slice(&flat[offset..offset + s.len()]);
                offset += s.len();
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layer::DenseLayer;

    fn tiny_arch() -> ArchConfig {
        ArchConfig {
            input_dim: 3,
            encoder_hidden: vec![4],
            feature_dim: 2,
            classes: 3,
            disc_hidden: 5,
            conditioning: true,
        }
    }

    #[test]
    fn zero_encoder_gives_zero_features() {
        let mut m = ModelBundle::new(&tiny_arch(), 1).unwrap();
        let zeros = vec![0.0; m.encoder.0.param_count()];
        let mut off = 0;
        for s in m.encoder.0.params_mut() {
            s.copy_from_slice(&zeros[off..off + s.len()]);
            off += s.len();
        }
        let x = Tensor2::from_vec(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.5, 9.0]).unwrap();
        let f = m.encoder.forward(&x).unwrap();
        assert!(f.output().data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn identity_encoder_passes_input_through() {
        let mut layer = DenseLayer::zeros(2, 2);
        layer.weight = Tensor2::identity(2);
        let enc = Encoder(Mlp {
            layers: vec![layer],
            hidden: Activation::Tanh,
            output: Activation::Identity,
        });
        let x = Tensor2::from_vec(1, 2, vec![1.0, 2.0]).unwrap();
        assert_eq!(enc.forward(&x).unwrap().output().data(), &[1.0, 2.0]);
    }

    #[test]
    fn encoder_rejects_width_mismatch_and_empty_batch() {
        let m = ModelBundle::new(&tiny_arch(), 1).unwrap();
        let bad = Tensor2::zeros(2, 4);
        assert!(matches!(m.encoder.forward(&bad), Err(Error::Shape { .. })));
        assert!(m.encoder.forward(&Tensor2::zeros(0, 3)).is_err());
    }

    #[test]
    fn encoder_matches_straight_line_oracle() {
        let arch = ArchConfig {
            input_dim: 3,
            encoder_hidden: vec![5],
            feature_dim: 4,
            classes: 2,
            disc_hidden: 3,
            conditioning: false,
        };
        let m = ModelBundle::new(&arch, 42).unwrap();
        let x = Tensor2::from_vec(2, 3, vec![0.2, -1.0, 0.7, 1.5, 0.1, -0.3]).unwrap();
        let got = m.encoder.forward(&x).unwrap();

        let l0 = &m.encoder.0.layers[0];
        let l1 = &m.encoder.0.layers[1];
        for r in 0..2 {
            let xr = x.row(r);
            let mut hidden = [0.0; 5];
            for (o, h) in hidden.iter_mut().enumerate() {
                let mut s = l0.bias[o];
                for (i, &xi) in xr.iter().enumerate() {
                    s += l0.weight.get(o, i) * xi;
                }
                *h = s.tanh();
            }
            for o in 0..4 {
                let mut s = l1.bias[o];
                for (i, h) in hidden.iter().enumerate() {
                    s += l1.weight.get(o, i) * h;
                }
                assert!((s - got.output().get(r, o)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_discriminator_outputs_half() {
        let mut m = ModelBundle::new(&tiny_arch(), 1).unwrap();
        for s in m.discriminator.0.params_mut() {
            s.fill(0.0);
        }
        let h = Tensor2::from_vec(1, 6, vec![1.0; 6]).unwrap();
        let out = m.discriminator.forward(&h).unwrap();
        assert_eq!(out.probs, vec![0.5]);
        assert_eq!(out.clamped, vec![false]);
    }

    #[test]
    fn saturated_discriminator_is_clamped() {
        let mut m = ModelBundle::new(&tiny_arch(), 1).unwrap();
        for s in m.discriminator.0.params_mut() {
            s.fill(0.0);
        }
        m.discriminator.0.layers[2].bias[0] = 1e4;
        let h = Tensor2::zeros(1, 6);
        let out = m.discriminator.forward(&h).unwrap();
        assert_eq!(out.probs, vec![1.0 - crate::nn::PROB_EPS]);
        assert!(out.clamped[0]);
    }

    #[test]
    fn discriminator_matches_straight_line_oracle() {
        let m = ModelBundle::new(&tiny_arch(), 9).unwrap();
        let h = Tensor2::from_vec(1, 6, vec![0.3, -0.2, 0.9, 0.0, 1.2, -0.8]).unwrap();
        let got = m.discriminator.forward(&h).unwrap().probs[0];
        let mut v: Vec<f64> = h.row(0).to_vec();
        let layers = &m.discriminator.0.layers;
        for (li, l) in layers.iter().enumerate() {
            v = (0..l.output_width())
                .map(|o| {
                    let s =
                        l.bias[o] + (0..v.len()).map(|i| l.weight.get(o, i) * v[i]).sum::<f64>();
                    if li + 1 < layers.len() {
                        s.max(0.0)
                    } else {
                        s
                    }
                })
                .collect();
        }
        let expected = 1.0 / (1.0 + (-v[0]).exp());
        assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn disc_input_width_follows_conditioning() {
        let mut arch = tiny_arch();
        assert_eq!(arch.disc_input(), 6);
        arch.conditioning = false;
        assert_eq!(arch.disc_input(), 2);
        let m = ModelBundle::new(&arch, 0).unwrap();
        assert_eq!(m.discriminator.0.input_width(), 2);
        assert_eq!(m.classifier.classes(), 3);
        assert_eq!(m.encoder.feature_dim(), 2);
    }

    #[test]
    fn flat_round_trip() {
        let mut m = ModelBundle::new(&tiny_arch(), 5).unwrap();
        let flat = m.flatten();
        let doubled: Vec<f64> = flat.iter().map(|v| v * 2.0).collect();
        m.assign_flat(&doubled).unwrap();
        assert_eq!(m.flatten(), doubled);
        assert!(m.assign_flat(&flat[1..]).is_err());
    }
}
