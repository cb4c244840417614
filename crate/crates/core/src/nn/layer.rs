use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor2;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Identity => v,
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Affine map `y = x Wᵀ + b` with `W` stored as (out × in).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Tensor2::zeros(output, input),
            bias: vec![0.0; output],
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (input + output) as f64).sqrt();
        let mut layer = Self::zeros(input, output);
        for w in layer.weight.data_mut() {
            *w = rng.gen_range(-limit..limit);
        }
        layer
    }

    pub fn input_width(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_width(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Tensor2) -> Tensor2 {
        let mut y = x.matmul_t(&self.weight);
        for r in 0..y.rows() {
            for (v, b) in y.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        y
    }

    /// Returns parameter gradients and the gradient with respect to `x`.
    pub fn backward(&self, x: &Tensor2, dy: &Tensor2) -> (DenseGrad, Tensor2) {
        let weight = dy.t_matmul(x);
        let mut bias = vec![0.0; self.output_width()];
        for row in dy.iter_rows() {
            for (b, d) in bias.iter_mut().zip(row) {
                *b += d;
            }
        }
        let dx = dy.matmul(&self.weight);
        (DenseGrad { weight, bias }, dx)
    }
}

/// Stack of dense layers with a shared hidden activation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
    pub hidden: Activation,
    pub output: Activation,
}

/// Activations cached by [`Mlp::forward`]; `values[0]` is the input,
/// `values[i + 1]` the post-activation output of layer `i`.
#[derive(Debug, Clone)]
pub struct MlpTape {
    pub values: Vec<Tensor2>,
}

impl MlpTape {
    pub fn output(&self) -> &Tensor2 {
        self.values.last().expect("tape always holds the input")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<DenseGrad>,
}

impl Mlp {
    /// Builds an MLP through the given widths, e.g. `[16, 64, 64, 32]`.
    pub fn glorot<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| DenseLayer::glorot(w[0], w[1], rng))
            .collect();
        Self {
            layers,
            hidden,
            output,
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::input_width)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::output_width)
    }

    fn activation(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output
        } else {
            self.hidden
        }
    }

    pub fn forward(&self, x: &Tensor2) -> Result<MlpTape> {
        if x.rows() == 0 {
            return Err(Error::Config("empty input batch".into()));
        }
        if x.cols() != self.input_width() {
            return Err(Error::shape("Mlp::forward", self.input_width(), x.cols()));
        }
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let act = self.activation(i);
            let y = layer.forward(values.last().unwrap()).map(|v| act.apply(v));
            values.push(y);
        }
        Ok(MlpTape { values })
    }

    /// Backpropagates `d_out` (gradient w.r.t. the final output) through the
    /// cached tape. Returns parameter gradients and the input gradient.
    pub fn backward(&self, tape: &MlpTape, d_out: &Tensor2) -> (MlpGrad, Tensor2) {
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut delta = d_out.clone();
        for i in (0..self.layers.len()).rev() {
            let act = self.activation(i);
            if act != Activation::Identity {
                let y = &tape.values[i + 1];
                for (d, &v) in delta.data_mut().iter_mut().zip(y.data()) {
                    *d *= act.derivative_from_output(v);
                }
            }
            let (g, dx) = self.layers[i].backward(&tape.values[i], &delta);
            grads.push(g);
            delta = dx;
        }
        grads.reverse();
        (MlpGrad { layers: grads }, delta)
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.data_mut(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn same_shape(&self, other: &Mlp) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols()
            })
    }
}

impl MlpGrad {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weight: Tensor2::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.data(), l.bias.as_slice()])
            .collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn backward_matches_central_differences_per_activation() {
        for act in [Activation::Identity, Activation::Tanh, Activation::Relu] {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let mlp = Mlp::glorot(&[3, 5, 2], act, Activation::Identity, &mut rng);
            let x = Tensor2::from_vec(2, 3, vec![0.3, -0.7, 1.1, 0.9, 0.2, -0.4]).unwrap();
            // loss = sum of outputs weighted by fixed coefficients
            let coef = [0.7, -1.3, 0.4, 2.0];
            let loss = |m: &Mlp, x: &Tensor2| -> f64 {
                let out = m.forward(x).unwrap();
                out.output()
                    .data()
                    .iter()
                    .zip(coef)
                    .map(|(a, b)| a * b)
                    .sum()
            };
            let tape = mlp.forward(&x).unwrap();
            let d_out = Tensor2::from_vec(2, 2, coef.to_vec()).unwrap();
            let (g, dx) = mlp.backward(&tape, &d_out);
            let analytic = g.flatten();

            let h = 1e-6;
            let mut k = 0;
            let mut probe = mlp.clone();
            for s in 0..probe.params().len() {
                for e in 0..probe.params()[s].len() {
                    let orig = probe.params()[s][e];
                    probe.params_mut()[s][e] = orig + h;
                    let up = loss(&probe, &x);
                    probe.params_mut()[s][e] = orig - h;
                    let down = loss(&probe, &x);
                    probe.params_mut()[s][e] = orig;
                    let numeric = (up - down) / (2.0 * h);
                    assert!((numeric - analytic[k]).abs() < 1e-7, "{act:?} param {k}");
                    k += 1;
                }
            }
            for i in 0..x.data().len() {
                let mut xp = x.clone();
                xp.data_mut()[i] += h;
                let mut xm = x.clone();
                xm.data_mut()[i] -= h;
                let numeric = (loss(&mlp, &xp) - loss(&mlp, &xm)) / (2.0 * h);
                assert!((numeric - dx.data()[i]).abs() < 1e-7);
            }
        }
    }
}
