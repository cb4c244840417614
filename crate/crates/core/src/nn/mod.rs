//! Dense building blocks with hand-derived backward passes.

mod gradcheck;
mod layer;
mod model;
mod ops;
mod tensor;

pub use gradcheck::{finite_difference_check, GradCheckReport};
pub use layer::{Activation, DenseGrad, DenseLayer, Mlp, MlpGrad, MlpTape};
pub use model::{
    ArchConfig, Classifier, ClassifierOutput, Discriminator, DiscriminatorOutput, Encoder,
    ModelBundle,
};
pub use ops::{
    clamp_prob, gradient_reversal, gradient_reversal_forward, log_sum_exp, sigmoid,
    softmax_backward, softmax_in_place, softmax_rows, PROB_EPS,
};
pub use tensor::{dot, norm, Tensor2};
