//! Small dense numerics: 64-bit tensors, an LSTM cell with backpropagation
//! through time, dense layers, binary cross-entropy, Adam and a
//! finite-difference gradient checker.

mod adam;
mod dense;
mod gradcheck;
mod loss;
mod lstm;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use dense::{dense_apply, dense_backward, Activation, DenseCache, DenseGrads, DenseParams};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport, GradMismatch};
pub use loss::{bce_loss, PROB_CLAMP};
pub use lstm::{lstm_backward, GATE_ORDER, lstm_forward, LstmCache, LstmGrads, LstmOutput, LstmParams};
pub use tensor::{sigmoid, Tensor2};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("{context}: expected shape {expected:?}, found {found:?}")]
    Shape {
        context: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("non-finite gradient in parameter tensor {tensor}; update skipped")]
    NonFiniteGradient { tensor: usize },
    #[error("loss is not finite: {0}")]
    NonFiniteLoss(f64),
    #[error("parameter and gradient counts differ: {params} vs {grads}")]
    ParamCount { params: usize, grads: usize },
}

pub(crate) fn check_shape(
    context: &'static str,
    t: &Tensor2,
    expected: (usize, usize),
) -> Result<(), NnError> {
    if t.shape() != expected {
        return Err(NnError::Shape {
            context,
            expected,
            found: t.shape(),
        });
    }
    Ok(())
}
