use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{sigmoid, Tensor2};
use super::{check_shape, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation output `y`.
    pub fn derivative_from_output(self, y: f64) -> f64 {
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
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

/// `y = act(W x + b)`
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    /// `out × in`
    pub w: Tensor2,
    /// `out × 1`
    pub b: Tensor2,
    pub activation: Activation,
}

impl DenseParams {
    pub fn init<R: Rng>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        DenseParams {
            w: Tensor2::xavier(output, input, rng),
            b: Tensor2::zeros(output, 1),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows
    }
}

#[derive(Debug, Clone)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub w: Tensor2,
    pub b: Tensor2,
    pub input: Vec<f64>,
}

pub fn dense_apply(params: &DenseParams, x: &[f64]) -> Result<(Vec<f64>, DenseCache), NnError> {
    let out = params.output_dim();
    check_shape("dense b", &params.b, (out, 1))?;
    if x.len() != params.input_dim() {
        return Err(NnError::Shape {
            context: "dense input",
            expected: (params.input_dim(), 1),
            found: (x.len(), 1),
        });
    }
    let mut y = params.b.data.clone();
    params.w.matvec_acc(x, &mut y);
    for v in &mut y {
        *v = params.activation.apply(*v);
    }
    let cache = DenseCache {
        input: x.to_vec(),
        output: y.clone(),
    };
    Ok((y, cache))
}

pub fn dense_backward(
    params: &DenseParams,
    cache: &DenseCache,
    upstream: &[f64],
) -> Result<DenseGrads, NnError> {
    if upstream.len() != params.output_dim() || cache.input.len() != params.input_dim() {
        return Err(NnError::Shape {
            context: "dense backward",
            expected: (params.output_dim(), params.input_dim()),
            found: (upstream.len(), cache.input.len()),
        });
    }
    let dz: Vec<f64> = upstream
        .iter()
        .zip(&cache.output)
        .map(|(g, &y)| g * params.activation.derivative_from_output(y))
        .collect();
    let mut w = Tensor2::zeros(params.w.rows, params.w.cols);
    w.add_outer(&dz, &cache.input);
    let mut input = vec![0.0; params.input_dim()];
    params.w.matvec_t_acc(&dz, &mut input);
    Ok(DenseGrads {
        w,
        b: Tensor2::column(dz),
        input,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn identity_layer_passes_input_through() {
        let mut w = Tensor2::zeros(3, 3);
        for i in 0..3 {
            w.set(i, i, 1.0);
        }
        let p = DenseParams {
            w,
            b: Tensor2::zeros(3, 1),
            activation: Activation::Identity,
        };
        let (y, _) = dense_apply(&p, &[1.5, -2.0, 0.25]).unwrap();
        assert_eq!(y, [1.5, -2.0, 0.25]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let p = DenseParams {
            w: Tensor2::zeros(1, 2),
            b: Tensor2::zeros(1, 1),
            activation: Activation::Sigmoid,
        };
        assert_eq!(dense_apply(&p, &[3.0, 4.0]).unwrap().0, [0.5]);
    }

    #[test]
    fn shape_mismatch() {
        let p = DenseParams::init(3, 2, Activation::Tanh, &mut seed::rng(1));
        assert!(dense_apply(&p, &[1.0]).is_err());
        let (_, cache) = dense_apply(&p, &[1.0, 2.0, 3.0]).unwrap();
        assert!(dense_backward(&p, &cache, &[1.0]).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = [0.4, -0.7, 1.1];
        let up = [0.9, -1.3];
        for act in [Activation::Identity, Activation::Tanh, Activation::Sigmoid, Activation::Relu] {
            let mut p = DenseParams::init(3, 2, act, &mut seed::rng(3));
            p.b.data = vec![0.2, 0.1];
            let f = |p: &DenseParams, x: &[f64]| -> f64 {
                let (y, _) = dense_apply(p, x).unwrap();
                y.iter().zip(&up).map(|(a, b)| a * b).sum()
            };
            let (_, cache) = dense_apply(&p, &x).unwrap();
            let g = dense_backward(&p, &cache, &up).unwrap();
            let eps = 1e-5;
            let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-6);
            for k in 0..p.w.len() {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.w.data[k] += eps;
                pm.w.data[k] -= eps;
                let n = (f(&pp, &x) - f(&pm, &x)) / (2.0 * eps);
                assert!(rel(g.w.data[k], n) < 1e-4, "{act:?} w[{k}]");
            }
            for k in 0..2 {
                let (mut pp, mut pm) = (p.clone(), p.clone());
                pp.b.data[k] += eps;
                pm.b.data[k] -= eps;
                let n = (f(&pp, &x) - f(&pm, &x)) / (2.0 * eps);
                assert!(rel(g.b.data[k], n) < 1e-4, "{act:?} b[{k}]");
            }
            for k in 0..3 {
                let (mut xp, mut xm) = (x, x);
                xp[k] += eps;
                xm[k] -= eps;
                let n = (f(&p, &xp) - f(&p, &xm)) / (2.0 * eps);
                assert!(rel(g.input[k], n) < 1e-4, "{act:?} x[{k}]");
            }
        }
    }
}
