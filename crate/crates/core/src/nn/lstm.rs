use rand::Rng;

use super::tensor::{sigmoid, Tensor2};
use super::{check_shape, NnError};

/// Weights of one LSTM cell. Gate blocks are packed in the order
/// `[input, forget, candidate, output]`, each `hidden_dim` rows tall.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden_dim: usize,
    /// `4H × d_in`
    pub w: Tensor2,
    /// `4H × H`
    pub u: Tensor2,
    /// `4H × 1`
    pub b: Tensor2,
}

pub const GATE_ORDER: [&str; 4] = ["input", "forget", "candidate", "output"];

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmParams {
            input_dim,
            hidden_dim,
            w: Tensor2::zeros(4 * hidden_dim, input_dim),
            u: Tensor2::zeros(4 * hidden_dim, hidden_dim),
            b: Tensor2::zeros(4 * hidden_dim, 1),
        }
    }

    /// Xavier-uniform weights, zero bias except the forget block at 1.0.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let h = hidden_dim;
        let mut b = Tensor2::zeros(4 * h, 1);
        b.data[h..2 * h].fill(1.0);
        LstmParams {
            input_dim,
            hidden_dim,
            w: Tensor2::xavier(4 * h, input_dim, rng),
            u: Tensor2::xavier(4 * h, h, rng),
            b,
        }
    }

    fn validate(&self) -> Result<(), NnError> {
        let h4 = 4 * self.hidden_dim;
        check_shape("lstm W", &self.w, (h4, self.input_dim))?;
        check_shape("lstm U", &self.u, (h4, self.hidden_dim))?;
        check_shape("lstm b", &self.b, (h4, 1))
    }
}

/// Activations kept from the forward pass. Only the first `true_length`
/// steps are stored; later positions are copies.
#[derive(Debug, Clone)]
pub struct LstmCache {
    inputs: Tensor2,
    true_length: usize,
    /// `L × 4H` post-activation gates.
    gates: Tensor2,
    /// `(L+1) × H`, row 0 is the zero initial state.
    cells: Tensor2,
    hidden: Tensor2,
}

impl LstmCache {
    pub fn true_length(&self) -> usize {
        self.true_length
    }
}

#[derive(Debug, Clone)]
pub struct LstmOutput {
    /// `T × H` hidden states h_1..h_T.
    pub hidden: Tensor2,
    /// `T × H` cell states c_1..c_T.
    pub cells: Tensor2,
    pub cache: LstmCache,
}

impl LstmOutput {
    /// h at `true_length`, or zeros for an empty sequence.
    pub fn final_hidden(&self) -> &[f64] {
        self.cache.hidden.row(self.cache.true_length)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmGrads {
    pub w: Tensor2,
    pub u: Tensor2,
    pub b: Tensor2,
    /// `T × d_in`; rows past `true_length` are zero.
    pub inputs: Tensor2,
}

impl LstmGrads {
    pub fn zeros_like(params: &LstmParams, steps: usize) -> Self {
        LstmGrads {
            w: Tensor2::zeros(params.w.rows, params.w.cols),
            u: Tensor2::zeros(params.u.rows, params.u.cols),
            b: Tensor2::zeros(params.b.rows, 1),
            inputs: Tensor2::zeros(steps, params.input_dim),
        }
    }
}

/// Runs the cell over `inputs` (`T × d_in`) from zero state. Positions at or
/// beyond `true_length` carry h and c forward unchanged.
pub fn lstm_forward(
    params: &LstmParams,
    inputs: &Tensor2,
    true_length: usize,
) -> Result<LstmOutput, NnError> {
    params.validate()?;
    if inputs.cols != params.input_dim || inputs.rows == 0 {
        return Err(NnError::Shape {
            context: "lstm inputs",
            expected: (inputs.rows.max(1), params.input_dim),
            found: inputs.shape(),
        });
    }
    if true_length > inputs.rows {
        return Err(NnError::Shape {
            context: "lstm true_length",
            expected: (inputs.rows, params.input_dim),
            found: (true_length, params.input_dim),
        });
    }
    let h = params.hidden_dim;
    let steps = true_length;
    let mut gates = Tensor2::zeros(steps, 4 * h);
    let mut cells = Tensor2::zeros(steps + 1, h);
    let mut hidden = Tensor2::zeros(steps + 1, h);
    let mut z = vec![0.0; 4 * h];

    for t in 0..steps {
        z.copy_from_slice(&params.b.data);
        params.w.matvec_acc(inputs.row(t), &mut z);
        params.u.matvec_acc(hidden.row(t), &mut z);
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = if k / h == 2 { zk.tanh() } else { sigmoid(*zk) };
        }
        gates.row_mut(t).copy_from_slice(&z);
        let (ig, rest) = z.split_at(h);
        let (fg, rest) = rest.split_at(h);
        let (gg, og) = rest.split_at(h);
        for j in 0..h {
            let c = fg[j] * cells.get(t, j) + ig[j] * gg[j];
            cells.set(t + 1, j, c);
            hidden.set(t + 1, j, og[j] * c.tanh());
        }
    }

    let mut h_out = Tensor2::zeros(inputs.rows, h);
    let mut c_out = Tensor2::zeros(inputs.rows, h);
    for t in 0..inputs.rows {
        let src = (t + 1).min(steps);
        h_out.row_mut(t).copy_from_slice(hidden.row(src));
        c_out.row_mut(t).copy_from_slice(cells.row(src));
    }
    Ok(LstmOutput {
        hidden: h_out,
        cells: c_out,
        cache: LstmCache {
            inputs: inputs.clone(),
            true_length,
            gates,
            cells,
            hidden,
        },
    })
}

/// Reverse-mode gradients given dLoss/dh at `true_length`.
pub fn lstm_backward(
    params: &LstmParams,
    cache: &LstmCache,
    d_final: &[f64],
) -> Result<LstmGrads, NnError> {
    let h = params.hidden_dim;
    if d_final.len() != h {
        return Err(NnError::Shape {
            context: "lstm upstream gradient",
            expected: (h, 1),
            found: (d_final.len(), 1),
        });
    }
    if cache.inputs.cols != params.input_dim || cache.gates.cols != 4 * h {
        return Err(NnError::Shape {
            context: "lstm cache",
            expected: (4 * h, params.input_dim),
            found: (cache.gates.cols, cache.inputs.cols),
        });
    }
    let mut grads = LstmGrads::zeros_like(params, cache.inputs.rows);
    let mut dh = d_final.to_vec();
    let mut dc = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];

    for t in (0..cache.true_length).rev() {
        let g = cache.gates.row(t);
        let c_prev = cache.cells.row(t);
        let c = cache.cells.row(t + 1);
        for j in 0..h {
            let (ig, fg, gg, og) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = c[j].tanh();
            let dct = dc[j] + dh[j] * og * (1.0 - tc * tc);
            dz[j] = dct * gg * ig * (1.0 - ig);
            dz[h + j] = dct * c_prev[j] * fg * (1.0 - fg);
            dz[2 * h + j] = dct * ig * (1.0 - gg * gg);
            dz[3 * h + j] = dh[j] * tc * og * (1.0 - og);
            dc[j] = dct * fg;
        }
        grads.w.add_outer(&dz, cache.inputs.row(t));
        grads.u.add_outer(&dz, cache.hidden.row(t));
        for (bk, dk) in grads.b.data.iter_mut().zip(&dz) {
            *bk += dk;
        }
        params.w.matvec_t_acc(&dz, grads.inputs.row_mut(t));
        dh.fill(0.0);
        params.u.matvec_t_acc(&dz, &mut dh);
    }
    Ok(grads)
}
