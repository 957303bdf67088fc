//! Parameterized layers built from graph primitives.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{InitSpec, ParamId, ParamKind, ParamStore};
use super::Tensor;
use crate::error::Result;

/// Initialization of every dense weight; biases start at zero.
pub(crate) fn weight_init() -> InitSpec {
    InitSpec::Glorot
}

/// `x · W + b` for row-major inputs.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let weight = store.init(
            &format!("{name}.weight"),
            input,
            output,
            weight_init(),
            ParamKind::Weight,
            rng,
        )?;
        let bias = if bias {
            Some(store.init(
                &format!("{name}.bias"),
                1,
                output,
                InitSpec::Zeros,
                ParamKind::Weight,
                rng,
            )?)
        } else {
            None
        };
        Ok(Linear { weight, bias })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.weight);
        let y = g.matmul(x, w)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Same-length 1-D convolution with tanh activation.
///
/// Inputs are zero-padded with `⌊(width−1)/2⌋` rows on the left and the
/// remainder on the right, so an `L × d` input gives an `L × n_filters` output.
pub fn conv1d(g: &mut Graph, seq: Var, kernel: Var, bias: Var, width: usize) -> Result<Var> {
    let left = (width - 1) / 2;
    let win = g.windows(seq, width, left);
    let z = g.matmul(win, kernel)?;
    let z = g.add_row(z, bias)?;
    Ok(g.tanh(z))
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub width: usize,
    pub kernel: ParamId,
    pub bias: ParamId,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        input: usize,
        filters: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let kernel = store.init(
            &format!("{name}.kernel"),
            width * input,
            filters,
            weight_init(),
            ParamKind::Weight,
            rng,
        )?;
        let bias = store.init(
            &format!("{name}.bias"),
            1,
            filters,
            InitSpec::Zeros,
            ParamKind::Weight,
            rng,
        )?;
        Ok(Conv1d {
            width,
            kernel,
            bias,
        })
    }

    pub fn forward(&self, g: &mut Graph, seq: Var) -> Result<Var> {
        let k = g.param(self.kernel);
        let b = g.param(self.bias);
        conv1d(g, seq, k, b, self.width)
    }
}

/// Several convolutions of different widths, concatenated on the feature axis.
#[derive(Debug, Clone)]
pub struct ConvBank {
    pub convs: Vec<Conv1d>,
}

impl ConvBank {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        widths: &[usize],
        input: usize,
        filters_per_width: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let convs = widths
            .iter()
            .map(|&w| {
                Conv1d::new(
                    store,
                    &format!("{name}.w{w}"),
                    w,
                    input,
                    filters_per_width,
                    rng,
                )
            })
            .collect::<Result<_>>()?;
        Ok(ConvBank { convs })
    }

    pub fn forward(&self, g: &mut Graph, seq: Var) -> Result<Var> {
        let outs = self
            .convs
            .iter()
            .map(|c| c.forward(g, seq))
            .collect::<Result<Vec<_>>>()?;
        g.concat_cols(&outs)
    }
}

/// Initialization of LSTM input and recurrent weights.
pub const LSTM_INIT: InitSpec = InitSpec::Uniform(-0.1, 0.1);

/// One LSTM direction. Gate layout along the `4h` axis: input, forget, cell,
/// output. All biases, forget gate included, start at zero.
#[derive(Debug, Clone)]
pub struct LstmCell {
    pub hidden: usize,
    pub w_input: ParamId,
    pub w_hidden: ParamId,
    pub bias: ParamId,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w_input = store.init(
            &format!("{name}.w_input"),
            input,
            4 * hidden,
            LSTM_INIT,
            ParamKind::Weight,
            rng,
        )?;
        let w_hidden = store.init(
            &format!("{name}.w_hidden"),
            hidden,
            4 * hidden,
            LSTM_INIT,
            ParamKind::Weight,
            rng,
        )?;
        let bias = store.init(
            &format!("{name}.bias"),
            1,
            4 * hidden,
            InitSpec::Zeros,
            ParamKind::Weight,
            rng,
        )?;
        Ok(LstmCell {
            hidden,
            w_input,
            w_hidden,
            bias,
        })
    }

    /// Runs over the rows of `seq` in the given order; returns one hidden row
    /// per input row, aligned to the input positions.
    fn run(&self, g: &mut Graph, seq: Var, reverse: bool) -> Result<Vec<Var>> {
        let len = g.shape(seq)[0];
        let h = self.hidden;
        let wx = g.param(self.w_input);
        let wh = g.param(self.w_hidden);
        let b = g.param(self.bias);
        let projected = g.matmul(seq, wx)?;
        let projected = g.add_row(projected, b)?;

        let mut state_h = g.constant(Tensor::zeros(1, h));
        let mut state_c = g.constant(Tensor::zeros(1, h));
        let mut outputs = vec![None; len];
        let order: Vec<usize> = if reverse {
            (0..len).rev().collect()
        } else {
            (0..len).collect()
        };
        for t in order {
            let x_t = g.slice_rows(projected, t, 1)?;
            let rec = g.matmul(state_h, wh)?;
            let z = g.add(x_t, rec)?;
            let zi = g.slice_cols(z, 0, h)?;
            let zf = g.slice_cols(z, h, h)?;
            let zg = g.slice_cols(z, 2 * h, h)?;
            let zo = g.slice_cols(z, 3 * h, h)?;
            let i = g.sigmoid(zi);
            let f = g.sigmoid(zf);
            let cand = g.tanh(zg);
            let o = g.sigmoid(zo);
            let keep = g.mul(f, state_c)?;
            let write = g.mul(i, cand)?;
            state_c = g.add(keep, write)?;
            let squashed = g.tanh(state_c);
            state_h = g.mul(o, squashed)?;
            outputs[t] = Some(state_h);
        }
        Ok(outputs
            .into_iter()
            .map(|o| o.expect("every position visited"))
            .collect())
    }
}

/// Bidirectional LSTM; output row `t` is `[forward_t : backward_t]`.
#[derive(Debug, Clone)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden_per_dir: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(BiLstm {
            forward: LstmCell::new(store, &format!("{name}.fwd"), input, hidden_per_dir, rng)?,
            backward: LstmCell::new(store, &format!("{name}.bwd"), input, hidden_per_dir, rng)?,
        })
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    pub fn forward(&self, g: &mut Graph, seq: Var) -> Result<Var> {
        let fwd = self.forward.run(g, seq, false)?;
        let bwd = self.backward.run(g, seq, true)?;
        let fwd = g.concat_rows(&fwd)?;
        let bwd = g.concat_rows(&bwd)?;
        g.concat_cols(&[fwd, bwd])
    }
}
