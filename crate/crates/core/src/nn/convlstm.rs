//! Convolutional LSTM cell. Every gate has its own input-to-gate and
//! hidden-to-gate 3x3 kernel, each with its own bias:
//!
//! ```text
//! input   = sigmoid(conv(z) + conv(h))
//! forget  = sigmoid(conv(z) + conv(h))
//! cand    = tanh(conv(z) + conv(h))
//! output  = sigmoid(conv(z) + conv(h))
//! c'      = forget * c + input * cand
//! h'      = output * tanh(c')
//! ```

use super::layers::Conv2d;
use super::{join, ForwardCtx, Init, Module, Param};
use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, Var};

const GATES: [&str; 4] = ["input_gate", "forget_gate", "candidate", "output_gate"];

#[derive(Clone, Debug)]
struct Gate<R> {
    from_input: Conv2d<R>,
    from_hidden: Conv2d<R>,
}

#[derive(Clone, Debug)]
pub struct ConvLstmCell<R> {
    input_channels: usize,
    hidden_channels: usize,
    gates: [Gate<R>; 4],
}

/// Hidden and cell state, both `[N, hidden, h, w]`.
#[derive(Clone, Debug)]
pub struct LstmState<R: Real> {
    pub hidden: Var<R>,
    pub cell: Var<R>,
}

/// Input, forget and output gates in (0, 1); candidate in (-1, 1).
#[derive(Clone, Debug)]
pub struct GateValues<R: Real> {
    pub input: Var<R>,
    pub forget: Var<R>,
    pub candidate: Var<R>,
    pub output: Var<R>,
}

impl<R: Real> LstmState<R> {
    pub fn zeros(n: usize, channels: usize, h: usize, w: usize) -> Result<Self> {
        let z = Tensor::zeros([n, channels, h, w])?;
        Ok(LstmState { hidden: Var::constant(z.clone()), cell: Var::constant(z) })
    }
}

impl<R: Real> ConvLstmCell<R> {
    pub fn new(prefix: &str, input_channels: usize, hidden_channels: usize, init: &mut Init) -> Self {
        let gates = GATES.map(|g| {
            let p = join(prefix, g);
            Gate {
                from_input: Conv2d::new(&join(&p, "from_input"), input_channels, hidden_channels, init),
                from_hidden: Conv2d::new(&join(&p, "from_hidden"), hidden_channels, hidden_channels, init),
            }
        });
        ConvLstmCell { input_channels, hidden_channels, gates }
    }

    pub fn input_channels(&self) -> usize {
        self.input_channels
    }

    pub fn hidden_channels(&self) -> usize {
        self.hidden_channels
    }

    /// Overwrites this cell's parameter values with `other`'s (names are kept).
    pub fn copy_weights_from(&mut self, other: &ConvLstmCell<R>) -> Result<()> {
        if (other.input_channels, other.hidden_channels) != (self.input_channels, self.hidden_channels) {
            return Err(Error::shape("convlstm", "cannot copy weights between cells of different widths"));
        }
        for (dst, src) in self.params_mut().into_iter().zip(other.params()) {
            dst.value = src.value.clone();
        }
        Ok(())
    }

    /// Gate activations for one step on `input: [N, in, h, w]`.
    pub fn gates(&self, ctx: &mut ForwardCtx<R>, input: &Var<R>, prev: &LstmState<R>) -> Result<GateValues<R>> {
        let s = input.shape();
        if s.len() != 4 || s[1] != self.input_channels {
            return Err(Error::shape(
                "convlstm",
                format!("expected [N,{},h,w] input, got {s:?}", self.input_channels),
            ));
        }
        let state_shape = [s[0], self.hidden_channels, s[2], s[3]];
        for (what, v) in [("hidden", &prev.hidden), ("cell", &prev.cell)] {
            if v.shape() != state_shape {
                return Err(Error::shape(
                    "convlstm",
                    format!("{what} state shape {:?} does not match {state_shape:?}", v.shape()),
                ));
            }
        }
        let mut pre = Vec::with_capacity(4);
        for g in &self.gates {
            let a = g.from_input.forward(ctx, input)?;
            let b = g.from_hidden.forward(ctx, &prev.hidden)?;
            pre.push(a.add(&b)?);
        }
        Ok(GateValues {
            input: pre[0].sigmoid(),
            forget: pre[1].sigmoid(),
            candidate: pre[2].tanh(),
            output: pre[3].sigmoid(),
        })
    }

    /// One recurrence step on `input: [N, in, h, w]`.
    pub fn step(&self, ctx: &mut ForwardCtx<R>, input: &Var<R>, prev: &LstmState<R>) -> Result<LstmState<R>> {
        let g = self.gates(ctx, input, prev)?;
        let cell = g.forget.hadamard(&prev.cell)?.add(&g.input.hadamard(&g.candidate)?)?;
        let hidden = g.output.hadamard(&cell.tanh())?;
        Ok(LstmState { hidden, cell })
    }

    /// Runs the cell over `[N, T, in, h, w]` from a zero state; returns the last hidden state.
    pub fn unroll(&self, ctx: &mut ForwardCtx<R>, sequence: &Var<R>) -> Result<Var<R>> {
        let s = sequence.shape();
        if s.len() != 5 {
            return Err(Error::shape("convlstm", format!("expected [N,T,C,h,w] sequence, got {s:?}")));
        }
        if s[1] == 0 {
            return Err(Error::invalid("convlstm", "sequence has no time steps"));
        }
        let mut state = LstmState::zeros(s[0], self.hidden_channels, s[3], s[4])?;
        for t in 0..s[1] {
            state = self.step(ctx, &sequence.select_axis1(t)?, &state)?;
        }
        Ok(state.hidden)
    }
}

impl<R: Real> Module<R> for ConvLstmCell<R> {
    fn params(&self) -> Vec<&Param<R>> {
        self.gates.iter().flat_map(|g| g.from_input.params().into_iter().chain(g.from_hidden.params())).collect()
    }
    fn params_mut(&mut self) -> Vec<&mut Param<R>> {
        self.gates
            .iter_mut()
            .flat_map(|g| g.from_input.params_mut().into_iter().chain(g.from_hidden.params_mut()))
            .collect()
    }
}
