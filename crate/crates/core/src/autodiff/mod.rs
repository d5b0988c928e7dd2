//! Tensor algebra with reverse-mode gradients for the fixed operation set the
//! network needs: dense and sparse products, activations, batch
//! normalisation, dropout, 1-D convolution and the two likelihood losses.

mod sparse;
mod tape;
mod tensor;

pub use sparse::SparseMatrix;
pub use tape::{Activation, BatchNormStats, Mode, Tape, Var, PROB_CLAMP};
pub use tensor::Tensor;

use crate::error::{Error, Result};

/// Weight `[c_out, c_in, k]` and bias `[c_out]` of one convolution layer.
#[derive(Clone, Copy, Debug)]
pub struct ConvLayer {
    pub weight: Var,
    pub bias: Var,
}

/// Stacked conv + ReLU layers followed by a global max pool.
///
/// Accepts `[channels, len]` (returns `[1, c_out]`) or a batch
/// `[batch, channels, len]` (returns `[batch, c_out]`).
pub fn conv1d_maxpool(tape: &mut Tape, x: Var, layers: &[ConvLayer]) -> Result<Var> {
    if layers.is_empty() {
        return Err(Error::contract("conv stack needs at least one layer"));
    }
    let mut h = match *tape.value(x).shape() {
        [c, l] => tape.reshape(x, vec![1, c, l])?,
        [_, _, _] => x,
        ref s => return Err(Error::shape(format!("conv input must be rank 2 or 3, got {s:?}"))),
    };
    for layer in layers {
        let conv = tape.conv1d(h, layer.weight, layer.bias)?;
        h = tape.relu(conv);
    }
    tape.global_max_pool(h)
}

#[cfg(test)]
mod tests;
