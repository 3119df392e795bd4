//! From-scratch neural network core in double precision.
//!
//! Layers are exposed twice: as plain functions in [`ops`] and as recorded
//! operations on a [`Graph`] that supports reverse-mode differentiation.

pub mod checkpoint;
pub mod gradcheck;
pub mod graph;
pub mod ops;
pub mod params;
pub mod tensor;
pub mod train;

pub use checkpoint::Checkpoint;
pub use graph::{apply_bn_updates, BatchNormIds, BnUpdate, Graph, LstmIds, NodeId};
pub use ops::{
    bilstm_encode, conv2d_forward, cross_entropy, dropout_apply, lstm_step, maxpool2, sigmoid,
    softmax, BatchNorm, Conv2dParams, LstmCellParams, Mode,
};
pub use params::{glorot_uniform, sgd_update, Gradients, ParamId, ParamStore};
pub use tensor::Tensor;
pub use train::{
    mean_loss, stratified_split, train_loop, EarlyStopping, History, StopDecision, Trainable,
    TrainingConfig, TrainingOverrides,
};

use rand::Rng;

/// Registers an LSTM cell with Glorot-uniform gate matrices and zero biases.
pub fn add_lstm(
    params: &mut ParamStore,
    prefix: &str,
    hidden: usize,
    input: usize,
    rng: &mut impl Rng,
) -> LstmIds {
    let gates = ["f", "i", "c", "o"];
    let w = gates.map(|g| {
        let t = glorot_uniform(&[hidden, hidden + input], hidden + input, hidden, rng);
        params.add(format!("{prefix}.w_{g}"), t, true)
    });
    let b = gates.map(|g| params.add(format!("{prefix}.b_{g}"), Tensor::zeros(&[hidden]), true));
    LstmIds { w, b }
}

/// Registers a dense layer `[out, in]` plus bias.
pub fn add_linear(
    params: &mut ParamStore,
    prefix: &str,
    input: usize,
    output: usize,
    rng: &mut impl Rng,
) -> (ParamId, ParamId) {
    let w = params.add(
        format!("{prefix}.weight"),
        glorot_uniform(&[output, input], input, output, rng),
        true,
    );
    let b = params.add(format!("{prefix}.bias"), Tensor::zeros(&[output]), true);
    (w, b)
}

/// Registers a batch-norm layer: trainable gamma/beta, running statistics
/// as buffers.
pub fn add_batch_norm(params: &mut ParamStore, prefix: &str, channels: usize) -> BatchNormIds {
    BatchNormIds {
        gamma: params.add(
            format!("{prefix}.gamma"),
            Tensor::filled(&[channels], 1.0),
            true,
        ),
        beta: params.add(format!("{prefix}.beta"), Tensor::zeros(&[channels]), true),
        running_mean: params.add(
            format!("{prefix}.running_mean"),
            Tensor::zeros(&[channels]),
            false,
        ),
        running_var: params.add(
            format!("{prefix}.running_var"),
            Tensor::filled(&[channels], 1.0),
            false,
        ),
    }
}

/// Snapshot of an LSTM cell's tensors in plain form.
pub fn lstm_params(params: &ParamStore, ids: &LstmIds) -> LstmCellParams {
    let g = |id: ParamId| params.get(id).clone();
    LstmCellParams {
        w_f: g(ids.w[0]),
        w_i: g(ids.w[1]),
        w_c: g(ids.w[2]),
        w_o: g(ids.w[3]),
        b_f: g(ids.b[0]),
        b_i: g(ids.b[1]),
        b_c: g(ids.b[2]),
        b_o: g(ids.b[3]),
    }
}
