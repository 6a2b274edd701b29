//! Forward graphs for the CNN, LSTM and C-LSTM sentence classifiers.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::tape::{NodeId, Tape};

/// One convolution branch: weight is (m * d) x F, bias is 1 x F.
#[derive(Clone, Copy)]
pub struct ConvBranch {
    pub weight: NodeId,
    pub bias: NodeId,
}

/// LSTM cell parameters: input weights d x 4H, recurrent weights H x 4H,
/// bias 1 x 4H. Gate column order is [input, forget, output, candidate].
#[derive(Clone, Copy)]
pub struct LstmParams {
    pub w: NodeId,
    pub u: NodeId,
    pub b: NodeId,
    pub hidden: usize,
}

/// Valid cross-correlation over the time axis followed by ReLU.
///
/// `input` is L x d, the branch weight (m * d) x F; the output is
/// (L - m + 1) x F. The caller must guarantee L >= m.
pub fn conv1d(tape: &mut Tape, input: NodeId, branch: ConvBranch) -> NodeId {
    let d = tape.value(input).ncols();
    let m = tape.value(branch.weight).nrows() / d;
    let unfolded = tape.im2col(input, m);
    let scores = tape.matmul(unfolded, branch.weight);
    let biased = tape.add_row(scores, branch.bias);
    tape.relu(biased)
}

/// One gated recurrence step; returns (h_t, c_t), both 1 x H.
pub fn lstm_step(
    tape: &mut Tape,
    x_t: NodeId,
    h_prev: NodeId,
    c_prev: NodeId,
    params: LstmParams,
) -> (NodeId, NodeId) {
    let hidden = params.hidden;
    let from_x = tape.matmul(x_t, params.w);
    let from_h = tape.matmul(h_prev, params.u);
    let pre = tape.add(from_x, from_h);
    let pre = tape.add_row(pre, params.b);

    let i_pre = tape.slice_cols(pre, 0, hidden);
    let f_pre = tape.slice_cols(pre, hidden, 2 * hidden);
    let o_pre = tape.slice_cols(pre, 2 * hidden, 3 * hidden);
    let g_pre = tape.slice_cols(pre, 3 * hidden, 4 * hidden);

    let i = tape.sigmoid(i_pre);
    let f = tape.sigmoid(f_pre);
    let o = tape.sigmoid(o_pre);
    let g = tape.tanh(g_pre);

    let keep = tape.mul(f, c_prev);
    let write = tape.mul(i, g);
    let c_t = tape.add(keep, write);
    let c_act = tape.tanh(c_t);
    let h_t = tape.mul(o, c_act);
    (h_t, c_t)
}

/// Run the cell over every row of `input` (T x d); returns the final h (1 x H).
pub fn lstm_sequence(tape: &mut Tape, input: NodeId, params: LstmParams) -> NodeId {
    let steps = tape.value(input).nrows();
    let mut h = tape.leaf(Array2::zeros((1, params.hidden)));
    let mut c = tape.leaf(Array2::zeros((1, params.hidden)));
    for t in 0..steps {
        let x_t = tape.take_rows(input, t, t + 1);
        let (h_t, c_t) = lstm_step(tape, x_t, h, c, params);
        h = h_t;
        c = c_t;
    }
    h
}

/// Inverted-dropout mask: 0 with probability `rate`, 1/(1-rate) otherwise.
pub fn dropout_mask(rows: usize, cols: usize, rate: f64, rng: &mut ChaCha20Rng) -> Array2<f64> {
    assert!((0.0..1.0).contains(&rate));
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.gen::<f64>() < rate {
            0.0
        } else {
            keep
        }
    })
}

/// Apply a dropout mask node, or pass through at inference.
pub fn dropout(tape: &mut Tape, input: NodeId, mask: Option<NodeId>) -> NodeId {
    match mask {
        Some(mask) => tape.mul(input, mask),
        None => input,
    }
}

/// Parallel conv branches, each max-pooled over time, concatenated,
/// dropout, then one affine layer to k logits.
pub fn cnn_logits(
    tape: &mut Tape,
    input: NodeId,
    branches: &[ConvBranch],
    fc_w: NodeId,
    fc_b: NodeId,
    mask: Option<NodeId>,
) -> NodeId {
    let pooled: Vec<NodeId> = branches
        .iter()
        .map(|&branch| {
            let features = conv1d(tape, input, branch);
            tape.max_over_time(features)
        })
        .collect();
    let features = tape.concat_cols(&pooled);
    let dropped = dropout(tape, features, mask);
    let scores = tape.matmul(dropped, fc_w);
    tape.add_row(scores, fc_b)
}

/// LSTM over the sequence, final hidden state, dropout, affine to k logits.
pub fn lstm_logits(
    tape: &mut Tape,
    input: NodeId,
    params: LstmParams,
    fc_w: NodeId,
    fc_b: NodeId,
    mask: Option<NodeId>,
) -> NodeId {
    let h = lstm_sequence(tape, input, params);
    let dropped = dropout(tape, h, mask);
    let scores = tape.matmul(dropped, fc_w);
    tape.add_row(scores, fc_b)
}

/// Conv branches produce per-timestep features; branches of different
/// kernel sizes are truncated to the shortest length, concatenated along
/// the feature axis and fed as a sequence into the LSTM.
pub fn clstm_logits(
    tape: &mut Tape,
    input: NodeId,
    branches: &[ConvBranch],
    lstm: LstmParams,
    fc_w: NodeId,
    fc_b: NodeId,
    mask: Option<NodeId>,
) -> NodeId {
    let maps: Vec<NodeId> = branches
        .iter()
        .map(|&branch| conv1d(tape, input, branch))
        .collect();
    let shortest = maps
        .iter()
        .map(|&m| tape.value(m).nrows())
        .min()
        .expect("at least one branch");
    let truncated: Vec<NodeId> = maps
        .into_iter()
        .map(|m| tape.take_rows(m, 0, shortest))
        .collect();
    let sequence = tape.concat_cols(&truncated);
    lstm_logits(tape, sequence, lstm, fc_w, fc_b, mask)
}
