//! Source-query encoder.
//!
//! Characters are embedded, run through parallel convolution banks, a
//! rectifier, segment max-pooling (which shortens the sequence by the pool
//! stride) and a highway layer, and the pooled positions are then read by
//! forward and backward recurrences. Each output position concatenates the
//! two directions' hidden states.

use crate::error::{Error, Result};
use crate::model::{BoundModel, ModelConfig};
use crate::tensor_core::{gru_step, highway_rows, NodeId, Tape, Tensor};

/// The encoder output: a `[positions, 2 * enc_hidden]` matrix of context
/// vectors, one row per pooled source position.
#[derive(Debug, Clone, Copy)]
pub struct ContextSet {
    pub mat: NodeId,
    pub positions: usize,
}

/// Encode character ids into the context set. `ids` must be non-empty; the
/// number of output positions is `ceil(len / pool_stride)`.
pub fn encode_query(
    tape: &mut Tape,
    ids: &[usize],
    model: &BoundModel,
    config: &ModelConfig,
) -> Result<ContextSet> {
    if ids.is_empty() {
        return Err(Error::Contract("encode_query: empty input".into()));
    }
    let enc = &model.encoder;

    let embedded = tape.embed_rows(enc.embed, ids);
    let mut conv_out: Option<NodeId> = None;
    for &(width, w, b) in &enc.banks {
        let bank = tape.conv1d(embedded, w, b, width);
        conv_out = Some(match conv_out {
            None => bank,
            Some(acc) => tape.concat_cols(acc, bank),
        });
    }
    let conv = conv_out.expect("at least one conv bank");
    let activated = tape.relu(conv);
    let pooled = tape.segment_maxpool(activated, config.pool_stride);
    let gated = highway_rows(tape, pooled, &enc.highway);

    let positions = ids.len().div_ceil(config.pool_stride);
    debug_assert_eq!(tape.value(gated).rows(), positions);

    let zero = tape.leaf(Tensor::zeros(&[config.enc_hidden]));
    let mut forward = Vec::with_capacity(positions);
    let mut state = zero;
    for t in 0..positions {
        let x = tape.row(gated, t);
        state = gru_step(tape, x, state, &enc.fwd);
        forward.push(state);
    }
    let mut backward = vec![zero; positions];
    state = zero;
    for t in (0..positions).rev() {
        let x = tape.row(gated, t);
        state = gru_step(tape, x, state, &enc.bwd);
        backward[t] = state;
    }

    let rows: Vec<NodeId> = (0..positions)
        .map(|t| tape.concat_vec(forward[t], backward[t]))
        .collect();
    let mat = tape.stack_rows(&rows);
    Ok(ContextSet { mat, positions })
}
