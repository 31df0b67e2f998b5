//! Attentional character-level decoder.
//!
//! A two-layer recurrence conditioned on the encoder's context set. Every
//! step attends over the source positions with a single-hidden-layer
//! feedforward scorer (queried by the previous top-layer state), feeds
//! `[prev-char embedding ; context vector]` into layer 1, layer 1's output
//! into layer 2, and projects layer 2 to next-character logits.

use crate::encoder::{encode_query, ContextSet};
use crate::error::{Error, Result};
use crate::model::{AttentionNodes, BoundModel, ModelConfig, ModelParams};
use crate::tensor_core::{gru_step, NodeId, Tape, Tensor};
use crate::text_codec::CharSequence;

/// A source query encoded once per decode: the context set plus the cached
/// attention-space projection of every context vector (it does not depend
/// on the decoder step).
pub struct EncodedSource {
    pub context: ContextSet,
    proj: NodeId,
}

/// Encode a source query and precompute its attention projection.
pub fn encode_source(
    tape: &mut Tape,
    ids: &[usize],
    model: &BoundModel,
    config: &ModelConfig,
) -> Result<EncodedSource> {
    let context = encode_query(tape, ids, model, config)?;
    let att = &model.decoder.attention;
    let proj = tape.linear_rows(context.mat, att.src_proj, att.hidden_bias);
    Ok(EncodedSource { context, proj })
}

/// Decoder recurrent state: both layer hidden vectors and the most recent
/// attention weights (nonnegative, summing to one over source positions).
#[derive(Debug, Clone, Copy)]
pub struct DecoderState {
    pub h1: NodeId,
    pub h2: NodeId,
    pub attention: Option<NodeId>,
}

/// Zero state for the first step.
pub fn initial_state(tape: &mut Tape, config: &ModelConfig) -> DecoderState {
    let h1 = tape.leaf(Tensor::zeros(&[config.dec_hidden]));
    let h2 = tape.leaf(Tensor::zeros(&[config.dec_hidden]));
    DecoderState {
        h1,
        h2,
        attention: None,
    }
}

/// Soft alignment: score every source position against the decoder state,
/// normalize, and form the context vector as the weighted sum of context
/// vectors. Returns `(context vector, weights)`.
pub fn attend(
    tape: &mut Tape,
    state_h2: NodeId,
    source: &EncodedSource,
    att: &AttentionNodes,
) -> (NodeId, NodeId) {
    let query = tape.matvec(att.state_proj, state_h2);
    let pre = tape.add_row_broadcast(source.proj, query);
    let hidden = tape.tanh(pre);
    let scores = tape.matvec(hidden, att.score_v);
    let weights = tape.softmax(scores);
    let context = tape.vecmat(weights, source.context.mat);
    (context, weights)
}

/// One decoder step from the previous character id. Returns the
/// next-character distribution and the new state.
pub fn decode_step(
    tape: &mut Tape,
    prev_id: usize,
    state: &DecoderState,
    source: &EncodedSource,
    model: &BoundModel,
    config: &ModelConfig,
) -> Result<(NodeId, DecoderState)> {
    if prev_id >= config.id_space() {
        return Err(Error::Contract(format!(
            "decode_step: character id {prev_id} out of range"
        )));
    }
    let dec = &model.decoder;
    let (context, weights) = attend(tape, state.h2, source, &dec.attention);
    let prev_emb = tape.row(dec.embed, prev_id);
    let x = tape.concat_vec(prev_emb, context);
    let h1 = gru_step(tape, x, state.h1, &dec.gru1);
    let h2 = gru_step(tape, h1, state.h2, &dec.gru2);
    let logits = tape.affine(h2, dec.out_w, dec.out_b);
    let probs = tape.softmax(logits);
    Ok((
        probs,
        DecoderState {
            h1,
            h2,
            attention: Some(weights),
        },
    ))
}

/// Teacher-forced negative log-likelihood of `target` (which must end in
/// EOS) given `source`, as a scalar tape node: the sum over steps of
/// `-ln p(y_t | y_<t, source)`.
pub fn teacher_forced_nll(
    tape: &mut Tape,
    source_ids: &[usize],
    target_ids: &[usize],
    model: &BoundModel,
    config: &ModelConfig,
) -> Result<NodeId> {
    let eos = config.alphabet.eos_id();
    if target_ids.last() != Some(&eos) {
        return Err(Error::Contract(
            "teacher_forced_nll: target must end with EOS".into(),
        ));
    }
    let source = encode_source(tape, source_ids, model, config)?;
    let mut state = initial_state(tape, config);
    let mut prev = config.alphabet.bos_id();
    let mut steps = Vec::with_capacity(target_ids.len());
    for &y in target_ids {
        let (probs, next) = decode_step(tape, prev, &state, &source, model, config)?;
        steps.push(tape.cross_entropy(probs, y));
        state = next;
        prev = y;
    }
    Ok(tape.add_n(&steps))
}

/// Log-probability of an EOS-terminated target given a source, summed over
/// steps. Always `<= 0`.
pub fn sequence_logprob(
    source: &CharSequence,
    target: &CharSequence,
    params: &ModelParams,
) -> Result<f64> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let nll = teacher_forced_nll(
        &mut tape,
        source.ids(),
        target.ids(),
        &bound,
        &params.config,
    )?;
    Ok(-tape.value(nll).item())
}
