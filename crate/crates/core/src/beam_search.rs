//! Length-normalized beam search over the decoder's character
//! distribution.
//!
//! Active beams are pruned by raw running log-probability (normalization
//! would make per-step pruning inadmissible); finished candidates are
//! ranked by log-probability divided by generated length, EOS included.
//! PAD and BOS are never expanded — a generated query containing them
//! would not survive the string round trip — but EOS competes with the
//! real characters, and every kept score is the unmasked chain
//! log-probability, so recomputing a candidate's likelihood reproduces its
//! score exactly.

use crate::decoder::{decode_step, encode_source, initial_state, DecoderState};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor_core::Tape;

/// One finished hypothesis.
#[derive(Debug, Clone)]
pub struct BeamCandidate {
    /// Generated character ids; includes the final EOS when `has_eos`.
    pub ids: Vec<usize>,
    /// Sum of step log-probabilities. Always `<= 0`.
    pub logprob: f64,
    /// `logprob / ids.len()`.
    pub norm_score: f64,
    /// Hit the length cap without emitting EOS.
    pub has_eos: bool,
}

/// A generated reformulation, decoded to a string, with its scores.
#[derive(Debug, Clone)]
pub struct Generated {
    pub query: String,
    /// exp(logprob) renormalized over the returned set; sums to one.
    pub display_score: f64,
    pub norm_score: f64,
    pub logprob: f64,
    pub ids: Vec<usize>,
    pub has_eos: bool,
}

struct Beam {
    ids: Vec<usize>,
    logprob: f64,
    state: DecoderState,
    prev: usize,
}

/// Generate the top `m` reformulations of `source` by beam search.
///
/// Requires `1 <= m <= beam_width` and a source that encodes to at least
/// one character. Fewer than `m` results are returned when the search
/// yields fewer distinct surface strings.
pub fn generate(
    source: &str,
    params: &ModelParams,
    beam_width: usize,
    m: usize,
    max_len: usize,
) -> Result<Vec<Generated>> {
    if m < 1 || m > beam_width {
        return Err(Error::Contract(format!(
            "generate: need 1 <= m <= beam_width, got m={m}, beam_width={beam_width}"
        )));
    }
    if max_len < 1 {
        return Err(Error::Contract("generate: max_len must be at least 1".into()));
    }
    let config = &params.config;
    let alphabet = &config.alphabet;
    let source_ids = alphabet.encode(source);
    if source_ids.is_empty() {
        return Err(Error::Contract(
            "generate: source encodes to an empty sequence".into(),
        ));
    }

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let encoded = encode_source(&mut tape, source_ids.ids(), &bound, config)?;

    let expandable: Vec<usize> = (0..config.id_space())
        .filter(|&id| id != alphabet.pad_id() && id != alphabet.bos_id())
        .collect();

    let mut active = vec![Beam {
        ids: Vec::new(),
        logprob: 0.0,
        state: initial_state(&mut tape, config),
        prev: alphabet.bos_id(),
    }];
    let mut finished: Vec<BeamCandidate> = Vec::new();

    for _ in 0..max_len {
        if active.is_empty() {
            break;
        }
        // Expand every active beam over every allowed character.
        struct Expansion {
            ids: Vec<usize>,
            logprob: f64,
            parent: usize,
            id: usize,
        }
        let mut next_states = Vec::with_capacity(active.len());
        let mut expansions: Vec<Expansion> = Vec::new();
        for (bi, beam) in active.iter().enumerate() {
            let (probs, state) =
                decode_step(&mut tape, beam.prev, &beam.state, &encoded, &bound, config)?;
            next_states.push(state);
            let dist = tape.value(probs).data();
            for &id in &expandable {
                let p = dist[id];
                if p <= 0.0 {
                    continue;
                }
                let mut ids = beam.ids.clone();
                ids.push(id);
                expansions.push(Expansion {
                    ids,
                    logprob: beam.logprob + p.ln(),
                    parent: bi,
                    id,
                });
            }
        }
        // Keep the beam_width best by running log-probability; ties break
        // lexicographically so the search is deterministic.
        expansions.sort_by(|a, b| {
            b.logprob
                .total_cmp(&a.logprob)
                .then_with(|| a.ids.cmp(&b.ids))
        });
        expansions.truncate(beam_width);

        let mut next_active = Vec::with_capacity(expansions.len());
        for e in expansions {
            if e.id == alphabet.eos_id() {
                finished.push(BeamCandidate {
                    norm_score: e.logprob / e.ids.len() as f64,
                    ids: e.ids,
                    logprob: e.logprob,
                    has_eos: true,
                });
            } else {
                next_active.push(Beam {
                    ids: e.ids,
                    logprob: e.logprob,
                    state: next_states[e.parent],
                    prev: e.id,
                });
            }
        }
        active = next_active;
    }

    // Beams alive at the cap are finalized as-is, flagged as unterminated.
    for beam in active {
        finished.push(BeamCandidate {
            norm_score: beam.logprob / beam.ids.len() as f64,
            ids: beam.ids,
            logprob: beam.logprob,
            has_eos: false,
        });
    }

    Ok(rank_and_score(finished, params, m))
}

/// Rank candidates by normalized score, deduplicate by surface string, take
/// the best `m`, and attach display scores. Shared with the exhaustive
/// test oracle so both sides rank identically.
pub fn rank_and_score(
    mut candidates: Vec<BeamCandidate>,
    params: &ModelParams,
    m: usize,
) -> Vec<Generated> {
    candidates.sort_by(|a, b| {
        b.norm_score
            .total_cmp(&a.norm_score)
            .then_with(|| a.ids.cmp(&b.ids))
    });
    let mut seen = std::collections::BTreeSet::new();
    let mut picked: Vec<(String, BeamCandidate)> = Vec::new();
    for c in candidates {
        let surface = params
            .config
            .alphabet
            .decode(&crate::text_codec::CharSequence::from_raw(c.ids.clone()))
            .expect("generated ids are in range");
        if seen.insert(surface.clone()) {
            picked.push((surface, c));
            if picked.len() == m {
                break;
            }
        }
    }
    // Display: exp(logprob) renormalized over the returned set, computed
    // against the max for stability.
    let max_lp = picked
        .iter()
        .map(|(_, c)| c.logprob)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = picked.iter().map(|(_, c)| (c.logprob - max_lp).exp()).sum();
    picked
        .into_iter()
        .map(|(query, c)| Generated {
            query,
            display_score: (c.logprob - max_lp).exp() / total,
            norm_score: c.norm_score,
            logprob: c.logprob,
            ids: c.ids,
            has_eos: c.has_eos,
        })
        .collect()
}
