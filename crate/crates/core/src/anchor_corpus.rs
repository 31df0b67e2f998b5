//! Mining reformulation pairs from an anchor-text log.
//!
//! The log is a TSV of ⟨page id, anchor text, frequency⟩ triples. Anchors
//! pointing at the same page form a session; the session's most frequent
//! anchor is the canonical one, and every surviving anchor is paired with
//! it. Three filters drop noise: anchors seen fewer than twice, anchors of
//! 50 or more characters, and anchors whose word overlap with the canonical
//! anchor is below 0.3 Jaccard.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Maximum anchor length (exclusive) for the length filter.
pub const MAX_ANCHOR_CHARS: usize = 50;
/// Minimum per-page anchor frequency (inclusive).
pub const MIN_ANCHOR_FREQ: u64 = 2;
/// Minimum word-Jaccard overlap with the canonical anchor (inclusive).
pub const MIN_WORD_JACCARD: f64 = 0.3;

/// One anchor-log record: an anchor phrase pointing at a page, with its
/// occurrence count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorRecord {
    pub url_id: String,
    pub anchor_text: String,
    pub freq: u64,
}

/// All anchors pointing at one page. Entries are unique by anchor text
/// (duplicate log lines merge by summing frequencies) and sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub url_id: String,
    pub anchors: Vec<(String, u64)>,
}

/// A ⟨query, reformulation⟩ training pair. Identity pairs (source equal to
/// target) are legitimate: the canonical anchor maps to itself.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    pub source: String,
    pub target: String,
}

/// The mined corpus with its held-out validation split.
#[derive(Debug, Clone)]
pub struct PairCorpus {
    pub train: Vec<TrainingPair>,
    pub validation: Vec<TrainingPair>,
    pub seed: u64,
}

/// Result of parsing an anchor log: the well-formed records in input order
/// plus a count of skipped (malformed) lines.
#[derive(Debug)]
pub struct ParsedLog {
    pub records: Vec<AnchorRecord>,
    pub skipped: usize,
}

/// Normalize an anchor: lowercase fold, trim, collapse whitespace runs to
/// single spaces.
pub fn normalize_anchor(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.trim().chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(c.to_lowercase());
        }
    }
    out
}

/// Parse an anchor log: one record per line, three tab-separated fields
/// `url_id<TAB>anchor_text<TAB>freq`. Malformed lines (wrong field count,
/// non-integer or zero freq, empty anchor after normalization) are counted
/// and skipped.
pub fn parse_anchor_log(text: &str) -> ParsedLog {
    let mut records = Vec::new();
    let mut skipped = 0usize;
    for line in text.lines() {
        if line.is_empty() {
            skipped += 1;
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            skipped += 1;
            continue;
        }
        let freq = match fields[2].trim().parse::<u64>() {
            Ok(f) if f >= 1 => f,
            _ => {
                skipped += 1;
                continue;
            }
        };
        let anchor_text = normalize_anchor(fields[1]);
        if anchor_text.is_empty() {
            skipped += 1;
            continue;
        }
        records.push(AnchorRecord {
            url_id: fields[0].to_string(),
            anchor_text,
            freq,
        });
    }
    ParsedLog { records, skipped }
}

/// Group records into one session per page. Duplicate (page, anchor) lines
/// merge by summing frequencies; sessions are sorted by page id and anchors
/// by text, so the result does not depend on input order.
pub fn group_sessions(records: &[AnchorRecord]) -> Vec<Session> {
    let mut by_url: BTreeMap<&str, BTreeMap<&str, u64>> = BTreeMap::new();
    for r in records {
        let anchors = by_url.entry(&r.url_id).or_default();
        match anchors.entry(&r.anchor_text) {
            Entry::Occupied(mut e) => *e.get_mut() += r.freq,
            Entry::Vacant(e) => {
                e.insert(r.freq);
            }
        }
    }
    by_url
        .into_iter()
        .map(|(url_id, anchors)| Session {
            url_id: url_id.to_string(),
            anchors: anchors
                .into_iter()
                .map(|(a, f)| (a.to_string(), f))
                .collect(),
        })
        .collect()
}

/// The canonical anchor of a session: maximum frequency, ties broken by
/// lexicographically smallest anchor text.
pub fn canonical_anchor(session: &Session) -> Result<&str> {
    session
        .anchors
        .iter()
        .max_by(|(a_text, a_freq), (b_text, b_freq)| {
            a_freq.cmp(b_freq).then_with(|| b_text.cmp(a_text))
        })
        .map(|(text, _)| text.as_str())
        .ok_or_else(|| Error::Contract("canonical_anchor: empty session".into()))
}

/// Jaccard similarity of the lowercase word sets of two strings. Both
/// empty word sets compare as fully similar (1.0).
pub fn word_jaccard(a: &str, b: &str) -> f64 {
    let wa: BTreeSet<String> = a.split_whitespace().map(str::to_lowercase).collect();
    let wb: BTreeSet<String> = b.split_whitespace().map(str::to_lowercase).collect();
    if wa.is_empty() && wb.is_empty() {
        return 1.0;
    }
    let inter = wa.intersection(&wb).count();
    let union = wa.union(&wb).count();
    inter as f64 / union as f64
}

/// The three keep-conditions for an anchor against its session's canonical
/// anchor: frequency at least 2, length under 50 characters, word Jaccard
/// with the canonical anchor at least 0.3. Identity pairs pass the Jaccard
/// rule trivially and are kept.
pub fn filter_pair(anchor_text: &str, freq: u64, canonical: &str) -> bool {
    freq >= MIN_ANCHOR_FREQ
        && anchor_text.chars().count() < MAX_ANCHOR_CHARS
        && word_jaccard(anchor_text, canonical) >= MIN_WORD_JACCARD
}

/// Emit training pairs from sessions and split off a seeded uniform random
/// validation set. The canonical anchor is computed over the full session
/// (before any filtering) and must itself pass the length rule or the
/// session is skipped. If `validation_size` exceeds the pair count, all
/// pairs land in validation (the caller should warn).
pub fn build_pairs(sessions: &[Session], validation_size: usize, seed: u64) -> Result<PairCorpus> {
    let mut pairs = Vec::new();
    for session in sessions {
        let canonical = canonical_anchor(session)?.to_string();
        if canonical.chars().count() >= MAX_ANCHOR_CHARS {
            continue;
        }
        for (anchor, freq) in &session.anchors {
            if filter_pair(anchor, *freq, &canonical) {
                pairs.push(TrainingPair {
                    source: anchor.clone(),
                    target: canonical.clone(),
                });
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..pairs.len()).collect();
    indices.shuffle(&mut rng);
    let take = validation_size.min(pairs.len());
    let chosen: BTreeSet<usize> = indices.into_iter().take(take).collect();

    let mut train = Vec::with_capacity(pairs.len() - take);
    let mut validation = Vec::with_capacity(take);
    for (i, pair) in pairs.into_iter().enumerate() {
        if chosen.contains(&i) {
            validation.push(pair);
        } else {
            train.push(pair);
        }
    }
    Ok(PairCorpus {
        train,
        validation,
        seed,
    })
}

/// Serialize pairs as `source<TAB>target` lines.
pub fn pairs_to_tsv(pairs: &[TrainingPair]) -> String {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.source);
        out.push('\t');
        out.push_str(&p.target);
        out.push('\n');
    }
    out
}

/// Parse a `source<TAB>target` pair file. Lines with a missing side are
/// malformed.
pub fn pairs_from_tsv(text: &str, path: &str) -> Result<Vec<TrainingPair>> {
    let mut pairs = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut split = line.splitn(2, '\t');
        let (source, target) = (split.next().unwrap_or(""), split.next().unwrap_or(""));
        if source.is_empty() || target.is_empty() {
            return Err(Error::Parse {
                path: path.to_string(),
                line: no + 1,
                msg: "expected source<TAB>target".into(),
            });
        }
        pairs.push(TrainingPair {
            source: source.to_string(),
            target: target.to_string(),
        });
    }
    Ok(pairs)
}
