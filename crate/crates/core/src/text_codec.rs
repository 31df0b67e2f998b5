//! Fixed-alphabet character codec.
//!
//! Queries are modeled strictly at the character level over a 41-symbol
//! alphabet (26 letters, 10 digits, 5 specials). Four control symbols —
//! PAD, BOS, EOS, UNK — live outside the alphabet proper, so the id space
//! has 45 entries while the alphabet keeps its published size.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Number of real symbols in the standard alphabet.
pub const STANDARD_ALPHABET_SIZE: usize = 41;

/// Rendered in place of UNK when decoding; not itself in the alphabet, so
/// it re-encodes to UNK.
pub const UNK_MARKER: char = '\u{FFFD}';

/// An ordered character alphabet plus the four control ids appended after
/// the real symbols. Immutable once constructed.
#[derive(Debug, Clone)]
pub struct Alphabet {
    symbols: Vec<char>,
    index: HashMap<char, usize>,
}

impl Alphabet {
    /// 26 lowercase letters, 10 digits, and the five specials most common
    /// in web queries: space, hyphen, apostrophe, period, ampersand.
    pub fn standard() -> Self {
        let symbols: Vec<char> = ('a'..='z').chain('0'..='9').chain(" -'.&".chars()).collect();
        debug_assert_eq!(symbols.len(), STANDARD_ALPHABET_SIZE);
        Self::new(symbols).expect("standard alphabet is well-formed")
    }

    /// Build an alphabet from an explicit symbol list. Symbols must be
    /// distinct and non-empty. Sizes other than 41 are permitted so tiny
    /// test models can exist; files parsed with [`Alphabet::parse_override`]
    /// enforce the standard size.
    pub fn new(symbols: Vec<char>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::Data("alphabet must not be empty".into()));
        }
        let mut index = HashMap::with_capacity(symbols.len());
        for (i, &c) in symbols.iter().enumerate() {
            if index.insert(c, i).is_some() {
                return Err(Error::Data(format!("duplicate alphabet symbol {c:?}")));
            }
        }
        Ok(Alphabet { symbols, index })
    }

    /// Parse an alphabet override file: exactly 41 lines, one character per
    /// line. Lines are not trimmed (a line holding a space means the space
    /// character); a trailing `\r` is stripped for CRLF files.
    pub fn parse_override(text: &str) -> Result<Self> {
        let mut symbols = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.strip_suffix('\r').unwrap_or(line);
            let mut chars = line.chars();
            let (first, rest) = (chars.next(), chars.next());
            match (first, rest) {
                (Some(c), None) => symbols.push(c),
                _ => {
                    return Err(Error::Data(format!(
                        "alphabet file line {}: expected exactly one character, got {line:?}",
                        no + 1
                    )))
                }
            }
        }
        if symbols.len() != STANDARD_ALPHABET_SIZE {
            return Err(Error::Data(format!(
                "alphabet file must have exactly {STANDARD_ALPHABET_SIZE} lines, got {}",
                symbols.len()
            )));
        }
        Self::new(symbols)
    }

    pub fn symbol_count(&self) -> usize {
        self.symbols.len()
    }

    /// Total id space: symbols plus PAD, BOS, EOS, UNK.
    pub fn id_space(&self) -> usize {
        self.symbols.len() + 4
    }

    pub fn pad_id(&self) -> usize {
        self.symbols.len()
    }

    pub fn bos_id(&self) -> usize {
        self.symbols.len() + 1
    }

    pub fn eos_id(&self) -> usize {
        self.symbols.len() + 2
    }

    pub fn unk_id(&self) -> usize {
        self.symbols.len() + 3
    }

    pub fn is_control(&self, id: usize) -> bool {
        id >= self.symbols.len()
    }

    pub fn symbols(&self) -> &[char] {
        &self.symbols
    }

    /// Id of a character, if it is in the alphabet (no case folding here).
    pub fn id_of(&self, c: char) -> Option<usize> {
        self.index.get(&c).copied()
    }

    /// Encode a string: lowercase-fold, then map each character to its id,
    /// or UNK when out of alphabet. No BOS/EOS is added.
    pub fn encode(&self, text: &str) -> CharSequence {
        let ids = text
            .chars()
            .flat_map(|c| c.to_lowercase())
            .map(|c| self.index.get(&c).copied().unwrap_or_else(|| self.unk_id()))
            .collect();
        CharSequence { ids }
    }

    /// Decode ids back to a string. UNK renders as [`UNK_MARKER`];
    /// PAD/BOS/EOS render as nothing. Ids outside the id space are a
    /// contract violation.
    pub fn decode(&self, seq: &CharSequence) -> Result<String> {
        let mut out = String::with_capacity(seq.len());
        for &id in &seq.ids {
            if id >= self.id_space() {
                return Err(Error::Contract(format!(
                    "character id {id} out of range (id space {})",
                    self.id_space()
                )));
            }
            if id < self.symbols.len() {
                out.push(self.symbols[id]);
            } else if id == self.unk_id() {
                out.push(UNK_MARKER);
            }
        }
        Ok(out)
    }
}

/// A query as a sequence of character ids. PAD never appears inside a
/// sequence and EOS may only be the final id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharSequence {
    ids: Vec<usize>,
}

impl CharSequence {
    /// Wrap raw ids, enforcing the interior-PAD and final-EOS invariants.
    pub fn new(ids: Vec<usize>, alphabet: &Alphabet) -> Result<Self> {
        for (i, &id) in ids.iter().enumerate() {
            if id >= alphabet.id_space() {
                return Err(Error::Contract(format!("id {id} out of range")));
            }
            if id == alphabet.pad_id() {
                return Err(Error::Contract("PAD inside a sequence".into()));
            }
            if id == alphabet.eos_id() && i + 1 != ids.len() {
                return Err(Error::Contract("EOS before the end of a sequence".into()));
            }
        }
        Ok(CharSequence { ids })
    }

    pub fn from_raw(ids: Vec<usize>) -> Self {
        CharSequence { ids }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Copy with EOS appended (teacher-forcing targets end in EOS).
    pub fn with_eos(&self, alphabet: &Alphabet) -> CharSequence {
        let mut ids = self.ids.clone();
        ids.push(alphabet.eos_id());
        CharSequence { ids }
    }
}

/// A batch of sequences padded to a common length, with the 0/1 validity
/// mask and the original lengths.
#[derive(Debug, Clone)]
pub struct PaddedBatch {
    pub ids: Vec<Vec<usize>>,
    pub mask: Vec<Vec<u8>>,
    pub lengths: Vec<usize>,
    pub max_len: usize,
}

/// Pad sequences to the longest one with PAD ids.
pub fn pad_batch(seqs: &[CharSequence], alphabet: &Alphabet) -> PaddedBatch {
    assert!(!seqs.is_empty(), "pad_batch: empty batch");
    let max_len = seqs.iter().map(|s| s.len()).max().unwrap();
    let mut ids = Vec::with_capacity(seqs.len());
    let mut mask = Vec::with_capacity(seqs.len());
    let mut lengths = Vec::with_capacity(seqs.len());
    for s in seqs {
        let mut row = s.ids.clone();
        row.resize(max_len, alphabet.pad_id());
        let mut m = vec![1u8; s.len()];
        m.resize(max_len, 0);
        ids.push(row);
        mask.push(m);
        lengths.push(s.len());
    }
    PaddedBatch {
        ids,
        mask,
        lengths,
        max_len,
    }
}

/// Lowercase fold used by [`Alphabet::encode`]; exposed so round-trip
/// properties can state their expectation precisely.
pub fn fold(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        for l in c.to_lowercase() {
            let _ = out.write_char(l);
        }
    }
    out
}
