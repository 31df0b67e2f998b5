//! End-to-end query reformulation toolkit.
//!
//! The pipeline mines ⟨query, reformulation⟩ pairs from web anchor-text
//! logs, trains a character-level encoder–decoder with soft attention to
//! rewrite queries, generates candidates with length-normalized beam
//! search, and evaluates them against a toy retrieval engine with graded
//! relevance metrics (ERR@k, nDCG@k, MAP, P@k) under a best-of-m protocol.

pub mod anchor_corpus;
pub mod beam_search;
pub mod checkpoint;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod ir_eval;
pub mod model;
pub mod tensor_core;
pub mod text_codec;
pub mod toy_retrieval;
pub mod toy_data;
pub mod trainer;

pub use error::{Error, Result};
