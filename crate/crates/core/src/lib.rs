//! Core of the counselor-assistance engine.
//!
//! Everything in this crate is pure computation over in-memory values: the
//! strategy taxonomy and transcript types, corpus preparation, the
//! per-strategy classifiers, retrieval-based response suggestion, the safety
//! filter, the suggestion pipeline, log analytics and evaluation metrics.
//! File formats, networking and the command line live in the `care` crate.
//!
//! The crate is `no_std` and only needs an allocator.

#![cfg_attr(not(test), no_std)]
#![deny(rust_2018_idioms)]

extern crate alloc;

pub mod classify;
pub mod corpus;
pub mod domain;
pub mod eval;
pub mod generate;
pub mod pipeline;
pub mod safety;
pub mod synth;
pub mod telemetry;
pub mod training;

mod math;

pub use domain::{
    normalize_text, tokenize, Category, Context, Conversation, Speaker, Strategy, Suggestion,
    SuggestionSet, Utterance,
};
