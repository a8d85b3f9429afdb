//! Chat server, command-line tools and on-disk formats for the `care-core`
//! suggestion engine.

#![deny(rust_2018_idioms)]

pub mod bundle;
pub mod cli;
pub mod client;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod eventlog;
pub mod lexicon;
pub mod protocol;
pub mod report;
pub mod server;
pub mod simulate;

pub use error::{CareError, Result};
