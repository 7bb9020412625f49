//! Files, run directories and command implementations around
//! [`octseg_core`]: the `.octv` volume container, label PNGs, corpus
//! manifests, model bundles, evaluation reports and overlays.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod container;
pub mod corpus;
pub mod error;
pub mod image;
pub mod manifest;
pub mod report;

pub use error::{Error, Result};
