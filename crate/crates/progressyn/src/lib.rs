//! Standard-library companion to `progressyn-core`: file formats, corpus
//! handling, task generation, rendering, and the command-line interface.

pub mod cli;
pub mod dataset;
pub mod formats;
pub mod gen;
pub mod render;
