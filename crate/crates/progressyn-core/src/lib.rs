//! Core algorithms for synthesizing progressions of block-based programming
//! subtasks: the block DSL, grid worlds, a deterministic interpreter with
//! trace instrumentation, code reduction over grid subsets, symbolic grid
//! realization, and the progression optimizers plus baselines.
//!
//! This crate is `no_std` (with `alloc`) so the algorithmic core stays free
//! of IO; file formats and the CLI live in the companion `progressyn` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dsl;
pub mod interpreter;
pub mod metrics;
pub mod progression;
pub mod reduction;
pub mod symexec;
pub mod world;

pub use dsl::{Block, BlockKind, Code, Condition, Dialect};
pub use world::{Grid, Task};
