//! Freshness-aware cache refreshing for a single-base-station edge cache.
//!
//! A base station caches content items and serves requests over one FIFO
//! channel. Before each delivery it checks the age of information (AoI) of
//! the cached copy: if the age has reached the item's *refreshing window*
//! the latest version is fetched from the source first, otherwise the cached
//! copy is delivered directly. Larger windows mean staler content but fewer
//! fetches and therefore less queueing delay.
//!
//! The crate is split into four layers:
//!
//! * [`model`] - radio parameters, service rates, Zipf catalogs.
//! * [`analytics`] - closed-form refresh probability, mean AoI and mean delay.
//! * [`desim`] - a seeded simulator of the true two-phase service process.
//! * [`optimizer`] - per-item windows minimizing delay under an AoI budget.
//!
//! Everything is `no_std` with `alloc`; file formats, the CLI and parallel
//! sweeps live in the companion `aoi-cache-cli` crate.
#![cfg_attr(not(test), no_std)]
// Negated comparisons are how parameter checks reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analytics;
pub mod desim;
mod error;
pub(crate) mod math;
pub mod model;
pub mod optimizer;

pub use error::{Error, RateKind, Result};
