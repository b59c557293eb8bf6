//! Enriched dialog state tracking.
//!
//! The dialog state labels every informable slot (`DONT_CARE`, `MENTIONED`,
//! `NOT_MENTIONED`) and every value of every slot (`LIKE`, `DISLIKE`, `NOT_MENTIONED`),
//! so a state can hold several values per slot and negative preferences. The tracker
//! predicts each value's label with a value-specific head built from a gated CNN, and
//! the slot's free `DONT_CARE` / `NOT_MENTIONED` branch with a slot-level head.
//!
//! The crate is `no_std` (it needs `alloc`). File formats and the command-line tool live
//! in the companion `edst` crate.

#![no_std]
extern crate alloc;

pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod nn;
pub mod state;
pub mod synthetic;
pub mod template;
pub mod tracker;
pub mod train;

pub use error::{Error, Result};
