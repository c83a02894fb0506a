//! Site model, forecaster and lookahead controller for a base station powered
//! by harvested energy and co-located edge servers. Needs only `alloc`.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod controller;
pub mod error;
pub mod forecast;
pub mod power;
pub mod simulator;
pub mod traces;
