//! Solvers and learners for two-player bounded risk-sensitive Markov games.
//!
//! Agents reason with a finite depth (quantal level-k) and score outcomes
//! with the gains branch of cumulative prospect theory. The crate covers
//! the forward problem (CPT value iteration per level), exact parameter
//! gradients of the resulting policies (value-gradient iteration), and the
//! inverse problem (gradient ascent on the demonstration likelihood with
//! Bayesian level inference), plus a risk-neutral MaxEnt IRL baseline and
//! the two-agent grid navigation game used to exercise all of it.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, config and
//! the command line live in the `brsmg` companion crate.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baseline;
pub mod cpt;
mod error;
pub mod forward;
pub mod game;
pub mod gradient;
pub mod gridworld;
pub mod inverse;
mod math;
pub mod metrics;
pub mod params;

pub use error::{Error, Result};
pub use game::{Agent, CptParams, GameSpec, RewardParams, RiskMode};
