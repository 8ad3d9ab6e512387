//! Pairwise-comparison evaluation of text generators.
//!
//! A comparator (any [`judge::Judge`]) decides which of two texts written for
//! the same context is better. On top of it this crate provides Glicko-2
//! ratings with a tie rule, random-pairing tournaments with an order-stability
//! stopping rule, pair-dataset construction for training comparators,
//! reference-based and rating-based scoring, correlation analysis, and
//! comparison-driven early stopping.

pub mod judge;
pub mod monitor;
pub mod rating;
pub mod scoring;
pub mod seed;
pub mod supervision;
pub mod tournament;
