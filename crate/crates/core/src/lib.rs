//! Trojan (backdoor) attacks on raw-I/Q modulation classifiers, and the
//! activation-based defenses used to detect them.
//!
//! The crate is organized bottom-up:
//!
//! * [`sigsynth`] synthesizes labeled baseband frames and a stochastic channel.
//! * [`nn`] is a small from-scratch CNN engine (conv, pool, dense, Adam).
//! * [`attack`] implements the rotation trigger, training-set poisoning and
//!   the three accuracy metrics.
//! * [`defense`] holds rotation augmentation, MAD outlier detection and the
//!   t-SNE + RBF-SVM clustering detector.
//! * [`harness`] wires everything into seeded, reproducible experiments.

pub mod attack;
pub mod defense;
pub mod error;
pub mod harness;
pub mod matrix;
pub mod nn;
pub mod seed;
pub mod sigsynth;

mod bytes;

pub use error::{Error, Result};
