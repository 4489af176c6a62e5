//! A desk-scale laboratory for insurance pricing on price-comparison websites.
//!
//! The pipeline: synthesize a market ([`datagen`]), estimate the demand curve
//! from resampled quote logs ([`conversion`]), train actor-critic pricing
//! agents against the data-driven simulator ([`approx`], [`simenv`],
//! [`trainer`]), and compare seven pricing policies under a shared-random-number
//! protocol ([`agents`], [`evaluator`], [`report`]).

pub mod agents;
pub mod approx;
pub mod conversion;
pub mod datagen;
pub mod domain;
pub mod evaluator;
pub mod report;
pub mod rng;
pub mod simenv;
pub mod trainer;
