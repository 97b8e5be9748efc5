//! Purchase-event analytics toolkit.
//!
//! Turns purchase-confirmation emails into a purchase-event dataset and runs
//! demographic, temporal, and social analyses over it, plus a smoothed
//! naive-Bayes classifier that predicts the price class and time class of a
//! user's next purchase. A seeded synthetic generator plants known effects
//! so every analysis can be checked against ground truth.

pub mod cohort;
pub mod datastore;
pub mod predictor;
pub mod receipt;
pub mod social;
pub mod stats;
pub mod synthgen;
pub mod temporal;

pub use datastore::{Dataset, EmailGraph, PurchaseEvent, UserProfile};
