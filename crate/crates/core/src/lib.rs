//! Interpretable and fair abstaining classification.
//!
//! A probabilistic base classifier is wrapped by a rejector that audits each
//! prediction with discriminatory association rules and situation testing,
//! then keeps, abstains on, or flips it under a coverage budget.

pub mod apriori;
pub mod calibration;
pub mod classifier;
pub mod data;
pub mod decision;
pub mod error;
pub mod metrics;
pub mod pipeline;
pub mod review;
pub mod rules;
pub mod situation;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
