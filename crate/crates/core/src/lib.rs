//! Numerical laboratory for class A Lorentzian 2-tori.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod busemann;
pub mod cli;
pub mod config;
pub mod curve;
pub mod distance;
pub mod error;
pub mod foliation;
pub mod geodesic;
pub mod metric;
pub mod output;
pub mod rational;
pub mod stablesep;
pub mod vec2;
pub mod verify;

pub use error::{LabError, Result};
pub use metric::MetricField;
pub use vec2::{CoverPoint, Homology, Vec2};
