#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod firstreturn;
pub mod ilt;
pub mod linalg;
pub mod matcalc;
pub mod model;
pub mod quadrature;
pub mod scenarios;
pub mod simulate;
pub mod stationary;
pub mod transient;

pub use error::{Result, SfmError};
