// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod filter_design;
pub mod mechanics;
pub mod plant;
pub mod powerflow;
pub mod protection;
pub mod scan;
pub mod scenario;
pub mod screening;
pub mod shaft;
pub mod signal;
pub mod trace;
pub mod tuner;

pub use error::{Error, Result};
