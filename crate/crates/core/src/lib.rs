//! Planning for factored multiagent MDPs whose transition models exhibit
//! anonymous influence: count aggregators, mixed-mode factors in redundant
//! representation, variable elimination over them, and the approximate
//! linear program built on top, with an SIS epidemic-control domain.

pub mod alp;
pub mod elimination;
pub mod epidemics;
pub mod error;
pub mod factors;
pub mod fmmdp;
pub mod simulate;

pub use error::{Error, Result};
