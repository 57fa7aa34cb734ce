//! Pontryagin extremals for a car-like robot towing one trailer.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checker;
pub mod composer;
pub mod dynamics;
pub mod error;
pub mod io;
pub mod model;
pub mod plot;
pub mod regular;
pub mod singular;

pub use error::{Error, Result};
pub use model::*;
