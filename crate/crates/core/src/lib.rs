//! Rare-event point processes for intermittent interval maps.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod fractional;
pub mod laws;
pub mod lsv;
pub mod measure;
pub mod quad;
pub mod rng;
pub mod targets;
pub mod zext;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/map.md")]
    mod map {}
    #[doc = include_str!("../../../book/src/scaling.md")]
    mod scaling {}
    #[doc = include_str!("../../../book/src/laws.md")]
    mod laws {}
    #[doc = include_str!("../../../book/src/fractional.md")]
    mod fractional {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../book/src/zext.md")]
    mod zext {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
