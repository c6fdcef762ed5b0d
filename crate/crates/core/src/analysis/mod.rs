//! Scale analysis: reliability filtering, Thurstone reconstruction in JND
//! units, alignment of boosted scales, bootstrap confidence intervals and
//! the psychometric and bias reports.

pub mod align;
pub mod bias;
pub mod bootstrap;
pub mod counts;
pub mod filter;
pub mod normal;
pub mod psychometric;
pub mod study;
pub mod thurstone;
