//! The book's chapters as doc comments, so `cargo test` runs every code
//! listing in it. One module per chapter to make failures easier to place.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/line-code.md")]
pub mod line_code {}
#[doc = include_str!("../../../book/src/channel.md")]
pub mod channel {}
#[doc = include_str!("../../../book/src/clock-recovery.md")]
pub mod clock_recovery {}
#[doc = include_str!("../../../book/src/ecc.md")]
pub mod ecc {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
#[doc = include_str!("../../../README.md")]
pub mod readme {}
