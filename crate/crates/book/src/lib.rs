//! Chapters of the guide in `book/`, one module each, so `cargo test` runs
//! their listings.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/params.md")]
pub mod params {}
#[doc = include_str!("../../../book/src/transforms.md")]
pub mod transforms {}
#[doc = include_str!("../../../book/src/metric.md")]
pub mod metric {}
#[doc = include_str!("../../../book/src/optimizer.md")]
pub mod optimizer {}
#[doc = include_str!("../../../book/src/sessions.md")]
pub mod sessions {}
#[doc = include_str!("../../../book/src/adapters.md")]
pub mod adapters {}
#[doc = include_str!("../../../book/src/cli-service.md")]
pub mod cli_service {}
