//! Runs every Rust listing of the guide in `book/` as a doc-test.
//!
//! mdbook cannot test listings that use workspace crates, so each chapter is
//! pulled in here as the documentation of an empty module.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/teacher.md")]
pub mod teacher {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/student.md")]
pub mod student {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}

#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}
