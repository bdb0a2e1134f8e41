//! Compiles and runs the code listings of the guide in `book/` as doc-tests,
//! one module per chapter so a failure points at its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/graphs.md")]
pub mod graphs {}

#[doc = include_str!("../../../book/src/angles.md")]
pub mod angles {}

#[doc = include_str!("../../../book/src/gnc.md")]
pub mod gnc {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
