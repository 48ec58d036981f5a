//! The guide's code listings, compiled and run as doc-tests.
//!
//! mdbook cannot test snippets that depend on a workspace crate, so each
//! chapter is pulled in here as the docs of an empty module and
//! `cargo test --doc -p evolab-book` runs them. One module per chapter
//! keeps failures traceable to their file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/memory.md")]
pub mod memory {}
#[doc = include_str!("../../../book/src/architectures.md")]
pub mod architectures {}
#[doc = include_str!("../../../book/src/embeddings.md")]
pub mod embeddings {}
#[doc = include_str!("../../../book/src/gateway.md")]
pub mod gateway {}
#[doc = include_str!("../../../book/src/inner-loop.md")]
pub mod inner_loop {}
#[doc = include_str!("../../../book/src/evolution.md")]
pub mod evolution {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
