//! The chapters of `book/src`, compiled as doc comments so that
//! `cargo test --doc -p dirsq-guide` runs every example in the book.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}

#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry {}

#[doc = include_str!("../../../book/src/spectral.md")]
pub mod spectral {}

#[doc = include_str!("../../../book/src/kakeya.md")]
pub mod kakeya {}

#[doc = include_str!("../../../book/src/lab.md")]
pub mod lab {}
