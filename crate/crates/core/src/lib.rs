//! A laboratory for directional square functions.
//!
//! The crate is organised bottom-up:
//!
//! - [`geometry`]: sheared dyadic parallelograms, exact areas and shadows.
//! - [`carleson`]: Carleson sequences, balayages, mass norms and the
//!   iterative embedding diagnostics, weighted and unweighted.
//! - [`spectral`]: periodic 2D FFT and the multiplier catalogue (cones,
//!   rectangles, polygons, annuli) with square functions.
//! - [`maximal`]: directional, collection and strong maximal operators and
//!   truncated directional singular integrals.
//! - [`tiles`]: tile constructions, canonical wave packets, coefficients.
//! - [`kakeya`]: Besicovitch families and the lower-bound harnesses.
//! - [`lab`]: experiment configuration, records, CSV and exponent fits.

pub mod carleson;
pub mod error;
pub mod exact;
pub mod geometry;
pub mod kakeya;
pub mod lab;
pub mod maximal;
pub mod spectral;
pub mod tiles;
pub mod tolerances;

pub use error::{Error, Result};
