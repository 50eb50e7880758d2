//! Tolerances and constants shared by tests, the acceptance run and the CLI.

/// Spectral identities (Parseval, round trip, composition).
pub const SPECTRAL_EXACT: f64 = 1e-12;
/// Reproduction identities of smooth multipliers.
pub const REPRODUCTION: f64 = 1e-10;
/// Exact shadow vs rasterized shadow, relative.
pub const SHADOW_RASTER: f64 = 1e-3;
/// Pairwise mass₂ vs rasterized balayage, relative.
pub const MASS_RASTER: f64 = 1e-2;
/// Raster refinement for non-exact mass integrals.
pub const RASTER_START_LOG2: u32 = 10;
pub const RASTER_CAP_LOG2: u32 = 13;
pub const RASTER_AGREE: f64 = 1e-2;
/// Default raster for shadow oracles.
pub const ORACLE_RES: usize = 1 << 12;

pub const CORDOBA_MAX: usize = 32;
pub const EMBEDDING_C: f64 = 8.0;
pub const STRATUM_DECAY_C: f64 = 64.0;
pub const JOURNE_THRESHOLD: f64 = 1.0 / 64.0;
pub const JOURNE_C: f64 = 64.0;
pub const BESSEL_C: f64 = 4.0;
pub const TILE_OVERLAP_MAX: usize = 32;
pub const UNCERTAINTY_C: f64 = 1.0 / 64.0;
pub const KAPPA_MAX: f64 = 16.0;
pub const FEFFERMAN_STEIN_C: f64 = 16.0;
pub const BESICOVITCH_SPREAD: f64 = 4.0;
pub const EXPONENT_WINDOW: (f64, f64) = (0.1, 0.45);
/// `0.9·ln(5/3)/π`.
pub fn meyer_floor() -> f64 {
    0.9 * (5.0f64 / 3.0).ln() / std::f64::consts::PI
}
