//! Physical constants (SI).

/// Planck constant in J·s (exact since the 2019 SI redefinition).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Unified atomic mass unit in kg (CODATA 2018).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Elementary charge in C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
