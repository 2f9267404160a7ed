//! Physical constants and decibel conversions.

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Reference temperature for thermal noise (K).
pub const T0_KELVIN: f64 = 290.0;

pub fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_lin(dbm) * 1e-3
}

pub fn watts_to_dbm(w: f64) -> f64 {
    lin_to_db(w / 1e-3)
}

pub fn wavelength(freq_hz: f64) -> f64 {
    SPEED_OF_LIGHT / freq_hz
}

/// `floor(x)` tolerant to representation error just below an integer,
/// e.g. `20e-6 / 20e-9` evaluating to `999.999...`.
pub(crate) fn robust_floor(x: f64) -> f64 {
    (x + 1e-9 * x.abs().max(1.0)).floor()
}
