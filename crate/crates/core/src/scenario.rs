//! Physical scene: point targets, link budgets and the receiver noise floor.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Error, Result};
use crate::units::{db_to_lin, dbm_to_watts, wavelength, SPEED_OF_LIGHT};

/// A point scatterer seen by the radar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub range_m: f64,
    /// Positive when the target recedes.
    pub radial_velocity_mps: f64,
    pub rcs_m2: f64,
    /// Reflection phase applied to the complex gain.
    #[serde(default)]
    pub phase_rad: f64,
}

impl Target {
    pub fn new(range_m: f64, radial_velocity_mps: f64, rcs_m2: f64) -> Result<Self> {
        let t = Self {
            range_m,
            radial_velocity_mps,
            rcs_m2,
            phase_rad: 0.0,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_phase(mut self, phase_rad: f64) -> Self {
        self.phase_rad = phase_rad;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range_m > 0.0) {
            return domain(format!("target range must be positive, got {}", self.range_m));
        }
        if !(self.rcs_m2 >= 0.0) {
            return domain(format!("target RCS must be non-negative, got {}", self.rcs_m2));
        }
        Ok(())
    }

    /// Round-trip delay `2R/c`.
    pub fn delay_s(&self) -> f64 {
        2.0 * self.range_m / SPEED_OF_LIGHT
    }

    /// Normalised Doppler `2v/c`.
    pub fn doppler(&self) -> f64 {
        2.0 * self.radial_velocity_mps / SPEED_OF_LIGHT
    }
}

/// Transmit power, antenna gain and wavelength of one radar, in linear units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power_w: f64,
    /// Combined transmit and receive antenna gain.
    pub combined_gain: f64,
    pub wavelength_m: f64,
}

impl LinkBudget {
    /// Build from configuration units (dBm, dBi, carrier in Hz).
    pub fn from_db(tx_power_dbm: f64, combined_gain_dbi: f64, carrier_hz: f64) -> Result<Self> {
        if !(carrier_hz > 0.0) {
            return domain("carrier frequency must be positive");
        }
        let lb = Self {
            tx_power_w: dbm_to_watts(tx_power_dbm),
            combined_gain: db_to_lin(combined_gain_dbi),
            wavelength_m: wavelength(carrier_hz),
        };
        lb.validate()?;
        Ok(lb)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tx_power_w > 0.0) {
            return domain("transmit power must be positive");
        }
        if !(self.combined_gain >= 1.0) {
            return domain(format!(
                "combined antenna gain must be at least 1 (0 dBi), got {}",
                self.combined_gain
            ));
        }
        Ok(())
    }

    fn friis_numerator(&self) -> f64 {
        self.tx_power_w * self.combined_gain * self.wavelength_m * self.wavelength_m
    }
}

/// Receiver noise: complex-sample variance and the seed of its generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub variance: f64,
    pub seed: u64,
}

impl NoiseConfig {
    pub fn off() -> Self {
        Self {
            variance: 0.0,
            seed: 0,
        }
    }

    pub fn new(variance: f64, seed: u64) -> Result<Self> {
        if !(variance >= 0.0) {
            return domain("noise variance must be non-negative");
        }
        Ok(Self { variance, seed })
    }
}

/// Two-way radar-equation power gain `P G σ λ² / ((4π)³ d⁴)`.
pub fn target_power_gain(link: &LinkBudget, target: &Target) -> Result<f64> {
    target.validate()?;
    let d = target.range_m;
    Ok(link.friis_numerator() * target.rcs_m2 / ((4.0 * PI).powi(3) * d.powi(4)))
}

/// One-way Friis power gain `P G λ² / ((4π)² r²)` of a direct interferer.
pub fn interferer_power_gain(link: &LinkBudget, distance_m: f64) -> Result<f64> {
    if !(distance_m > 0.0) {
        return domain(format!("interferer distance must be positive, got {distance_m}"));
    }
    if distance_m.is_infinite() {
        return Ok(0.0);
    }
    Ok(link.friis_numerator() / ((4.0 * PI).powi(2) * distance_m * distance_m))
}

/// Narrow-beam antenna gain approximation `4π / (φ θ)`.
pub fn fov_antenna_gain(elevation_beamwidth_rad: f64, azimuth_beamwidth_rad: f64) -> Result<f64> {
    let ok = |b: f64| b > 0.0 && b <= 2.0 * PI + 1e-12;
    if !ok(elevation_beamwidth_rad) || !ok(azimuth_beamwidth_rad) {
        return Err(Error::Domain(format!(
            "beamwidths must lie in (0, 2π], got {elevation_beamwidth_rad} and {azimuth_beamwidth_rad}"
        )));
    }
    Ok(4.0 * PI / (elevation_beamwidth_rad * azimuth_beamwidth_rad))
}
