//! Network interference on a multi-lane highway with Poisson-distributed
//! vehicles.
//!
//! Vehicles in each lane form a 1-D PPP with intensity `1/Δ`. A victim front
//! radar sees the radars of vehicles ahead of it in every lane: rear radars
//! of traffic moving in its own direction and front radars of oncoming
//! traffic. Lane offsets are signed (`0` is the victim's lane).

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, Error, Result};
use crate::fmcw::ChirpConfig;
use crate::interference::interference_probability;
use crate::rng::child_rng;
use crate::rng::stream::NETGEOM;
use crate::scenario::{target_power_gain, LinkBudget, Target};
use crate::dsv::write_table;
use crate::units::{db_to_lin, lin_to_db, watts_to_dbm, BOLTZMANN, T0_KELVIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Same,
    Oncoming,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lane {
    pub offset: i32,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighwayScenario {
    pub lanes: Vec<Lane>,
    pub lane_spacing_m: f64,
    pub mean_spacing_m: f64,
    pub fov_forward_rad: f64,
    pub fov_backward_rad: f64,
    pub chirp: ChirpConfig,
    pub link: LinkBudget,
    pub target: Target,
    #[serde(default = "default_nf")]
    pub noise_figure_db: f64,
}

fn default_nf() -> f64 {
    10.0
}

impl HighwayScenario {
    /// Six-lane highway with the victim in the inner lane of its carriageway:
    /// own direction at offsets 0, −1, −2 and oncoming traffic at +1, +2, +3.
    pub fn six_lane(
        lane_spacing_m: f64,
        mean_spacing_m: f64,
        fov_forward_rad: f64,
        fov_backward_rad: f64,
        chirp: ChirpConfig,
        link: LinkBudget,
        target: Target,
    ) -> Result<Self> {
        let lanes = [(0, Direction::Same), (-1, Direction::Same), (-2, Direction::Same)]
            .into_iter()
            .chain([(1, Direction::Oncoming), (2, Direction::Oncoming), (3, Direction::Oncoming)])
            .map(|(offset, direction)| Lane { offset, direction })
            .collect();
        let s = Self {
            lanes,
            lane_spacing_m,
            mean_spacing_m,
            fov_forward_rad,
            fov_backward_rad,
            chirp,
            link,
            target,
            noise_figure_db: default_nf(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lanes.is_empty() {
            return Err(Error::Config("highway needs at least one lane".into()));
        }
        if !(self.mean_spacing_m > 0.0) {
            return Err(Error::Config("mean vehicle spacing must be positive".into()));
        }
        if !(self.lane_spacing_m > 0.0) {
            return Err(Error::Config("lane spacing must be positive".into()));
        }
        let fov_ok = |f: f64| f > 0.0 && f < PI;
        if !fov_ok(self.fov_forward_rad) || !fov_ok(self.fov_backward_rad) {
            return Err(Error::Config("fields of view must lie in (0, π)".into()));
        }
        self.chirp.validate()?;
        self.link.validate()?;
        self.target.validate()
    }

    pub fn theta_p(&self) -> f64 {
        self.fov_forward_rad.min(self.fov_backward_rad)
    }

    pub fn with_spacing(&self, mean_spacing_m: f64) -> Self {
        Self {
            mean_spacing_m,
            ..self.clone()
        }
    }

    /// Interference probability `f = u α τ_max / B` of the shared waveform.
    pub fn interference_probability(&self) -> f64 {
        let c = &self.chirp;
        interference_probability(c.duty_cycle, c.slope(), c.tau_max_s(), c.bandwidth_hz).unwrap_or(0.0)
    }

    fn friis_scale(&self) -> f64 {
        let l = &self.link;
        l.tx_power_w * l.combined_gain * l.wavelength_m * l.wavelength_m / (4.0 * PI).powi(2)
    }

    /// Start of the visible stretch of lane `offset`: `|ℓ|R / tan(θ_p/2)`,
    /// or the safety margin `Δ` in the victim's own lane.
    pub fn lower_limit_m(&self, offset: i32) -> f64 {
        if offset == 0 {
            self.mean_spacing_m
        } else {
            offset.unsigned_abs() as f64 * self.lane_spacing_m / (self.theta_p() / 2.0).tan()
        }
    }

    /// Road length past the lower limit at which the neglected tail of the
    /// mean interference falls below `rel_tail`.
    pub fn truncation_m(&self, offset: i32, rel_tail: f64) -> f64 {
        let lo = self.lower_limit_m(offset);
        if offset == 0 {
            // Tail ∫_X^∞ x⁻² dx = 1/X relative to 1/Δ.
            return lo / rel_tail;
        }
        let h = offset.unsigned_abs() as f64 * self.lane_spacing_m;
        let phi = rel_tail * self.theta_p() / 2.0;
        h / phi.tan()
    }
}

/// Relative share of the lane-ℓ mean interference beyond road position `x`,
/// `(π/2 − atan(x / ℓR)) / (θ_p/2)`.
pub fn tail_fraction(scn: &HighwayScenario, offset: i32, x: f64) -> f64 {
    if offset == 0 {
        return scn.mean_spacing_m / x;
    }
    let h = offset.unsigned_abs() as f64 * scn.lane_spacing_m;
    (PI / 2.0 - (x / h).atan()) / (scn.theta_p() / 2.0)
}

/// PPP realization on `[0, extent)`: Poisson count with mean `extent/Δ`,
/// positions i.i.d. uniform.
pub fn sample_ppp_lane<R: Rng + ?Sized>(mean_spacing_m: f64, extent_m: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(extent_m > 0.0) {
        return domain("PPP extent must be positive");
    }
    if !(mean_spacing_m > 0.0) {
        return domain("mean spacing must be positive");
    }
    let mean = extent_m / mean_spacing_m;
    if mean < 1e-300 {
        return Ok(Vec::new());
    }
    let n = Poisson::new(mean).map_err(|e| Error::Domain(e.to_string()))?.sample(rng) as usize;
    Ok((0..n).map(|_| rng.random::<f64>() * extent_m).collect())
}

/// Closed-form mean interference from lane `offset` (watts):
/// `P G λ²/(4π)² · f/Δ · θ_p/(2|ℓ|R)`, or `P G λ²/(4π)² · f/Δ²` for ℓ = 0.
pub fn expected_lane_interference(scn: &HighwayScenario, offset: i32) -> f64 {
    let f = scn.interference_probability();
    let delta = scn.mean_spacing_m;
    if offset == 0 {
        scn.friis_scale() * f / (delta * delta)
    } else {
        let h = offset.unsigned_abs() as f64 * scn.lane_spacing_m;
        scn.friis_scale() * f / delta * scn.theta_p() / (2.0 * h)
    }
}

/// Monte-Carlo mean of the Friis sum over PPP draws of lane `offset`,
/// truncated where the neglected tail is below 0.1%.
pub fn monte_carlo_aggregate(scn: &HighwayScenario, offset: i32, trials: usize, seed: u64) -> Result<f64> {
    if trials == 0 {
        return domain("monte_carlo_aggregate needs at least one trial");
    }
    let lo = scn.lower_limit_m(offset);
    let hi = scn.truncation_m(offset, 1e-3);
    monte_carlo_window(scn, offset, lo, hi, trials, seed)
}

/// As [`monte_carlo_aggregate`] with explicit road limits `[lo, hi]`.
pub fn monte_carlo_window(scn: &HighwayScenario, offset: i32, lo: f64, hi: f64, trials: usize, seed: u64) -> Result<f64> {
    let h2 = (offset as f64 * scn.lane_spacing_m).powi(2);
    let scale = scn.friis_scale() * scn.interference_probability();
    let lane_index = (offset as i64 + 1_000) as u64;
    let sums: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = child_rng(seed, NETGEOM, lane_index << 40 | t);
            let xs = sample_ppp_lane(scn.mean_spacing_m, hi - lo, &mut rng)?;
            Ok(xs.iter().map(|x| 1.0 / (h2 + (lo + x).powi(2))).sum::<f64>() * scale)
        })
        .collect::<Result<_>>()?;
    Ok(sums.iter().sum::<f64>() / trials as f64)
}

/// One point of the SINR-versus-spacing curve (watts and linear SINR).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SinrPoint {
    pub delta_m: f64,
    pub signal_w: f64,
    pub noise_w: f64,
    pub interference_w: f64,
    pub same_direction_w: f64,
    pub oncoming_w: f64,
    pub sinr: f64,
}

/// Thermal noise `k T0 B_s F` over the interest bandwidth.
pub fn thermal_noise_w(scn: &HighwayScenario) -> f64 {
    BOLTZMANN * T0_KELVIN * scn.chirp.interest_bandwidth_hz * db_to_lin(scn.noise_figure_db)
}

pub fn sinr_curve(scn: &HighwayScenario, delta_grid: &[f64]) -> Result<Vec<SinrPoint>> {
    if delta_grid.is_empty() {
        return domain("spacing grid must not be empty");
    }
    let signal = target_power_gain(&scn.link, &scn.target)?;
    let noise = thermal_noise_w(scn);
    delta_grid
        .iter()
        .map(|&d| {
            if !(d > 0.0) {
                return domain(format!("spacing {d} must be positive"));
            }
            let s = scn.with_spacing(d);
            let mut same = 0.0;
            let mut oncoming = 0.0;
            for lane in &s.lanes {
                let i = expected_lane_interference(&s, lane.offset);
                match lane.direction {
                    Direction::Same => same += i,
                    Direction::Oncoming => oncoming += i,
                }
            }
            let interference = same + oncoming;
            Ok(SinrPoint {
                delta_m: d,
                signal_w: signal,
                noise_w: noise,
                interference_w: interference,
                same_direction_w: same,
                oncoming_w: oncoming,
                sinr: signal / (noise + interference),
            })
        })
        .collect()
}

pub const CURVE_COLUMNS: [&str; 5] = ["delta_m", "signal_dbm", "interference_dbm", "noise_dbm", "sinr_db"];

pub fn write_curve<W: std::io::Write>(w: W, curve: &[SinrPoint]) -> Result<()> {
    let rows: Vec<Vec<f64>> = curve
        .iter()
        .map(|p| {
            vec![
                p.delta_m,
                watts_to_dbm(p.signal_w),
                watts_to_dbm(p.interference_w),
                watts_to_dbm(p.noise_w),
                lin_to_db(p.sinr),
            ]
        })
        .collect();
    write_table(w, &CURVE_COLUMNS, &rows)
}

/// Log-spaced spacing grid.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    pub(crate) fn fig6() -> HighwayScenario {
        let chirp = ChirpConfig::new(77e9, 1e9, 30e-6, 1, 1e9 / 30e-6 * 2.0 * 150.0 / crate::units::SPEED_OF_LIGHT)
            .unwrap()
            .with_duty_cycle(0.2)
            .unwrap();
        let link = LinkBudget::from_db(10.0, 22.0, 77e9).unwrap();
        let target = Target::new(150.0, 0.0, 10.0).unwrap();
        HighwayScenario::six_lane(3.5, 50.0, 30f64.to_radians(), 90f64.to_radians(), chirp, link, target).unwrap()
    }

    #[test]
    fn lane_scaling_laws() {
        let s = fig6();
        let i1 = expected_lane_interference(&s, 1);
        assert!((expected_lane_interference(&s, 2) / i1 - 0.5).abs() < 1e-15);
        assert!((expected_lane_interference(&s, -3) / i1 - 1.0 / 3.0).abs() < 1e-15);
        let s2 = s.with_spacing(100.0);
        assert!((expected_lane_interference(&s2, 1) / i1 - 0.5).abs() < 1e-15);
        assert!((expected_lane_interference(&s2, 0) / expected_lane_interference(&s, 0) - 0.25).abs() < 1e-15);
        assert!((s.theta_p() - 30f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn zero_duty_or_power_gives_no_interference() {
        let mut s = fig6();
        s.chirp.duty_cycle = 0.0;
        assert_eq!(expected_lane_interference(&s, 1), 0.0);
        assert_eq!(monte_carlo_aggregate(&s, 1, 10, 1).unwrap(), 0.0);
        let mut s = fig6();
        s.link.tx_power_w = 0.0;
        assert_eq!(monte_carlo_aggregate(&s, 0, 10, 1).unwrap(), 0.0);
    }

    #[test]
    fn ppp_empty_for_huge_spacing() {
        let mut rng = rng_from_seed(1);
        let empty = (0..100)
            .filter(|_| sample_ppp_lane(1e12, 100.0, &mut rng).unwrap().is_empty())
            .count();
        assert_eq!(empty, 100);
        assert!(sample_ppp_lane(10.0, 0.0, &mut rng).is_err());
    }

    #[test]
    fn tail_fraction_matches_truncation() {
        let s = fig6();
        for l in [0, 1, 2, 3] {
            let x = s.lower_limit_m(l) + s.truncation_m(l, 1e-3);
            let lo = s.lower_limit_m(l);
            // Truncation is measured from the start of the visible stretch.
            assert!(tail_fraction(&s, l, x) < 1e-3 + 1e-12);
            assert!((tail_fraction(&s, l, lo) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ten_fold_truncation_tail() {
        let s = fig6();
        let x = 10.0 * s.lower_limit_m(1);
        let tail = tail_fraction(&s, 1, x);
        let expected = (PI / 2.0 - (10.0 / (15f64.to_radians()).tan()).atan()) / 15f64.to_radians();
        assert!((tail - expected).abs() < 1e-12);
        assert!(tail > 0.1 && tail < 0.11);
    }
}
