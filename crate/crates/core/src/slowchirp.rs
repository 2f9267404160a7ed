//! Long ("slow") chirps: quasi-orthogonal channels, single-sweep range and
//! velocity retrieval from the complex beat amplitude, and random channel
//! selection.

use std::collections::HashMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dsp::{argmax, fft_forward, golden_max, parabolic_offset};
use crate::dsv::write_table;
use crate::error::{domain, Error, Result};
use crate::quad::{adaptive_simpson, unimodular};
use crate::rng::{complex_gaussian, rng_from_seed};
use crate::scenario::{NoiseConfig, Target};
use crate::units::{robust_floor, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowChirpConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub duration_s: f64,
    pub channel_count: u64,
    pub channel_index: u64,
    pub sample_rate_hz: f64,
}

impl SlowChirpConfig {
    pub fn new(
        carrier_hz: f64,
        bandwidth_hz: f64,
        duration_s: f64,
        channel_count: u64,
        channel_index: u64,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        let c = Self {
            carrier_hz,
            bandwidth_hz,
            duration_s,
            channel_count,
            channel_index,
            sample_rate_hz,
        };
        c.validate()?;
        Ok(c)
    }

    /// Sample rate `2·max|f*|` for targets up to `max_range_m` and
    /// `max_speed_mps`, rounded up to a whole number of samples per sweep.
    pub fn for_envelope(
        carrier_hz: f64,
        bandwidth_hz: f64,
        duration_s: f64,
        channel_count: u64,
        channel_index: u64,
        max_range_m: f64,
        max_speed_mps: f64,
    ) -> Result<Self> {
        if !(max_range_m > 0.0) || !(max_speed_mps >= 0.0) {
            return Err(Error::Config("design envelope must be positive".into()));
        }
        let alpha = bandwidth_hz / duration_s;
        let f_max = alpha * 2.0 * max_range_m / SPEED_OF_LIGHT + carrier_hz * 2.0 * max_speed_mps / SPEED_OF_LIGHT;
        let fs = (2.0 * f_max * duration_s).ceil() / duration_s;
        Self::new(carrier_hz, bandwidth_hz, duration_s, channel_count, channel_index, fs)
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |x: f64| x.is_finite() && x > 0.0;
        if !pos(self.carrier_hz) || !pos(self.bandwidth_hz) || !pos(self.sample_rate_hz) {
            return Err(Error::Config("carrier, bandwidth and sample rate must be positive".into()));
        }
        if !(self.duration_s >= 1e-4) || !self.duration_s.is_finite() {
            return Err(Error::Config(format!(
                "slow chirp duration {} s must be at least 100 us",
                self.duration_s
            )));
        }
        if self.channel_count == 0 || self.channel_index >= self.channel_count {
            return Err(Error::Config(format!(
                "channel index {} outside 0..{}",
                self.channel_index, self.channel_count
            )));
        }
        if self.num_samples() < 2 {
            return Err(Error::Config("sample rate yields fewer than two samples per chirp".into()));
        }
        Ok(())
    }

    pub fn slope(&self) -> f64 {
        self.bandwidth_hz / self.duration_s
    }

    pub fn num_samples(&self) -> usize {
        robust_floor(self.duration_s * self.sample_rate_hz) as usize
    }

    /// Sample instants at the centre of each sampling interval.
    pub fn sample_time(&self, n: usize) -> f64 {
        (n as f64 + 0.5) / self.sample_rate_hz
    }

    /// Start-time offset `i·T/N` of this channel on the shared ramp.
    pub fn channel_offset_s(&self) -> f64 {
        self.channel_index as f64 * self.duration_s / self.channel_count as f64
    }

    /// Coupling between this channel and channel `other` of the same ramp.
    pub fn channel_coupling(&self, other: u64) -> Result<Coupling> {
        if other >= self.channel_count {
            return domain(format!("channel {other} outside 0..{}", self.channel_count));
        }
        let d = self.channel_index.abs_diff(other) as f64 * self.duration_s / self.channel_count as f64;
        coupling(d, self.bandwidth_hz, self.duration_s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coupling {
    pub exact: f64,
    pub bound: f64,
}

/// Power coupling between a chirp of slope `B/T` and a copy delayed by `Δτ`.
pub fn coupling(delta_tau_s: f64, bandwidth_hz: f64, duration_s: f64) -> Result<Coupling> {
    if delta_tau_s == 0.0 {
        return Ok(Coupling { exact: 1.0, bound: 1.0 });
    }
    if !(delta_tau_s > 0.0 && delta_tau_s < duration_s) {
        return domain(format!("delay offset {delta_tau_s} s outside (0, T)"));
    }
    if !(bandwidth_hz > 0.0) {
        return domain("bandwidth must be positive");
    }
    let alpha = bandwidth_hz / duration_s;
    // φ(t) − φ(t − Δτ) of the quadratic phase φ(t) = π α t².
    let psi = |t: f64| PI * alpha * delta_tau_s * (2.0 * t - delta_tau_s);
    let integral = unimodular(&psi, 0.0, duration_s, 4, 1e-12 * duration_s) / duration_s;
    Ok(Coupling {
        exact: integral.norm_sqr(),
        bound: 1.0 / (PI * bandwidth_hz * delta_tau_s).powi(2),
    })
}

/// Coupling when the ramp repeats with period `T`, so `t − Δτ` wraps into
/// the previous sweep for `t < Δτ`.
pub fn coupling_periodic(delta_tau_s: f64, bandwidth_hz: f64, duration_s: f64) -> Result<f64> {
    if delta_tau_s == 0.0 {
        return Ok(1.0);
    }
    if !(delta_tau_s > 0.0 && delta_tau_s < duration_s) {
        return domain(format!("delay offset {delta_tau_s} s outside (0, T)"));
    }
    let alpha = bandwidth_hz / duration_s;
    let d = delta_tau_s;
    let wrapped = |t: f64| PI * alpha * (t * t - (t - d + duration_s).powi(2));
    let main = |t: f64| PI * alpha * d * (2.0 * t - d);
    let tol = 1e-12 * duration_s;
    let total = unimodular(&wrapped, 0.0, d, 4, tol) + unimodular(&main, d, duration_s, 4, tol);
    Ok((total / duration_s).norm_sqr())
}

/// Coupling of two tones `BΔτ/T` apart over one sweep: `sinc²(BΔτ)`.
pub fn two_tone_coupling(delta_tau_s: f64, bandwidth_hz: f64) -> f64 {
    let x = PI * bandwidth_hz * delta_tau_s;
    if x == 0.0 {
        1.0
    } else {
        (x.sin() / x).powi(2)
    }
}

/// Number of channels whose coupling stays below a typical echo: `⌊T B √σ / r⌋`.
pub fn max_channels(duration_s: f64, bandwidth_hz: f64, rcs_m2: f64, distance_m: f64) -> Result<u64> {
    if !(duration_s > 0.0 && bandwidth_hz > 0.0 && rcs_m2 > 0.0 && distance_m > 0.0) {
        return domain("max_channels needs positive inputs");
    }
    Ok(robust_floor(duration_s * bandwidth_hz * rcs_m2.sqrt() / distance_m) as u64)
}

/// Absolute phase `π α τ (τ − 2 f_c / α)`.
pub fn phi0(alpha: f64, carrier_hz: f64, tau_s: f64) -> f64 {
    PI * alpha * tau_s * (tau_s - 2.0 * carrier_hz / alpha)
}

/// Absolute phase from the beat peak `f*` and a velocity hypothesis `ν`.
pub fn phi0_from_peak(alpha: f64, carrier_hz: f64, nu: f64, f_star_hz: f64) -> f64 {
    PI * (carrier_hz * nu - f_star_hz) / alpha * (carrier_hz * (nu - 2.0) - f_star_hz)
}

/// Phase `2π t² ν α` of the residual quadratic term.
pub fn quadratic_phase(nu: f64, alpha: f64, t: f64) -> f64 {
    2.0 * PI * t * t * nu * alpha
}

/// `I(ν) = ∫₀ᵀ exp(j 2π ν α t²) dt`.
pub fn velocity_integral(nu: f64, alpha: f64, duration_s: f64) -> Complex64 {
    let f = |t: f64| Complex64::from_polar(1.0, quadratic_phase(nu, alpha, t));
    adaptive_simpson(&f, 0.0, duration_s, 1e-10 * duration_s)
}

/// Noisy dechirped beat of one target; `gain` is the real reflectivity γ̃.
pub fn dechirp_slow(target: &Target, cfg: &SlowChirpConfig, gain: f64, noise: &NoiseConfig) -> Result<Vec<Complex64>> {
    target.validate()?;
    if !(gain >= 0.0) {
        return domain("reflectivity must be real and non-negative");
    }
    let alpha = cfg.slope();
    let tau = target.delay_s();
    let nu = target.doppler();
    let f_star = cfg.carrier_hz * nu - alpha * tau;
    if f_star.abs() >= cfg.sample_rate_hz / 2.0 {
        return domain(format!(
            "beat frequency {f_star:.1} Hz exceeds the Nyquist limit {:.1} Hz",
            cfg.sample_rate_hz / 2.0
        ));
    }
    // Phase kept in cycles, wrapped term by term.
    let phase0 = (0.5 * alpha * tau * tau).fract() - (cfg.carrier_hz * tau).fract();
    let mut rng = rng_from_seed(noise.seed);
    Ok((0..cfg.num_samples())
        .map(|n| {
            let t = cfg.sample_time(n);
            let cycles = (f_star * t).fract() + (nu * alpha * t * t).fract() + phase0;
            let s = Complex64::from_polar(gain, 2.0 * PI * cycles.fract());
            if noise.variance > 0.0 {
                s + complex_gaussian(&mut rng, noise.variance)
            } else {
                s
            }
        })
        .collect())
}

/// Continuous-frequency transform `Σ y_n e^{−j2πf t_n} / f_s`.
pub fn dtft(samples: &[Complex64], cfg: &SlowChirpConfig, f: f64) -> Complex64 {
    // Phasor recurrence, re-anchored every block to bound the drift.
    const BLOCK: usize = 256;
    let step = Complex64::from_polar(1.0, -2.0 * PI * (f / cfg.sample_rate_hz).fract());
    let mut acc = Complex64::new(0.0, 0.0);
    for (b, chunk) in samples.chunks(BLOCK).enumerate() {
        let mut w = Complex64::from_polar(1.0, -2.0 * PI * (f * cfg.sample_time(b * BLOCK)).fract());
        for y in chunk {
            acc += y * w;
            w *= step;
        }
    }
    acc / cfg.sample_rate_hz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumPeak {
    pub f_star_hz: f64,
    #[serde(skip)]
    pub value: Complex64,
}

const PEAK_PAD: usize = 4;

fn padded_peak(samples: &[Complex64], fs: f64) -> f64 {
    let m = (samples.len() * PEAK_PAD).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    buf[..samples.len()].copy_from_slice(samples);
    fft_forward(&mut buf);
    let power: Vec<f64> = buf.iter().map(|c| c.norm_sqr()).collect();
    let k = argmax(&power);
    let at = |i: isize| power[i.rem_euclid(m as isize) as usize];
    let off = parabolic_offset(at(k as isize - 1), power[k], at(k as isize + 1));
    let mut bin = k as f64 + off;
    if bin >= m as f64 / 2.0 {
        bin -= m as f64;
    }
    bin * fs / m as f64
}

/// Location and complex value of the beat-spectrum maximum.
pub fn spectrum_peak(samples: &[Complex64], cfg: &SlowChirpConfig) -> Result<SpectrumPeak> {
    refined_peak(samples, cfg, 1e-9)
}

fn refined_peak(samples: &[Complex64], cfg: &SlowChirpConfig, rel_tol: f64) -> Result<SpectrumPeak> {
    if samples.is_empty() {
        return domain("spectrum_peak needs a non-empty series");
    }
    let fs = cfg.sample_rate_hz;
    let coarse = padded_peak(samples, fs);
    let step = fs / (samples.len() * PEAK_PAD).next_power_of_two() as f64;
    let f = golden_max(|f| dtft(samples, cfg, f).norm_sqr(), coarse - step, coarse + step, rel_tol * step);
    Ok(SpectrumPeak {
        f_star_hz: f,
        value: dtft(samples, cfg, f),
    })
}

/// Velocity look-up table: model angle of `e^{jφ₀(ν)} I(ν)` on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityLut {
    pub f_star_hz: f64,
    pub velocity_mps: Vec<f64>,
    pub model: Vec<Complex64>,
    /// Wrapped angles in (−π, π].
    pub angle_rad: Vec<f64>,
    pub unwrapped_rad: Vec<f64>,
    pub origin: Complex64,
}

fn lut_model(cfg: &SlowChirpConfig, f_star_hz: f64, v: f64) -> Complex64 {
    let alpha = cfg.slope();
    let nu = 2.0 * v / SPEED_OF_LIGHT;
    let phase = phi0_from_peak(alpha, cfg.carrier_hz, nu, f_star_hz);
    Complex64::from_polar(1.0, phase) * velocity_integral(nu, alpha, cfg.duration_s)
}

fn wrap(x: f64) -> f64 {
    let y = (x + PI).rem_euclid(2.0 * PI) - PI;
    if y == -PI {
        PI
    } else {
        y
    }
}

fn unwrap(angles: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(angles.len());
    let mut acc = 0.0;
    for (i, a) in angles.iter().enumerate() {
        if i == 0 {
            acc = *a;
        } else {
            acc += wrap(a - angles[i - 1]);
        }
        out.push(acc);
    }
    out
}

/// Longest stretch of `u` around index `mid` that is strictly monotone with
/// a total swing below one turn.
fn valid_run(u: &[f64], mid: usize) -> (usize, usize) {
    let sign = |i: usize| (u[i + 1] - u[i]).signum();
    if u.len() < 2 {
        return (0, 0);
    }
    let pivot = mid.min(u.len() - 2);
    let dir = sign(pivot);
    let (mut lo, mut hi) = (pivot, pivot + 1);
    loop {
        let mut grown = false;
        if lo > 0 && sign(lo - 1) == dir && (u[hi] - u[lo - 1]).abs() < 2.0 * PI {
            lo -= 1;
            grown = true;
        }
        if hi + 1 < u.len() && sign(hi) == dir && (u[hi + 1] - u[lo]).abs() < 2.0 * PI {
            hi += 1;
            grown = true;
        }
        if !grown {
            return (lo, hi);
        }
    }
}

/// Builds the LUT on `[v_lo, v_hi]` with grid step `v_step`; angles are taken
/// about `origin` in the complex plane.
pub fn build_velocity_lut(
    cfg: &SlowChirpConfig,
    f_star_hz: f64,
    span_mps: (f64, f64),
    v_step_mps: f64,
    origin: Complex64,
) -> Result<VelocityLut> {
    let (lo, hi) = span_mps;
    if !(hi > lo) || !(v_step_mps > 0.0) {
        return domain("velocity span must be increasing with a positive step");
    }
    let n = ((hi - lo) / v_step_mps).ceil() as usize + 1;
    let velocity_mps: Vec<f64> = (0..n)
        .map(|i| (lo + i as f64 * v_step_mps).min(hi))
        .collect();
    let model: Vec<Complex64> = velocity_mps.iter().map(|&v| lut_model(cfg, f_star_hz, v)).collect();
    let angle_rad: Vec<f64> = model.iter().map(|m| (m - origin).arg()).collect();
    let unwrapped_rad = unwrap(&angle_rad);
    // Steps turning more than a quarter turn cannot be unwrapped reliably.
    let coarse = angle_rad.windows(2).any(|w| wrap(w[1] - w[0]).abs() > PI / 2.0);
    let (a, b) = valid_run(&unwrapped_rad, n / 2);
    if coarse || a != 0 || b != n - 1 {
        let (span_lo, span_hi) = if coarse {
            let centre = 0.5 * (lo + hi);
            let half = 0.5 * one_turn_width(cfg, f_star_hz, centre);
            (centre - half, centre + half)
        } else {
            (velocity_mps[a], velocity_mps[b])
        };
        return Err(Error::SpanTooWide {
            lo_mps: span_lo,
            hi_mps: span_hi,
        });
    }
    Ok(VelocityLut {
        f_star_hz,
        velocity_mps,
        model,
        angle_rad,
        unwrapped_rad,
        origin,
    })
}

/// Velocity interval over which the model angle turns once, from the local
/// angle rate at `v`.
pub fn one_turn_width(cfg: &SlowChirpConfig, f_star_hz: f64, v: f64) -> f64 {
    // φ₀ dominates with rate about 4π f_c² / (α c); probe well inside that.
    let approx = cfg.slope() * SPEED_OF_LIGHT / (2.0 * cfg.carrier_hz * cfg.carrier_hz);
    let h = approx * 1e-3;
    let a = lut_model(cfg, f_star_hz, v - h).arg();
    let b = lut_model(cfg, f_star_hz, v + h).arg();
    let rate = wrap(b - a) / (2.0 * h);
    2.0 * PI / rate.abs()
}

/// Maximal one-to-one LUT span around `v_center`.
pub fn one_to_one_span(cfg: &SlowChirpConfig, f_star_hz: f64, v_center: f64) -> (f64, f64) {
    let half = 0.5 * one_turn_width(cfg, f_star_hz, v_center) * (1.0 - 1e-3);
    (v_center - half, v_center + half)
}

impl VelocityLut {
    /// Velocity whose model angle equals `angle` (mod 2π), if any.
    pub fn invert(&self, angle: f64) -> Option<f64> {
        let u = &self.unwrapped_rad;
        let first = u[0];
        let increasing = u[u.len() - 1] > first;
        let r = (angle - first).rem_euclid(2.0 * PI);
        let target = if increasing { first + r } else { first + r - 2.0 * PI };
        let target = if !increasing && r == 0.0 { first } else { target };
        let (lo, hi) = if increasing { (first, u[u.len() - 1]) } else { (u[u.len() - 1], first) };
        if target < lo || target > hi {
            return None;
        }
        let i = u
            .windows(2)
            .position(|w| (w[0] - target) * (w[1] - target) <= 0.0)?;
        let frac = if u[i + 1] == u[i] {
            0.0
        } else {
            (target - u[i]) / (u[i + 1] - u[i])
        };
        let v = &self.velocity_mps;
        Some(v[i] + frac * (v[i + 1] - v[i]))
    }

    pub fn span(&self) -> (f64, f64) {
        (self.velocity_mps[0], *self.velocity_mps.last().unwrap())
    }

    pub fn step(&self) -> f64 {
        self.velocity_mps[1] - self.velocity_mps[0]
    }

    /// Columns `velocity_mps, angle_rad, integral_abs`.
    pub fn write_dsv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let rows: Vec<Vec<f64>> = self
            .velocity_mps
            .iter()
            .zip(&self.angle_rad)
            .zip(&self.model)
            .map(|((v, a), m)| vec![*v, *a, m.norm()])
            .collect();
        write_table(w, &["velocity_mps", "angle_rad", "integral_abs"], &rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Velocity span covered by the base channel.
    pub v_min_mps: f64,
    pub v_max_mps: f64,
    pub coarse_step_mps: f64,
    pub lut_points: usize,
    /// Bound on `|Im γ̃| / Re γ̃` of the implied reflectivity.
    pub residual_tol: f64,
    pub origin_re: f64,
    pub origin_im: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            v_min_mps: -40.0,
            v_max_mps: 40.0,
            coarse_step_mps: 2.0,
            lut_points: 257,
            residual_tol: 0.05,
            origin_re: 0.0,
            origin_im: 0.0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.v_max_mps > self.v_min_mps) {
            return Err(Error::Config("estimator velocity span must be increasing".into()));
        }
        if !(self.coarse_step_mps > 0.0) || self.coarse_step_mps * 2.0 > self.v_max_mps - self.v_min_mps {
            return Err(Error::Config("coarse step must be positive and fit the span twice".into()));
        }
        if self.lut_points < 3 {
            return Err(Error::Config("velocity LUT needs at least three points".into()));
        }
        if !(self.residual_tol > 0.0) {
            return Err(Error::Config("residual tolerance must be positive".into()));
        }
        Ok(())
    }

    fn origin(&self) -> Complex64 {
        Complex64::new(self.origin_re, self.origin_im)
    }
}

/// Result of one single-sweep estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlowEstimate {
    pub range_m: f64,
    pub velocity_mps: f64,
    pub f_star_hz: f64,
    pub coarse_velocity_mps: f64,
    pub doppler_offset_hz: f64,
    pub lut_span_mps: (f64, f64),
    pub lut_step_mps: f64,
    /// `Im γ̃ / Re γ̃` of the implied reflectivity.
    pub residual: f64,
    pub reflectivity: f64,
}

fn dechirp_quadratic(samples: &[Complex64], cfg: &SlowChirpConfig, nu: f64, offset_hz: f64) -> Vec<Complex64> {
    let alpha = cfg.slope();
    samples
        .iter()
        .enumerate()
        .map(|(n, y)| {
            let t = cfg.sample_time(n);
            let cycles = (nu * alpha * t * t).fract() + (offset_hz * t).fract();
            y * Complex64::from_polar(1.0, -2.0 * PI * cycles)
        })
        .collect()
}

/// Joint range/velocity estimate from one sweep; `doppler_offset_hz` shifts
/// the velocity channel.
pub fn estimate_with_offset(
    samples: &[Complex64],
    cfg: &SlowChirpConfig,
    est: &EstimatorConfig,
    doppler_offset_hz: f64,
) -> Result<SlowEstimate> {
    est.validate()?;
    if samples.len() != cfg.num_samples() {
        return Err(Error::Dimension {
            expected: (1, cfg.num_samples()),
            got: (1, samples.len()),
        });
    }
    let v_shift = doppler_offset_hz * SPEED_OF_LIGHT / (2.0 * cfg.carrier_hz);
    let to_nu = |v: f64| 2.0 * v / SPEED_OF_LIGHT;

    // Coarse search over the residual quadratic term.
    let steps = ((est.v_max_mps - est.v_min_mps) / est.coarse_step_mps).round() as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| est.v_min_mps + v_shift + i as f64 * (est.v_max_mps - est.v_min_mps) / steps as f64)
        .collect();
    let coarse_mag: Vec<f64> = grid
        .iter()
        .map(|&v| {
            let comp = dechirp_quadratic(samples, cfg, to_nu(v), doppler_offset_hz);
            refined_peak(&comp, cfg, 1e-4).map(|p| p.value.norm_sqr())
        })
        .collect::<Result<_>>()?;
    let k = argmax(&coarse_mag);
    if k == 0 || k == grid.len() - 1 {
        return Err(Error::AmbiguousVelocity(format!(
            "energy peaks at the edge {:.2} m/s of the channel span [{:.2}, {:.2}] m/s",
            grid[k],
            grid[0],
            grid[grid.len() - 1]
        )));
    }
    let peak_of = |v: f64| -> Result<SpectrumPeak> {
        spectrum_peak(&dechirp_quadratic(samples, cfg, to_nu(v), doppler_offset_hz), cfg)
    };
    let v_c = golden_max(
        |v| peak_of(v).map(|p| p.value.norm_sqr()).unwrap_or(0.0),
        grid[k - 1],
        grid[k + 1],
        1e-9,
    );
    let f_star = peak_of(v_c)?.f_star_hz + doppler_offset_hz;
    let y_star = dtft(samples, cfg, f_star);

    let span = one_to_one_span(cfg, f_star, v_c);
    let step = (span.1 - span.0) / (est.lut_points - 1) as f64;
    let lut = build_velocity_lut(cfg, f_star, span, step, est.origin())?;
    let v_hat = lut.invert((y_star - est.origin()).arg()).ok_or_else(|| {
        Error::AmbiguousVelocity(format!(
            "measured angle {:.4} rad outside the LUT span [{:.5}, {:.5}] m/s",
            y_star.arg(),
            span.0,
            span.1
        ))
    })?;
    let gamma = y_star / lut_model(cfg, f_star, v_hat);
    let residual = gamma.im / gamma.re;
    if !(gamma.re > 0.0) || residual.abs() >= est.residual_tol {
        return Err(Error::AmbiguousVelocity(format!(
            "implied reflectivity {gamma:.3e} is not real and positive"
        )));
    }
    let nu_hat = to_nu(v_hat);
    Ok(SlowEstimate {
        range_m: SPEED_OF_LIGHT * (cfg.carrier_hz * nu_hat - f_star) / (2.0 * cfg.slope()),
        velocity_mps: v_hat,
        f_star_hz: f_star,
        coarse_velocity_mps: v_c,
        doppler_offset_hz,
        lut_span_mps: lut.span(),
        lut_step_mps: lut.step(),
        residual,
        reflectivity: gamma.re,
    })
}

pub fn estimate_range_velocity(samples: &[Complex64], cfg: &SlowChirpConfig, est: &EstimatorConfig) -> Result<SlowEstimate> {
    estimate_with_offset(samples, cfg, est, 0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelOutcome {
    pub offset_hz: f64,
    pub result: Result<SlowEstimate>,
}

/// Runs the estimator on parallel Doppler-offset channels and returns the
/// passing channel with the smallest residual, together with all outcomes.
pub fn doppler_offset_channels(
    samples: &[Complex64],
    cfg: &SlowChirpConfig,
    est: &EstimatorConfig,
    offsets_hz: &[f64],
) -> Result<(SlowEstimate, Vec<ChannelOutcome>)> {
    if offsets_hz.is_empty() {
        return domain("at least one Doppler offset channel is needed");
    }
    for (i, a) in offsets_hz.iter().enumerate() {
        if offsets_hz[..i].contains(a) {
            return domain(format!("duplicate Doppler offset {a} Hz"));
        }
    }
    let outcomes: Vec<ChannelOutcome> = offsets_hz
        .iter()
        .map(|&o| ChannelOutcome {
            offset_hz: o,
            result: estimate_with_offset(samples, cfg, est, o),
        })
        .collect();
    let best = outcomes
        .iter()
        .filter_map(|c| c.result.as_ref().ok())
        .min_by(|a, b| a.residual.abs().total_cmp(&b.residual.abs()))
        .cloned();
    match best {
        Some(b) => Ok((b, outcomes)),
        None => {
            let why: Vec<String> = outcomes
                .iter()
                .map(|c| format!("{:+.0} Hz: {}", c.offset_hz, c.result.as_ref().unwrap_err()))
                .collect();
            Err(Error::AmbiguousVelocity(format!("no channel resolved the target ({})", why.join("; "))))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConflictRound {
    /// Radars sharing a channel with at least one other radar.
    pub conflicted_radars: usize,
    /// Unordered radar pairs on the same channel.
    pub conflict_pairs: usize,
}

/// Radars pick channels uniformly; every radar in conflict redraws in the
/// next round. One entry per round.
pub fn random_channel_protocol<R: Rng + ?Sized>(
    num_radars: usize,
    num_channels: u64,
    rounds: usize,
    rng: &mut R,
) -> Result<Vec<ConflictRound>> {
    if num_channels == 0 {
        return domain("at least one channel is needed");
    }
    let mut channel: Vec<u64> = (0..num_radars).map(|_| rng.random_range(0..num_channels)).collect();
    let mut out = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let mut occupancy: HashMap<u64, usize> = HashMap::new();
        for c in &channel {
            *occupancy.entry(*c).or_default() += 1;
        }
        let conflict_pairs = occupancy.values().map(|&n| n * (n - 1) / 2).sum();
        let conflicted: Vec<usize> = (0..num_radars).filter(|&i| occupancy[&channel[i]] > 1).collect();
        out.push(ConflictRound {
            conflicted_radars: conflicted.len(),
            conflict_pairs,
        });
        for i in conflicted {
            channel[i] = rng.random_range(0..num_channels);
        }
    }
    Ok(out)
}

/// Expected number of colliding pairs among `k` uniform draws over `n` channels.
pub fn expected_conflict_pairs(k: usize, n: u64) -> f64 {
    (k * k.saturating_sub(1)) as f64 / (2.0 * n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SlowChirpConfig {
        SlowChirpConfig::for_envelope(77e9, 1e9, 10e-3, 60_000, 0, 150.0, 40.0).unwrap()
    }

    #[test]
    fn channel_count_anchor() {
        assert_eq!(max_channels(10e-3, 1e9, 10.0, 500.0).unwrap(), 63_245);
        assert_eq!(max_channels(10e-3, 1e9, 40.0, 500.0).unwrap(), 126_491);
        assert_eq!(max_channels(10e-3, 1e9, 10.0, f64::INFINITY).unwrap(), 0);
        assert!(max_channels(0.0, 1e9, 10.0, 500.0).is_err());
    }

    #[test]
    fn coupling_values() {
        let c = coupling(0.158e-6, 1e9, 10e-3).unwrap();
        assert!((10.0 * c.bound.log10() + 53.9).abs() < 0.05);
        assert!(c.exact <= c.bound);
        assert_eq!(coupling(0.0, 1e9, 10e-3).unwrap().exact, 1.0);
        assert!(coupling(1e-15, 1e9, 10e-3).unwrap().exact > 0.999_999);
        assert!(coupling(-1e-9, 1e9, 10e-3).is_err());
        assert!(coupling(10e-3, 1e9, 10e-3).is_err());
    }

    #[test]
    fn phi0_forms_agree() {
        let alpha = 1e11;
        let (fc, tau, nu) = (77e9, 5.3e-7, 1.6e-7);
        let f_star = fc * nu - alpha * tau;
        let a = phi0(alpha, fc, tau);
        let b = phi0_from_peak(alpha, fc, nu, f_star);
        assert!((a - b).abs() <= 1e-9 * a.abs());
    }

    #[test]
    fn static_target_is_a_pure_tone() {
        let c = cfg();
        let t = Target::new(80.0, 0.0, 1.0).unwrap();
        let y = dechirp_slow(&t, &c, 1.0, &NoiseConfig::off()).unwrap();
        let p = spectrum_peak(&y, &c).unwrap();
        let f = -c.slope() * t.delay_s();
        assert!((p.f_star_hz - f).abs() < 1e-3, "{} {}", p.f_star_hz, f);
        let expect = Complex64::from_polar(c.duration_s, phi0(c.slope(), c.carrier_hz, t.delay_s()));
        assert!((p.value - expect).norm() < 1e-6 * c.duration_s, "{} {} {}", p.value, expect, p.f_star_hz - f);
        assert!(spectrum_peak(&[], &c).is_err());
    }

    #[test]
    fn velocity_integral_at_rest() {
        let i = velocity_integral(0.0, 1e11, 10e-3);
        assert!((i - Complex64::new(10e-3, 0.0)).norm() < 1e-12);
        let moving = velocity_integral(2.0 * 30.0 / SPEED_OF_LIGHT, 1e11, 10e-3);
        assert!(moving.norm() < i.norm());
    }

    #[test]
    fn quadratic_term_matters_for_long_chirps() {
        let nu = 2.0 * 30.0 / SPEED_OF_LIGHT;
        assert!(quadratic_phase(nu, 1e11, 10e-3) > PI / 4.0);
        assert!(quadratic_phase(nu, 1e9 / 20e-6, 20e-6) < PI / 4.0);
    }

    #[test]
    fn protocol_single_radar_never_conflicts() {
        let mut rng = rng_from_seed(3);
        let r = random_channel_protocol(1, 1, 5, &mut rng).unwrap();
        assert!(r.iter().all(|c| c.conflict_pairs == 0));
        let r = random_channel_protocol(3, 1, 3, &mut rng).unwrap();
        assert!(r.iter().all(|c| c.conflict_pairs == 3));
        assert!(random_channel_protocol(3, 0, 3, &mut rng).is_err());
    }

    #[test]
    fn wrap_and_unwrap() {
        assert!((wrap(3.0 * PI) - PI).abs() < 1e-12);
        let u = unwrap(&[3.0, -3.0, -2.5]);
        assert!((u[1] - (2.0 * PI - 3.0)).abs() < 1e-12);
    }
}
