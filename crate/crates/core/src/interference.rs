//! Single-link FMCW interference, oscillator phase noise and the
//! interference-probability / SIR rules of thumb.
//!
//! The interferer is evaluated analytically per victim sample. At victim time
//! `t = kT + nT_s` the received interferer chirp has local time `s` (after the
//! one-way delay and start offset), and the dechirped sample is
//! `γ_int · x · exp(j(φ_int(s) − φ(nT_s)))` with `x ∈ {0, 1}` set by whether the
//! instantaneous beat frequency `f̃_c − f_c + α̃ s − α nT_s` falls inside the
//! victim's `[−B_s, 0]` passband.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::dsp::{fft_inverse, half_power_width, Window};
use crate::error::{domain, Error, Result};
use crate::fmcw::{BeatMatrix, ChirpConfig, Echo};
use crate::rng::stream::{INTERFERENCE, PHASE_NOISE};
use crate::rng::{child_rng, derive_seed, rng_from_seed, standard_normal};
use crate::units::{db_to_lin, robust_floor, SPEED_OF_LIGHT};

/// White-FM oscillator phase noise with a Lorentzian phase PSD
/// `S(f) = L_p / (1 + (f / W_p)²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseNoiseConfig {
    pub pedestal_height_dbc_hz: f64,
    pub pedestal_width_hz: f64,
    pub seed: u64,
}

impl PhaseNoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pedestal_width_hz > 0.0 && self.pedestal_width_hz.is_finite()) {
            return Err(Error::Config("phase-noise pedestal width must be positive".into()));
        }
        if self.pedestal_height_dbc_hz.is_nan() || self.pedestal_height_dbc_hz == f64::INFINITY {
            return Err(Error::Config("phase-noise pedestal height must be a finite level or -inf".into()));
        }
        Ok(())
    }

    /// Two-sided phase PSD in rad²/Hz. Below `W_p / 100` the Lorentzian is
    /// already flat to within 1e-4, so no separate truncation is applied.
    pub fn psd(&self, f: f64) -> f64 {
        let x = f / self.pedestal_width_hz;
        db_to_lin(self.pedestal_height_dbc_hz) / (1.0 + x * x)
    }

    /// Total phase variance `π L_p W_p`.
    pub fn variance(&self) -> f64 {
        PI * db_to_lin(self.pedestal_height_dbc_hz) * self.pedestal_width_hz
    }
}

/// Real Gaussian phase trajectory of `n` samples at `rate_hz`, generated by
/// shaping white complex noise in the frequency domain.
pub fn sample_phase_noise(cfg: &PhaseNoiseConfig, n: usize, rate_hz: f64) -> Result<Vec<f64>> {
    let mut rng = rng_from_seed(cfg.seed);
    shaped_phase(cfg, n, rate_hz, &mut rng)
}

fn shaped_phase<R: Rng>(cfg: &PhaseNoiseConfig, n: usize, rate_hz: f64, rng: &mut R) -> Result<Vec<f64>> {
    cfg.validate()?;
    if n == 0 || !(rate_hz > 0.0) {
        return domain("phase-noise generation needs n > 0 and a positive rate");
    }
    if cfg.pedestal_height_dbc_hz == f64::NEG_INFINITY {
        return Ok(vec![0.0; n]);
    }
    let len = n.next_power_of_two();
    let df = rate_hz / len as f64;
    let mut spec: Vec<Complex64> = (0..len)
        .map(|k| {
            let f = if k < len / 2 { k as f64 } else { k as f64 - len as f64 } * df;
            let a = (cfg.psd(f) * df).sqrt();
            let xi = Complex64::new(standard_normal(rng), standard_normal(rng)) * 0.5f64.sqrt();
            xi * a
        })
        .collect();
    fft_inverse(&mut spec);
    Ok(spec[..n].iter().map(|z| 2f64.sqrt() * z.re).collect())
}

/// A phase-noise trajectory on a uniform time grid, read by linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNoiseTrack {
    start_s: f64,
    rate_hz: f64,
    phase: Vec<f64>,
}

impl PhaseNoiseTrack {
    /// Covers `[start_s, end_s]`. The generated record spans at least
    /// `max(1 ms, 100 / W_p)` so the flat part of the spectrum is resolved;
    /// the fixed floor keeps the record length, and hence the draw, identical
    /// across pedestal widths above 100 kHz for a given seed.
    pub fn generate(cfg: &PhaseNoiseConfig, start_s: f64, end_s: f64, rate_hz: f64, seed: u64) -> Result<Self> {
        let span = (end_s - start_s).max(1e-3).max(100.0 / cfg.pedestal_width_hz);
        let n = (span * rate_hz).ceil() as usize + 2;
        let mut rng = rng_from_seed(seed);
        Ok(Self {
            start_s,
            rate_hz,
            phase: shaped_phase(cfg, n, rate_hz, &mut rng)?,
        })
    }

    pub fn at(&self, t: f64) -> f64 {
        let x = ((t - self.start_s) * self.rate_hz).max(0.0);
        let i = (x.floor() as usize).min(self.phase.len() - 2);
        let w = (x - i as f64).min(1.0);
        self.phase[i] * (1.0 - w) + self.phase[i + 1] * w
    }
}

/// Waveform and link parameters of one interfering radar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfererSpec {
    pub sweep_bandwidth_hz: f64,
    pub chirp_duration_s: f64,
    /// Carrier offset `f̃_c − f_c`.
    #[serde(default)]
    pub carrier_offset_hz: f64,
    #[serde(default = "one")]
    pub duty_cycle: f64,
    /// Interferer frame; chirps are transmitted back to back over the first
    /// `u·T̃_f` of each frame. Defaults to one chirp duration.
    #[serde(default)]
    pub frame_duration_s: Option<f64>,
    /// Transmit-time misalignment. `None` draws it uniformly over one frame
    /// from `offset_seed`.
    #[serde(default)]
    pub start_offset_s: Option<f64>,
    #[serde(default)]
    pub offset_seed: u64,
    pub oneway_delay_s: f64,
    /// `|γ_int|²`.
    pub power_gain: f64,
    #[serde(default)]
    pub phase_noise: Option<PhaseNoiseConfig>,
}

fn one() -> f64 {
    1.0
}

impl InterfererSpec {
    /// Continuous (u = 1) interferer with a fixed start offset.
    pub fn new(sweep_bandwidth_hz: f64, chirp_duration_s: f64, distance_m: f64, power_gain: f64) -> Result<Self> {
        let s = Self {
            sweep_bandwidth_hz,
            chirp_duration_s,
            carrier_offset_hz: 0.0,
            duty_cycle: 1.0,
            frame_duration_s: None,
            start_offset_s: Some(0.0),
            offset_seed: 0,
            oneway_delay_s: distance_m / SPEED_OF_LIGHT,
            power_gain,
            phase_noise: None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sweep_bandwidth_hz > 0.0 && self.chirp_duration_s > 0.0) {
            return Err(Error::Config("interferer B and T must be positive".into()));
        }
        if !(self.oneway_delay_s >= 0.0) {
            return Err(Error::Config("interferer one-way delay must be non-negative".into()));
        }
        if !(self.power_gain >= 0.0) {
            return Err(Error::Config("interferer power gain must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.duty_cycle) {
            return Err(Error::Config("interferer duty cycle must lie in [0, 1]".into()));
        }
        if self.frame() < self.chirp_duration_s * (1.0 - 1e-12) {
            return Err(Error::Config("interferer frame shorter than one chirp".into()));
        }
        if let Some(pn) = &self.phase_noise {
            pn.validate()?;
        }
        Ok(())
    }

    pub fn slope(&self) -> f64 {
        self.sweep_bandwidth_hz / self.chirp_duration_s
    }

    pub fn frame(&self) -> f64 {
        self.frame_duration_s.unwrap_or(self.chirp_duration_s)
    }

    /// Chirps sent per frame, `floor(u T̃_f / T̃)`.
    pub fn active_chirps(&self) -> usize {
        robust_floor(self.duty_cycle * self.frame() / self.chirp_duration_s) as usize
    }

    /// Start offset in use: the fixed value or a uniform draw over one frame.
    pub fn resolved_offset(&self) -> f64 {
        match self.start_offset_s {
            Some(t0) => t0,
            None => {
                let mut rng = rng_from_seed(self.offset_seed);
                rng.random::<f64>() * self.frame()
            }
        }
    }
}

/// Dechirped interference over one CPI and its in-band indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceSamples {
    pub rows: usize,
    pub cols: usize,
    pub samples: Vec<Complex64>,
    pub indicator: Vec<bool>,
}

impl InterferenceSamples {
    pub fn on_fraction(&self) -> f64 {
        self.indicator.iter().filter(|x| **x).count() as f64 / self.indicator.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    /// Lengths of consecutive in-band runs along fast time, over all chirps.
    pub fn run_lengths(&self) -> Vec<usize> {
        let mut runs = Vec::new();
        for k in 0..self.rows {
            let mut len = 0;
            for &on in &self.indicator[k * self.cols..(k + 1) * self.cols] {
                if on {
                    len += 1;
                } else if len > 0 {
                    runs.push(len);
                    len = 0;
                }
            }
            if len > 0 {
                runs.push(len);
            }
        }
        runs
    }
}

/// Victim and interferer oscillator phase-noise tracks for one realization.
pub struct PhaseNoisePair {
    pub victim: PhaseNoiseTrack,
    pub interferer: PhaseNoiseTrack,
}

impl PhaseNoisePair {
    /// Independent tracks for realization `index`, long enough to cover the
    /// CPI and the delayed interferer time base.
    pub fn generate(cfg: &PhaseNoiseConfig, victim: &ChirpConfig, lag_s: f64, index: u64) -> Result<Self> {
        let rate = 4.0 / victim.sample_period_s;
        let end = victim.num_chirps as f64 * victim.chirp_duration_s;
        let lo = -(lag_s + victim.tau_max_s()) - 1.0 / rate;
        Ok(Self {
            victim: PhaseNoiseTrack::generate(cfg, lo, end, rate, derive_seed(cfg.seed, PHASE_NOISE, 2 * index))?,
            interferer: PhaseNoiseTrack::generate(cfg, lo, end, rate, derive_seed(cfg.seed, PHASE_NOISE, 2 * index + 1))?,
        })
    }
}

/// Dechirped interference samples. Phase noise is added when the spec carries
/// a [`PhaseNoiseConfig`] (realization 0).
pub fn dechirped_interference(victim: &ChirpConfig, intf: &InterfererSpec) -> Result<InterferenceSamples> {
    victim.validate()?;
    intf.validate()?;
    let tracks = match &intf.phase_noise {
        Some(pn) => Some(PhaseNoisePair::generate(
            pn,
            victim,
            intf.oneway_delay_s + intf.resolved_offset(),
            0,
        )?),
        None => None,
    };
    dechirped_interference_with(victim, intf, tracks.as_ref())
}

/// As [`dechirped_interference`] with caller-supplied phase-noise tracks.
pub fn dechirped_interference_with(
    victim: &ChirpConfig,
    intf: &InterfererSpec,
    tracks: Option<&PhaseNoisePair>,
) -> Result<InterferenceSamples> {
    let rows = victim.num_chirps;
    let cols = victim.fast_len();
    let n_max = victim.n_max();
    let alpha = victim.slope();
    let alpha_i = intf.slope();
    let t0 = intf.resolved_offset();
    let frame = intf.frame();
    let active = intf.active_chirps();
    let amp = intf.power_gain.sqrt();
    let bs = victim.interest_bandwidth_hz;
    let mut samples = vec![Complex64::new(0.0, 0.0); rows * cols];
    let mut indicator = vec![false; rows * cols];
    for k in 0..rows {
        for col in 0..cols {
            let t_loc = (n_max + col) as f64 * victim.sample_period_s;
            let t_abs = k as f64 * victim.chirp_duration_s + t_loc;
            let s_glob = t_abs - intf.oneway_delay_s - t0;
            let s_frame = s_glob.rem_euclid(frame);
            let chirp = (s_frame / intf.chirp_duration_s).floor() as usize;
            if chirp >= active {
                continue;
            }
            let s = s_frame - chirp as f64 * intf.chirp_duration_s;
            let f_beat = intf.carrier_offset_hz + alpha_i * s - alpha * t_loc;
            if !(-bs..=0.0).contains(&f_beat) {
                continue;
            }
            let cycles = (intf.carrier_offset_hz * s).fract()
                + (victim.carrier_hz * (s - t_loc)).fract()
                + (0.5 * (alpha_i * s * s - alpha * t_loc * t_loc)).fract();
            let mut phase = 2.0 * PI * cycles;
            if let Some(tr) = tracks {
                phase += tr.interferer.at(s_glob) - tr.victim.at(t_abs);
            }
            let i = k * cols + col;
            indicator[i] = true;
            samples[i] = Complex64::from_polar(amp, phase);
        }
    }
    Ok(InterferenceSamples {
        rows,
        cols,
        samples,
        indicator,
    })
}

/// Adds interference samples to a beat matrix.
pub fn inject(beat: &BeatMatrix, intf: &InterferenceSamples) -> Result<BeatMatrix> {
    if beat.shape() != (intf.rows, intf.cols) {
        return Err(Error::Dimension {
            expected: beat.shape(),
            got: (intf.rows, intf.cols),
        });
    }
    let mut out = beat.clone();
    for (y, x) in out.samples_mut().iter_mut().zip(&intf.samples) {
        *y += x;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceClass {
    Coherent,
    PartiallyCoherent,
    Incoherent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoherenceTolerances {
    /// Relative mismatch in α, T and B still counted as identical.
    pub relative_mismatch: f64,
    /// Beat-frequency drift across the fast-time aperture, in range bins,
    /// above which the interference is incoherent.
    pub spread_bins: f64,
}

impl Default for CoherenceTolerances {
    fn default() -> Self {
        Self {
            relative_mismatch: 1e-4,
            spread_bins: 10.0,
        }
    }
}

/// Range bins swept by the interference beat tone over one chirp aperture,
/// `|α̃ − α| ((N − n_max) T_s)²`.
pub fn beat_spread_bins(victim: &ChirpConfig, intf: &InterfererSpec) -> f64 {
    let aperture = victim.fast_len() as f64 * victim.sample_period_s;
    (intf.slope() - victim.slope()).abs() * aperture * aperture
}

pub fn classify_coherence(victim: &ChirpConfig, intf: &InterfererSpec, tol: &CoherenceTolerances) -> CoherenceClass {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let matched = rel(intf.slope(), victim.slope()) < tol.relative_mismatch
        && rel(intf.chirp_duration_s, victim.chirp_duration_s) < tol.relative_mismatch
        && rel(intf.sweep_bandwidth_hz, victim.bandwidth_hz) < tol.relative_mismatch;
    if matched && intf.phase_noise.is_none() {
        CoherenceClass::Coherent
    } else if beat_spread_bins(victim, intf) > tol.spread_bins {
        CoherenceClass::Incoherent
    } else {
        CoherenceClass::PartiallyCoherent
    }
}

/// Expected interference probability `f = u α τ_max / B`, clamped to [0, 1].
pub fn interference_probability(duty_cycle: f64, slope: f64, tau_max_s: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&duty_cycle) {
        return domain("duty cycle must lie in [0, 1]");
    }
    if !(slope > 0.0 && tau_max_s > 0.0 && bandwidth_hz > 0.0) {
        return domain("slope, tau_max and bandwidth must be positive");
    }
    Ok((duty_cycle * slope * tau_max_s / bandwidth_hz).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegimeAsymptote {
    pub regime: &'static str,
    /// Probability that a victim sample is hit; not defined for the fast-interferer regime.
    pub probability: Option<f64>,
    /// Duration of one contiguous interference burst.
    pub burst_duration_s: f64,
    /// Number of interferer chirps crossing the victim band per victim chirp.
    pub simultaneous: f64,
}

/// Asymptotic interference statistics for equal, much slower and much faster
/// interferer slopes.
pub fn regime_asymptotics(
    duty_cycle: f64,
    slope: f64,
    slope_interferer: f64,
    tau_max_s: f64,
    bandwidth_hz: f64,
    chirp_duration_s: f64,
) -> [RegimeAsymptote; 3] {
    let bs = slope * tau_max_s;
    [
        RegimeAsymptote {
            regime: "equal slopes",
            probability: Some(duty_cycle * bs / bandwidth_hz),
            burst_duration_s: chirp_duration_s,
            simultaneous: 1.0,
        },
        RegimeAsymptote {
            regime: "slower interferer",
            probability: Some(duty_cycle),
            burst_duration_s: bs / (slope - slope_interferer).abs(),
            simultaneous: 1.0,
        },
        RegimeAsymptote {
            regime: "faster interferer",
            probability: None,
            burst_duration_s: slope * tau_max_s / (slope_interferer - slope).abs(),
            simultaneous: slope_interferer / slope,
        },
    ]
}

/// Lower bound `|γ|² G_p² / (f |γ_int|² G_p G_I)` on the signal-to-interference ratio.
pub fn sir_bound(gamma2: f64, gamma_int2: f64, processing_gain: f64, interference_gain: f64, f: f64) -> Result<f64> {
    if !(1.0..=processing_gain).contains(&interference_gain) {
        return domain(format!(
            "G_I = {interference_gain} must lie in [1, G_p = {processing_gain}]"
        ));
    }
    if !(f > 0.0 && f <= 1.0) {
        return domain(format!("f = {f} must lie in (0, 1]"));
    }
    Ok(gamma2 * processing_gain / (f * gamma_int2 * interference_gain))
}

/// Geometry and waveform parameters for the factored SIR bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SirFactors {
    pub rcs_m2: f64,
    pub interferer_distance_m: f64,
    pub target_distance_m: f64,
    pub processing_gain: f64,
    pub bandwidth_hz: f64,
    pub duty_cycle: f64,
    pub slope: f64,
    pub tau_max_s: f64,
    pub interference_gain: f64,
}

/// Factored bound `σ r² / (4π d⁴) · G_p B / (u α τ_max G_I)`: a geometric
/// factor times a waveform factor.
pub fn sir_bound_factored(p: &SirFactors) -> Result<(f64, f64)> {
    if !(1.0..=p.processing_gain).contains(&p.interference_gain) {
        return domain("G_I must lie in [1, G_p]");
    }
    let geometric = p.rcs_m2 * p.interferer_distance_m.powi(2) / (4.0 * PI * p.target_distance_m.powi(4));
    let waveform = p.processing_gain * p.bandwidth_hz / (p.duty_cycle * p.slope * p.tau_max_s * p.interference_gain);
    Ok((geometric, waveform))
}

/// Fast-time samples of point targets with victim phase noise, `θ_v(t − τ) − θ_v(t)`.
pub fn target_samples(victim: &ChirpConfig, echoes: &[Echo], track: Option<&PhaseNoiseTrack>) -> Result<Vec<Complex64>> {
    let cols = victim.fast_len();
    let mut out = vec![Complex64::new(0.0, 0.0); victim.num_chirps * cols];
    let alpha = victim.slope();
    for e in echoes {
        let tau = e.target.delay_s();
        if tau > victim.tau_max_s() {
            return Err(Error::OutOfRange {
                tau_s: tau,
                tau_max_s: victim.tau_max_s(),
            });
        }
        let nu = e.target.doppler();
        let fast = (-alpha * tau + victim.carrier_hz * nu) * victim.sample_period_s;
        let slow = victim.carrier_hz * nu * victim.chirp_duration_s;
        let gamma = e.amplitude();
        for k in 0..victim.num_chirps {
            for col in 0..cols {
                let n = victim.n_max() + col;
                let mut phase = 2.0 * PI * ((fast * n as f64).fract() + (slow * k as f64).fract());
                if let Some(tr) = track {
                    let t = k as f64 * victim.chirp_duration_s + n as f64 * victim.sample_period_s;
                    phase += tr.at(t - tau) - tr.at(t);
                }
                out[k * cols + col] += gamma * Complex64::from_polar(1.0, phase);
            }
        }
    }
    Ok(out)
}

/// Fast-time power spectrum averaged over chirps, zero padded by `pad`.
/// Returns `(range_axis_m, power)`.
pub fn range_profile(victim: &ChirpConfig, samples: &[Complex64], window: Window, pad: usize) -> (Vec<f64>, Vec<f64>) {
    let cols = victim.fast_len();
    let len = cols * pad.max(1);
    let w = window.coefficients(cols);
    let mut power = vec![0.0; len];
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for row in samples.chunks(cols) {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for (i, s) in row.iter().enumerate() {
            buf[i] = s * w[i];
        }
        fft_inverse(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p += b.norm_sqr();
        }
    }
    let rows = (samples.len() / cols).max(1) as f64;
    power.iter_mut().for_each(|p| *p /= rows);
    let axis = (0..len)
        .map(|b| SPEED_OF_LIGHT * b as f64 / (len as f64 * victim.slope() * victim.sample_period_s) / 2.0)
        .collect();
    (axis, power)
}

/// Target and interference range profiles, averaged over phase-noise realizations.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedProfiles {
    pub range_m: Vec<f64>,
    pub target_clean: Vec<f64>,
    pub interference_clean: Vec<f64>,
    pub target_noisy: Vec<f64>,
    pub interference_noisy: Vec<f64>,
}

impl AveragedProfiles {
    /// 3-dB widths (in range bins of the unpadded grid) of the target and
    /// interference peaks, `(target, interference)`, for the noisy profiles.
    pub fn noisy_widths(&self, pad: usize) -> (f64, f64) {
        (peak_width(&self.target_noisy, pad), peak_width(&self.interference_noisy, pad))
    }

    pub fn clean_widths(&self, pad: usize) -> (f64, f64) {
        (peak_width(&self.target_clean, pad), peak_width(&self.interference_clean, pad))
    }
}

fn peak_width(power: &[f64], pad: usize) -> f64 {
    let peak = crate::dsp::argmax(power);
    half_power_width(power, peak) / pad as f64
}

/// Range profiles of a target and an interferer with and without phase noise.
/// The noisy profiles average the power spectra of `realizations` independent
/// phase-noise draws (victim and interferer oscillators independent).
pub fn averaged_range_profile(
    victim: &ChirpConfig,
    echo: &Echo,
    intf: &InterfererSpec,
    realizations: usize,
    pad: usize,
) -> Result<AveragedProfiles> {
    if realizations == 0 {
        return domain("at least one phase-noise realization is required");
    }
    let clean_intf = InterfererSpec {
        phase_noise: None,
        ..*intf
    };
    let target_clean = target_samples(victim, std::slice::from_ref(echo), None)?;
    let (range_m, target_clean) = range_profile(victim, &target_clean, Window::Rectangular, pad);
    let ic = dechirped_interference_with(victim, &clean_intf, None)?;
    let (_, interference_clean) = range_profile(victim, &ic.samples, Window::Rectangular, pad);

    let Some(pn) = intf.phase_noise else {
        return Ok(AveragedProfiles {
            range_m,
            target_noisy: target_clean.clone(),
            interference_noisy: interference_clean.clone(),
            target_clean,
            interference_clean,
        });
    };
    let lag = intf.oneway_delay_s + intf.resolved_offset();
    let per: Vec<(Vec<f64>, Vec<f64>)> = (0..realizations as u64)
        .into_par_iter()
        .map(|r| -> Result<(Vec<f64>, Vec<f64>)> {
            let tracks = PhaseNoisePair::generate(&pn, victim, lag, r)?;
            let t = target_samples(victim, std::slice::from_ref(echo), Some(&tracks.victim))?;
            let i = dechirped_interference_with(victim, &clean_intf, Some(&tracks))?;
            Ok((
                range_profile(victim, &t, Window::Rectangular, pad).1,
                range_profile(victim, &i.samples, Window::Rectangular, pad).1,
            ))
        })
        .collect::<Result<_>>()?;
    let len = range_m.len();
    let mut target_noisy = vec![0.0; len];
    let mut interference_noisy = vec![0.0; len];
    for (t, i) in &per {
        for b in 0..len {
            target_noisy[b] += t[b];
            interference_noisy[b] += i[b];
        }
    }
    let scale = 1.0 / realizations as f64;
    target_noisy.iter_mut().for_each(|v| *v *= scale);
    interference_noisy.iter_mut().for_each(|v| *v *= scale);
    Ok(AveragedProfiles {
        range_m,
        target_clean,
        interference_clean,
        target_noisy,
        interference_noisy,
    })
}

/// Interference-only beat-frequency interval `[f_lo, f_hi]` over in-band samples.
fn beat_interval(victim: &ChirpConfig, intf: &InterfererSpec, x: &InterferenceSamples) -> Option<(f64, f64)> {
    let t0 = intf.resolved_offset();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for k in 0..x.rows {
        for col in 0..x.cols {
            if !x.indicator[k * x.cols + col] {
                continue;
            }
            let t_loc = (victim.n_max() + col) as f64 * victim.sample_period_s;
            let t_abs = k as f64 * victim.chirp_duration_s + t_loc;
            let s = (t_abs - intf.oneway_delay_s - t0).rem_euclid(intf.frame()).rem_euclid(intf.chirp_duration_s);
            let f = intf.carrier_offset_hz + intf.slope() * s - victim.slope() * t_loc;
            lo = lo.min(f);
            hi = hi.max(f);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

/// SIR at the target's range bin predicted by the rule of thumb with
/// `f = n_on / (N − n_max)` and `G_I = (N − n_max) / S`, where `S` is the
/// number of bins the interference beat sweeps. Infinite when the sweep does
/// not reach the target bin.
pub fn predicted_local_sir(victim: &ChirpConfig, echo: &Echo, intf: &InterfererSpec) -> Result<f64> {
    let x = dechirped_interference_with(victim, &InterfererSpec { phase_noise: None, ..*intf }, None)?;
    let Some((lo, hi)) = beat_interval(victim, intf, &x) else {
        return Ok(f64::INFINITY);
    };
    let l = victim.fast_len() as f64;
    let bin = 1.0 / (l * victim.sample_period_s);
    let f_target = -victim.slope() * echo.target.delay_s() + victim.carrier_hz * echo.target.doppler();
    if f_target < lo - bin || f_target > hi + bin {
        return Ok(f64::INFINITY);
    }
    let spread = ((hi - lo) / bin).max(1.0);
    let on = x.indicator.iter().filter(|b| **b).count() as f64 / victim.num_chirps as f64;
    let gi = (l / spread).clamp(1.0, l);
    sir_bound(echo.power_gain, intf.power_gain, l, gi, on / l)
}

/// Measured ratio of the target peak to the mean interference power within
/// two range bins of the target, from zero-padded range profiles.
pub fn measured_local_sir(victim: &ChirpConfig, echo: &Echo, intf: &InterfererSpec, pad: usize) -> Result<f64> {
    let t = target_samples(victim, std::slice::from_ref(echo), None)?;
    let x = dechirped_interference_with(victim, &InterfererSpec { phase_noise: None, ..*intf }, None)?;
    let (axis, tp) = range_profile(victim, &t, Window::Rectangular, pad);
    let (_, ip) = range_profile(victim, &x.samples, Window::Rectangular, pad);
    let centre = nearest_bin(&axis, echo.target.range_m);
    let half = 2 * pad as isize;
    let n = ip.len() as isize;
    let window: Vec<f64> = (-half..=half)
        .map(|d| ip[(centre as isize + d).rem_euclid(n) as usize])
        .collect();
    let local = window.iter().sum::<f64>() / window.len() as f64;
    let peak = (-(pad as isize)..=pad as isize)
        .map(|d| tp[(centre as isize + d).rem_euclid(n) as usize])
        .fold(0.0, f64::max);
    Ok(peak / local)
}

fn nearest_bin(axis: &[f64], value: f64) -> usize {
    (0..axis.len())
        .min_by(|&a, &b| (axis[a] - value).abs().total_cmp(&(axis[b] - value).abs()))
        .unwrap_or(0)
}

/// One point of a slope-ratio sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub slope_ratio: f64,
    pub class: CoherenceClass,
    pub median_floor: f64,
    pub predicted_sir: f64,
    pub measured_sir: f64,
    pub range_m: Vec<f64>,
    /// Range profile of target plus interference.
    pub power: Vec<f64>,
}

impl SweepPoint {
    pub fn masked(&self) -> bool {
        self.measured_sir < 1.0
    }

    pub fn predicted_masked(&self) -> bool {
        self.predicted_sir < 1.0
    }
}

/// Range profiles of a target plus one interferer whose sweep bandwidth is
/// scaled by each ratio (chirp duration fixed, so `α̃/α` equals the ratio).
pub fn slope_ratio_sweep(
    victim: &ChirpConfig,
    echo: &Echo,
    base: &InterfererSpec,
    ratios: &[f64],
    pad: usize,
    tol: &CoherenceTolerances,
) -> Result<Vec<SweepPoint>> {
    let t = target_samples(victim, std::slice::from_ref(echo), None)?;
    ratios
        .iter()
        .map(|&ratio| {
            let intf = InterfererSpec {
                sweep_bandwidth_hz: victim.slope() * ratio * base.chirp_duration_s,
                ..*base
            };
            let x = dechirped_interference_with(victim, &intf, None)?;
            let sum: Vec<Complex64> = t.iter().zip(&x.samples).map(|(a, b)| a + b).collect();
            let (range_m, power) = range_profile(victim, &sum, Window::Rectangular, pad);
            Ok(SweepPoint {
                slope_ratio: ratio,
                class: classify_coherence(victim, &intf, tol),
                median_floor: crate::dsp::median(&power),
                predicted_sir: predicted_local_sir(victim, echo, &intf)?,
                measured_sir: measured_local_sir(victim, echo, &intf, pad)?,
                range_m,
                power,
            })
        })
        .collect()
}

/// Phase-noise-averaged range profiles in closed form, `(target, interference)`.
///
/// For a stationary Gaussian phase difference `Δ` the averaged periodogram is
/// `Σ_l ρ(l) A(l) e^{j2π b l / M}` with `A` the clean-sample autocorrelation
/// and `ρ(l) = exp(−(R_Δ(0) − R_Δ(l)))`. The Lorentzian phase PSD has
/// autocorrelation `R(x) = π L_p W_p e^{−2π W_p |x|}`.
pub fn expected_phase_noise_profiles(
    victim: &ChirpConfig,
    echo: &Echo,
    intf: &InterfererSpec,
    pn: &PhaseNoiseConfig,
    pad: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let ts = victim.sample_period_s;
    let r = |x: f64| pn.variance() * (-2.0 * PI * pn.pedestal_width_hz * x.abs()).exp();
    let tau = echo.target.delay_s();
    let r_target = |l: f64| 2.0 * r(l * ts) - r(l * ts + tau) - r(l * ts - tau);
    let rho_t = |l: f64| (-(r_target(0.0) - r_target(l))).exp();
    let rho_i = |l: f64| (-2.0 * (r(0.0) - r(l * ts))).exp();
    let target = target_samples(victim, std::slice::from_ref(echo), None)?;
    let clean = InterfererSpec {
        phase_noise: None,
        ..*intf
    };
    let interference = dechirped_interference_with(victim, &clean, None)?.samples;
    Ok((
        expected_periodogram(victim, &target, &rho_t, pad),
        expected_periodogram(victim, &interference, &rho_i, pad),
    ))
}

fn expected_periodogram(victim: &ChirpConfig, samples: &[Complex64], rho: &dyn Fn(f64) -> f64, pad: usize) -> Vec<f64> {
    let cols = victim.fast_len();
    let m = cols * pad.max(1);
    let rows = samples.len() / cols;
    // Lag spectrum: index l + cols - 1 holds lag l in (-cols, cols).
    let mut lag = vec![Complex64::new(0.0, 0.0); 2 * cols - 1];
    for row in samples.chunks(cols) {
        for l in 0..cols {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..cols - l {
                acc += row[n + l] * row[n].conj();
            }
            lag[cols - 1 + l] += acc;
            if l > 0 {
                lag[cols - 1 - l] += acc.conj();
            }
        }
    }
    for (i, a) in lag.iter_mut().enumerate() {
        *a *= rho(i as f64 - (cols - 1) as f64) / rows as f64;
    }
    // Fold lags modulo the padded length and evaluate all bins with one DFT.
    let mut folded = vec![Complex64::new(0.0, 0.0); m];
    for (i, a) in lag.iter().enumerate() {
        let l = i as isize - (cols - 1) as isize;
        folded[l.rem_euclid(m as isize) as usize] += a;
    }
    fft_inverse(&mut folded);
    folded.iter().map(|z| z.re.max(0.0)).collect()
}

/// Peak of the interference-only range-Doppler map over the peak of a real
/// target with gain `|γ_int|²` placed at the ghost's apparent range.
pub fn ghost_to_target_ratio(victim: &ChirpConfig, intf: &InterfererSpec, pad: usize) -> Result<f64> {
    let x = dechirped_interference(victim, intf)?;
    let pad = (pad.max(1), 1);
    let ghost = crate::fmcw::range_doppler_map(&inject(&BeatMatrix::zeros(*victim), &x)?, Window::Rectangular, pad);
    let (d, r) = ghost.argmax();
    let (tau, nu) = ghost.refine(d, r);
    let target = crate::scenario::Target::new(tau.max(1e-12) * SPEED_OF_LIGHT / 2.0, nu * SPEED_OF_LIGHT / 2.0, 1.0)?;
    let echo = Echo {
        target,
        power_gain: intf.power_gain,
    };
    let real = crate::fmcw::synthesize_beat(victim, &[echo], &crate::scenario::NoiseConfig::off())?;
    let real = crate::fmcw::range_doppler_map(&real, Window::Rectangular, pad);
    let peak = |p: &[f64]| p.iter().cloned().fold(0.0, f64::max);
    Ok(peak(&ghost.power) / peak(&real.power))
}

/// Uniformly distributed start offset for Monte-Carlo trial `index`.
pub fn with_random_offset(intf: &InterfererSpec, master_seed: u64, index: u64) -> InterfererSpec {
    let mut rng = child_rng(master_seed, INTERFERENCE, index);
    InterfererSpec {
        start_offset_s: Some(rng.random::<f64>() * intf.frame()),
        ..*intf
    }
}
