//! FMCW waveform, beat-signal synthesis and range-Doppler processing.
//!
//! A CPI of `K` chirps is dechirped against the transmit ramp and sampled at
//! `T_s` over `τ_max ≤ t ≤ T`, giving the slow-time × fast-time matrix
//!
//! ```text
//! y[k, n] = γ · exp(j2π(−ατ + f_c ν) n T_s) · exp(j2π f_c ν k T) + w[k, n],
//! n = n_max .. N−1
//! ```
//!
//! A 2-D DFT of this matrix peaks at `(τ − f_c ν / α, ν)`; [`correct_coupling`]
//! adds the Doppler-dependent delay shift back after detection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use crate::dsp::{fft_forward, fft_inverse, parabolic_offset, Window};
use crate::error::{domain, Error, Result};
use crate::rng::{complex_gaussian, rng_from_seed};
use crate::scenario::{NoiseConfig, Target};
use crate::units::{robust_floor, SPEED_OF_LIGHT};

/// Waveform and sampling parameters of one FMCW radar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub chirp_duration_s: f64,
    pub num_chirps: usize,
    /// Bandwidth of interest `B_s`; sets the maximum delay `τ_max = B_s / α`.
    pub interest_bandwidth_hz: f64,
    pub sample_period_s: f64,
    pub duty_cycle: f64,
    pub frame_duration_s: f64,
}

impl ChirpConfig {
    /// Config sampled at `T_s = 1 / B_s` with a frame exactly filled by the
    /// CPI (duty cycle 1).
    pub fn new(
        carrier_hz: f64,
        bandwidth_hz: f64,
        chirp_duration_s: f64,
        num_chirps: usize,
        interest_bandwidth_hz: f64,
    ) -> Result<Self> {
        let cfg = Self {
            carrier_hz,
            bandwidth_hz,
            chirp_duration_s,
            num_chirps,
            interest_bandwidth_hz,
            sample_period_s: 1.0 / interest_bandwidth_hz,
            duty_cycle: 1.0,
            frame_duration_s: num_chirps as f64 * chirp_duration_s,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Same waveform with duty cycle `u`; the frame stretches to `K T / u`.
    pub fn with_duty_cycle(mut self, duty_cycle: f64) -> Result<Self> {
        self.duty_cycle = duty_cycle;
        self.frame_duration_s = self.num_chirps as f64 * self.chirp_duration_s / duty_cycle;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier", self.carrier_hz),
            ("sweep bandwidth", self.bandwidth_hz),
            ("chirp duration", self.chirp_duration_s),
            ("interest bandwidth", self.interest_bandwidth_hz),
            ("sample period", self.sample_period_s),
            ("frame duration", self.frame_duration_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.num_chirps == 0 {
            return Err(Error::Config("num_chirps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.duty_cycle) {
            return Err(Error::Config(format!(
                "duty cycle must lie in [0, 1], got {}",
                self.duty_cycle
            )));
        }
        if self.interest_bandwidth_hz > self.bandwidth_hz {
            return Err(Error::Config("interest bandwidth B_s must not exceed B".into()));
        }
        if self.tau_max_s() > self.chirp_duration_s {
            return Err(Error::Config("tau_max = B_s/alpha must not exceed T".into()));
        }
        if self.num_samples() <= self.n_max() {
            return Err(Error::Config("chirp holds no samples after tau_max".into()));
        }
        let cpi = self.num_chirps as f64 * self.chirp_duration_s;
        if cpi > self.duty_cycle * self.frame_duration_s * (1.0 + 1e-9) {
            return Err(Error::Config(format!(
                "K·T = {cpi:.3e} s exceeds u·T_f = {:.3e} s",
                self.duty_cycle * self.frame_duration_s
            )));
        }
        Ok(())
    }

    /// Chirp slope `α = B / T`.
    pub fn slope(&self) -> f64 {
        self.bandwidth_hz / self.chirp_duration_s
    }

    pub fn tau_max_s(&self) -> f64 {
        self.interest_bandwidth_hz / self.slope()
    }

    pub fn wavelength_m(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Samples per chirp, `N = floor(T / T_s) + 1`.
    pub fn num_samples(&self) -> usize {
        robust_floor(self.chirp_duration_s / self.sample_period_s) as usize + 1
    }

    /// First retained sample, `n_max = floor(τ_max / T_s)`.
    pub fn n_max(&self) -> usize {
        robust_floor(self.tau_max_s() / self.sample_period_s) as usize
    }

    /// Number of retained fast-time samples, `N − n_max`.
    pub fn fast_len(&self) -> usize {
        self.num_samples() - self.n_max()
    }

    /// Coherent processing gain `K (N − n_max)`.
    pub fn processing_gain(&self) -> f64 {
        (self.num_chirps * self.fast_len()) as f64
    }

    /// Largest |v| the slow-time DFT resolves without wrapping, `λ / (4T)`.
    pub fn unambiguous_velocity_mps(&self) -> f64 {
        self.wavelength_m() / (4.0 * self.chirp_duration_s)
    }
}

/// Transmit phase `φ(t) = 2π (f_c t + α t² / 2)` within one chirp.
pub fn chirp_phase(cfg: &ChirpConfig, t: f64) -> Result<f64> {
    if !(0.0..=cfg.chirp_duration_s).contains(&t) {
        return domain(format!("t = {t} lies outside the chirp [0, {}]", cfg.chirp_duration_s));
    }
    Ok(2.0 * PI * (cfg.carrier_hz * t + 0.5 * cfg.slope() * t * t))
}

/// Slow-time × fast-time beat samples of one CPI.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatMatrix {
    rows: usize,
    cols: usize,
    samples: Vec<Complex64>,
    config: ChirpConfig,
}

impl BeatMatrix {
    pub fn zeros(config: ChirpConfig) -> Self {
        let (rows, cols) = (config.num_chirps, config.fast_len());
        Self {
            rows,
            cols,
            samples: vec![Complex64::new(0.0, 0.0); rows * cols],
            config,
        }
    }

    pub fn from_samples(config: ChirpConfig, samples: Vec<Complex64>) -> Result<Self> {
        let (rows, cols) = (config.num_chirps, config.fast_len());
        if samples.len() != rows * cols {
            return Err(Error::Dimension {
                expected: (rows, cols),
                got: (samples.len() / cols.max(1), cols),
            });
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return domain("beat samples must be finite");
        }
        Ok(Self {
            rows,
            cols,
            samples,
            config,
        })
    }

    pub fn config(&self) -> &ChirpConfig {
        &self.config
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    /// Sample of chirp `k` at column `col` (fast-time index `n_max + col`).
    pub fn get(&self, k: usize, col: usize) -> Complex64 {
        self.samples[k * self.cols + col]
    }

    pub fn row(&self, k: usize) -> &[Complex64] {
        &self.samples[k * self.cols..(k + 1) * self.cols]
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s.norm_sqr()).sum()
    }

    const MAGIC: &'static [u8; 8] = b"RIBEAT01";

    /// Little-endian dump: 32-byte header (magic, K, N, n_max as u64)
    /// followed by interleaved re/im f64 pairs in row-major order.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(Self::MAGIC)?;
        w.write_all(&(self.rows as u64).to_le_bytes())?;
        w.write_all(&(self.config.num_samples() as u64).to_le_bytes())?;
        w.write_all(&(self.config.n_max() as u64).to_le_bytes())?;
        for s in &self.samples {
            w.write_all(&s.re.to_le_bytes())?;
            w.write_all(&s.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R, config: ChirpConfig) -> Result<Self> {
        let mut header = [0u8; 32];
        r.read_exact(&mut header)?;
        if &header[..8] != Self::MAGIC {
            return Err(Error::Io("bad beat-matrix magic".into()));
        }
        let word = |i: usize| u64::from_le_bytes(header[8 * i..8 * i + 8].try_into().unwrap()) as usize;
        let (k, n, n_max) = (word(1), word(2), word(3));
        if k != config.num_chirps || n != config.num_samples() || n_max != config.n_max() {
            return Err(Error::Dimension {
                expected: (config.num_chirps, config.fast_len()),
                got: (k, n.saturating_sub(n_max)),
            });
        }
        let mut samples = Vec::with_capacity(k * (n - n_max));
        let mut buf = [0u8; 16];
        for _ in 0..k * (n - n_max) {
            r.read_exact(&mut buf)?;
            let re = f64::from_le_bytes(buf[..8].try_into().unwrap());
            let im = f64::from_le_bytes(buf[8..].try_into().unwrap());
            samples.push(Complex64::new(re, im));
        }
        Self::from_samples(config, samples)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(f))
    }
}

/// One reflecting target with its two-way power gain `|γ|²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Echo {
    pub target: Target,
    pub power_gain: f64,
}

impl Echo {
    pub fn amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.power_gain.sqrt(), self.target.phase_rad)
    }
}

/// Beat matrix of a set of point targets plus i.i.d. circular Gaussian noise.
pub fn synthesize_beat(cfg: &ChirpConfig, echoes: &[Echo], noise: &NoiseConfig) -> Result<BeatMatrix> {
    cfg.validate()?;
    let mut beat = BeatMatrix::zeros(*cfg);
    let n_max = cfg.n_max();
    let cols = cfg.fast_len();
    let alpha = cfg.slope();
    for echo in echoes {
        echo.target.validate()?;
        let tau = echo.target.delay_s();
        if tau > cfg.tau_max_s() {
            return Err(Error::OutOfRange {
                tau_s: tau,
                tau_max_s: cfg.tau_max_s(),
            });
        }
        let nu = echo.target.doppler();
        let gamma = echo.amplitude();
        // Cycles per fast-time sample and per chirp.
        let fast = (-alpha * tau + cfg.carrier_hz * nu) * cfg.sample_period_s;
        let slow = cfg.carrier_hz * nu * cfg.chirp_duration_s;
        for k in 0..cfg.num_chirps {
            let slow_phase = (slow * k as f64).fract();
            for col in 0..cols {
                let n = (n_max + col) as f64;
                let cycles = (fast * n).fract() + slow_phase;
                beat.samples[k * cols + col] += gamma * Complex64::from_polar(1.0, 2.0 * PI * cycles);
            }
        }
    }
    if noise.variance > 0.0 {
        let mut rng = rng_from_seed(noise.seed);
        for s in beat.samples.iter_mut() {
            *s += complex_gaussian(&mut rng, noise.variance);
        }
    }
    Ok(beat)
}

/// Periodogram `|z(τ̂, ν̂)|²` on the zero-padded DFT grid.
///
/// Storage is Doppler-major: `power[d * range_bins + r]`. The delay axis runs
/// over `[0, 1/(α T_s))`, the Doppler axis is centred on zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub power: Vec<f64>,
    pub range_bins: usize,
    pub doppler_bins: usize,
    pub delay_axis_s: Vec<f64>,
    pub doppler_axis: Vec<f64>,
    pub zero_pad: (usize, usize),
    pub config: ChirpConfig,
}

impl RangeDopplerMap {
    pub fn at(&self, doppler_bin: usize, range_bin: usize) -> f64 {
        self.power[doppler_bin * self.range_bins + range_bin]
    }

    fn at_wrapped(&self, d: isize, r: isize) -> f64 {
        let d = d.rem_euclid(self.doppler_bins as isize) as usize;
        let r = r.rem_euclid(self.range_bins as isize) as usize;
        self.at(d, r)
    }

    /// Delay spacing of one padded bin.
    pub fn delay_step_s(&self) -> f64 {
        self.delay_axis_s.get(1).copied().unwrap_or(0.0) - self.delay_axis_s[0]
    }

    pub fn doppler_step(&self) -> f64 {
        1.0 / (self.doppler_bins as f64 * self.config.carrier_hz * self.config.chirp_duration_s)
    }

    /// `(doppler_bin, range_bin)` of the global maximum.
    pub fn argmax(&self) -> (usize, usize) {
        let i = crate::dsp::argmax(&self.power);
        (i / self.range_bins, i % self.range_bins)
    }

    /// Sub-bin peak location `(τ̂, ν̂)` from 3-point parabolic fits on the
    /// log-power along each axis around `(doppler_bin, range_bin)`.
    pub fn refine(&self, doppler_bin: usize, range_bin: usize) -> (f64, f64) {
        let (d, r) = (doppler_bin as isize, range_bin as isize);
        let floor = self.at(doppler_bin, range_bin) * 1e-6;
        let lg = |v: f64| v.max(floor).max(1e-300).ln();
        let dr = parabolic_offset(
            lg(self.at_wrapped(d, r - 1)),
            lg(self.at_wrapped(d, r)),
            lg(self.at_wrapped(d, r + 1)),
        );
        let dd = parabolic_offset(
            lg(self.at_wrapped(d - 1, r)),
            lg(self.at_wrapped(d, r)),
            lg(self.at_wrapped(d + 1, r)),
        );
        let tau = (range_bin as f64 + dr) * self.delay_step_s();
        let nu = self.doppler_axis[doppler_bin] + dd * self.doppler_step();
        (tau, nu)
    }

    pub fn total_energy(&self) -> f64 {
        self.power.iter().sum()
    }
}

/// 2-D DFT periodogram of a beat matrix with optional taper and zero padding.
pub fn range_doppler_map(beat: &BeatMatrix, window: Window, zero_pad: (usize, usize)) -> RangeDopplerMap {
    let cfg = *beat.config();
    let (rows, cols) = beat.shape();
    let pad_r = zero_pad.0.max(1);
    let pad_d = zero_pad.1.max(1);
    let nr = cols * pad_r;
    let nd = rows * pad_d;
    let wf = window.coefficients(cols);
    let ws = window.coefficients(rows);

    // Range transform: z uses exp(+j2π α τ̂ n T_s), i.e. an inverse DFT.
    let mut range_rows = vec![Complex64::new(0.0, 0.0); rows * nr];
    for k in 0..rows {
        let buf = &mut range_rows[k * nr..(k + 1) * nr];
        for (col, s) in beat.row(k).iter().enumerate() {
            buf[col] = s * wf[col] * ws[k];
        }
        fft_inverse(buf);
    }

    let mut power = vec![0.0; nd * nr];
    let mut column = vec![Complex64::new(0.0, 0.0); nd];
    for r in 0..nr {
        column.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        for k in 0..rows {
            column[k] = range_rows[k * nr + r];
        }
        fft_forward(&mut column);
        for (d, v) in column.iter().enumerate() {
            // fftshift: bin nd/2 holds zero Doppler.
            let shifted = (d + nd / 2) % nd;
            power[shifted * nr + r] = v.norm_sqr();
        }
    }

    let alpha_ts = cfg.slope() * cfg.sample_period_s;
    let delay_axis_s = (0..nr).map(|b| b as f64 / (nr as f64 * alpha_ts)).collect();
    let doppler_axis = (0..nd)
        .map(|d| (d as f64 - (nd / 2) as f64) / (nd as f64 * cfg.carrier_hz * cfg.chirp_duration_s))
        .collect();
    RangeDopplerMap {
        power,
        range_bins: nr,
        doppler_bins: nd,
        delay_axis_s,
        doppler_axis,
        zero_pad: (pad_r, pad_d),
        config: cfg,
    }
}

/// Cell-averaging CFAR parameters. Index 0 is the range axis, 1 the Doppler axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CfarConfig {
    pub num_training: [usize; 2],
    pub num_guard: [usize; 2],
    pub target_pfa: f64,
    /// Cells weaker than the map maximum by more than this are never reported.
    #[serde(default = "default_dynamic_range")]
    pub dynamic_range_db: f64,
}

fn default_dynamic_range() -> f64 {
    120.0
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            num_training: [4, 2],
            num_guard: [4, 2],
            target_pfa: 1e-6,
            dynamic_range_db: default_dynamic_range(),
        }
    }
}

impl CfarConfig {
    pub fn training_cells(&self) -> usize {
        let outer = (2 * (self.num_guard[0] + self.num_training[0]) + 1)
            * (2 * (self.num_guard[1] + self.num_training[1]) + 1);
        let inner = (2 * self.num_guard[0] + 1) * (2 * self.num_guard[1] + 1);
        outer - inner
    }

    /// CA-CFAR multiplier `N_t (P_fa^{-1/N_t} − 1)` for exponential cells.
    pub fn threshold_scale(&self) -> f64 {
        let nt = self.training_cells() as f64;
        nt * (self.target_pfa.powf(-1.0 / nt) - 1.0)
    }
}

/// A detected peak with its coupling-corrected kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Detection {
    pub tau_hat_s: f64,
    pub nu_hat: f64,
    pub peak_power: f64,
    pub corrected_range_m: f64,
    pub velocity_mps: f64,
}

/// Per-cell CA-CFAR decision (threshold test only), Doppler-major like the map.
/// The map is treated as circular in both axes.
pub fn cfar_mask(map: &RangeDopplerMap, cfar: &CfarConfig) -> Result<Vec<bool>> {
    let half_r = cfar.num_guard[0] + cfar.num_training[0];
    let half_d = cfar.num_guard[1] + cfar.num_training[1];
    if 2 * half_r + 1 > map.range_bins || 2 * half_d + 1 > map.doppler_bins {
        return Err(Error::Config(format!(
            "CFAR window {}x{} does not fit in a {}x{} map",
            2 * half_r + 1,
            2 * half_d + 1,
            map.range_bins,
            map.doppler_bins
        )));
    }
    if !(cfar.target_pfa > 0.0 && cfar.target_pfa < 1.0) {
        return Err(Error::Config("target_pfa must lie in (0, 1)".into()));
    }
    if cfar.training_cells() == 0 {
        return Err(Error::Config("CFAR needs at least one training cell".into()));
    }
    let scale = cfar.threshold_scale();
    let nt = cfar.training_cells() as f64;
    let (gr, gd) = (cfar.num_guard[0], cfar.num_guard[1]);
    let table = CyclicSums::new(map, half_r, half_d);
    let mut mask = vec![false; map.power.len()];
    for d in 0..map.doppler_bins {
        for r in 0..map.range_bins {
            let outer = table.window(d, r, half_d, half_r);
            let inner = table.window(d, r, gd, gr);
            let noise = (outer - inner).max(0.0) / nt;
            mask[d * map.range_bins + r] = map.at(d, r) > scale * noise;
        }
    }
    Ok(mask)
}

/// Summed-area table over the map extended cyclically by `(pad_d, pad_r)`.
struct CyclicSums {
    sums: Vec<f64>,
    width: usize,
    pad_r: usize,
    pad_d: usize,
}

impl CyclicSums {
    fn new(map: &RangeDopplerMap, pad_r: usize, pad_d: usize) -> Self {
        let width = map.range_bins + 2 * pad_r + 1;
        let height = map.doppler_bins + 2 * pad_d + 1;
        let mut sums = vec![0.0; width * height];
        for y in 1..height {
            let mut row = 0.0;
            for x in 1..width {
                row += map.at_wrapped(y as isize - 1 - pad_d as isize, x as isize - 1 - pad_r as isize);
                sums[y * width + x] = sums[(y - 1) * width + x] + row;
            }
        }
        Self {
            sums,
            width,
            pad_r,
            pad_d,
        }
    }

    /// Sum over the `(2hd+1) x (2hr+1)` block centred on `(d, r)`.
    fn window(&self, d: usize, r: usize, hd: usize, hr: usize) -> f64 {
        let y0 = d + self.pad_d - hd;
        let y1 = d + self.pad_d + hd + 1;
        let x0 = r + self.pad_r - hr;
        let x1 = r + self.pad_r + hr + 1;
        let s = |y: usize, x: usize| self.sums[y * self.width + x];
        s(y1, x1) - s(y0, x1) - s(y1, x0) + s(y0, x0)
    }
}

/// CA-CFAR detection. Each cluster of threshold crossings is reported once, at
/// its local maximum, with coupling-corrected range and velocity.
pub fn cfar_detect(map: &RangeDopplerMap, cfar: &CfarConfig) -> Result<Vec<Detection>> {
    let mask = cfar_mask(map, cfar)?;
    let max = map.power.iter().cloned().fold(0.0, f64::max);
    let floor = max * 10f64.powf(-cfar.dynamic_range_db / 10.0);
    let mut out = Vec::new();
    for d in 0..map.doppler_bins {
        for r in 0..map.range_bins {
            let idx = d * map.range_bins + r;
            let p = map.power[idx];
            if !mask[idx] || p <= floor {
                continue;
            }
            let mut is_peak = true;
            'nb: for dd in -1isize..=1 {
                for dr in -1isize..=1 {
                    if (dd != 0 || dr != 0) && map.at_wrapped(d as isize + dd, r as isize + dr) > p {
                        is_peak = false;
                        break 'nb;
                    }
                }
            }
            if !is_peak {
                continue;
            }
            let (tau, nu) = map.refine(d, r);
            let raw = Detection {
                tau_hat_s: tau,
                nu_hat: nu,
                peak_power: p,
                corrected_range_m: 0.0,
                velocity_mps: 0.0,
            };
            out.push(correct_coupling(&raw, &map.config));
        }
    }
    out.sort_by(|a, b| b.peak_power.total_cmp(&a.peak_power));
    Ok(out)
}

/// Adds the range-Doppler coupling `f_c ν̂ / α` back to the delay estimate.
pub fn correct_coupling(det: &Detection, cfg: &ChirpConfig) -> Detection {
    let tau = det.tau_hat_s + cfg.carrier_hz * det.nu_hat / cfg.slope();
    Detection {
        corrected_range_m: SPEED_OF_LIGHT * tau / 2.0,
        velocity_mps: SPEED_OF_LIGHT * det.nu_hat / 2.0,
        ..*det
    }
}

/// Range and velocity resolution `(c / 2B, λ_c / 2KT)`.
pub fn resolution(cfg: &ChirpConfig) -> (f64, f64) {
    (
        SPEED_OF_LIGHT / (2.0 * cfg.bandwidth_hz),
        cfg.wavelength_m() / (2.0 * cfg.num_chirps as f64 * cfg.chirp_duration_s),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::argmax;

    fn fig3_cfg(k: usize) -> ChirpConfig {
        ChirpConfig::new(77e9, 1e9, 20e-6, k, 50e6).unwrap()
    }

    fn echo(r: f64, v: f64, g2: f64) -> Echo {
        Echo {
            target: Target::new(r, v, 1.0).unwrap(),
            power_gain: g2,
        }
    }

    #[test]
    fn derived_sizes() {
        let c = fig3_cfg(8);
        assert_eq!(c.num_samples(), 1001);
        assert_eq!(c.n_max(), 50);
        assert_eq!(c.fast_len(), 951);
        assert!((c.tau_max_s() - 1e-6).abs() < 1e-18);
        assert_eq!(c.processing_gain(), 8.0 * 951.0);
    }

    #[test]
    fn duty_cycle_validation() {
        assert!(fig3_cfg(8).with_duty_cycle(1.5).is_err());
        let mut c = fig3_cfg(8);
        c.frame_duration_s = 1e-6;
        assert!(c.validate().is_err());
    }

    #[test]
    fn phase_examples() {
        let c = fig3_cfg(4);
        assert_eq!(chirp_phase(&c, 0.0).unwrap(), 0.0);
        let mut c0 = c;
        c0.carrier_hz = 0.0;
        let swing = 2.0 * PI * 0.5 * c0.slope() * c0.chirp_duration_s.powi(2);
        assert!((swing - PI * c.bandwidth_hz * c.chirp_duration_s).abs() < 1e-6);
        let h = 1e-12;
        let t = c.chirp_duration_s / 2.0;
        let inst = (chirp_phase(&c, t + h).unwrap() - chirp_phase(&c, t - h).unwrap()) / (2.0 * h) / (2.0 * PI);
        assert!((inst / (c.carrier_hz + c.bandwidth_hz / 2.0) - 1.0).abs() < 1e-6);
        assert!(chirp_phase(&c, -1e-9).is_err());
        assert!(chirp_phase(&c, 21e-6).is_err());
    }

    #[test]
    fn zero_delay_target_is_constant() {
        let c = fig3_cfg(4);
        let mut e = echo(1.0, 0.0, 4.0);
        e.target.range_m = 1e-30;
        let b = synthesize_beat(&c, &[e], &NoiseConfig::off()).unwrap();
        assert!(b.samples().iter().all(|s| (s - Complex64::new(2.0, 0.0)).norm() < 1e-9));
    }

    #[test]
    fn beat_tone_at_70m() {
        let c = fig3_cfg(1);
        let b = synthesize_beat(&c, &[echo(70.0, 0.0, 1.0)], &NoiseConfig::off()).unwrap();
        // Successive-sample phase step gives the beat frequency.
        let step = (b.get(0, 1) * b.get(0, 0).conj()).arg() / (2.0 * PI * c.sample_period_s);
        let expected = -c.slope() * 2.0 * 70.0 / SPEED_OF_LIGHT;
        assert!((expected.abs() - 23.35e6).abs() < 0.01e6);
        assert!((step - expected).abs() < 1.0);
    }

    #[test]
    fn out_of_range_target_rejected() {
        let c = fig3_cfg(1);
        let err = synthesize_beat(&c, &[echo(200.0, 0.0, 1.0)], &NoiseConfig::off()).unwrap_err();
        assert!(matches!(err, Error::OutOfRange { .. }));
    }

    #[test]
    fn two_targets_one_bin_apart_resolve() {
        let c = fig3_cfg(1);
        // One DFT bin of the retained fast-time aperture.
        let bin = 1.0 / (c.slope() * c.fast_len() as f64 * c.sample_period_s);
        let r1 = SPEED_OF_LIGHT * 300.0 * bin / 2.0;
        let r2 = SPEED_OF_LIGHT * 301.0 * bin / 2.0;
        let (dr, _) = resolution(&c);
        assert!(((r2 - r1) / dr - 1.0).abs() < 0.06);
        let b = synthesize_beat(&c, &[echo(r1, 0.0, 1.0), echo(r2, 0.0, 1.0)], &NoiseConfig::off()).unwrap();
        let m = range_doppler_map(&b, Window::Rectangular, (1, 1));
        let strong: Vec<usize> = (0..m.range_bins).filter(|&r| m.at(0, r) > 0.5 * (c.fast_len() as f64).powi(2)).collect();
        assert_eq!(strong, vec![300, 301]);
    }

    #[test]
    fn peak_location_and_gain() {
        let c = fig3_cfg(16);
        let b = synthesize_beat(&c, &[echo(40.0, 12.0, 1.0)], &NoiseConfig::off()).unwrap();
        let m = range_doppler_map(&b, Window::Rectangular, (4, 4));
        let (d, r) = m.argmax();
        let t = echo(40.0, 12.0, 1.0).target;
        let tau_expected = t.delay_s() - c.carrier_hz * t.doppler() / c.slope();
        assert!((m.delay_axis_s[r] - tau_expected).abs() <= m.delay_step_s());
        assert!((m.doppler_axis[d] - t.doppler()).abs() <= m.doppler_step());
    }

    #[test]
    fn noiseless_peak_equals_processing_gain() {
        let c = fig3_cfg(8);
        // On-grid delay: fast-time frequency an integer number of bins.
        let bin = 1.0 / (c.slope() * c.fast_len() as f64 * c.sample_period_s);
        let r = SPEED_OF_LIGHT * 200.0 * bin / 2.0;
        let b = synthesize_beat(&c, &[echo(r, 0.0, 1.0)], &NoiseConfig::off()).unwrap();
        let m = range_doppler_map(&b, Window::Rectangular, (1, 1));
        let peak = m.power[argmax(&m.power)].sqrt();
        assert!((peak / c.processing_gain() - 1.0).abs() < 1e-9);

        let c2 = fig3_cfg(16);
        let b2 = synthesize_beat(&c2, &[echo(r, 0.0, 1.0)], &NoiseConfig::off()).unwrap();
        let m2 = range_doppler_map(&b2, Window::Rectangular, (1, 1));
        let peak2 = m2.power[argmax(&m2.power)].sqrt();
        assert!((peak2 / peak - 2.0).abs() < 1e-9);
    }

    #[test]
    fn parseval() {
        let c = ChirpConfig::new(77e9, 1e9, 2e-6, 8, 50e6).unwrap();
        let noise = NoiseConfig::new(0.5, 11).unwrap();
        let b = synthesize_beat(&c, &[echo(10.0, 3.0, 2.0)], &noise).unwrap();
        let m = range_doppler_map(&b, Window::Rectangular, (1, 1));
        let rel = m.total_energy() / (c.processing_gain() * b.energy()) - 1.0;
        assert!(rel.abs() < 1e-9);
        let mp = range_doppler_map(&b, Window::Rectangular, (4, 2));
        let rel = mp.total_energy() / (8.0 * c.processing_gain() * b.energy()) - 1.0;
        assert!(rel.abs() < 1e-9);
    }

    #[test]
    fn coupling_correction() {
        let c = fig3_cfg(64);
        let d = Detection {
            tau_hat_s: 3e-7,
            nu_hat: 0.0,
            peak_power: 1.0,
            corrected_range_m: 0.0,
            velocity_mps: 0.0,
        };
        let out = correct_coupling(&d, &c);
        assert!((out.corrected_range_m - SPEED_OF_LIGHT * 3e-7 / 2.0).abs() < 1e-12);

        let t = echo(70.0, 30.0, 1.0);
        let b = synthesize_beat(&c, &[t], &NoiseConfig::off()).unwrap();
        let m = range_doppler_map(&b, Window::Hann, (4, 4));
        let cfar = CfarConfig {
            num_training: [8, 4],
            num_guard: [12, 12],
            ..CfarConfig::default()
        };
        let dets = cfar_detect(&m, &cfar).unwrap();
        let best = dets[0];
        let (dr, dv) = resolution(&c);
        assert!((best.corrected_range_m - 70.0).abs() < dr);
        assert!((best.velocity_mps - 30.0).abs() < dv);
        // Receding target: apparent delay sits below the true delay.
        assert!(best.tau_hat_s < t.target.delay_s());
    }

    #[test]
    fn resolution_values() {
        let c = fig3_cfg(8);
        assert!((resolution(&c).0 - 0.1499).abs() < 1e-4);
        let c10 = ChirpConfig::new(79e9, 1e9, 20e-6, 99, 50e6).unwrap();
        assert!((resolution(&c10).1 - 0.959).abs() < 1e-3);
        let c20 = ChirpConfig::new(79e9, 1e9, 20e-6, 198, 50e6).unwrap();
        assert!((resolution(&c10).1 / resolution(&c20).1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn noiseless_target_single_cfar_cluster() {
        let c = ChirpConfig::new(77e9, 1e9, 4e-6, 16, 50e6).unwrap();
        let bin = 1.0 / (c.slope() * c.fast_len() as f64 * c.sample_period_s);
        let r = SPEED_OF_LIGHT * 40.0 * bin / 2.0;
        let b = synthesize_beat(&c, &[echo(r, 0.0, 1.0)], &NoiseConfig::off()).unwrap();
        let m = range_doppler_map(&b, Window::Rectangular, (1, 1));
        let cfar = CfarConfig {
            num_training: [4, 2],
            num_guard: [1, 1],
            target_pfa: 1e-4,
            dynamic_range_db: 120.0,
        };
        let dets = cfar_detect(&m, &cfar).unwrap();
        assert_eq!(dets.len(), 1);
        assert!((dets[0].tau_hat_s / m.delay_step_s() - 40.0).abs() < 1e-6);
    }

    #[test]
    fn cfar_window_must_fit() {
        let c = ChirpConfig::new(77e9, 1e9, 4e-6, 2, 50e6).unwrap();
        let b = synthesize_beat(&c, &[], &NoiseConfig::off()).unwrap();
        let m = range_doppler_map(&b, Window::Rectangular, (1, 1));
        assert!(matches!(cfar_mask(&m, &CfarConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn beat_dump_roundtrip() {
        let c = ChirpConfig::new(77e9, 1e9, 2e-6, 3, 50e6).unwrap();
        let b = synthesize_beat(&c, &[echo(10.0, 1.0, 1.0)], &NoiseConfig::new(0.1, 2).unwrap()).unwrap();
        let mut bytes = Vec::new();
        b.write_to(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 32 + 16 * 3 * c.fast_len());
        let back = BeatMatrix::read_from(bytes.as_slice(), c).unwrap();
        assert_eq!(back, b);
    }
}
