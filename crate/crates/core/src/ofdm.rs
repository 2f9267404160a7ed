//! Stepped-frequency OFDM radar: received-symbol cubes, matched filtering
//! with hop-coupling correction, delay/Doppler CRB and vehicle counts for
//! orthogonal time-frequency tiling.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp::golden_max;
use crate::error::{domain, Error, Result};
use crate::rng::complex_gaussian;
use crate::scenario::Target;
use crate::units::{db_to_lin, robust_floor, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Stepped,
    Narrowband,
    Wideband,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Stepped, Scheme::Narrowband, Scheme::Wideband];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Stepped => "stepped",
            Scheme::Narrowband => "narrowband",
            Scheme::Wideband => "wideband",
        })
    }
}

/// Carrier that scales the Doppler phase of frame `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DopplerCarrier {
    /// `f_0` for every frame: no delay-Doppler coupling.
    Base,
    /// The frame's hop carrier `f_m`.
    Hopped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteppedOfdmConfig {
    pub base_carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subcarriers: usize,
    pub frames: usize,
    pub symbols_per_frame: usize,
    pub cp_duration_s: f64,
    /// Carrier `f_m` of each frame.
    pub hop_carriers_hz: Vec<f64>,
    pub doppler_carrier: DopplerCarrier,
}

impl SteppedOfdmConfig {
    /// Linear stepping `f_m = f_0 + m·N·Δf`.
    pub fn linear(f0: f64, df: f64, n: usize, m: usize, l: usize, t_cp: f64) -> Result<Self> {
        let cfg = Self {
            base_carrier_hz: f0,
            subcarrier_spacing_hz: df,
            subcarriers: n,
            frames: m,
            symbols_per_frame: l,
            cp_duration_s: t_cp,
            hop_carriers_hz: (0..m).map(|k| f0 + (k * n) as f64 * df).collect(),
            doppler_carrier: DopplerCarrier::Base,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Randomly permuted hop order over the same carriers.
    pub fn with_shuffled_hops<R: Rng + ?Sized>(mut self, rng: &mut R) -> Self {
        self.hop_carriers_hz.shuffle(rng);
        self
    }

    pub fn with_doppler_carrier(mut self, d: DopplerCarrier) -> Self {
        self.doppler_carrier = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_carrier_hz > 0.0 && self.subcarrier_spacing_hz > 0.0 && self.cp_duration_s >= 0.0) {
            return Err(Error::Config("carrier and subcarrier spacing must be positive".into()));
        }
        if self.subcarriers == 0 || self.frames == 0 || self.symbols_per_frame == 0 {
            return Err(Error::Config("N, M and L must be at least 1".into()));
        }
        if self.hop_carriers_hz.len() != self.frames {
            return Err(Error::Dimension {
                expected: (self.frames, 1),
                got: (self.hop_carriers_hz.len(), 1),
            });
        }
        let bw = self.baseband_bandwidth_hz();
        let mut sorted = self.hop_carriers_hz.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[1] - w[0] < bw * (1.0 - 1e-12)) {
            return Err(Error::Config("hop carriers must be at least N·Δf apart".into()));
        }
        Ok(())
    }

    pub fn symbol_duration_s(&self) -> f64 {
        1.0 / self.subcarrier_spacing_hz + self.cp_duration_s
    }

    pub fn baseband_bandwidth_hz(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Span from the lowest to the highest occupied frequency.
    pub fn synthetic_bandwidth_hz(&self) -> f64 {
        let lo = self.hop_carriers_hz.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.hop_carriers_hz.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        hi - lo + self.baseband_bandwidth_hz()
    }

    pub fn aperture_time_s(&self) -> f64 {
        (self.frames * self.symbols_per_frame) as f64 * self.symbol_duration_s()
    }

    pub fn delay_bin_s(&self) -> f64 {
        1.0 / self.synthetic_bandwidth_hz()
    }

    pub fn doppler_bin(&self) -> f64 {
        1.0 / (self.base_carrier_hz * self.aperture_time_s())
    }

    pub fn len(&self) -> usize {
        self.frames * self.symbols_per_frame * self.subcarriers
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn doppler_scale_hz(&self, m: usize, hopped: bool) -> f64 {
        if hopped {
            self.hop_carriers_hz[m]
        } else {
            self.base_carrier_hz
        }
    }

    /// Slow time `(mL + ℓ + 1)T_sym` of symbol `ℓ` in frame `m`.
    fn symbol_time_s(&self, m: usize, l: usize) -> f64 {
        (m * self.symbols_per_frame + l + 1) as f64 * self.symbol_duration_s()
    }
}

/// Complex values over (frame, symbol, subcarrier), subcarrier fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Cube {
    pub frames: usize,
    pub symbols: usize,
    pub subcarriers: usize,
    pub data: Vec<Complex64>,
}

pub type SymbolGrid = Cube;
pub type RxCube = Cube;

impl Cube {
    pub fn zeros(cfg: &SteppedOfdmConfig) -> Self {
        Self {
            frames: cfg.frames,
            symbols: cfg.symbols_per_frame,
            subcarriers: cfg.subcarriers,
            data: vec![Complex64::new(0.0, 0.0); cfg.len()],
        }
    }

    pub fn ones(cfg: &SteppedOfdmConfig) -> Self {
        let mut c = Self::zeros(cfg);
        c.data.fill(Complex64::new(1.0, 0.0));
        c
    }

    /// Unit-modulus QPSK symbols.
    pub fn qpsk<R: Rng + ?Sized>(cfg: &SteppedOfdmConfig, rng: &mut R) -> Self {
        let mut c = Self::zeros(cfg);
        for x in &mut c.data {
            let k = rng.random_range(0..4u8) as f64;
            *x = Complex64::from_polar(1.0, PI / 4.0 + k * PI / 2.0);
        }
        c
    }

    pub fn at(&self, m: usize, l: usize, n: usize) -> Complex64 {
        self.data[(m * self.symbols + l) * self.subcarriers + n]
    }

    fn check(&self, cfg: &SteppedOfdmConfig) -> Result<()> {
        let want = (cfg.frames * cfg.symbols_per_frame, cfg.subcarriers);
        let got = (self.frames * self.symbols, self.subcarriers);
        if got != want || self.frames != cfg.frames || self.data.len() != cfg.len() {
            return Err(Error::Dimension { expected: want, got });
        }
        Ok(())
    }
}

fn phasor(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * cycles.rem_euclid(1.0))
}

/// `y = γ·x·e^{−j2π(f_m+nΔf)τ}·e^{j2π f_D,m (mL+ℓ+1)T_sym ν} + w`, with
/// complex Gaussian noise of variance `noise_var`.
pub fn simulate_rx_cube<R: Rng + ?Sized>(
    cfg: &SteppedOfdmConfig,
    grid: &SymbolGrid,
    target: &Target,
    gain: Complex64,
    noise_var: f64,
    rng: &mut R,
) -> Result<RxCube> {
    cfg.validate()?;
    grid.check(cfg)?;
    let tau = target.delay_s();
    let nu = target.doppler();
    if tau > cfg.cp_duration_s {
        return Err(Error::ModelViolation(format!(
            "delay {tau:.3e} s exceeds the cyclic prefix {:.3e} s",
            cfg.cp_duration_s
        )));
    }
    let fd = (cfg.base_carrier_hz * nu).abs();
    if fd > 0.1 * cfg.subcarrier_spacing_hz {
        return Err(Error::ModelViolation(format!(
            "Doppler shift {fd:.3e} Hz is not small against the {:.3e} Hz subcarrier spacing",
            cfg.subcarrier_spacing_hz
        )));
    }
    if !(noise_var >= 0.0) {
        return domain("noise variance must be non-negative");
    }
    let hopped = cfg.doppler_carrier == DopplerCarrier::Hopped;
    let mut y = Cube::zeros(cfg);
    let n_sc = cfg.subcarriers;
    for m in 0..cfg.frames {
        let fm = cfg.hop_carriers_hz[m];
        let delay: Vec<Complex64> = (0..n_sc)
            .map(|n| phasor(-(fm * tau) - (n as f64 * cfg.subcarrier_spacing_hz * tau)))
            .collect();
        let fdm = cfg.doppler_scale_hz(m, hopped);
        for l in 0..cfg.symbols_per_frame {
            let dop = gain * phasor(fdm * cfg.symbol_time_s(m, l) * nu);
            let base = (m * cfg.symbols_per_frame + l) * n_sc;
            for n in 0..n_sc {
                let mut v = dop * grid.data[base + n] * delay[n];
                if noise_var > 0.0 {
                    v += complex_gaussian(rng, noise_var);
                }
                y.data[base + n] = v;
            }
        }
    }
    Ok(y)
}

/// Search envelope of the matched filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayDopplerSearch {
    pub max_range_m: f64,
    pub max_speed_mps: f64,
    #[serde(default = "two")]
    pub delay_oversample: usize,
    #[serde(default = "two")]
    pub doppler_oversample: usize,
}

fn two() -> usize {
    2
}

impl DelayDopplerSearch {
    pub fn new(max_range_m: f64, max_speed_mps: f64) -> Self {
        Self {
            max_range_m,
            max_speed_mps,
            delay_oversample: 2,
            doppler_oversample: 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OfdmEstimate {
    pub delay_s: f64,
    pub doppler: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
    /// `|A(τ̂, ν̂)|²`.
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedFilterOutput {
    pub delays_s: Vec<f64>,
    pub dopplers: Vec<f64>,
    /// Doppler-major `|A|²`.
    pub power: Vec<f64>,
    pub estimate: OfdmEstimate,
}

/// Symbol-divided cube `z = y/x`.
fn divide_symbols(cube: &RxCube, grid: &SymbolGrid) -> Vec<Complex64> {
    cube.data.iter().zip(&grid.data).map(|(y, x)| y / x).collect()
}

/// `Z_{m,n}(ν) = Σ_ℓ z_{m,ℓ,n} e^{−j2π f_D,m (mL+ℓ+1)T_sym ν}`. Without
/// correction only the in-frame slow time `(ℓ+1)T_sym` at `f_0` is
/// compensated, as a per-frame Doppler DFT does.
fn doppler_compensate(z: &[Complex64], cfg: &SteppedOfdmConfig, nu: f64, corrected: bool) -> Vec<Complex64> {
    let n_sc = cfg.subcarriers;
    let hopped = cfg.doppler_carrier == DopplerCarrier::Hopped;
    let t_sym = cfg.symbol_duration_s();
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.frames * n_sc];
    for m in 0..cfg.frames {
        let row = &mut out[m * n_sc..(m + 1) * n_sc];
        for l in 0..cfg.symbols_per_frame {
            let cycles = if corrected {
                cfg.doppler_scale_hz(m, hopped) * cfg.symbol_time_s(m, l) * nu
            } else {
                cfg.base_carrier_hz * (l + 1) as f64 * t_sym * nu
            };
            let w = phasor(-cycles);
            let base = (m * cfg.symbols_per_frame + l) * n_sc;
            for (acc, v) in row.iter_mut().zip(&z[base..base + n_sc]) {
                *acc += v * w;
            }
        }
    }
    out
}

/// `Σ_{m,n} Z_{m,n} e^{j2π(f_m+nΔf)τ}`.
fn delay_sum(zmn: &[Complex64], cfg: &SteppedOfdmConfig, tau: f64) -> Complex64 {
    let n_sc = cfg.subcarriers;
    let step = phasor(cfg.subcarrier_spacing_hz * tau);
    let mut total = Complex64::new(0.0, 0.0);
    for m in 0..cfg.frames {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut rot = Complex64::new(1.0, 0.0);
        for (n, v) in zmn[m * n_sc..(m + 1) * n_sc].iter().enumerate() {
            if n % 256 == 0 {
                rot = phasor(n as f64 * cfg.subcarrier_spacing_hz * tau);
            }
            acc += v * rot;
            rot *= step;
        }
        total += acc * phasor(cfg.hop_carriers_hz[m] * tau);
    }
    total
}

/// Correlation of the symbol-divided cube with the target model at
/// `(τ, ν)`. `corrected = false` drops the hop-dependent Doppler terms.
pub fn correlate(cube: &RxCube, grid: &SymbolGrid, cfg: &SteppedOfdmConfig, tau: f64, nu: f64, corrected: bool) -> Result<Complex64> {
    cube.check(cfg)?;
    grid.check(cfg)?;
    let z = divide_symbols(cube, grid);
    Ok(delay_sum(&doppler_compensate(&z, cfg, nu, corrected), cfg, tau))
}

pub fn matched_filter(
    cube: &RxCube,
    grid: &SymbolGrid,
    cfg: &SteppedOfdmConfig,
    search: &DelayDopplerSearch,
    corrected: bool,
) -> Result<MatchedFilterOutput> {
    cfg.validate()?;
    cube.check(cfg)?;
    grid.check(cfg)?;
    if !(search.max_range_m > 0.0 && search.max_speed_mps >= 0.0) || search.delay_oversample == 0 || search.doppler_oversample == 0 {
        return domain("search envelope needs positive range and oversampling");
    }
    let z = divide_symbols(cube, grid);
    let d_step = cfg.delay_bin_s() / search.delay_oversample as f64;
    let n_delay = (2.0 * search.max_range_m / SPEED_OF_LIGHT / d_step).ceil() as usize + 1;
    let delays_s: Vec<f64> = (0..n_delay).map(|i| i as f64 * d_step).collect();
    let nu_max = 2.0 * search.max_speed_mps / SPEED_OF_LIGHT;
    let v_step = cfg.doppler_bin() / search.doppler_oversample as f64;
    let half = (nu_max / v_step).ceil() as i64;
    let dopplers: Vec<f64> = (-half..=half).map(|i| i as f64 * v_step).collect();

    let power: Vec<f64> = dopplers
        .par_iter()
        .flat_map_iter(|nu| {
            let zmn = doppler_compensate(&z, cfg, *nu, corrected);
            delays_s.iter().map(move |t| delay_sum(&zmn, cfg, *t).norm_sqr()).collect::<Vec<_>>()
        })
        .collect();
    let best = crate::dsp::argmax(&power);
    let (mut nu, mut tau) = (dopplers[best / n_delay], delays_s[best % n_delay]);

    // Line searches along the principal axes of the peak curvature, in grid
    // units; plain coordinate ascent crawls along the coupled τ–ν ridge.
    // The uncorrected model separates delay (m, n) from Doppler (ℓ).
    let axes = if corrected {
        let (aa, bb, ab) = centred_moments(cfg);
        Matrix2::new(aa * d_step * d_step, -ab * d_step * v_step, -ab * d_step * v_step, bb * v_step * v_step)
            .symmetric_eigen()
            .eigenvectors
    } else {
        Matrix2::identity()
    };
    let eval = |t: f64, v: f64| delay_sum(&doppler_compensate(&z, cfg, v, corrected), cfg, t).norm_sqr();
    for _ in 0..4 {
        for k in 0..2 {
            let (ut, uv) = (axes[(0, k)] * d_step, axes[(1, k)] * v_step);
            let (t0, v0) = (tau, nu);
            let x = golden_max(|x| eval(t0 + x * ut, v0 + x * uv), -1.5, 1.5, 1e-7);
            tau = t0 + x * ut;
            nu = v0 + x * uv;
        }
    }
    let peak = delay_sum(&doppler_compensate(&z, cfg, nu, corrected), cfg, tau).norm_sqr();
    Ok(MatchedFilterOutput {
        delays_s,
        dopplers,
        power,
        estimate: OfdmEstimate {
            delay_s: tau,
            doppler: nu,
            range_m: tau * SPEED_OF_LIGHT / 2.0,
            velocity_mps: nu * SPEED_OF_LIGHT / 2.0,
            power: peak,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrbResult {
    pub std_delay_s: f64,
    pub std_doppler: f64,
    pub std_range_m: f64,
    pub std_velocity_mps: f64,
}

/// Sample means of the delay slope `f_m + nΔf` and the Doppler slope
/// `f_D,m (mL+ℓ+1)T_sym`, in cycles per unit parameter.
fn phase_centroid(cfg: &SteppedOfdmConfig) -> (f64, f64) {
    let hopped = cfg.doppler_carrier == DopplerCarrier::Hopped;
    let (mut a, mut b) = (0.0, 0.0);
    for m in 0..cfg.frames {
        let fm = cfg.hop_carriers_hz[m];
        a += (0..cfg.subcarriers).map(|n| fm + n as f64 * cfg.subcarrier_spacing_hz).sum::<f64>()
            * cfg.symbols_per_frame as f64;
        let fdm = cfg.doppler_scale_hz(m, hopped);
        b += (0..cfg.symbols_per_frame).map(|l| fdm * cfg.symbol_time_s(m, l)).sum::<f64>() * cfg.subcarriers as f64;
    }
    let n = cfg.len() as f64;
    (a / n, b / n)
}

/// Per-sample phase slopes `a = ∂Φ/∂τ` (negated) and `b = ∂Φ/∂ν`, centred.
fn centred_moments(cfg: &SteppedOfdmConfig) -> (f64, f64, f64) {
    let n_sc = cfg.subcarriers as f64;
    let l_n = cfg.symbols_per_frame as f64;
    let total = cfg.len() as f64;
    let hopped = cfg.doppler_carrier == DopplerCarrier::Hopped;
    let df = cfg.subcarrier_spacing_hz;
    // Frame-wise sums of a over n and b over ℓ.
    let mut sa = Vec::with_capacity(cfg.frames);
    let mut sb = Vec::with_capacity(cfg.frames);
    let (mut a_sum, mut b_sum) = (0.0, 0.0);
    for m in 0..cfg.frames {
        let fm = cfg.hop_carriers_hz[m] - cfg.base_carrier_hz;
        let a: f64 = (0..cfg.subcarriers).map(|n| fm + n as f64 * df).sum();
        let fdm = cfg.doppler_scale_hz(m, hopped);
        let b: f64 = (0..cfg.symbols_per_frame).map(|l| fdm * cfg.symbol_time_s(m, l)).sum();
        sa.push(a);
        sb.push(b);
        a_sum += a * l_n;
        b_sum += b * n_sc;
    }
    let (a_mean, b_mean) = (a_sum / total, b_sum / total);
    let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
    for m in 0..cfg.frames {
        let fm = cfg.hop_carriers_hz[m] - cfg.base_carrier_hz;
        let fdm = cfg.doppler_scale_hz(m, hopped);
        let a2: f64 = (0..cfg.subcarriers).map(|n| (fm + n as f64 * df - a_mean).powi(2)).sum();
        let b2: f64 = (0..cfg.symbols_per_frame).map(|l| (fdm * cfg.symbol_time_s(m, l) - b_mean).powi(2)).sum();
        aa += a2 * l_n;
        bb += b2 * n_sc;
        ab += (sa[m] - n_sc * a_mean) * (sb[m] - l_n * b_mean);
    }
    let s = (2.0 * PI).powi(2);
    (s * aa, s * bb, s * ab)
}

/// Fisher information for `(τ, ν, Re γ, Im γ)` at unit-modulus symbols and
/// `γ = 1`, with the phase reference at the centroid of the slopes. The
/// delay and Doppler bounds do not depend on that reference.
pub fn fisher_information(cfg: &SteppedOfdmConfig, snr_db: f64) -> Result<Matrix4<f64>> {
    cfg.validate()?;
    if !snr_db.is_finite() {
        return domain("SNR must be finite");
    }
    let c = 2.0 * db_to_lin(snr_db);
    let (aa, bb, ab) = centred_moments(cfg);
    let n = cfg.len() as f64;
    Ok(Matrix4::new(
        c * aa, -c * ab, 0.0, 0.0, //
        -c * ab, c * bb, 0.0, 0.0, //
        0.0, 0.0, c * n, 0.0, //
        0.0, 0.0, 0.0, c * n,
    ))
}

/// Fisher information of the same parameters by central differences of
/// the mean cube, at step `1e-6` of the delay and Doppler bins.
pub fn fisher_finite_difference(
    cfg: &SteppedOfdmConfig,
    grid: &SymbolGrid,
    target: &Target,
    snr_db: f64,
) -> Result<Matrix4<f64>> {
    let scales = [cfg.delay_bin_s(), cfg.doppler_bin(), 1.0, 1.0];
    let theta = [target.delay_s(), target.doppler(), 1.0, 0.0];
    let (fa, fb) = phase_centroid(cfg);
    let mean = |p: &[f64; 4]| -> Result<Vec<Complex64>> {
        let v = p[1] * SPEED_OF_LIGHT / 2.0;
        let t = Target::new(p[0] * SPEED_OF_LIGHT / 2.0, v, 1.0)?;
        // Gain phase referenced to the slope centroid, as in the analytic form.
        let g = Complex64::new(p[2], p[3]) * phasor(fa * p[0] - fb * p[1]);
        simulate_rx_cube(cfg, grid, &t, g, 0.0, &mut crate::rng::rng_from_seed(0)).map(|c| c.data)
    };
    let mut jac: Vec<Vec<Complex64>> = Vec::with_capacity(4);
    for k in 0..4 {
        let h = 1e-6 * scales[k];
        let (mut up, mut dn) = (theta, theta);
        up[k] += h;
        dn[k] -= h;
        let (a, b) = (mean(&up)?, mean(&dn)?);
        jac.push(a.iter().zip(&b).map(|(x, y)| (x - y) / (2.0 * h)).collect());
    }
    let c = 2.0 * db_to_lin(snr_db);
    let mut f = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            f[(i, j)] = c * jac[i].iter().zip(&jac[j]).map(|(x, y)| (x.conj() * y).re).sum::<f64>();
        }
    }
    Ok(f)
}

/// Delay and Doppler bounds from a Fisher matrix.
pub fn bounds_from_fisher(cfg: &SteppedOfdmConfig, f: &Matrix4<f64>) -> Result<CrbResult> {
    let s = [cfg.delay_bin_s(), cfg.doppler_bin(), 1.0, 1.0];
    let scaled = Matrix4::from_fn(|i, j| f[(i, j)] * s[i] * s[j]);
    let eig = scaled.symmetric_eigen().eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), e| (a.min(*e), b.max(e.abs())));
    if !(lo > 1e-10 * hi) {
        return Err(Error::Singular(format!(
            "Fisher information is singular (eigenvalue ratio {:.1e}); M·L = {} symbol(s) cannot resolve Doppler",
            lo / hi,
            cfg.frames * cfg.symbols_per_frame
        )));
    }
    let inv = scaled.try_inverse().ok_or_else(|| Error::Singular("Fisher information is not invertible".into()))?;
    let std_delay_s = inv[(0, 0)].sqrt() * s[0];
    let std_doppler = inv[(1, 1)].sqrt() * s[1];
    Ok(CrbResult {
        std_delay_s,
        std_doppler,
        std_range_m: std_delay_s * SPEED_OF_LIGHT / 2.0,
        std_velocity_mps: std_doppler * SPEED_OF_LIGHT / 2.0,
    })
}

pub fn crb(cfg: &SteppedOfdmConfig, snr_db: f64) -> Result<CrbResult> {
    let f = fisher_information(cfg, snr_db)?;
    // The γ block is diagonal here, so the 2×2 delay/Doppler block suffices
    // once its conditioning is known.
    let block = Matrix2::new(f[(0, 0)], f[(0, 1)], f[(1, 0)], f[(1, 1)]);
    let det = block.determinant();
    if !(det > 1e-10 * f[(0, 0)] * f[(1, 1)]) {
        return bounds_from_fisher(cfg, &f);
    }
    let std_delay_s = (f[(1, 1)] / det).sqrt();
    let std_doppler = (f[(0, 0)] / det).sqrt();
    Ok(CrbResult {
        std_delay_s,
        std_doppler,
        std_range_m: std_delay_s * SPEED_OF_LIGHT / 2.0,
        std_velocity_mps: std_doppler * SPEED_OF_LIGHT / 2.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracySpec {
    pub max_range_std_m: f64,
    pub max_velocity_std_mps: f64,
    pub subcarrier_snr_db: f64,
}

impl AccuracySpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range_std_m > 0.0 && self.max_velocity_std_mps > 0.0) || !self.subcarrier_snr_db.is_finite() {
            return Err(Error::Config("accuracy limits must be positive and the SNR finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budget {
    pub bandwidth_hz: f64,
    pub duration_s: f64,
}

/// Waveform constants shared by all schemes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OfdmTemplate {
    pub base_carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub cp_duration_s: f64,
    /// ADC rate of the stepped and narrowband schemes.
    pub adc_rate_hz: f64,
    pub doppler_carrier: DopplerCarrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    pub max_frames: usize,
    pub max_symbols: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            max_frames: 20,
            max_symbols: 512,
        }
    }
}

/// Configuration of `scheme` with `m` frames of `l` symbols.
pub fn scheme_config(scheme: Scheme, t: &OfdmTemplate, budget: &Budget, m: usize, l: usize) -> Result<SteppedOfdmConfig> {
    let rate = match scheme {
        Scheme::Stepped | Scheme::Narrowband => t.adc_rate_hz,
        Scheme::Wideband => budget.bandwidth_hz,
    };
    let n = robust_floor(rate / t.subcarrier_spacing_hz) as usize;
    let m = if scheme == Scheme::Stepped { m } else { 1 };
    if n == 0 {
        return Err(Error::Config("ADC rate is below one subcarrier spacing".into()));
    }
    if (m * n) as f64 * t.subcarrier_spacing_hz > budget.bandwidth_hz * (1.0 + 1e-12) {
        return Err(Error::Capacity(format!("M·N·Δf exceeds the {:.3e} Hz budget", budget.bandwidth_hz)));
    }
    Ok(SteppedOfdmConfig::linear(t.base_carrier_hz, t.subcarrier_spacing_hz, n, m, l, t.cp_duration_s)?
        .with_doppler_carrier(t.doppler_carrier))
}

/// Vehicles fitting the budget under orthogonal tiling: `C` sub-bands of
/// `N·Δf` times `⌊S/M⌋` blocks of `M` consecutive `L`-symbol slots.
pub fn tile_count(cfg: &SteppedOfdmConfig, budget: &Budget) -> usize {
    let c = robust_floor(budget.bandwidth_hz / cfg.baseband_bandwidth_hz()) as usize;
    let s = robust_floor(budget.duration_s / (cfg.symbols_per_frame as f64 * cfg.symbol_duration_s())) as usize;
    c * (s / cfg.frames)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleCount {
    pub scheme: Scheme,
    pub count: usize,
    pub frames: usize,
    pub symbols: usize,
    pub subcarriers: usize,
    pub std_range_m: f64,
    pub std_velocity_mps: f64,
    /// Why no configuration met the accuracy limits.
    pub binding: Option<String>,
}

pub fn max_vehicles(
    scheme: Scheme,
    template: &OfdmTemplate,
    budget: &Budget,
    spec: &AccuracySpec,
    space: &SearchSpace,
) -> Result<VehicleCount> {
    spec.validate()?;
    if space.max_frames == 0 || space.max_symbols == 0 {
        return domain("search space must allow at least one frame and one symbol");
    }
    let max_m = if scheme == Scheme::Stepped { space.max_frames } else { 1 };
    let candidates: Vec<(usize, usize)> = (1..=max_m).flat_map(|m| (1..=space.max_symbols).map(move |l| (m, l))).collect();
    let results: Vec<Option<(usize, usize, usize, usize, CrbResult)>> = candidates
        .par_iter()
        .map(|&(m, l)| {
            let cfg = scheme_config(scheme, template, budget, m, l).ok()?;
            let b = crb(&cfg, spec.subcarrier_snr_db).ok()?;
            if b.std_range_m <= spec.max_range_std_m && b.std_velocity_mps <= spec.max_velocity_std_mps {
                Some((tile_count(&cfg, budget), m, l, cfg.subcarriers, b))
            } else {
                None
            }
        })
        .collect();
    // Largest count, then smallest footprint M·L, then fewest hops.
    let best = results.into_iter().flatten().max_by(|a, b| {
        a.0.cmp(&b.0).then((b.1 * b.2).cmp(&(a.1 * a.2))).then(b.1.cmp(&a.1))
    });
    if let Some((count, m, l, n, b)) = best {
        return Ok(VehicleCount {
            scheme,
            count,
            frames: m,
            symbols: l,
            subcarriers: n,
            std_range_m: b.std_range_m,
            std_velocity_mps: b.std_velocity_mps,
            binding: None,
        });
    }
    // Diagnose at the largest aperture searched.
    let cfg = scheme_config(scheme, template, budget, max_m, space.max_symbols)?;
    let b = crb(&cfg, spec.subcarrier_snr_db)?;
    let mut why = Vec::new();
    if b.std_range_m > spec.max_range_std_m {
        why.push(format!("range std {:.3e} m > {:.3e} m", b.std_range_m, spec.max_range_std_m));
    }
    if b.std_velocity_mps > spec.max_velocity_std_mps {
        why.push(format!("velocity std {:.3e} m/s > {:.3e} m/s", b.std_velocity_mps, spec.max_velocity_std_mps));
    }
    if why.is_empty() {
        why.push("no configuration fits the time-frequency budget".into());
    }
    Ok(VehicleCount {
        scheme,
        count: 0,
        frames: max_m,
        symbols: space.max_symbols,
        subcarriers: cfg.subcarriers,
        std_range_m: b.std_range_m,
        std_velocity_mps: b.std_velocity_mps,
        binding: Some(format!("at M={max_m}, L={}: {}", space.max_symbols, why.join("; "))),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tile {
    pub vehicle: usize,
    pub start_s: f64,
    pub end_s: f64,
    pub low_hz: f64,
    pub high_hz: f64,
}

impl Tile {
    pub fn overlaps(&self, o: &Tile) -> bool {
        let eps_t = 1e-12 * (self.end_s - self.start_s);
        let eps_f = 1e-12 * (self.high_hz - self.low_hz);
        self.start_s < o.end_s - eps_t && o.start_s < self.end_s - eps_t && self.low_hz < o.high_hz - eps_f && o.low_hz < self.high_hz - eps_f
    }
}

/// Orthogonal tiles for `n` vehicles: vehicle `v` takes block `v / C` and
/// hops cyclically from sub-band `v mod C`, so vehicles in one block use
/// distinct sub-bands in every slot. Frequencies are relative to the
/// bottom of the budget.
pub fn allocate(n: usize, cfg: &SteppedOfdmConfig, budget: &Budget) -> Result<Vec<Tile>> {
    cfg.validate()?;
    let cap = tile_count(cfg, budget);
    if n > cap {
        return Err(Error::Capacity(format!("{n} vehicles requested, the budget holds {cap}")));
    }
    let c = robust_floor(budget.bandwidth_hz / cfg.baseband_bandwidth_hz()) as usize;
    let slot = cfg.symbols_per_frame as f64 * cfg.symbol_duration_s();
    let bw = cfg.baseband_bandwidth_hz();
    let mut tiles = Vec::with_capacity(n * cfg.frames);
    for v in 0..n {
        let (block, first) = (v / c, v % c);
        for k in 0..cfg.frames {
            let s = (block * cfg.frames + k) as f64 * slot;
            let band = (first + k) % c;
            tiles.push(Tile {
                vehicle: v,
                start_s: s,
                end_s: s + slot,
                low_hz: band as f64 * bw,
                high_hz: (band + 1) as f64 * bw,
            });
        }
    }
    Ok(tiles)
}

/// Whether tiles of distinct vehicles never overlap.
pub fn tiles_disjoint(tiles: &[Tile]) -> bool {
    tiles
        .iter()
        .enumerate()
        .all(|(i, a)| tiles[i + 1..].iter().all(|b| a.vehicle == b.vehicle || !a.overlaps(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    SubcarrierSnr,
    RangeLimit,
    VelocityLimit,
}

/// Vehicle counts of every scheme along one axis of the accuracy spec.
pub fn count_sweep(
    axis: SweepAxis,
    values: &[f64],
    template: &OfdmTemplate,
    budget: &Budget,
    base: &AccuracySpec,
    space: &SearchSpace,
) -> Result<Vec<(Scheme, f64, usize)>> {
    let mut rows = Vec::new();
    for scheme in Scheme::ALL {
        for v in values {
            let mut spec = *base;
            match axis {
                SweepAxis::SubcarrierSnr => spec.subcarrier_snr_db = *v,
                SweepAxis::RangeLimit => spec.max_range_std_m = *v,
                SweepAxis::VelocityLimit => spec.max_velocity_std_mps = *v,
            }
            rows.push((scheme, *v, max_vehicles(scheme, template, budget, &spec, space)?.count));
        }
    }
    Ok(rows)
}

pub fn write_counts<W: Write>(mut w: W, rows: &[(Scheme, f64, usize)]) -> Result<()> {
    writeln!(w, "# scheme,constraint_axis_value,max_vehicles")?;
    for (s, v, c) in rows {
        writeln!(w, "{s},{v:.9e},{c}")?;
    }
    Ok(())
}
