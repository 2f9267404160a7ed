//! Small signal-processing helpers shared by the waveform modules.

use num_complex::Complex64;
use std::cell::RefCell;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rectangular,
    /// Raised-cosine (Hann) taper.
    Hann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; len],
            Window::Hann => {
                if len == 1 {
                    return vec![1.0];
                }
                (0..len)
                    .map(|i| {
                        0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (len as f64)).cos()
                    })
                    .collect()
            }
        }
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place forward DFT, `X[k] = sum x[n] e^{-j 2 pi k n / N}`.
pub fn fft_forward(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

/// In-place unnormalised inverse DFT, `x[n] = sum X[k] e^{+j 2 pi k n / N}`.
pub fn fft_inverse(buf: &mut [Complex64]) {
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
}

/// Vertex offset of the parabola through three equally spaced samples,
/// relative to the middle one. Clamped to [-0.5, 0.5].
pub fn parabolic_offset(left: f64, mid: f64, right: f64) -> f64 {
    let denom = left - 2.0 * mid + right;
    if denom.abs() < f64::MIN_POSITIVE || !denom.is_finite() {
        return 0.0;
    }
    (0.5 * (left - right) / denom).clamp(-0.5, 0.5)
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Golden-section search for the maximum of a unimodal function on `[lo, hi]`.
pub fn golden_max<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut iter = 0;
    while (hi - lo).abs() > tol && iter < 200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
        iter += 1;
    }
    0.5 * (lo + hi)
}

/// Width (in samples, fractional) of the region around `peak` where `power`
/// stays at or above half of `power[peak]`, using linear interpolation of the
/// crossings. The profile is treated as circular.
pub fn half_power_width(power: &[f64], peak: usize) -> f64 {
    let n = power.len();
    let half = power[peak] / 2.0;
    let at = |i: isize| power[i.rem_euclid(n as isize) as usize];
    let mut right = 0.0;
    for step in 1..n as isize {
        let (a, b) = (at(peak as isize + step - 1), at(peak as isize + step));
        if b < half {
            right = (step - 1) as f64 + (a - half) / (a - b);
            break;
        }
    }
    let mut left = 0.0;
    for step in 1..n as isize {
        let (a, b) = (at(peak as isize - step + 1), at(peak as isize - step));
        if b < half {
            left = (step - 1) as f64 + (a - half) / (a - b);
            break;
        }
    }
    left + right
}

pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parabola_vertex_recovered() {
        let f = |x: f64| 3.0 - (x - 0.3) * (x - 0.3);
        let off = parabolic_offset(f(-1.0), f(0.0), f(1.0));
        assert!((off - 0.3).abs() < 1e-12);
    }

    #[test]
    fn golden_finds_max() {
        let x = golden_max(|x| -(x - 1.234).powi(2), 0.0, 3.0, 1e-10);
        assert!((x - 1.234).abs() < 1e-8);
    }

    #[test]
    fn fft_roundtrip_scale() {
        let mut v: Vec<Complex64> = (0..8).map(|i| Complex64::new(i as f64, 0.0)).collect();
        let orig = v.clone();
        fft_forward(&mut v);
        fft_inverse(&mut v);
        for (a, b) in v.iter().zip(&orig) {
            assert!((a / 8.0 - b).norm() < 1e-12);
        }
    }

    #[test]
    fn half_power_width_of_triangle() {
        let p = [0.0, 0.25, 0.5, 0.75, 1.0, 0.75, 0.5, 0.25, 0.0];
        assert!((half_power_width(&p, 4) - 4.0).abs() < 1e-12);
    }
}
