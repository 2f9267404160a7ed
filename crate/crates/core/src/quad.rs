//! Numerical quadrature for complex-valued integrands.

use num_complex::Complex64;

// 8-point Gauss-Legendre nodes and weights on [-1, 1].
const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gl8_panel<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> Complex64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = Complex64::new(0.0, 0.0);
    for (x, w) in GL8_X.iter().zip(GL8_W.iter()) {
        acc += *w * (f(mid - half * x) + f(mid + half * x));
    }
    acc * half
}

/// Composite 8-point Gauss-Legendre rule with `panels` equal panels.
pub fn gauss_legendre<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, panels: usize) -> Complex64 {
    let panels = panels.max(1);
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| gl8_panel(f, a + i as f64 * h, a + (i + 1) as f64 * h))
        .sum()
}

/// Integral of an oscillatory integrand whose phase advances by at most
/// `max_cycles` cycles over `[a, b]`. The panel count is derived from the
/// oscillation count and doubled until two successive estimates agree to `abs_tol`.
pub fn oscillatory<F: Fn(f64) -> Complex64>(
    f: &F,
    a: f64,
    b: f64,
    max_cycles: f64,
    abs_tol: f64,
) -> Complex64 {
    let mut panels = ((max_cycles.abs() * 2.0).ceil() as usize).max(4);
    let mut prev = gauss_legendre(f, a, b, panels);
    for _ in 0..6 {
        panels *= 2;
        let next = gauss_legendre(f, a, b, panels);
        if (next - prev).norm() <= abs_tol {
            return next;
        }
        prev = next;
    }
    prev
}

/// Integral of `exp(j ψ(t))` over `[a, b]` with `ψ` linearly interpolated on
/// each panel and integrated exactly there. Exact for linear phase; otherwise
/// panels are doubled until successive estimates agree to `abs_tol`.
pub fn unimodular<F: Fn(f64) -> f64>(psi: &F, a: f64, b: f64, panels: usize, abs_tol: f64) -> Complex64 {
    let rule = |n: usize| -> Complex64 {
        let h = (b - a) / n as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        let mut left = psi(a);
        for i in 0..n {
            let right = psi(a + (i + 1) as f64 * h);
            let d = right - left;
            let panel = if d.abs() < 1e-8 {
                Complex64::new(1.0, 0.5 * d)
            } else {
                (Complex64::from_polar(1.0, d) - 1.0) / Complex64::new(0.0, d)
            };
            acc += Complex64::from_polar(h, left) * panel;
            left = right;
        }
        acc
    };
    let mut n = panels.max(1);
    let mut prev = rule(n);
    for _ in 0..24 {
        n *= 2;
        let next = rule(n);
        if (next - prev).norm() <= abs_tol {
            return next;
        }
        prev = next;
    }
    prev
}

/// Adaptive Simpson quadrature with absolute tolerance `abs_tol`.
pub fn adaptive_simpson<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64, abs_tol: f64) -> Complex64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(f, a, b, fa, fm, fb, whole, abs_tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> Complex64>(
    f: &F,
    a: f64,
    b: f64,
    fa: Complex64,
    fm: Complex64,
    fb: Complex64,
    whole: Complex64,
    tol: f64,
    depth: u32,
) -> Complex64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.norm() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}
