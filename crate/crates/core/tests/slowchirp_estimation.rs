use num_complex::Complex64;
use rayon::prelude::*;
use radint::rng::{child_rng, derive_seed, stream::SLOWCHIRP};
use radint::scenario::{NoiseConfig, Target};
use radint::slowchirp::*;
use radint::units::SPEED_OF_LIGHT;
use std::f64::consts::PI;

fn cfg() -> SlowChirpConfig {
    SlowChirpConfig::for_envelope(77e9, 1e9, 10e-3, 60_000, 0, 150.0, 70.0).unwrap()
}

fn beat(c: &SlowChirpConfig, r: f64, v: f64, noise: NoiseConfig) -> Vec<Complex64> {
    dechirp_slow(&Target::new(r, v, 1.0).unwrap(), c, 1.0, &noise).unwrap()
}

#[test]
fn coupling_below_bound_and_matches_two_tones() {
    let (b, t) = (1e9, 10e-3);
    let mut checked = 0;
    for i in 0..50 {
        let d = t * 1e-6 * (0.5e6f64).powf(i as f64 / 49.0);
        let c = coupling(d, b, t).unwrap();
        assert!(c.exact <= c.bound * (1.0 + 1e-9), "Δτ {d}: {} > {}", c.exact, c.bound);
        let tone = two_tone_coupling(d, b);
        if tone > 1e-6 {
            assert!((c.exact / tone - 1.0).abs() < 0.01, "Δτ {d}: {} vs {tone}", c.exact);
            checked += 1;
        }
    }
    assert!(checked >= 10);
}

#[test]
fn periodic_ramp_agrees_for_short_offsets() {
    let (b, t) = (1e9, 10e-3);
    for d in [1.35e-8, 3.85e-8, 1.105e-7] {
        let p = coupling_periodic(d, b, t).unwrap();
        let c = coupling(d, b, t).unwrap().exact;
        assert!((p / c - 1.0).abs() < 0.01, "{d}: {p} vs {c}");
    }
}

#[test]
fn channel_coupling_uses_index_offsets() {
    let c = SlowChirpConfig { channel_index: 3, ..cfg() };
    let direct = coupling(2.0 * c.duration_s / c.channel_count as f64, c.bandwidth_hz, c.duration_s).unwrap();
    assert_eq!(c.channel_coupling(5).unwrap(), direct);
    assert_eq!(c.channel_coupling(3).unwrap().exact, 1.0);
    assert!(c.channel_coupling(60_000).is_err());
    assert!((c.channel_offset_s() - 3.0 * 10e-3 / 60_000.0).abs() < 1e-18);
}

#[test]
fn spectrum_peak_tracks_beat_frequency() {
    let c = cfg();
    let bin = 1.0 / c.duration_s;
    for (r, v) in [(80.0, 0.0), (30.0, 5.0), (120.0, -10.0), (80.0, 25.0), (60.0, -25.0)] {
        let t = Target::new(r, v, 1.0).unwrap();
        let p = spectrum_peak(&beat(&c, r, v, NoiseConfig::off()), &c).unwrap();
        let f_star = c.carrier_hz * t.doppler() - c.slope() * t.delay_s();
        // The quadratic term moves the magnitude peak to the mid-sweep frequency.
        let mid = f_star + t.doppler() * c.slope() * c.duration_s;
        assert!((p.f_star_hz - mid).abs() < bin, "{r} {v}");
        if v.abs() <= 10.0 {
            assert!((p.f_star_hz - f_star).abs() < bin, "{r} {v}");
        }
    }
}

#[test]
fn integral_magnitude_decreases_with_speed() {
    let alpha = 1e11;
    // Monotone up to the first turn of the Fresnel spiral near 13.5 m/s.
    let mags: Vec<f64> = (0..=26)
        .map(|i| velocity_integral(2.0 * (i as f64 * 0.5) / SPEED_OF_LIGHT, alpha, 10e-3).norm())
        .collect();
    assert!(mags.windows(2).all(|w| w[1] < w[0]), "{mags:?}");
    let beyond = velocity_integral(2.0 * 16.0 / SPEED_OF_LIGHT, alpha, 10e-3).norm();
    assert!(beyond > velocity_integral(2.0 * 13.5 / SPEED_OF_LIGHT, alpha, 10e-3).norm());
    let neg = velocity_integral(-2.0 * 5.0 / SPEED_OF_LIGHT, alpha, 10e-3);
    assert!((neg.norm() - mags[10]).abs() < 1e-12);
}

#[test]
fn lut_properties() {
    let c = cfg();
    let f_star = -53_000.0;
    let span = one_to_one_span(&c, f_star, 0.0);
    let lut = build_velocity_lut(&c, f_star, span, (span.1 - span.0) / 256.0, Complex64::new(0.0, 0.0)).unwrap();
    let u = &lut.unwrapped_rad;
    let dir = (u[1] - u[0]).signum();
    assert!(u.windows(2).all(|w| (w[1] - w[0]) * dir > 0.0));
    assert!((u[u.len() - 1] - u[0]).abs() < 2.0 * PI);
    let zero = build_velocity_lut(&c, f_star, (0.0, span.1), span.1 / 64.0, Complex64::new(0.0, 0.0)).unwrap();
    let phi = phi0_from_peak(c.slope(), c.carrier_hz, 0.0, f_star);
    let diff = (zero.angle_rad[0] - phi).rem_euclid(2.0 * PI);
    assert!(diff.min(2.0 * PI - diff) < 1e-9);

    let half = SlowChirpConfig::for_envelope(77e9, 1e9, 5e-3, 60_000, 0, 150.0, 70.0).unwrap();
    let w_half = one_to_one_span(&half, f_star, 0.0);
    assert!(w_half.1 - w_half.0 > 1.9 * (span.1 - span.0));

    match build_velocity_lut(&c, f_star, (-1.0, 1.0), 1e-5, Complex64::new(0.0, 0.0)) {
        Err(radint::Error::SpanTooWide { lo_mps, hi_mps }) => {
            assert!(hi_mps > lo_mps && hi_mps - lo_mps < 2.0 * (span.1 - span.0));
            let ok = build_velocity_lut(&c, f_star, (lo_mps, hi_mps), 1e-5, Complex64::new(0.0, 0.0));
            assert!(ok.is_ok());
        }
        other => panic!("expected SpanTooWide, got {other:?}"),
    }

    let mut out = Vec::new();
    lut.write_dsv(&mut out).unwrap();
    let (h, rows) = radint::dsv::read_table(std::str::from_utf8(&out).unwrap()).unwrap();
    assert_eq!(h, ["velocity_mps", "angle_rad", "integral_abs"]);
    assert_eq!(rows.len(), lut.velocity_mps.len());
}

#[test]
fn phi0_identity_over_random_targets() {
    use rand::Rng;
    let mut rng = child_rng(9, SLOWCHIRP, 0);
    let (alpha, fc) = (1e11, 77e9);
    for _ in 0..10_000 {
        let tau = rng.random_range(1e-8..1e-6);
        let nu = rng.random_range(-5e-7..5e-7);
        let a = phi0(alpha, fc, tau);
        let b = phi0_from_peak(alpha, fc, nu, fc * nu - alpha * tau);
        assert!((a - b).abs() <= 1e-9 * a.abs(), "{tau} {nu}");
    }
}

#[test]
fn noiseless_round_trip() {
    let c = cfg();
    let est = EstimatorConfig::default();
    let lut_step: f64 = 0.25 / 3.6;
    let cases: Vec<(f64, f64)> = (0..5)
        .flat_map(|i| (0..5).map(move |j| (10.0 + 130.0 * i as f64 / 4.0, -35.0 + 70.0 * j as f64 / 4.0)))
        .collect();
    cases.par_iter().for_each(|&(r, v)| {
        let e = estimate_range_velocity(&beat(&c, r, v, NoiseConfig::off()), &c, &est).unwrap();
        assert!((e.range_m - r).abs() < SPEED_OF_LIGHT / (2.0 * c.bandwidth_hz), "{r} {v}: {e:?}");
        assert!((e.velocity_mps - v).abs() < lut_step.min(e.lut_step_mps) as f64, "{r} {v}: {e:?}");
    });
}

#[test]
fn velocity_error_shrinks_with_snr() {
    let c = cfg();
    let est = EstimatorConfig::default();
    let n = c.num_samples() as f64;
    let trials = 24u64;
    let spreads: Vec<f64> = [10.0, 20.0, 30.0]
        .iter()
        .enumerate()
        .map(|(i, snr_db)| {
            let var = n / 10f64.powf(snr_db / 10.0);
            let errs: Vec<f64> = (0..trials)
                .into_par_iter()
                .map(|t| {
                    let noise = NoiseConfig::new(var, derive_seed(5, SLOWCHIRP, i as u64 * 1000 + t)).unwrap();
                    let e = estimate_range_velocity(&beat(&c, 80.0, 12.0, noise), &c, &EstimatorConfig { residual_tol: 1.0, ..est });
                    e.map(|e| e.velocity_mps - 12.0).unwrap_or(f64::NAN)
                })
                .collect();
            let ok: Vec<f64> = errs.into_iter().filter(|e| e.is_finite()).collect();
            ok.iter().map(|e| e * e).sum::<f64>() / ok.len() as f64
        })
        .collect();
    assert!(spreads.windows(2).all(|w| w[1] < w[0]), "{spreads:?}");
}

#[test]
fn offset_channels_extend_velocity_coverage() {
    let c = cfg();
    let est = EstimatorConfig::default();
    let shift = |v: f64| 2.0 * v * c.carrier_hz / SPEED_OF_LIGHT;
    let fast = beat(&c, 80.0, 60.0, NoiseConfig::off());
    assert!(matches!(
        estimate_range_velocity(&fast, &c, &est),
        Err(radint::Error::AmbiguousVelocity(_))
    ));
    let (best, all) = doppler_offset_channels(&fast, &c, &est, &[0.0, shift(30.0)]).unwrap();
    assert!(all[0].result.is_err() && all[1].result.is_ok());
    assert!((best.velocity_mps - 60.0).abs() < 1e-3 && (best.range_m - 80.0).abs() < 0.01);

    let base = beat(&c, 50.0, 20.0, NoiseConfig::off());
    let plain = estimate_range_velocity(&base, &c, &est).unwrap();
    let (best, all) = doppler_offset_channels(&base, &c, &est, &[0.0, shift(30.0)]).unwrap();
    let a = all[0].result.as_ref().unwrap();
    let b = all[1].result.as_ref().unwrap();
    assert_eq!(a, &plain);
    assert!((a.velocity_mps - b.velocity_mps).abs() < 1e-3);
    assert!((a.range_m - b.range_m).abs() < 0.01);
    assert!((best.velocity_mps - 20.0).abs() < 1e-3);
    assert!(doppler_offset_channels(&base, &c, &est, &[1.0, 1.0]).is_err());
    assert!(doppler_offset_channels(&fast, &c, &est, &[0.0]).is_err());
}

#[test]
fn random_channels_follow_birthday_statistics() {
    let trials = 10_000u64;
    let (k, n) = (20usize, 100u64);
    let first: Vec<f64> = (0..trials)
        .map(|t| {
            let mut rng = child_rng(4, SLOWCHIRP, t);
            random_channel_protocol(k, n, 1, &mut rng).unwrap()[0].conflict_pairs as f64
        })
        .collect();
    let mean = first.iter().sum::<f64>() / trials as f64;
    let var = first.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let expected = expected_conflict_pairs(k, n);
    assert!((mean - expected).abs() < 4.0 * (var / trials as f64).sqrt(), "{mean} vs {expected}");

    let resolved = (0..trials)
        .filter(|&t| {
            let mut rng = child_rng(8, SLOWCHIRP, t);
            random_channel_protocol(100, 60_000, 2, &mut rng).unwrap()[1].conflict_pairs == 0
        })
        .count();
    assert!(resolved as f64 >= 0.99 * trials as f64, "{resolved}");
}
