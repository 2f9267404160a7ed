use proptest::prelude::*;
use radint::dsp::Window;
use radint::fmcw::*;
use radint::rng::derive_seed;
use radint::scenario::{NoiseConfig, Target};
use radint::units::SPEED_OF_LIGHT;

fn small_cfg() -> ChirpConfig {
    ChirpConfig::new(77e9, 1e9, 2e-6, 16, 50e6).unwrap()
}

fn small_cfar(pfa: f64) -> CfarConfig {
    CfarConfig {
        num_training: [4, 2],
        num_guard: [1, 1],
        target_pfa: pfa,
        dynamic_range_db: 120.0,
    }
}

#[test]
fn ca_cfar_false_alarm_rate() {
    let cfg = small_cfg();
    let cfar = small_cfar(1e-3);
    let mut alarms = 0usize;
    let mut cells = 0usize;
    for trial in 0..10_000u64 {
        let noise = NoiseConfig::new(1.0, derive_seed(42, radint::rng::stream::CFAR, trial)).unwrap();
        let beat = synthesize_beat(&cfg, &[], &noise).unwrap();
        let map = range_doppler_map(&beat, Window::Rectangular, (1, 1));
        let mask = cfar_mask(&map, &cfar).unwrap();
        alarms += mask.iter().filter(|m| **m).count();
        cells += mask.len();
    }
    let pfa = alarms as f64 / cells as f64;
    assert!(pfa > 1e-3 / 3.0 && pfa < 3e-3, "empirical Pfa {pfa}");
}

#[test]
fn detection_probability_grows_with_snr() {
    let cfg = small_cfg();
    let cfar = small_cfar(1e-4);
    let bin = 1.0 / (cfg.slope() * cfg.fast_len() as f64 * cfg.sample_period_s);
    let range = SPEED_OF_LIGHT * 30.0 * bin / 2.0;
    let trials = 300;
    let mut pd = Vec::new();
    for (i, snr_db) in [-40.0, -32.0, -28.0, -24.0, -16.0].iter().enumerate() {
        let gain = 10f64.powf(snr_db / 10.0);
        let mut hits = 0;
        for t in 0..trials {
            let seed = derive_seed(7, 8, (i * trials + t) as u64);
            let target = Target::new(range, 0.0, 1.0).unwrap().with_phase(t as f64);
            let echo = Echo {
                target,
                power_gain: gain,
            };
            let beat = synthesize_beat(&cfg, &[echo], &NoiseConfig::new(1.0, seed).unwrap()).unwrap();
            let map = range_doppler_map(&beat, Window::Rectangular, (1, 1));
            let mask = cfar_mask(&map, &cfar).unwrap();
            let zero_doppler = map.doppler_bins / 2;
            if mask[zero_doppler * map.range_bins + 30] {
                hits += 1;
            }
        }
        pd.push(hits as f64 / trials as f64);
    }
    assert!(pd[0] < 0.05 && pd[4] > 0.99, "{pd:?}");
    for w in pd.windows(2) {
        // Allow for two binomial standard deviations of slack.
        let slack = 2.0 * (0.25 / trials as f64).sqrt();
        assert!(w[1] + slack >= w[0], "{pd:?}");
    }
}

#[test]
fn round_trip_grid() {
    let cfg = ChirpConfig::new(77e9, 1e9, 20e-6, 32, 50e6).unwrap();
    let (dr, dv) = resolution(&cfg);
    let vmax = cfg.unambiguous_velocity_mps();
    let cfar = CfarConfig {
        num_training: [8, 4],
        num_guard: [12, 12],
        target_pfa: 1e-6,
        dynamic_range_db: 120.0,
    };
    for i in 0..10 {
        for j in 0..10 {
            let r = 5.0 + 140.0 * i as f64 / 9.0;
            let v = -0.9 * vmax + 1.8 * vmax * j as f64 / 9.0;
            let target = Target::new(r, v, 1.0).unwrap();
            let beat = synthesize_beat(&cfg, &[Echo { target, power_gain: 1.0 }], &NoiseConfig::off()).unwrap();
            let map = range_doppler_map(&beat, Window::Hann, (4, 4));
            let det = cfar_detect(&map, &cfar).unwrap()[0];
            assert!((det.corrected_range_m - r).abs() < dr, "R {r} v {v}: {det:?}");
            assert!((det.velocity_mps - v).abs() < dv, "R {r} v {v}: {det:?}");
            let shift = target.delay_s() - det.tau_hat_s;
            let expected = cfg.carrier_hz * target.doppler() / cfg.slope();
            assert!((shift - expected).abs() < 1.0 / (cfg.slope() * cfg.fast_len() as f64 * cfg.sample_period_s));
        }
    }
}

#[test]
fn map_axes_increase_and_entries_nonnegative() {
    let cfg = small_cfg();
    let beat = synthesize_beat(&cfg, &[], &NoiseConfig::new(1.0, 3).unwrap()).unwrap();
    let map = range_doppler_map(&beat, Window::Hann, (4, 4));
    assert!(map.delay_axis_s.windows(2).all(|w| w[1] > w[0]));
    assert!(map.doppler_axis.windows(2).all(|w| w[1] > w[0]));
    assert!(map.power.iter().all(|p| *p >= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn argmax_follows_peak_law_and_ignores_scale(r in 1.0f64..14.0, v in -40.0f64..40.0, scale in 0.01f64..100.0) {
        let cfg = small_cfg();
        let target = Target::new(r, v, 1.0).unwrap();
        let one = synthesize_beat(&cfg, &[Echo { target, power_gain: 1.0 }], &NoiseConfig::off()).unwrap();
        let big = synthesize_beat(&cfg, &[Echo { target, power_gain: scale }], &NoiseConfig::off()).unwrap();
        let m1 = range_doppler_map(&one, Window::Rectangular, (4, 4));
        let m2 = range_doppler_map(&big, Window::Rectangular, (4, 4));
        prop_assert_eq!(m1.argmax(), m2.argmax());
        let (d, b) = m1.argmax();
        let tau_law = target.delay_s() - cfg.carrier_hz * target.doppler() / cfg.slope();
        let period = m1.delay_step_s() * m1.range_bins as f64;
        let dt = (m1.delay_axis_s[b] - tau_law.rem_euclid(period)).abs();
        prop_assert!(dt.min(period - dt) <= m1.delay_step_s());
        prop_assert!((m1.doppler_axis[d] - target.doppler()).abs() <= m1.doppler_step());
    }

    #[test]
    fn parseval_holds(seed in 0u64..1000, var in 0.01f64..10.0) {
        let cfg = small_cfg();
        let beat = synthesize_beat(&cfg, &[], &NoiseConfig::new(var, seed).unwrap()).unwrap();
        let map = range_doppler_map(&beat, Window::Rectangular, (1, 1));
        prop_assert!((map.total_energy() / (cfg.processing_gain() * beat.energy()) - 1.0).abs() < 1e-9);
    }
}
