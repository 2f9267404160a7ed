use num_complex::Complex64;
use proptest::prelude::*;
use radint::ofdm::*;
use radint::rng::{child_rng, rng_from_seed, stream};
use radint::scenario::Target;
use radint::units::db_to_lin;
use radint::Error;
use rayon::prelude::*;

fn small() -> SteppedOfdmConfig {
    SteppedOfdmConfig::linear(77e9, 500e3, 32, 8, 16, 400e-9).unwrap()
}

fn fig11_template() -> OfdmTemplate {
    OfdmTemplate {
        base_carrier_hz: 77e9,
        subcarrier_spacing_hz: 500e3,
        cp_duration_s: 400e-9,
        adc_rate_hz: 50e6,
        doppler_carrier: DopplerCarrier::Base,
    }
}

fn fig11_budget() -> Budget {
    Budget {
        bandwidth_hz: 1e9,
        duration_s: 30e-3,
    }
}

fn fig11_spec() -> AccuracySpec {
    AccuracySpec {
        max_range_std_m: 0.1,
        max_velocity_std_mps: 0.1,
        subcarrier_snr_db: -30.0,
    }
}

#[test]
fn noiseless_peak_at_truth_with_coherent_power() {
    let cfg = small();
    let grid = Cube::qpsk(&cfg, &mut rng_from_seed(1));
    let target = Target::new(30.0, 20.0, 1.0).unwrap();
    let gain = Complex64::from_polar(0.5, 0.7);
    let y = simulate_rx_cube(&cfg, &grid, &target, gain, 0.0, &mut rng_from_seed(2)).unwrap();
    let out = matched_filter(&y, &grid, &cfg, &DelayDopplerSearch::new(55.0, 40.0), true).unwrap();
    let e = out.estimate;
    assert!((e.delay_s - target.delay_s()).abs() < 1e-3 * cfg.delay_bin_s());
    assert!((e.doppler - target.doppler()).abs() < 1e-3 * cfg.doppler_bin());
    let want = (cfg.len() as f64).powi(2) * gain.norm_sqr();
    assert!((e.power / want - 1.0).abs() < 1e-9);
    assert_eq!(out.power.len(), out.delays_s.len() * out.dopplers.len());
}

#[test]
fn shuffled_hops_are_still_matched() {
    let cfg = small().with_shuffled_hops(&mut rng_from_seed(9));
    assert_ne!(cfg.hop_carriers_hz, small().hop_carriers_hz);
    let grid = Cube::qpsk(&cfg, &mut rng_from_seed(1));
    let target = Target::new(12.0, -15.0, 1.0).unwrap();
    let y = simulate_rx_cube(&cfg, &grid, &target, Complex64::new(1.0, 0.0), 0.0, &mut rng_from_seed(2)).unwrap();
    let e = matched_filter(&y, &grid, &cfg, &DelayDopplerSearch::new(55.0, 40.0), true).unwrap().estimate;
    assert!((e.range_m - 12.0).abs() < 1e-3);
    assert!((e.velocity_mps + 15.0).abs() < 1e-2);
}

#[test]
fn single_frame_stepped_is_narrowband() {
    let t = fig11_template();
    let b = fig11_budget();
    let s = scheme_config(Scheme::Stepped, &t, &b, 1, 64).unwrap();
    let n = scheme_config(Scheme::Narrowband, &t, &b, 7, 64).unwrap();
    assert_eq!(s, n);
    let target = Target::new(40.0, 8.0, 1.0).unwrap();
    let run = |cfg: &SteppedOfdmConfig| {
        let mut rng = rng_from_seed(4);
        let grid = Cube::qpsk(cfg, &mut rng);
        simulate_rx_cube(cfg, &grid, &target, Complex64::new(1.0, 0.0), 0.1, &mut rng).unwrap()
    };
    assert_eq!(run(&s).data, run(&n).data);
    assert_eq!(crb(&s, -10.0).unwrap(), crb(&n, -10.0).unwrap());
}

#[test]
fn uncorrected_filter_biases_delay_of_moving_target() {
    let cfg = small();
    let grid = Cube::qpsk(&cfg, &mut rng_from_seed(1));
    let search = DelayDopplerSearch::new(55.0, 40.0);
    let target = Target::new(30.0, 20.0, 1.0).unwrap();
    let y = simulate_rx_cube(&cfg, &grid, &target, Complex64::new(1.0, 0.0), 0.0, &mut rng_from_seed(2)).unwrap();
    let raw = matched_filter(&y, &grid, &cfg, &search, false).unwrap().estimate;
    let fixed = matched_filter(&y, &grid, &cfg, &search, true).unwrap().estimate;
    let bins = |e: &OfdmEstimate| (e.delay_s - target.delay_s()) / cfg.delay_bin_s();
    // The inter-frame Doppler phase f0·mLT·ν reads as a delay shift of
    // f0·LT·ν·M bins.
    let predicted = cfg.base_carrier_hz * (cfg.symbols_per_frame as f64) * cfg.symbol_duration_s() * target.doppler() * cfg.frames as f64;
    assert!(bins(&raw).abs() > 1.0, "{}", bins(&raw));
    assert!((bins(&raw).abs() / predicted - 1.0).abs() < 0.05, "{} vs {predicted}", bins(&raw));
    assert!(bins(&fixed).abs() < 1e-3);

    // A static target is unaffected.
    let still = Target::new(30.0, 0.0, 1.0).unwrap();
    let y = simulate_rx_cube(&cfg, &grid, &still, Complex64::new(1.0, 0.0), 0.0, &mut rng_from_seed(2)).unwrap();
    let raw = matched_filter(&y, &grid, &cfg, &search, false).unwrap().estimate;
    assert!(((raw.delay_s - still.delay_s()) / cfg.delay_bin_s()).abs() < 1e-3);
}

#[test]
fn crb_scales_with_snr() {
    let cfg = small();
    let a = crb(&cfg, 0.0).unwrap();
    for snr in [-30.0, -10.0, 10.0, 25.0] {
        let b = crb(&cfg, snr).unwrap();
        let k = 10f64.powf(-snr / 20.0);
        assert!((b.std_range_m / (a.std_range_m * k) - 1.0).abs() < 1e-9);
        assert!((b.std_velocity_mps / (a.std_velocity_mps * k) - 1.0).abs() < 1e-9);
    }
    assert!(crb(&cfg, f64::NAN).is_err());
}

#[test]
fn hopping_trades_doppler_for_range() {
    // Same time aperture M·L, twice the synthetic bandwidth.
    let mk = |m: usize, l: usize| SteppedOfdmConfig::linear(77e9, 500e3, 100, m, l, 400e-9).unwrap();
    for (m, l) in [(1, 256), (2, 128), (4, 64), (8, 32)] {
        let a = crb(&mk(m, l), -20.0).unwrap();
        let b = crb(&mk(2 * m, l / 2), -20.0).unwrap();
        assert!(b.std_range_m < a.std_range_m);
        assert!(b.std_velocity_mps >= a.std_velocity_mps * (1.0 - 1e-12));
    }
    // Without hopping the two bounds decouple.
    let one = mk(1, 256);
    let f = fisher_information(&one, 0.0).unwrap();
    assert!(f[(0, 1)].abs() < 1e-9 * (f[(0, 0)] * f[(1, 1)]).sqrt());
}

#[test]
fn bounds_follow_their_apertures() {
    // M = 1: the delay bound depends on L only through the sample count,
    // the Doppler bound on N only through the sample count.
    let mk = |n: usize, l: usize| SteppedOfdmConfig::linear(77e9, 500e3, n, 1, l, 400e-9).unwrap();
    let base = crb(&mk(64, 32), 0.0).unwrap();
    let more_l = crb(&mk(64, 128), 0.0).unwrap();
    assert!((more_l.std_range_m * 2.0 / base.std_range_m - 1.0).abs() < 1e-9);
    let more_n = crb(&mk(256, 32), 0.0).unwrap();
    assert!((more_n.std_velocity_mps * 2.0 / base.std_velocity_mps - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enlarging_never_worsens_both(n in 2usize..64, m in 1usize..6, l in 2usize..40, which in 0usize..3) {
        let mk = |n: usize, m: usize, l: usize| SteppedOfdmConfig::linear(77e9, 500e3, n, m, l, 400e-9).unwrap();
        let a = crb(&mk(n, m, l), 0.0).unwrap();
        let (n2, m2, l2) = match which { 0 => (n + 1, m, l), 1 => (n, m + 1, l), _ => (n, m, l + 1) };
        let b = crb(&mk(n2, m2, l2), 0.0).unwrap();
        prop_assert!(b.std_range_m <= a.std_range_m * (1.0 + 1e-12) || b.std_velocity_mps <= a.std_velocity_mps * (1.0 + 1e-12));
    }
}

#[test]
fn singular_when_doppler_unobservable() {
    let cfg = SteppedOfdmConfig::linear(77e9, 500e3, 64, 1, 1, 400e-9).unwrap();
    assert!(matches!(crb(&cfg, 10.0), Err(Error::Singular(_))));
}

fn monte_carlo(snr_db: f64, trials: u64) -> (f64, f64, f64, f64, SteppedOfdmConfig) {
    let cfg = small();
    let target = Target::new(30.0, 20.0, 1.0).unwrap();
    let noise = 1.0 / db_to_lin(snr_db);
    let search = DelayDopplerSearch::new(55.0, 40.0);
    let errs: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = child_rng(77, stream::OFDM, t);
            let grid = Cube::qpsk(&cfg, &mut rng);
            let y = simulate_rx_cube(&cfg, &grid, &target, Complex64::new(1.0, 0.0), noise, &mut rng).unwrap();
            let e = matched_filter(&y, &grid, &cfg, &search, true).unwrap().estimate;
            (e.delay_s - target.delay_s(), e.doppler - target.doppler())
        })
        .collect();
    let k = trials as f64;
    let (mt, mv) = errs.iter().fold((0.0, 0.0), |a, e| (a.0 + e.0 / k, a.1 + e.1 / k));
    let (vt, vv) = errs.iter().fold((0.0, 0.0), |a, e| (a.0 + (e.0 - mt).powi(2) / (k - 1.0), a.1 + (e.1 - mv).powi(2) / (k - 1.0)));
    (mt, mv, vt, vv, cfg)
}

#[test]
fn matched_filter_attains_crb_and_is_unbiased() {
    let snr = 0.0;
    let (mt, mv, vt, vv, cfg) = monte_carlo(snr, 500);
    let b = crb(&cfg, snr).unwrap();
    let db = |x: f64| 10.0 * x.log10();
    let rt = db(vt / b.std_delay_s.powi(2));
    let rv = db(vv / b.std_doppler.powi(2));
    assert!(rt.abs() < 3.0 && rv.abs() < 3.0, "variance over CRB: delay {rt:.2} dB, Doppler {rv:.2} dB");
    assert!((mt / cfg.delay_bin_s()).abs() < 0.1 && (mv / cfg.doppler_bin()).abs() < 0.1);
}

#[test]
fn fig11_orderings() {
    let t = fig11_template();
    let b = fig11_budget();
    let space = SearchSpace::default();
    let spec = fig11_spec();
    let stepped = max_vehicles(Scheme::Stepped, &t, &b, &spec, &space).unwrap();
    let narrow = max_vehicles(Scheme::Narrowband, &t, &b, &spec, &space).unwrap();
    let wide = max_vehicles(Scheme::Wideband, &t, &b, &spec, &space).unwrap();
    assert!(stepped.count >= narrow.count && stepped.count > 0);
    assert!(stepped.std_range_m <= 0.1 && stepped.std_velocity_mps <= 0.1);
    assert!(wide.count > 0);
    // Wideband is velocity limited: relaxing the range limit does nothing.
    for r in [0.2, 0.5, 1.0, 5.0] {
        let relaxed = AccuracySpec { max_range_std_m: r, ..spec };
        assert_eq!(max_vehicles(Scheme::Wideband, &t, &b, &relaxed, &space).unwrap().count, wide.count);
    }
    // Narrowband cannot reach 0.1 m with 50 MHz at -30 dB in 512 symbols.
    assert_eq!(narrow.count, 0);
    assert!(narrow.binding.unwrap().contains("range"));
}

#[test]
fn doubling_time_budget_at_least_doubles_count() {
    let t = fig11_template();
    let space = SearchSpace::default();
    let spec = AccuracySpec {
        subcarrier_snr_db: -20.0,
        ..fig11_spec()
    };
    for scheme in Scheme::ALL {
        let one = max_vehicles(scheme, &t, &fig11_budget(), &spec, &space).unwrap().count;
        let two = max_vehicles(
            scheme,
            &t,
            &Budget {
                duration_s: 60e-3,
                ..fig11_budget()
            },
            &spec,
            &space,
        )
        .unwrap()
        .count;
        assert!(two >= 2 * one, "{scheme}: {one} -> {two}");
    }
}

#[test]
fn infeasible_spec_reports_binding_constraint() {
    let spec = AccuracySpec {
        max_velocity_std_mps: 1e-4,
        ..fig11_spec()
    };
    let r = max_vehicles(Scheme::Wideband, &fig11_template(), &fig11_budget(), &spec, &SearchSpace::default()).unwrap();
    assert_eq!(r.count, 0);
    assert!(r.binding.unwrap().contains("velocity"));
}

#[test]
fn allocation_is_disjoint_and_staggered() {
    let b = fig11_budget();
    let cfg = scheme_config(Scheme::Stepped, &fig11_template(), &b, 3, 400).unwrap();
    let cap = tile_count(&cfg, &b);
    let one = allocate(1, &cfg, &b).unwrap();
    assert_eq!(one.len(), 3);
    let all = allocate(cap, &cfg, &b).unwrap();
    assert!(tiles_disjoint(&all));
    assert!(allocate(cap + 1, &cfg, &b).is_err());
    // Three vehicles take distinct sub-bands in every slot and each hops.
    let three = allocate(3, &cfg, &b).unwrap();
    for k in 0..3 {
        let mut bands: Vec<f64> = three.iter().filter(|t| t.start_s == three[k].start_s).map(|t| t.low_hz).collect();
        bands.sort_by(f64::total_cmp);
        bands.dedup();
        assert_eq!(bands.len(), 3);
    }
    let v0: Vec<f64> = three.iter().filter(|t| t.vehicle == 0).map(|t| t.low_hz).collect();
    assert_eq!(v0, vec![0.0, 50e6, 100e6]);
    assert!(three.iter().all(|t| t.high_hz <= b.bandwidth_hz && t.end_s <= b.duration_s));
}

#[test]
fn count_file_layout() {
    let rows = vec![(Scheme::Stepped, -30.0, 300), (Scheme::Wideband, -30.0, 73)];
    let mut buf = Vec::new();
    write_counts(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "# scheme,constraint_axis_value,max_vehicles");
    assert!(lines[1].starts_with("stepped,") && lines[1].ends_with(",300"));
    assert!(lines[2].starts_with("wideband,"));
}
