//! Experiment pipelines behind the command-line runner.
//!
//! [`execute`] computes every result file in memory; [`run_experiment`]
//! writes them one after another and adds `summary.json`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};
use std::path::PathBuf;
use std::time::Instant;

use crate::config::{CoordMac, Experiment, Highway, OfdmCount, PhaseNoise, RunConfig, SingleLink, SlowChirp};
use crate::coordmac::{self, SUMMARY_COLUMNS};
use crate::dsv::write_table;
use crate::error::{Error, Result};
use crate::interference::{
    averaged_range_profile, ghost_to_target_ratio, slope_ratio_sweep, CoherenceClass, CoherenceTolerances,
    InterfererSpec,
};
use crate::netgeom::{expected_lane_interference, monte_carlo_aggregate, sinr_curve, write_curve};
use crate::ofdm::{count_sweep, max_vehicles, write_counts, Scheme, SweepAxis};
use crate::rng::{child_rng, derive_seed, stream};
use crate::scenario::NoiseConfig;
use crate::slowchirp::{
    build_velocity_lut, coupling, dechirp_slow, doppler_offset_channels, estimate_range_velocity, max_channels,
    two_tone_coupling, velocity_integral,
};
use crate::units::{lin_to_db, watts_to_dbm, SPEED_OF_LIGHT};

pub const DEFAULT_PHASE_NOISE_REALIZATIONS: usize = 200;
pub const DEFAULT_HIGHWAY_TRIALS: usize = 100_000;
pub const DEFAULT_COORDMAC_SEEDS: usize = 100;

/// One result file.
#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub files: Vec<Output>,
    pub metrics: Map<String, Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub experiment: String,
    pub master_seed: u64,
    pub trials: Option<usize>,
    pub config_hash: String,
    pub version: String,
    pub wall_time_s: f64,
    pub output_dir: PathBuf,
    pub files: Vec<String>,
    pub metrics: Map<String, Value>,
}

fn table(name: impl Into<String>, columns: &[&str], rows: &[Vec<f64>]) -> Result<Output> {
    let mut bytes = Vec::new();
    write_table(&mut bytes, columns, rows)?;
    Ok(Output {
        name: name.into(),
        bytes,
    })
}

fn db(p: f64) -> f64 {
    lin_to_db(p.max(1e-300))
}

fn profile_rows(range_m: &[f64], power: &[f64]) -> Vec<Vec<f64>> {
    range_m.iter().zip(power).map(|(r, p)| vec![*r, db(*p)]).collect()
}

fn context(kind: &str, e: Error) -> Error {
    match e {
        Error::Io(m) => Error::Io(format!("{kind}: {m}")),
        other => other,
    }
}

/// Runs the pipeline and returns the result files without touching disk.
pub fn execute(cfg: &RunConfig) -> Result<Outcome> {
    let kind = cfg.experiment.kind();
    match &cfg.experiment {
        Experiment::SingleLink(e) => single_link(e),
        Experiment::PhaseNoise(e) => phase_noise(e, cfg.trials.unwrap_or(DEFAULT_PHASE_NOISE_REALIZATIONS)),
        Experiment::Highway(e) => highway(e, cfg.trials.unwrap_or(DEFAULT_HIGHWAY_TRIALS), cfg.master_seed),
        Experiment::SlowChirp(e) => slowchirp(e),
        Experiment::CoordMac(e) => coordmac(e, cfg.trials.unwrap_or(DEFAULT_COORDMAC_SEEDS), cfg.master_seed),
        Experiment::OfdmCount(e) => ofdm_count(e),
    }
    .map_err(|e| context(kind, e))
}

/// Executes `cfg`, writes its files and `summary.json` into the output directory.
pub fn run_experiment(cfg: &RunConfig) -> Result<Summary> {
    let start = Instant::now();
    let outcome = execute(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    for f in &outcome.files {
        std::fs::write(cfg.output_dir.join(&f.name), &f.bytes)?;
    }
    let summary = Summary {
        experiment: cfg.experiment.kind().to_owned(),
        master_seed: cfg.master_seed,
        trials: cfg.trials,
        config_hash: cfg.hash.clone(),
        version: env!("CARGO_PKG_VERSION").to_owned(),
        wall_time_s: start.elapsed().as_secs_f64(),
        output_dir: cfg.output_dir.clone(),
        files: outcome.files.iter().map(|f| f.name.clone()).collect(),
        metrics: outcome.metrics,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(cfg.output_dir.join("summary.json"), text + "\n")?;
    Ok(summary)
}

fn class_code(c: CoherenceClass) -> f64 {
    match c {
        CoherenceClass::Coherent => 0.0,
        CoherenceClass::PartiallyCoherent => 1.0,
        CoherenceClass::Incoherent => 2.0,
    }
}

fn single_link(e: &SingleLink) -> Result<Outcome> {
    let tol = CoherenceTolerances::default();
    let points = slope_ratio_sweep(&e.victim, &e.echo, &e.interferer, &e.slope_ratios, e.zero_pad, &tol)?;
    let mut files = Vec::new();
    for p in &points {
        files.push(table(
            format!("profile_ratio_{:.4}.dsv", p.slope_ratio),
            &["range_m", "power_db"],
            &profile_rows(&p.range_m, &p.power),
        )?);
    }
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            vec![
                p.slope_ratio,
                class_code(p.class),
                db(p.median_floor),
                db(p.predicted_sir),
                db(p.measured_sir),
                p.masked() as u8 as f64,
            ]
        })
        .collect();
    files.push(table(
        "sweep.dsv",
        &[
            "slope_ratio",
            "coherence_class",
            "median_floor_db",
            "predicted_sir_db",
            "measured_sir_db",
            "masked",
        ],
        &rows,
    )?);
    let matched = InterfererSpec {
        sweep_bandwidth_hz: e.victim.slope() * e.interferer.chirp_duration_s,
        ..e.interferer
    };
    let ghost = ghost_to_target_ratio(&e.victim, &matched, e.zero_pad)?;
    let mut metrics = Map::new();
    metrics.insert("ghost_to_target_db".into(), json!(db(ghost)));
    metrics.insert(
        "points".into(),
        json!(points
            .iter()
            .map(|p| json!({
                "slope_ratio": p.slope_ratio,
                "class": p.class,
                "median_floor_db": db(p.median_floor),
                "masked": p.masked(),
                "predicted_masked": p.predicted_masked(),
            }))
            .collect::<Vec<_>>()),
    );
    Ok(Outcome { files, metrics })
}

fn phase_noise(e: &PhaseNoise, realizations: usize) -> Result<Outcome> {
    let prof = averaged_range_profile(&e.victim, &e.echo, &e.interferer, realizations, e.zero_pad)?;
    let cols = ["range_m", "power_db"];
    let files = vec![
        table("target_clean.dsv", &cols, &profile_rows(&prof.range_m, &prof.target_clean))?,
        table("target_phase_noise.dsv", &cols, &profile_rows(&prof.range_m, &prof.target_noisy))?,
        table("interference_clean.dsv", &cols, &profile_rows(&prof.range_m, &prof.interference_clean))?,
        table("interference_phase_noise.dsv", &cols, &profile_rows(&prof.range_m, &prof.interference_noisy))?,
    ];
    let (tn, inn) = prof.noisy_widths(e.zero_pad);
    let (tc, ic) = prof.clean_widths(e.zero_pad);
    let mut metrics = Map::new();
    metrics.insert("realizations".into(), json!(realizations));
    metrics.insert("target_width_bins".into(), json!(tn));
    metrics.insert("interference_width_bins".into(), json!(inn));
    metrics.insert("target_clean_width_bins".into(), json!(tc));
    metrics.insert("interference_clean_width_bins".into(), json!(ic));
    Ok(Outcome { files, metrics })
}

fn highway(e: &Highway, trials: usize, seed: u64) -> Result<Outcome> {
    let curve = sinr_curve(&e.scenario, &e.spacing_grid_m)?;
    let mut bytes = Vec::new();
    write_curve(&mut bytes, &curve)?;
    let mut files = vec![Output {
        name: "sinr_curve.dsv".into(),
        bytes,
    }];
    let split: Vec<Vec<f64>> = curve
        .iter()
        .map(|p| vec![p.delta_m, watts_to_dbm(p.same_direction_w), watts_to_dbm(p.oncoming_w)])
        .collect();
    files.push(table("lane_split.dsv", &["delta_m", "same_direction_dbm", "oncoming_dbm"], &split)?);

    let scn = e.scenario.with_spacing(e.oracle_spacing_m);
    let offsets: Vec<i32> = scn.lanes.iter().map(|l| l.offset).collect();
    let oracle: Vec<Vec<f64>> = offsets
        .iter()
        .map(|&l| {
            let cf = expected_lane_interference(&scn, l);
            let mc = monte_carlo_aggregate(&scn, l, trials, derive_seed(seed, stream::NETGEOM, l as u64))?;
            Ok(vec![l as f64, cf, mc, mc / cf - 1.0])
        })
        .collect::<Result<_>>()?;
    files.push(table(
        "lane_oracle.dsv",
        &["lane_offset", "closed_form_w", "monte_carlo_w", "relative_error"],
        &oracle,
    )?);

    let crossover = curve
        .windows(2)
        .find(|w| (w[0].same_direction_w > w[0].oncoming_w) != (w[1].same_direction_w > w[1].oncoming_w))
        .map(|w| (w[0].delta_m * w[1].delta_m).sqrt());
    let mut metrics = Map::new();
    metrics.insert("interference_probability".into(), json!(e.scenario.interference_probability()));
    metrics.insert("monte_carlo_trials".into(), json!(trials));
    metrics.insert(
        "max_oracle_relative_error".into(),
        json!(oracle.iter().map(|r| r[3].abs()).fold(0.0, f64::max)),
    );
    metrics.insert("crossover_spacing_m".into(), json!(crossover));
    metrics.insert("sinr_db_at_min_spacing".into(), json!(db(curve[0].sinr)));
    metrics.insert("sinr_db_at_max_spacing".into(), json!(db(curve[curve.len() - 1].sinr)));
    Ok(Outcome { files, metrics })
}

fn log_points(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

fn linear(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
    lo + (hi - lo) * i as f64 / (n - 1) as f64
}

fn slowchirp(e: &SlowChirp) -> Result<Outcome> {
    let c = &e.chirp;
    let taus = log_points(e.coupling_span_s.0, e.coupling_span_s.1, e.coupling_points);
    let rows: Vec<Vec<f64>> = taus
        .par_iter()
        .map(|&dt| {
            let k = coupling(dt, c.bandwidth_hz, c.duration_s)?;
            Ok(vec![dt, db(k.exact), db(k.bound), db(two_tone_coupling(dt, c.bandwidth_hz))])
        })
        .collect::<Result<_>>()?;
    let mut files = vec![table(
        "coupling.dsv",
        &["delta_tau_s", "coupling_db", "bound_db", "two_tone_db"],
        &rows,
    )?];

    let lut_beat = dechirp_slow(&e.lut_target, c, 1.0, &NoiseConfig::off())?;
    let est = estimate_range_velocity(&lut_beat, c, &e.estimator)?;
    let origin = Complex64::new(e.estimator.origin_re, e.estimator.origin_im);
    let lut = build_velocity_lut(c, est.f_star_hz, est.lut_span_mps, est.lut_step_mps, origin)?;
    let mut bytes = Vec::new();
    lut.write_dsv(&mut bytes)?;
    files.push(Output {
        name: "velocity_lut.dsv".into(),
        bytes,
    });

    let n = 201;
    let (vlo, vhi) = (e.estimator.v_min_mps, e.estimator.v_max_mps);
    let trace: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let v = linear(vlo, vhi, n, i);
            let z = velocity_integral(2.0 * v / SPEED_OF_LIGHT, c.slope(), c.duration_s);
            vec![v * 3.6, z.re, z.im]
        })
        .collect();
    files.push(table("integral_trace.dsv", &["velocity_kmh", "integral_re", "integral_im"], &trace)?);

    let g = e.grid_points;
    let cases: Vec<(f64, f64)> = (0..g)
        .flat_map(|i| {
            (0..g).map(move |j| {
                (
                    linear(e.range_span_m.0, e.range_span_m.1, g, i),
                    linear(e.velocity_span_mps.0, e.velocity_span_mps.1, g, j),
                )
            })
        })
        .collect();
    let grid: Vec<Vec<f64>> = cases
        .par_iter()
        .map(|&(r, v)| {
            let target = crate::scenario::Target::new(r, v, e.rcs_m2)?;
            let y = dechirp_slow(&target, c, 1.0, &NoiseConfig::off())?;
            Ok(match doppler_offset_channels(&y, c, &e.estimator, &e.doppler_offsets_hz) {
                Ok((best, _)) => vec![r, v, best.range_m, best.velocity_mps, best.doppler_offset_hz, 1.0],
                Err(Error::AmbiguousVelocity(_)) => vec![r, v, f64::NAN, f64::NAN, f64::NAN, 0.0],
                Err(other) => return Err(other),
            })
        })
        .collect::<Result<_>>()?;
    let ok = grid.iter().filter(|r| r[5] == 1.0).count();
    let worst = |col: usize, truth: usize| {
        grid.iter()
            .filter(|r| r[5] == 1.0)
            .map(|r| (r[col] - r[truth]).abs())
            .fold(0.0, f64::max)
    };
    let (max_range_err, max_vel_err) = (worst(2, 0), worst(3, 1));
    files.push(table(
        "estimates.dsv",
        &["range_m", "velocity_mps", "range_est_m", "velocity_est_mps", "doppler_offset_hz", "resolved"],
        &grid,
    )?);

    let mut metrics = Map::new();
    metrics.insert(
        "max_channels".into(),
        json!(max_channels(c.duration_s, c.bandwidth_hz, e.rcs_m2, e.interferer_distance_m)?),
    );
    metrics.insert("lut_span_mps".into(), json!(lut.span()));
    metrics.insert("lut_step_mps".into(), json!(lut.step()));
    metrics.insert("grid_resolved".into(), json!(ok));
    metrics.insert("grid_total".into(), json!(grid.len()));
    metrics.insert("max_range_error_m".into(), json!(max_range_err));
    metrics.insert("max_velocity_error_mps".into(), json!(max_vel_err));
    Ok(Outcome { files, metrics })
}

fn coordmac(e: &CoordMac, seeds: usize, master: u64) -> Result<Outcome> {
    let mut files = Vec::new();
    let mut fig = Vec::new();
    let mut safe = true;
    for &n in &e.radar_counts {
        let sub = derive_seed(master, stream::COORDMAC, n as u64);
        let runs: Vec<coordmac::RunResult> = (0..seeds as u64)
            .into_par_iter()
            .map(|s| coordmac::run(n, e.frames, &e.frame, &e.topology, &mut child_rng(sub, stream::COORDMAC, s)))
            .collect::<Result<_>>()?;
        safe &= runs.iter().all(|r| coordmac::check_safety(&r.final_vehicles));
        let mean = |f: &dyn Fn(&coordmac::RunResult) -> f64| runs.iter().map(f).sum::<f64>() / runs.len() as f64;
        let rows: Vec<Vec<f64>> = (0..e.frames)
            .map(|k| vec![k as f64, mean(&|r| r.coordinated[k]), mean(&|r| r.uncoordinated[k])])
            .collect();
        files.push(table(format!("trajectory_n{n}.dsv"), &SUMMARY_COLUMNS, &rows)?);
        let mut trace = Vec::new();
        coordmac::write_trace(&mut trace, &runs[0].trace)?;
        files.push(Output {
            name: format!("trace_n{n}_seed0.log"),
            bytes: trace,
        });
        let below = runs.iter().filter(|r| r.coordinated[0] < r.uncoordinated[0]).count() as f64;
        let zero = runs.iter().filter(|r| r.coordinated[0] == 0.0).count() as f64;
        fig.push(vec![
            n as f64,
            rows[0][1],
            rows[0][2],
            below / runs.len() as f64,
            zero / runs.len() as f64,
        ]);
    }
    files.push(table(
        "first_frame.dsv",
        &["radars", "f_coordinated", "f_uncoordinated", "fraction_below", "fraction_zero"],
        &fig,
    )?);
    let mut metrics = Map::new();
    metrics.insert("capacity".into(), json!(e.frame.capacity()));
    metrics.insert("seeds".into(), json!(seeds));
    metrics.insert("safety_holds".into(), json!(safe));
    metrics.insert(
        "first_frame".into(),
        json!(fig
            .iter()
            .map(|r| json!({"radars": r[0], "f_coordinated": r[1], "f_uncoordinated": r[2], "fraction_below": r[3]}))
            .collect::<Vec<_>>()),
    );
    Ok(Outcome { files, metrics })
}

fn ofdm_count(e: &OfdmCount) -> Result<Outcome> {
    let rows = count_sweep(e.axis, &e.values, &e.template, &e.budget, &e.spec, &e.space)?;
    let mut bytes = Vec::new();
    write_counts(&mut bytes, &rows)?;
    let mut files = vec![Output {
        name: "counts.dsv".into(),
        bytes,
    }];
    let axis = match e.axis {
        SweepAxis::SubcarrierSnr => "subcarrier_snr_db",
        SweepAxis::RangeLimit => "range_std_limit_m",
        SweepAxis::VelocityLimit => "velocity_std_limit_mps",
    };
    for scheme in Scheme::ALL {
        let curve: Vec<Vec<f64>> = rows
            .iter()
            .filter(|r| r.0 == scheme)
            .map(|r| vec![r.1, r.2 as f64])
            .collect();
        files.push(table(format!("counts_{scheme}.dsv"), &[axis, "max_vehicles"], &curve)?);
    }
    let best: Vec<_> = Scheme::ALL
        .par_iter()
        .map(|s| max_vehicles(*s, &e.template, &e.budget, &e.spec, &e.space))
        .collect::<Result<_>>()?;
    let mut metrics = Map::new();
    metrics.insert("at_base_spec".into(), serde_json::to_value(&best).map_err(|x| Error::Io(x.to_string()))?);
    Ok(Outcome { files, metrics })
}
