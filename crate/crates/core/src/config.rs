//! Run-configuration files.
//!
//! A run file is TOML with a `[run]` section naming the experiment kind and
//! the sections that kind reads. Key names carry their units; values are
//! converted to SI once here.
//!
//! ```toml
//! [run]
//! experiment = "single_link"
//! master_seed = 1
//! output_dir = "results/fig3"
//!
//! [radar]
//! carrier_ghz = 77.0
//! ...
//! ```

use serde::Deserialize;
use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use toml::Spanned;

use crate::coordmac::{FrameConfig, Topology};
use crate::fmcw::{ChirpConfig, Echo};
use crate::interference::{InterfererSpec, PhaseNoiseConfig};
use crate::netgeom::{log_grid, HighwayScenario};
use crate::ofdm::{AccuracySpec, Budget, DopplerCarrier, OfdmTemplate, SearchSpace, SweepAxis};
use crate::rng::{derive_seed, stream};
use crate::scenario::{interferer_power_gain, target_power_gain, LinkBudget, Target};
use crate::slowchirp::{EstimatorConfig, SlowChirpConfig};
use crate::units::SPEED_OF_LIGHT;

pub const EXPERIMENTS: [(&str, &str); 6] = [
    ("single_link", "range profiles of a target under one interferer across chirp-slope ratios"),
    ("phase_noise", "range profiles averaged over oscillator phase-noise realizations"),
    ("highway", "SINR versus mean vehicle spacing on a multi-lane highway"),
    ("slowchirp", "slow-chirp coupling, velocity look-up table and joint estimation grid"),
    ("coordmac", "interference probability with and without coordinated slot assignment"),
    ("ofdm_count", "vehicles supported by stepped, narrowband and wideband OFDM"),
];

/// Bundled example configurations, `(name, contents)`.
pub const BUNDLED: [(&str, &str); 6] = [
    ("fig3", include_str!("../configs/fig3.cfg")),
    ("fig4", include_str!("../configs/fig4.cfg")),
    ("fig6", include_str!("../configs/fig6.cfg")),
    ("fig7", include_str!("../configs/fig7.cfg")),
    ("fig10", include_str!("../configs/fig10.cfg")),
    ("fig11", include_str!("../configs/fig11.cfg")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    let stem = name.strip_suffix(".cfg").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == stem).map(|(_, s)| *s)
}

/// Parse or validation failure, with the 1-based line it refers to when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: Option<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        line,
        message: message.into(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub master_seed: u64,
    pub output_dir: PathBuf,
    /// Monte-Carlo size; each kind has its own default.
    pub trials: Option<usize>,
    pub experiment: Experiment,
    /// SHA-256 of the source text and the effective seed and trial count.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    SingleLink(SingleLink),
    PhaseNoise(PhaseNoise),
    Highway(Highway),
    SlowChirp(SlowChirp),
    CoordMac(CoordMac),
    OfdmCount(OfdmCount),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::SingleLink(_) => "single_link",
            Experiment::PhaseNoise(_) => "phase_noise",
            Experiment::Highway(_) => "highway",
            Experiment::SlowChirp(_) => "slowchirp",
            Experiment::CoordMac(_) => "coordmac",
            Experiment::OfdmCount(_) => "ofdm_count",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleLink {
    pub victim: ChirpConfig,
    pub echo: Echo,
    pub interferer: InterfererSpec,
    pub slope_ratios: Vec<f64>,
    pub zero_pad: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseNoise {
    pub victim: ChirpConfig,
    pub echo: Echo,
    /// Carries the phase-noise model.
    pub interferer: InterfererSpec,
    pub zero_pad: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Highway {
    pub scenario: HighwayScenario,
    pub spacing_grid_m: Vec<f64>,
    /// Spacing at which the closed form is checked against Monte-Carlo.
    pub oracle_spacing_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlowChirp {
    pub chirp: SlowChirpConfig,
    pub estimator: EstimatorConfig,
    pub range_span_m: (f64, f64),
    pub velocity_span_mps: (f64, f64),
    pub grid_points: usize,
    /// Target whose look-up table is written out.
    pub lut_target: Target,
    pub doppler_offsets_hz: Vec<f64>,
    pub coupling_span_s: (f64, f64),
    pub coupling_points: usize,
    pub rcs_m2: f64,
    pub interferer_distance_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoordMac {
    pub frame: FrameConfig,
    pub topology: Topology,
    pub radar_counts: Vec<usize>,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OfdmCount {
    pub template: OfdmTemplate,
    pub budget: Budget,
    pub spec: AccuracySpec,
    pub space: SearchSpace,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

// ---- raw file layout ----

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    run: Option<Spanned<RawRun>>,
    radar: Option<Spanned<RawRadar>>,
    target: Option<Spanned<RawTarget>>,
    interferer: Option<Spanned<RawInterferer>>,
    single_link: Option<Spanned<RawSingleLink>>,
    phase_noise: Option<Spanned<RawPhaseNoise>>,
    highway: Option<Spanned<RawHighway>>,
    slowchirp: Option<Spanned<RawSlowChirp>>,
    estimator: Option<Spanned<EstimatorConfig>>,
    coordmac: Option<Spanned<RawCoordMac>>,
    ofdm_count: Option<Spanned<RawOfdm>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    experiment: Option<String>,
    master_seed: Option<u64>,
    output_dir: Option<String>,
    trials: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRadar {
    carrier_ghz: f64,
    bandwidth_ghz: f64,
    chirp_duration_us: f64,
    #[serde(default = "one_usize")]
    num_chirps: usize,
    interest_bandwidth_mhz: Option<f64>,
    /// Alternative to `interest_bandwidth_mhz`: `B_s = α·2R/c`.
    max_range_m: Option<f64>,
    #[serde(default = "one")]
    duty_cycle: f64,
    tx_power_dbm: f64,
    antenna_gain_dbi: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTarget {
    range_m: f64,
    #[serde(default)]
    velocity_mps: f64,
    rcs_m2: f64,
    #[serde(default)]
    phase_rad: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInterferer {
    range_m: f64,
    chirp_duration_us: f64,
    /// Defaults to the victim's sweep bandwidth.
    bandwidth_ghz: Option<f64>,
    /// Omitted: drawn uniformly over one interferer frame from the master seed.
    start_offset_us: Option<f64>,
    #[serde(default)]
    carrier_offset_mhz: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSingleLink {
    slope_ratios: Vec<f64>,
    #[serde(default = "eight")]
    zero_pad: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhaseNoise {
    pedestal_height_dbc_hz: f64,
    pedestal_width_khz: f64,
    #[serde(default = "eight")]
    zero_pad: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHighway {
    lane_spacing_m: f64,
    fov_forward_deg: f64,
    fov_backward_deg: f64,
    #[serde(default = "ten")]
    noise_figure_db: f64,
    spacing_min_m: f64,
    spacing_max_m: f64,
    spacing_points: usize,
    oracle_spacing_m: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSlowChirp {
    carrier_ghz: f64,
    bandwidth_ghz: f64,
    duration_ms: f64,
    channel_count: u64,
    #[serde(default)]
    channel_index: u64,
    max_range_m: f64,
    max_speed_mps: f64,
    range_span_m: [f64; 2],
    velocity_span_mps: [f64; 2],
    grid_points: usize,
    lut_range_m: f64,
    lut_velocity_mps: f64,
    /// Velocity shifts of the Doppler-offset channels.
    doppler_offsets_mps: Vec<f64>,
    coupling_span_ns: [f64; 2],
    coupling_points: usize,
    rcs_m2: f64,
    interferer_distance_m: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoordMac {
    frame_duration_ms: f64,
    chirp_duration_us: f64,
    chirps_per_frame: usize,
    carrier_ghz: f64,
    sweep_bandwidth_ghz: f64,
    interest_bandwidth_mhz: f64,
    comm_band_ghz: [f64; 2],
    radar_bands_ghz: Vec<[f64; 2]>,
    sync_error_bound_us: f64,
    max_interferer_range_m: f64,
    packet_airtime_us: f64,
    #[serde(default = "radio_range")]
    radio_range_m: f64,
    #[serde(default = "staleness")]
    staleness_frames: u64,
    area_side_m: f64,
    fov_deg: f64,
    #[serde(default = "one_usize")]
    rcus_per_vehicle: usize,
    radar_counts: Vec<usize>,
    frames: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOfdm {
    base_carrier_ghz: f64,
    subcarrier_spacing_khz: f64,
    cp_duration_ns: f64,
    adc_rate_mhz: f64,
    #[serde(default = "base_carrier")]
    doppler_carrier: DopplerCarrier,
    bandwidth_ghz: f64,
    duration_ms: f64,
    max_range_std_m: f64,
    max_velocity_std_mps: f64,
    subcarrier_snr_db: f64,
    #[serde(default = "max_frames")]
    max_frames: usize,
    #[serde(default = "max_symbols")]
    max_symbols: usize,
    sweep_axis: SweepAxis,
    sweep_values: Vec<f64>,
}

fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn one_usize() -> usize {
    1
}
fn eight() -> usize {
    8
}
fn radio_range() -> f64 {
    400.0
}
fn staleness() -> u64 {
    5
}
fn base_carrier() -> DopplerCarrier {
    DopplerCarrier::Base
}
fn max_frames() -> usize {
    SearchSpace::default().max_frames
}
fn max_symbols() -> usize {
    SearchSpace::default().max_symbols
}

// ---- parsing ----

/// Overrides applied on top of the file, as given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub trials: Option<usize>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => return err(None, format!("{}: {e}", path.display())),
    };
    parse_str(&text, &Overrides::default())
}

struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn of<T>(&self, s: &Spanned<T>) -> Option<usize> {
        let start = s.span().start.min(self.0.len());
        Some(self.0[..start].matches('\n').count() + 1)
    }
}

/// Wraps a module validation error with the line of the section it came from.
fn at<T>(line: Option<usize>, section: &str, r: crate::Result<T>) -> Result<T, ConfigError> {
    r.or_else(|e| err(line, format!("[{section}] {e}")))
}

fn need<'a, T>(s: &'a Option<Spanned<T>>, name: &str, kind: &str) -> Result<&'a Spanned<T>, ConfigError> {
    s.as_ref()
        .ok_or_else(|| ConfigError {
            line: None,
            message: format!("experiment {kind} needs a [{name}] section"),
        })
}

const RUN_KEYS: [&str; 3] = ["experiment", "master_seed", "output_dir"];

pub fn parse_str(text: &str, ov: &Overrides) -> Result<RunConfig, ConfigError> {
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        ConfigError {
            line,
            message: e.message().to_string(),
        }
    })?;
    let lines = Lines(text);

    let Some(run) = &raw.run else {
        return err(
            None,
            format!(
                "missing required keys: [run] {}, plus the section(s) of the chosen experiment",
                RUN_KEYS.join(", ")
            ),
        );
    };
    let run_line = lines.of(run);
    let r = run.get_ref();
    let missing: Vec<&str> = [
        ("experiment", r.experiment.is_none()),
        ("master_seed", r.master_seed.is_none() && ov.seed.is_none()),
        ("output_dir", r.output_dir.is_none() && ov.output_dir.is_none()),
    ]
    .iter()
    .filter(|(_, m)| *m)
    .map(|(k, _)| *k)
    .collect();
    if !missing.is_empty() {
        return err(run_line, format!("missing required keys: [run] {}", missing.join(", ")));
    }
    let kind = r.experiment.clone().unwrap_or_default();
    let Some((kind, _)) = EXPERIMENTS.iter().find(|(k, _)| *k == kind) else {
        let known: Vec<&str> = EXPERIMENTS.iter().map(|(k, _)| *k).collect();
        return err(run_line, format!("unknown experiment {kind:?}; expected one of {}", known.join(", ")));
    };
    let master_seed = ov.seed.or(r.master_seed).unwrap_or_default();
    let trials = ov.trials.or(r.trials);
    if trials == Some(0) {
        return err(run_line, "trials must be at least 1");
    }
    let output_dir = ov
        .output_dir
        .clone()
        .or_else(|| r.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_default();

    let allowed: &[&str] = match *kind {
        "single_link" => &["radar", "target", "interferer", "single_link"],
        "phase_noise" => &["radar", "target", "interferer", "phase_noise"],
        "highway" => &["radar", "target", "highway"],
        "slowchirp" => &["slowchirp", "estimator"],
        "coordmac" => &["coordmac"],
        _ => &["ofdm_count"],
    };
    let present = [
        ("radar", raw.radar.as_ref().and_then(|s| lines.of(s))),
        ("target", raw.target.as_ref().and_then(|s| lines.of(s))),
        ("interferer", raw.interferer.as_ref().and_then(|s| lines.of(s))),
        ("single_link", raw.single_link.as_ref().and_then(|s| lines.of(s))),
        ("phase_noise", raw.phase_noise.as_ref().and_then(|s| lines.of(s))),
        ("highway", raw.highway.as_ref().and_then(|s| lines.of(s))),
        ("slowchirp", raw.slowchirp.as_ref().and_then(|s| lines.of(s))),
        ("estimator", raw.estimator.as_ref().and_then(|s| lines.of(s))),
        ("coordmac", raw.coordmac.as_ref().and_then(|s| lines.of(s))),
        ("ofdm_count", raw.ofdm_count.as_ref().and_then(|s| lines.of(s))),
    ];
    for (name, line) in present {
        if line.is_some() && !allowed.contains(&name) {
            return err(line, format!("section [{name}] does not apply to experiment {kind}"));
        }
    }

    let experiment = match *kind {
        "single_link" => Experiment::SingleLink(single_link(&raw, &lines, master_seed)?),
        "phase_noise" => Experiment::PhaseNoise(phase_noise(&raw, &lines, master_seed)?),
        "highway" => Experiment::Highway(highway(&raw, &lines)?),
        "slowchirp" => Experiment::SlowChirp(slowchirp(&raw, &lines)?),
        "coordmac" => Experiment::CoordMac(coordmac(&raw, &lines)?),
        _ => Experiment::OfdmCount(ofdm(&raw, &lines)?),
    };

    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(text.as_bytes());
    h.update(format!("\0seed={master_seed}\0trials={trials:?}").as_bytes());
    let hash = h.finalize().iter().map(|b| format!("{b:02x}")).collect();

    Ok(RunConfig {
        master_seed,
        output_dir,
        trials,
        experiment,
        hash,
    })
}

fn radar(raw: &RawFile, lines: &Lines, kind: &str) -> Result<(ChirpConfig, LinkBudget), ConfigError> {
    let s = need(&raw.radar, "radar", kind)?;
    let line = lines.of(s);
    let r = s.get_ref();
    let fc = r.carrier_ghz * 1e9;
    let bw = r.bandwidth_ghz * 1e9;
    let t = r.chirp_duration_us * 1e-6;
    let bs = match (r.interest_bandwidth_mhz, r.max_range_m) {
        (Some(b), None) => b * 1e6,
        (None, Some(rmax)) => bw / t * 2.0 * rmax / SPEED_OF_LIGHT,
        _ => return err(line, "[radar] give exactly one of interest_bandwidth_mhz, max_range_m"),
    };
    let chirp = at(line, "radar", ChirpConfig::new(fc, bw, t, r.num_chirps, bs))?;
    let chirp = at(line, "radar", chirp.with_duty_cycle(r.duty_cycle))?;
    let link = at(line, "radar", LinkBudget::from_db(r.tx_power_dbm, r.antenna_gain_dbi, fc))?;
    Ok((chirp, link))
}

fn target(raw: &RawFile, lines: &Lines, kind: &str) -> Result<Target, ConfigError> {
    let s = need(&raw.target, "target", kind)?;
    let t = s.get_ref();
    at(
        lines.of(s),
        "target",
        Target::new(t.range_m, t.velocity_mps, t.rcs_m2).map(|x| x.with_phase(t.phase_rad)),
    )
}

fn interferer(
    raw: &RawFile,
    lines: &Lines,
    kind: &str,
    victim: &ChirpConfig,
    link: &LinkBudget,
    master_seed: u64,
) -> Result<InterfererSpec, ConfigError> {
    let s = need(&raw.interferer, "interferer", kind)?;
    let line = lines.of(s);
    let i = s.get_ref();
    let gain = at(line, "interferer", interferer_power_gain(link, i.range_m))?;
    let bw = i.bandwidth_ghz.map_or(victim.bandwidth_hz, |b| b * 1e9);
    let base = at(line, "interferer", InterfererSpec::new(bw, i.chirp_duration_us * 1e-6, i.range_m, gain))?;
    let spec = InterfererSpec {
        carrier_offset_hz: i.carrier_offset_mhz * 1e6,
        start_offset_s: i.start_offset_us.map(|t| t * 1e-6),
        offset_seed: derive_seed(master_seed, stream::INTERFERENCE, 0),
        ..base
    };
    at(line, "interferer", spec.validate())?;
    Ok(spec)
}

fn echo(link: &LinkBudget, target: Target, line: Option<usize>) -> Result<Echo, ConfigError> {
    Ok(Echo {
        target,
        power_gain: at(line, "target", target_power_gain(link, &target))?,
    })
}

fn single_link(raw: &RawFile, lines: &Lines, seed: u64) -> Result<SingleLink, ConfigError> {
    let kind = "single_link";
    let (victim, link) = radar(raw, lines, kind)?;
    let t = target(raw, lines, kind)?;
    let echo = echo(&link, t, raw.target.as_ref().and_then(|s| lines.of(s)))?;
    let interferer = interferer(raw, lines, kind, &victim, &link, seed)?;
    let s = need(&raw.single_link, kind, kind)?;
    let line = lines.of(s);
    let sl = s.get_ref();
    if sl.slope_ratios.is_empty() || sl.slope_ratios.iter().any(|r| !(*r > 0.0)) {
        return err(line, "[single_link] slope_ratios must be a non-empty list of positive values");
    }
    if sl.zero_pad == 0 {
        return err(line, "[single_link] zero_pad must be at least 1");
    }
    Ok(SingleLink {
        victim,
        echo,
        interferer,
        slope_ratios: sl.slope_ratios.clone(),
        zero_pad: sl.zero_pad,
    })
}

fn phase_noise(raw: &RawFile, lines: &Lines, seed: u64) -> Result<PhaseNoise, ConfigError> {
    let kind = "phase_noise";
    let (victim, link) = radar(raw, lines, kind)?;
    let t = target(raw, lines, kind)?;
    let echo = echo(&link, t, raw.target.as_ref().and_then(|s| lines.of(s)))?;
    let base = interferer(raw, lines, kind, &victim, &link, seed)?;
    let s = need(&raw.phase_noise, kind, kind)?;
    let line = lines.of(s);
    let p = s.get_ref();
    let pn = PhaseNoiseConfig {
        pedestal_height_dbc_hz: p.pedestal_height_dbc_hz,
        pedestal_width_hz: p.pedestal_width_khz * 1e3,
        seed: derive_seed(seed, stream::PHASE_NOISE, 0),
    };
    at(line, kind, pn.validate())?;
    if p.zero_pad == 0 {
        return err(line, "[phase_noise] zero_pad must be at least 1");
    }
    Ok(PhaseNoise {
        victim,
        echo,
        interferer: InterfererSpec {
            phase_noise: Some(pn),
            ..base
        },
        zero_pad: p.zero_pad,
    })
}

fn highway(raw: &RawFile, lines: &Lines) -> Result<Highway, ConfigError> {
    let kind = "highway";
    let (chirp, link) = radar(raw, lines, kind)?;
    let t = target(raw, lines, kind)?;
    let s = need(&raw.highway, kind, kind)?;
    let line = lines.of(s);
    let h = s.get_ref();
    let mut scenario = at(
        line,
        kind,
        HighwayScenario::six_lane(
            h.lane_spacing_m,
            h.oracle_spacing_m,
            h.fov_forward_deg.to_radians(),
            h.fov_backward_deg.to_radians(),
            chirp,
            link,
            t,
        ),
    )?;
    scenario.noise_figure_db = h.noise_figure_db;
    if !(h.spacing_min_m > 0.0 && h.spacing_max_m > h.spacing_min_m) || h.spacing_points < 2 {
        return err(line, "[highway] spacing grid needs 0 < spacing_min_m < spacing_max_m and at least 2 points");
    }
    Ok(Highway {
        scenario,
        spacing_grid_m: log_grid(h.spacing_min_m, h.spacing_max_m, h.spacing_points),
        oracle_spacing_m: h.oracle_spacing_m,
    })
}

fn slowchirp(raw: &RawFile, lines: &Lines) -> Result<SlowChirp, ConfigError> {
    let kind = "slowchirp";
    let s = need(&raw.slowchirp, kind, kind)?;
    let line = lines.of(s);
    let c = s.get_ref();
    let chirp = at(
        line,
        kind,
        SlowChirpConfig::for_envelope(
            c.carrier_ghz * 1e9,
            c.bandwidth_ghz * 1e9,
            c.duration_ms * 1e-3,
            c.channel_count,
            c.channel_index,
            c.max_range_m,
            c.max_speed_mps,
        ),
    )?;
    let estimator = match &raw.estimator {
        Some(e) => {
            at(lines.of(e), "estimator", e.get_ref().validate())?;
            *e.get_ref()
        }
        None => EstimatorConfig::default(),
    };
    let increasing = |a: [f64; 2]| a[1] > a[0];
    if !increasing(c.range_span_m) || c.range_span_m[0] <= 0.0 || !increasing(c.velocity_span_mps) {
        return err(line, "[slowchirp] range and velocity spans must be increasing, ranges positive");
    }
    if c.grid_points < 2 {
        return err(line, "[slowchirp] grid_points must be at least 2");
    }
    if !(c.coupling_span_ns[0] > 0.0 && increasing(c.coupling_span_ns)) || c.coupling_points < 2 {
        return err(line, "[slowchirp] coupling span must be positive and increasing with at least 2 points");
    }
    if c.doppler_offsets_mps.is_empty() {
        return err(line, "[slowchirp] doppler_offsets_mps needs at least one channel (0 for the base channel)");
    }
    let lut_target = at(line, kind, Target::new(c.lut_range_m, c.lut_velocity_mps, c.rcs_m2))?;
    let shift = |v: f64| 2.0 * v * chirp.carrier_hz / SPEED_OF_LIGHT;
    Ok(SlowChirp {
        chirp,
        estimator,
        range_span_m: (c.range_span_m[0], c.range_span_m[1]),
        velocity_span_mps: (c.velocity_span_mps[0], c.velocity_span_mps[1]),
        grid_points: c.grid_points,
        lut_target,
        doppler_offsets_hz: c.doppler_offsets_mps.iter().map(|v| shift(*v)).collect(),
        coupling_span_s: (c.coupling_span_ns[0] * 1e-9, c.coupling_span_ns[1] * 1e-9),
        coupling_points: c.coupling_points,
        rcs_m2: c.rcs_m2,
        interferer_distance_m: c.interferer_distance_m,
    })
}

fn coordmac(raw: &RawFile, lines: &Lines) -> Result<CoordMac, ConfigError> {
    let kind = "coordmac";
    let s = need(&raw.coordmac, kind, kind)?;
    let line = lines.of(s);
    let c = s.get_ref();
    let ghz = |b: [f64; 2]| (b[0] * 1e9, b[1] * 1e9);
    let frame = FrameConfig {
        frame_duration_s: c.frame_duration_ms * 1e-3,
        chirp_duration_s: c.chirp_duration_us * 1e-6,
        chirps_per_frame: c.chirps_per_frame,
        carrier_hz: c.carrier_ghz * 1e9,
        sweep_bandwidth_hz: c.sweep_bandwidth_ghz * 1e9,
        interest_bandwidth_hz: c.interest_bandwidth_mhz * 1e6,
        comm_band_hz: ghz(c.comm_band_ghz),
        radar_bands_hz: c.radar_bands_ghz.iter().map(|b| ghz(*b)).collect(),
        sync_error_bound_s: c.sync_error_bound_us * 1e-6,
        max_interferer_range_m: c.max_interferer_range_m,
        packet_airtime_s: c.packet_airtime_us * 1e-6,
        radio_range_m: c.radio_range_m,
        staleness_frames: c.staleness_frames,
    };
    at(line, kind, frame.validate())?;
    let topology = Topology {
        area_side_m: c.area_side_m,
        fov_rad: (c.fov_deg.to_radians()).min(2.0 * PI),
        rcus_per_vehicle: c.rcus_per_vehicle,
    };
    at(line, kind, topology.validate())?;
    if c.radar_counts.is_empty() || c.radar_counts.contains(&0) {
        return err(line, "[coordmac] radar_counts must be a non-empty list of positive counts");
    }
    if c.frames == 0 {
        return err(line, "[coordmac] frames must be at least 1");
    }
    Ok(CoordMac {
        frame,
        topology,
        radar_counts: c.radar_counts.clone(),
        frames: c.frames,
    })
}

fn ofdm(raw: &RawFile, lines: &Lines) -> Result<OfdmCount, ConfigError> {
    let kind = "ofdm_count";
    let s = need(&raw.ofdm_count, kind, kind)?;
    let line = lines.of(s);
    let o = s.get_ref();
    let template = OfdmTemplate {
        base_carrier_hz: o.base_carrier_ghz * 1e9,
        subcarrier_spacing_hz: o.subcarrier_spacing_khz * 1e3,
        cp_duration_s: o.cp_duration_ns * 1e-9,
        adc_rate_hz: o.adc_rate_mhz * 1e6,
        doppler_carrier: o.doppler_carrier,
    };
    let pos = |x: f64| x.is_finite() && x > 0.0;
    if ![template.base_carrier_hz, template.subcarrier_spacing_hz, template.cp_duration_s, template.adc_rate_hz]
        .into_iter()
        .all(pos)
    {
        return err(line, "[ofdm_count] carrier, spacing, cyclic prefix and ADC rate must be positive");
    }
    let budget = Budget {
        bandwidth_hz: o.bandwidth_ghz * 1e9,
        duration_s: o.duration_ms * 1e-3,
    };
    if !pos(budget.bandwidth_hz) || !pos(budget.duration_s) {
        return err(line, "[ofdm_count] bandwidth and duration budgets must be positive");
    }
    let spec = AccuracySpec {
        max_range_std_m: o.max_range_std_m,
        max_velocity_std_mps: o.max_velocity_std_mps,
        subcarrier_snr_db: o.subcarrier_snr_db,
    };
    at(line, kind, spec.validate())?;
    if o.max_frames == 0 || o.max_symbols == 0 {
        return err(line, "[ofdm_count] max_frames and max_symbols must be at least 1");
    }
    if o.sweep_values.is_empty() || o.sweep_values.iter().any(|v| !v.is_finite()) {
        return err(line, "[ofdm_count] sweep_values must be a non-empty list of finite values");
    }
    Ok(OfdmCount {
        template,
        budget,
        spec,
        space: SearchSpace {
            max_frames: o.max_frames,
            max_symbols: o.max_symbols,
        },
        axis: o.sweep_axis,
        values: o.sweep_values.clone(),
    })
}
