use std::path::Path;
use std::process::{Command, Output};

use radint::config::{bundled, parse_str, Experiment, Overrides};
use radint::dsv::read_table;

fn radint(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_radint"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

fn result_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "summary.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn empty_config_is_a_validation_error_listing_required_keys() {
    let d = tempfile::tempdir().unwrap();
    let p = write(d.path(), "empty.cfg", "");
    for cmd in ["validate", "run"] {
        let out = radint(&[cmd, &p], d.path());
        assert_eq!(out.status.code(), Some(2));
        let err = String::from_utf8_lossy(&out.stderr);
        for key in ["experiment", "master_seed", "output_dir"] {
            assert!(err.contains(key), "{err}");
        }
    }
}

#[test]
fn duty_cycle_above_one_names_the_invariant() {
    let d = tempfile::tempdir().unwrap();
    let text = bundled("fig3").unwrap().replace("duty_cycle = 1.0", "duty_cycle = 1.5");
    let p = write(d.path(), "bad.cfg", &text);
    let out = radint(&["validate", &p], d.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("duty cycle must lie in [0, 1]") && err.contains("line"), "{err}");
}

#[test]
fn unknown_key_reports_its_line() {
    let d = tempfile::tempdir().unwrap();
    let text = bundled("fig6").unwrap().replace("lane_spacing_m", "lane_width_m");
    let line = text.lines().position(|l| l.starts_with("lane_width_m")).unwrap() + 1;
    let p = write(d.path(), "typo.cfg", &text);
    let out = radint(&["validate", &p], d.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lane_width_m"), "{err}");
    assert!(err.contains(&format!("line {line}:")), "{err}");
}

#[test]
fn bundled_fig3_parameters() {
    let cfg = parse_str(bundled("fig3").unwrap(), &Overrides::default()).unwrap();
    let Experiment::SingleLink(s) = cfg.experiment else {
        panic!("fig3 is a single-link run");
    };
    assert_eq!(s.victim.carrier_hz, 77e9);
    assert_eq!(s.victim.bandwidth_hz, 1e9);
    assert!((s.victim.chirp_duration_s - 20e-6).abs() < 1e-15);
    assert!((s.interferer.oneway_delay_s * radint::units::SPEED_OF_LIGHT - 100.0).abs() < 1e-9);
    assert_eq!(s.echo.target.range_m, 70.0);
}

#[test]
fn validate_and_list_succeed() {
    let d = tempfile::tempdir().unwrap();
    let out = radint(&["list-experiments"], d.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for k in ["single_link", "phase_noise", "highway", "slowchirp", "coordmac", "ofdm_count", "fig10"] {
        assert!(text.contains(k), "{text}");
    }
    for name in ["fig3", "fig4", "fig6", "fig7", "fig10", "fig11"] {
        assert_eq!(radint(&["validate", name], d.path()).status.code(), Some(0), "{name}");
    }
}

#[test]
fn same_seed_gives_identical_files() {
    let d = tempfile::tempdir().unwrap();
    for (name, trials) in [("fig3", "1"), ("fig10", "5"), ("fig4", "8")] {
        let a = d.path().join(format!("{name}_a"));
        let b = d.path().join(format!("{name}_b"));
        for dir in [&a, &b] {
            let out = radint(
                &["run", name, "--seed", "42", "--trials", trials, "--out-dir", dir.to_str().unwrap()],
                d.path(),
            );
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        }
        let (fa, fb) = (result_files(&a), result_files(&b));
        assert!(!fa.is_empty());
        assert_eq!(fa, fb, "{name}");
    }
}

#[test]
fn seed_changes_stochastic_output() {
    let d = tempfile::tempdir().unwrap();
    let run = |seed: &str| {
        let dir = d.path().join(seed);
        let out = radint(&["run", "fig10", "--seed", seed, "--trials", "5", "--out-dir", dir.to_str().unwrap()], d.path());
        assert_eq!(out.status.code(), Some(0));
        result_files(&dir)
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn fig6_writes_sinr_curve_and_summary() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path().join("fig6");
    let out = radint(&["run", "fig6", "--trials", "2000", "--out-dir", dir.to_str().unwrap()], d.path());
    assert_eq!(out.status.code(), Some(0));
    let (h, rows) = read_table(&std::fs::read_to_string(dir.join("sinr_curve.dsv")).unwrap()).unwrap();
    assert_eq!(h, radint::netgeom::CURVE_COLUMNS);
    assert_eq!(rows.len(), 60);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0] && w[1][4] >= w[0][4]));
    let s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["experiment"], "highway");
    assert_eq!(s["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(s["version"], env!("CARGO_PKG_VERSION"));
    assert!(s["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn fig10_writes_both_trajectories() {
    let d = tempfile::tempdir().unwrap();
    let dir = d.path().join("fig10");
    let out = radint(&["run", "fig10", "--trials", "3", "--out-dir", dir.to_str().unwrap()], d.path());
    assert_eq!(out.status.code(), Some(0));
    for n in [2, 4, 8, 16, 32] {
        let (h, rows) = read_table(&std::fs::read_to_string(dir.join(format!("trajectory_n{n}.dsv"))).unwrap()).unwrap();
        assert_eq!(h, radint::coordmac::SUMMARY_COLUMNS);
        assert_eq!(rows.len(), 10);
        assert!(dir.join(format!("trace_n{n}_seed0.log")).exists());
    }
}

#[test]
fn runtime_failure_exits_with_three() {
    let d = tempfile::tempdir().unwrap();
    // Target beyond the maximum delay of the receiver bandwidth.
    let text = bundled("fig3").unwrap().replace("range_m = 70.0", "range_m = 400.0");
    let p = write(d.path(), "far.cfg", &text);
    assert_eq!(radint(&["validate", &p], d.path()).status.code(), Some(0));
    let out = radint(&["run", &p, "--out-dir", "out"], d.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds the maximum supported delay"));

    let blocker = write(d.path(), "file", "x");
    let out = radint(&["run", "fig11", "--out-dir", &blocker], d.path());
    assert_eq!(out.status.code(), Some(3));
}
