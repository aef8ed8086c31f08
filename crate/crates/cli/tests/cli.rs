use std::path::Path;
use std::process::{Command, Output};

use nmq_cli::config::{Experiment, RunConfig};
use nmq_cli::{config_from_header, pipeline, presets};

const SMALL: &str = r#"
experiment = "evolve"

[bath]
kind = "ohmic"
r = 1.0
omega_c = 5.0

[coupling]
g_o = 1e-3

[grid]
t_max = 20.0
n_points = 201
"#;

fn nmq(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nmq"));
    cmd.args(args).env_remove("NMQ_OUT_DIR");
    if let Some(dir) = env_out {
        cmd.env("NMQ_OUT_DIR", dir);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn presets_are_sorted_and_carry_caption_parameters() {
    let all = presets::presets();
    let names: Vec<_> = all.iter().map(|p| p.name).collect();
    let mut sorted = names.clone();
    sorted.sort();
    assert_eq!(names, sorted);
    for want in ["fig2-ohmic", "fig2-f", "fig3", "fig4a", "fig4b", "fig5"] {
        assert!(names.contains(&want), "missing {want}");
    }

    let fig5 = presets::find("fig5").unwrap();
    let f = fig5.cases.iter().find(|c| c.config.bath.kind == "one-over-f").unwrap();
    assert_eq!(f.config.coupling.g_f, Some(1e-4));
    assert_eq!(f.config.bath.alpha, Some(0.95));
    let o = fig5.cases.iter().find(|c| c.config.bath.kind == "ohmic").unwrap();
    assert_eq!(o.config.coupling.g_o, Some(1e-4));
    assert_eq!(o.config.bath.omega_c, Some(3.0));

    let fig4a = presets::find("fig4a").unwrap();
    assert_eq!(fig4a.cases[0].config.coupling.g_f, Some(1e-3));
    assert_eq!(fig4a.cases[0].config.bath.alpha, Some(0.95));
}

#[test]
fn every_preset_validates() {
    for p in presets::presets() {
        for c in &p.cases {
            c.config.resolve().unwrap_or_else(|e| panic!("{}: {e}", c.label));
        }
    }
}

#[test]
fn list_presets_output_is_stable() {
    let a = nmq(&["list-presets"], None);
    let b = nmq(&["list-presets"], None);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let heads: Vec<_> = text.lines().filter(|l| !l.starts_with(' ')).collect();
    let mut sorted = heads.clone();
    sorted.sort();
    assert_eq!(heads, sorted);
    assert!(text.contains("g_f = 0.0001"));
}

#[test]
fn fig2_ohmic_rates_are_eternally_non_markovian() {
    let preset = presets::find("fig2-ohmic").unwrap();
    let case = &preset.cases[0];
    let resolved = case.config.resolve().unwrap();
    let out = pipeline::run(&resolved, Experiment::Rates, &case.label).unwrap();
    let csv = &out.outputs[0].contents;
    let mut lines = csv.lines().skip_while(|l| l.starts_with('#'));
    let header: Vec<_> = lines.next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "gamma_tilde_2").unwrap();
    let mut rows = 0;
    for line in lines {
        let v: f64 = line.split(',').nth(col).unwrap().parse().unwrap();
        assert!(v <= 0.0, "gamma_tilde_2 = {v}");
        rows += 1;
    }
    assert_eq!(rows, 20001);
}

#[test]
fn unknown_bath_kind_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &SMALL.replace("kind = \"ohmic\"", "kind = \"lorentzian\""));
    let out = nmq(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("bath.kind"), "{err}");
}

#[test]
fn malformed_config_exits_2_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", &SMALL.replace("n_points = 201", "n_points = \"many\""));
    let out = nmq(&["run", "--config", &cfg], None);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line") && err.contains("n_points"), "{err}");
}

#[test]
fn coupling_must_be_given_exactly_once() {
    let both = SMALL.replace("g_o = 1e-3", "g_o = 1e-3\nkappa = 1e-3");
    let err = RunConfig::from_toml(&both).unwrap().resolve().unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("coupling"));

    let wrong = SMALL.replace("g_o = 1e-3", "g_f = 1e-3");
    let err = RunConfig::from_toml(&wrong).unwrap().resolve().unwrap_err();
    assert!(err.to_string().contains("coupling.g_f"));
}

#[test]
fn parameters_foreign_to_the_bath_kind_are_rejected() {
    let text = SMALL.replace("omega_c = 5.0", "omega_c = 5.0\nalpha = 0.5");
    let err = RunConfig::from_toml(&text).unwrap().resolve().unwrap_err();
    assert!(err.to_string().contains("bath.alpha"), "{err}");
}

#[test]
fn finite_temperature_one_over_f_needs_an_infrared_cutoff() {
    let text = r#"
experiment = "rates"
[bath]
kind = "one-over-f"
amplitude = 1.0
alpha = 0.9
beta = 2.0
[coupling]
g_f = 1e-4
[grid]
t_max = 5.0
n_points = 11
"#;
    let err = RunConfig::from_toml(text).unwrap().resolve().unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("bath"));
    let fixed = text.replace("beta = 2.0", "beta = 2.0\nir_cutoff = 0.01");
    RunConfig::from_toml(&fixed).unwrap().resolve().unwrap();
}

#[test]
fn numerical_failure_exits_3_naming_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "{SMALL}\n[solver]\nrtol = 1e-10\natol = 1e-13\nrate_abs = 1e-300\nrate_rel = 1e-300\nkernel_abs = 1e-10\nkernel_rel = 1e-8\n"
    );
    let cfg = write_config(dir.path(), "hard.toml", &text);
    let out = nmq(&["run", "--config", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("rate table"), "{err}");
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = nmq(&["evolve", "--config", &cfg, "--out", out_dir.to_str().unwrap()], None);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(out_dir.join("small-evolve.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn output_header_round_trips_to_the_config() {
    let config = RunConfig::from_toml(SMALL).unwrap();
    let resolved = config.resolve().unwrap();
    for exp in [Experiment::Rates, Experiment::Evolve, Experiment::CpCheck] {
        let out = pipeline::run(&resolved, exp, "small").unwrap();
        let csv = &out.outputs[0].contents;
        assert_eq!(config_from_header(csv).unwrap(), config);
        let header = csv.lines().find(|l| !l.starts_with('#')).unwrap();
        assert!(header.starts_with("t,"));
    }
}

#[test]
fn every_preset_header_round_trips() {
    for p in presets::presets() {
        for c in &p.cases {
            let again = RunConfig::from_toml(&c.config.to_toml()).unwrap();
            assert_eq!(again, c.config, "{}", c.label);
        }
    }
}

#[test]
fn numbers_carry_17_significant_digits() {
    let resolved = RunConfig::from_toml(SMALL).unwrap().resolve().unwrap();
    let out = pipeline::run(&resolved, Experiment::Evolve, "small").unwrap();
    let row = out.outputs[0]
        .contents
        .lines()
        .filter(|l| !l.starts_with('#'))
        .nth(2)
        .unwrap();
    for field in row.split(',') {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{field}");
    }
}

#[test]
fn output_dir_falls_back_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", &SMALL.replace("\"evolve\"", "\"rates\""));
    let env_dir = dir.path().join("from-env");
    let out = nmq(&["run", "--config", &cfg], Some(&env_dir));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("small-rates.csv").exists());

    let flag_dir = dir.path().join("from-flag");
    let out = nmq(&["run", "--config", &cfg, "--out", flag_dir.to_str().unwrap()], Some(&env_dir));
    assert!(out.status.success());
    assert!(flag_dir.join("small-rates.csv").exists());
}

#[test]
fn cp_check_reports_a_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = nmq(&["cp-check", "--config", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("small: necessary ok at 201/201, sufficient ok at 201/201: CP"), "{text}");
}

#[test]
fn verify_writes_a_passing_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = nmq(&["verify", "--config", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("small-verify.json")).unwrap()).unwrap();
    assert_eq!(json["passed"], serde_json::Value::Bool(true));
    assert!(json["reports"].as_array().unwrap().len() >= 8);
}

#[test]
fn impedance_bath_at_finite_temperature_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
experiment = "verify"

[bath]
kind = "impedance"
load = { element = "parallel-rc", r = 2.0, c = 0.3 }
c_e = 0.2
c_j = 1.0
c_g = 0.1
cutoff = 20.0
beta = 5.0

[coupling]
kappa = 1e-3

[grid]
t_max = 60.0
n_points = 601
"#;
    let cfg = write_config(dir.path(), "rc.toml", text);
    let out = nmq(&["verify", "--config", &cfg, "--out", dir.path().to_str().unwrap()], None);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    assert!(String::from_utf8_lossy(&out.stdout).contains("rc: verify passed"));
}

#[test]
fn spectrum_and_ramsey_emit_side_by_side_columns() {
    let text = SMALL.replace("t_max = 20.0\nn_points = 201", "t_max = 200.0\nn_points = 2001");
    let resolved = RunConfig::from_toml(&text).unwrap().resolve().unwrap();
    let spec = pipeline::run(&resolved, Experiment::Spectrum, "s").unwrap();
    let header = spec.outputs[0].contents.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "omega,magnitude_non_markovian,magnitude_markovian");
    let ramsey = pipeline::run(&resolved, Experiment::Ramsey, "s").unwrap();
    let header = ramsey.outputs[0].contents.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "t_d_over_period,t_d,delta_p,p_yy,p_xx,delta_p_markovian");
}

#[test]
fn tolerance_scale_must_be_positive() {
    let out = nmq(&["rates", "--preset", "fig3", "--tolerance-scale", "0"], None);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().contains("--tolerance-scale"));
}

#[test]
fn unknown_preset_exits_2() {
    let out = nmq(&["rates", "--preset", "fig9"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn circuit_block_derives_the_coupling() {
    let text = r#"
experiment = "rates"
[bath]
kind = "ohmic"
r = 1.0
omega_c = 5.0
[coupling]
e_squared = 1e-3
[circuit]
e_c = 0.25
e_j = 1.0
c_e = 1.0
c_j = 2.0
c_g = 1.0
[grid]
t_max = 5.0
n_points = 11
"#;
    let r = RunConfig::from_toml(text).unwrap().resolve().unwrap();
    let c = r.circuit.as_ref().unwrap();
    assert!((c.eta - 0.5).abs() < 1e-12);
    assert!((r.kappa - 1e-3 * 0.25).abs() < 1e-15);
    // E_J/E_C = 4 is far outside the transmon regime.
    assert!(!c.warnings.is_empty());
    let out = pipeline::run(&r, Experiment::Rates, "c").unwrap();
    assert!(out.outputs[0].contents.contains("# # warning"));
}
