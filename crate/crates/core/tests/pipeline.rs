use std::fs;
use std::path::{Path, PathBuf};

use ngse::cli::{check_report, cli_main, run_fit, FitArgs, RunConfig};
use ngse::io::read_log;
use ngse::io::report::Report;
use ngse::ranking::rank_methods;

const SCENARIO: &str = "patients = 150\norder = 1\nmethods = A, B, C\n\
    coefficients = 0.9, 0.0; 1.1, 0.05; 1.0, -0.02\nnoise_sd = 0.05, 0.15, 0.10\n\
    correlation = 0.3\nalpha = 2\nbeta = 5\nseed = 11\n";

fn path_str(p: &Path) -> String {
    p.to_str().unwrap().to_owned()
}

fn simulate_into(dir: &Path) -> (PathBuf, PathBuf) {
    let conf = dir.join("scenario.conf");
    fs::write(&conf, SCENARIO).unwrap();
    let data = dir.join("data.csv");
    let code = cli_main(["ngse", "simulate", "--config", &path_str(&conf), "--out", &path_str(&data)]);
    assert_eq!(code, 0);
    (data, dir.join("data.truth.csv"))
}

fn fit_config(input: &Path, out: &Path) -> RunConfig {
    RunConfig::resolve(&FitArgs {
        input: Some(input.to_path_buf()),
        out: Some(out.to_path_buf()),
        starts: Some(3),
        seed: Some(5),
        ..FitArgs::default()
    })
    .unwrap()
}

#[test]
fn report_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = simulate_into(dir.path());
    let report = run_fit(&fit_config(&data, &dir.path().join("r.json"))).unwrap();
    let text = report.to_json().unwrap();
    let back = Report::from_json(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.to_json().unwrap(), text);

    // the rebuilt result ranks identically
    let result = back.estimation_result().unwrap();
    assert_eq!(rank_methods(&result, back.ranking.mode).unwrap(), back.ranking);
    assert_eq!(back.ranking.methods.len(), 3);
    assert_eq!(back.fit_options(), fit_config(&data, Path::new("r.json")).options);

    let se = back.standard_errors.values.as_ref().expect("standard errors");
    assert_eq!(se.len(), back.standard_errors.labels.len());
    assert!(se.iter().all(|&s| s > 0.0));
    assert!(back.starts.iter().all(|s| back.fit.nll <= s.initial_nll));

    let summary = check_report(&back, None).unwrap();
    assert!(summary.hessian_asymmetry < 1e-3);
    assert!(summary.quadrature_gap_per_patient.is_finite());
}

#[test]
fn unsupported_schema_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = simulate_into(dir.path());
    let report = run_fit(&fit_config(&data, &dir.path().join("r.json"))).unwrap();
    let text = report.to_json().unwrap().replace("\"schema_version\": 1", "\"schema_version\": 2");
    assert!(Report::from_json(&text).is_err());
}

#[test]
fn fit_never_reads_the_truth_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let (data, truth) = simulate_into(dir.path());
    assert!(truth.exists());
    let out = dir.path().join("with_truth.json");
    assert_eq!(cli_main(["ngse", "fit", "--input", &path_str(&data), "--starts", "2", "--out", &path_str(&out)]), 0);
    let rank = cli_main(["ngse", "rank", "--report", &path_str(&out)]);
    assert_eq!(rank, 0);

    let touched: Vec<PathBuf> = read_log().into_iter().filter(|p| p.starts_with(dir.path())).collect();
    assert!(touched.contains(&data));
    assert!(!touched.contains(&truth), "{touched:?}");

    // the same run without the sidecar on disk gives the same bytes
    fs::remove_file(&truth).unwrap();
    let again = dir.path().join("without_truth.json");
    assert_eq!(cli_main(["ngse", "fit", "--input", &path_str(&data), "--starts", "2", "--out", &path_str(&again)]), 0);
    let with = fs::read_to_string(&out).unwrap();
    let without = fs::read_to_string(&again).unwrap();
    assert_eq!(with, without.replace("without_truth", "with_truth"));

    let json: serde_json::Value = serde_json::from_str(&with).unwrap();
    let keys = collect_keys(&json);
    assert!(keys.iter().all(|k| !k.contains("truth") && !k.contains("true")), "{keys:?}");
}

fn collect_keys(v: &serde_json::Value) -> Vec<String> {
    match v {
        serde_json::Value::Object(m) => m
            .iter()
            .flat_map(|(k, v)| std::iter::once(k.clone()).chain(collect_keys(v)))
            .collect(),
        serde_json::Value::Array(a) => a.iter().flat_map(collect_keys).collect(),
        _ => vec![],
    }
}
