//! Config-driven sweep behavior: determinism of outputs, summary checks and
//! the scenario gates.

use std::fs;
use std::path::Path;

use saddle_harness::config::parse_config_str;
use saddle_harness::scenario::{gate_summary, run_scenario};

fn rotation_game_inline() -> &'static str {
    r#"{
        "m": 2, "n": 2,
        "M": [0.0, 1.0, -1.0, 0.0],
        "b": [1.0, 0.0],
        "c": [0.0, 2.0],
        "noise": {"kind": "noiseless", "amplitudes": [], "L_M": 1.0, "L_b": 1.0, "L_c": 4.0}
    }"#
}

fn config_doc(scenario: &str, tuning: &str, horizons: &str, seeds: &str, output: &Path) -> String {
    format!(
        r#"{{
            "scenario": "{scenario}",
            "problem": {{"inline": {}}},
            "horizons": {horizons},
            "seeds": {seeds},
            "tuning": {tuning},
            "output": "{}"
        }}"#,
        rotation_game_inline(),
        output.display()
    )
}

fn read_all_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn identical_configs_produce_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    let doc_a = config_doc("bilinear_cogda", "\"theorem1\"", "[256, 512]", "[0, 1]", &out_a);
    let doc_b = config_doc("bilinear_cogda", "\"theorem1\"", "[256, 512]", "[0, 1]", &out_b);
    let summary_a = run_scenario(&parse_config_str(&doc_a).unwrap()).unwrap();
    let summary_b = run_scenario(&parse_config_str(&doc_b).unwrap()).unwrap();
    assert_eq!(summary_a.cells, summary_b.cells);
    let files_a = read_all_csvs(&out_a);
    let files_b = read_all_csvs(&out_b);
    assert_eq!(files_a.len(), 5); // 4 traces + summary
    for ((name_a, bytes_a), (name_b, bytes_b)) in files_a.iter().zip(files_b.iter()) {
        assert_eq!(name_a, name_b);
        assert_eq!(bytes_a, bytes_b, "file {name_a} differs between runs");
    }
}

#[test]
fn summary_stats_match_the_trace_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let doc = config_doc("bilinear_cogda", "\"theorem1\"", "[128]", "[3, 4, 5]", &out);
    let summary = run_scenario(&parse_config_str(&doc).unwrap()).unwrap();
    assert_eq!(summary.per_horizon.len(), 1);
    // recompute the mean from the final gap column of each trace CSV
    let mut final_gaps = Vec::new();
    for seed in [3u64, 4, 5] {
        let text = fs::read_to_string(out.join(format!("trace_T128_seed{seed}.csv"))).unwrap();
        let last = text.lines().last().unwrap();
        let gap: f64 = last.rsplit(',').next().unwrap().parse().unwrap();
        final_gaps.push(gap);
    }
    let mean = final_gaps.iter().sum::<f64>() / final_gaps.len() as f64;
    assert!((summary.per_horizon[0].mean - mean).abs() <= 1e-15);
    // the summary file carries the same aggregate
    let summary_text = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary_text.starts_with("T,mean,std_err,n\n"));
    assert!(summary_text.lines().nth(1).unwrap().starts_with("128,"));
}

#[test]
fn single_cell_sweep_has_no_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let doc = config_doc("bilinear_cogda", "\"theorem1\"", "[64]", "[0]", &out);
    let summary = run_scenario(&parse_config_str(&doc).unwrap()).unwrap();
    assert_eq!(summary.cells.len(), 1);
    assert!(summary.slope.is_none());
}

#[test]
fn rate_sweep_gate_passes_on_the_rotation_game() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let horizons: Vec<usize> = (10..=17).map(|k| 1usize << k).collect();
    let seeds: Vec<u64> = (0..20).collect();
    let doc = config_doc(
        "bilinear_cogda",
        "\"theorem1\"",
        &format!("{horizons:?}"),
        &format!("{seeds:?}"),
        &out,
    );
    let summary = run_scenario(&parse_config_str(&doc).unwrap()).unwrap();
    let (slope, _) = summary.slope.expect("eight horizons give a slope");
    assert!(slope <= -0.4, "slope {slope}");
    assert!(gate_summary(&summary).is_ok());
    // the full sweep wrote one trace per cell plus the summary
    assert_eq!(read_all_csvs(&out).len(), horizons.len() * seeds.len() + 1);
    let trace = fs::read_to_string(out.join("trace_T1024_seed0.csv")).unwrap();
    assert!(trace.starts_with("t,norm_x_dev,norm_y_dev,grad_x_norm,grad_y_norm,gap_running_avg\n"));
}

#[test]
fn contrast_scenario_reports_the_divergence_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    // runs start at the origin, away from the saddle of the offset rotation
    // game; rho = 2*eta*L_M^2 keeps the stabilized run coupled at eta = 0.1
    let doc = config_doc(
        "bilinear_sgda_contrast",
        "{\"manual\": {\"eta_x\": 0.1, \"eta_y\": 0.1, \"rho_x\": 0.2, \"rho_y\": 0.2}}",
        "[1000]",
        "[0]",
        &out,
    );
    let summary = run_scenario(&parse_config_str(&doc).unwrap()).unwrap();
    // the baseline spirals outward while the stabilized run stays put
    assert!(
        summary.cells[0].value > 10.0,
        "divergence ratio {} too small",
        summary.cells[0].value
    );
    assert!(gate_summary(&summary).is_ok());
    assert!(out.join("trace_sgda_T1000_seed0.csv").exists());
    assert!(out.join("trace_cogda_T1000_seed0.csv").exists());
}

#[test]
fn amdp_generator_sweep_runs_and_gates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let doc = format!(
        r#"{{
            "scenario": "amdp_plan",
            "problem": {{"generator": {{"s": 3, "a": 2, "seed": 9}}}},
            "horizons": [2000, 8000, 32000],
            "seeds": [0, 1, 2],
            "tuning": "theorem3",
            "output": "{}"
        }}"#,
        out.display()
    );
    let summary = run_scenario(&parse_config_str(&doc).unwrap()).unwrap();
    assert_eq!(summary.cells.len(), 9);
    for cell in &summary.cells {
        assert!(cell.value.is_finite());
        assert!(cell.value >= -1e-10, "suboptimality must be nonnegative");
    }
    let trace = fs::read_to_string(out.join("trace_T2000_seed0.csv")).unwrap();
    assert!(trace.starts_with("t,norm_x_dev,norm_y_dev,grad_x_norm,grad_y_norm,gap_running_avg,rho_gap,queries\n"));
}

#[test]
fn singular_games_are_rejected_with_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let doc = format!(
        r#"{{
            "scenario": "bilinear_cogda",
            "problem": {{"inline": {{
                "m": 2, "n": 2,
                "M": [1.0, 1.0, 1.0, 1.0],
                "b": [0.0, 0.0],
                "c": [0.0, 0.0],
                "noise": {{"kind": "noiseless", "amplitudes": [], "L_M": 2.0, "L_b": 0.0, "L_c": 0.0}}
            }}}},
            "horizons": [64],
            "seeds": [0],
            "tuning": "theorem1",
            "output": "{}"
        }}"#,
        out.display()
    );
    let err = run_scenario(&parse_config_str(&doc).unwrap()).unwrap_err();
    assert!(err.to_string().contains("no unique saddle"), "{err}");
    assert_eq!(err.exit_code(), 2);
}
