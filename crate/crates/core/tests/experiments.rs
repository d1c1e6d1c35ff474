use std::fs;
use std::path::Path;

use phasediv::experiment::{
    cmd_analyze_hessian, cmd_compare_methods, cmd_compare_models, cmd_simulate, cmd_solve, random_start,
    ExperimentConfig, ExperimentSummary, HessianPoint,
};
use phasediv::optim::solve;
use phasediv::problems::ProblemInstance;
use phasediv::{Model, RealField, RunTrace, SolverConfig};

fn config(overrides: &[&str]) -> ExperimentConfig {
    let items: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    ExperimentConfig::from_toml("", &items).unwrap()
}

fn small(extra: &[&str]) -> ExperimentConfig {
    let mut items = vec!["problem.n=16", "problem.r_outer=0.45", "run.restarts=3"];
    items.extend_from_slice(extra);
    config(&items)
}

/// Data lines of a CSV, with the `# ` config header stripped.
fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

#[test]
fn simulate_is_byte_identical_and_reloads() {
    let cfg = small(&[]);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_simulate(&cfg, a.path()).unwrap();
    cmd_simulate(&cfg, b.path()).unwrap();
    let mut names: Vec<_> = fs::read_dir(a.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6, "{names:?}");
    for name in &names {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name:?}");
    }
    let back = ProblemInstance::load(a.path()).unwrap();
    let obj = back.objective(Model::Ls, cfg.objective.epsilon).unwrap();
    // LS at the truth is minus the flux Σ I
    let flux: f64 = back.data.intensities().iter().flat_map(|i| i.values().iter()).sum();
    let at_truth = (obj.value(&back.truth) + flux).abs();
    assert!(at_truth < 1e-8, "misfit at truth {at_truth:e}");
    for m in 0..back.plan.len() {
        let text = fs::read_to_string(a.path().join(format!("intensity_{m}.csv"))).unwrap();
        assert_eq!(RealField::from_csv(&text).unwrap().shape(), back.grid.shape());
    }
}

#[test]
fn solve_outputs_parse_and_count_transforms() {
    let cfg = small(&[]);
    let dir = tempfile::tempdir().unwrap();
    let instance = ProblemInstance::generate(&cfg.problem_spec()).unwrap();
    let summary = cmd_solve(&cfg, &instance, dir.path()).unwrap();
    assert_eq!(summary.seeds, vec![100, 101, 102]);
    let json: ExperimentSummary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(json.restarts.len(), 3);
    for r in &summary.restarts {
        let text = fs::read_to_string(dir.path().join(format!("trace_r{:02}.csv", r.restart))).unwrap();
        let trace = RunTrace::from_csv(&text).unwrap();
        assert_eq!(trace.fft_calls(), r.fft_calls);
        assert_eq!(trace.records.len(), r.iterations + 1);

        // the trace counter matches the propagator's own count
        let obj = instance.objective(Model::Ls, cfg.objective.epsilon).unwrap();
        obj.reset_transform_count();
        let z0 = random_start(&instance.grid, r.seed);
        let sol = solve(&obj, &cfg.solver, &z0, Some(&instance.truth)).unwrap();
        assert_eq!(sol.trace.fft_calls(), obj.transform_count());
        assert_eq!(sol.trace.fft_calls(), r.fft_calls);
    }
}

#[test]
fn runs_are_deterministic() {
    let cfg = small(&["solver.method=ncg"]);
    let instance = ProblemInstance::generate(&cfg.problem_spec()).unwrap();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cmd_solve(&cfg, &instance, a.path()).unwrap();
    cmd_solve(&cfg, &instance, b.path()).unwrap();
    for name in ["trace_r00.csv", "trace_r01.csv", "trace_r02.csv", "summary.json"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn noisy_solve_reports_morozov_index() {
    let cfg = small(&["noise.snr=10", "noise.seed=3", "run.morozov=true"]);
    let dir = tempfile::tempdir().unwrap();
    let instance = ProblemInstance::generate(&cfg.problem_spec()).unwrap();
    let summary = cmd_solve(&cfg, &instance, dir.path()).unwrap();
    assert!(summary.snr_definition.is_some());
    assert!(summary.morozov_level.is_some_and(|v| v > 0.0));
    for r in &summary.restarts {
        let stop = r.morozov.expect("morozov index recorded");
        assert!(stop.index <= r.iterations);
    }
}

#[test]
fn compare_methods_writes_one_row_per_method() {
    let cfg = small(&[]);
    let dir = tempfile::tempdir().unwrap();
    let instance = ProblemInstance::generate(&cfg.problem_spec()).unwrap();
    let c = cmd_compare_methods(&cfg, &instance, dir.path()).unwrap();
    assert_eq!(c.rows.len(), 4);
    let (header, rows) = csv_rows(&dir.path().join("methods.csv"));
    assert_eq!(header, "method,mean_fft_calls,mean_iterations,success_rate,best_rms");
    assert_eq!(rows.len(), 4);
    for row in &rows {
        assert_eq!(row.len(), 5);
        for cell in &row[1..4] {
            cell.parse::<f64>().unwrap();
        }
    }
    for method in ["sd", "ncg", "lbfgs", "tn"] {
        for k in 0..3 {
            let text = fs::read_to_string(dir.path().join(format!("trace_{method}_r{k:02}.csv"))).unwrap();
            RunTrace::from_csv(&text).unwrap();
        }
    }
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("methods.json")).unwrap()).unwrap();
    assert_eq!(json["seeds"], serde_json::json!([100, 101, 102]));
}

#[test]
fn compare_models_share_starting_points() {
    let cfg = small(&[]);
    let dir = tempfile::tempdir().unwrap();
    let instance = ProblemInstance::generate(&cfg.problem_spec()).unwrap();
    let c = cmd_compare_models(&cfg, &instance, dir.path()).unwrap();
    assert_eq!(c.series.len(), 9);
    for k in 0..3 {
        let starts: Vec<f64> = c.series.iter().filter(|s| s.restart == k).map(|s| s.rms[0]).collect();
        assert_eq!(starts.len(), 3);
        assert!(starts.iter().all(|&v| v == starts[0]), "{starts:?}");
    }
    let (header, rows) = csv_rows(&dir.path().join("models_series.csv"));
    assert_eq!(header, "model,restart,iter,rms,misfit");
    let expected: usize = c.series.iter().map(|s| s.rms.len()).sum();
    assert_eq!(rows.len(), expected);
    for row in &rows {
        assert!(["mlp", "ls", "lsi"].contains(&row[0].as_str()));
        row[3].parse::<f64>().unwrap();
        row[4].parse::<f64>().unwrap();
    }
}

#[test]
fn analyze_hessian_on_small_grid() {
    let cfg = config(&["problem.n=8", "problem.r_outer=0.45"]);
    let dir = tempfile::tempdir().unwrap();
    let instance = ProblemInstance::generate(&cfg.problem_spec()).unwrap();
    let a = cmd_analyze_hessian(&cfg, &instance, &HessianPoint::Truth, dir.path()).unwrap();
    assert_eq!(a.models.len(), 3);
    for spectra in &a.models {
        assert_eq!(spectra.planes.len(), instance.plan.len());
        for p in &spectra.planes {
            assert!(p.max_deviation <= 1e-9, "{}", p.max_deviation);
        }
    }
    assert!(dir.path().join("hessian.json").exists());

    let big = ProblemInstance::generate(&small(&[]).problem_spec()).unwrap();
    assert!(cmd_analyze_hessian(&cfg, &big, &HessianPoint::Truth, dir.path()).is_err());
}

#[test]
fn tn_meets_negative_curvature_on_von_karman_screen() {
    let cfg = config(&["problem.type=vonkarman", "solver.method=tn", "run.restarts=3"]);
    let dir = tempfile::tempdir().unwrap();
    let instance = ProblemInstance::generate(&cfg.problem_spec()).unwrap();
    cmd_solve(&cfg, &instance, dir.path()).unwrap();
    for k in 0..3 {
        let text = fs::read_to_string(dir.path().join(format!("trace_r{k:02}.csv"))).unwrap();
        let frac = RunTrace::from_csv(&text).unwrap().negative_curvature_fraction();
        assert!(frac > 0.5, "restart {k}: negative curvature on {frac:.2} of iterations");
    }
}

#[test]
#[ignore = "truth-misfit Morozov level is about twice the fitted misfit here, so the stop fires early"]
fn morozov_iterate_within_twice_minimum_rms() {
    let cfg = config(&["noise.snr=10", "run.morozov=true"]);
    let instance = ProblemInstance::generate(&cfg.problem_spec()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    cmd_solve(&cfg, &instance, dir.path()).unwrap();
    for k in 0..cfg.run.restarts {
        let text = fs::read_to_string(dir.path().join(format!("trace_r{k:02}.csv"))).unwrap();
        let trace = RunTrace::from_csv(&text).unwrap();
        let summary: ExperimentSummary =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        let stop = summary.restarts[k].morozov.unwrap();
        let rms = trace.records[stop.index].rms.unwrap();
        let min = trace.rms_series().into_iter().fold(f64::INFINITY, f64::min);
        assert!(rms <= 2.0 * min, "restart {k}: {rms} vs min {min}");
    }
}

#[test]
fn solver_config_rejects_misell_without_data() {
    let cfg = SolverConfig::with_method(phasediv::Method::Misell);
    let instance = ProblemInstance::generate(&small(&[]).problem_spec()).unwrap();
    let obj = instance.objective(Model::Ls, 1e-14).unwrap();
    assert!(solve(&obj, &cfg, &random_start(&instance.grid, 1), None).is_err());
}
