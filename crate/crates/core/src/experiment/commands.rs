use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;
use crate::hessian::{
    closed_form_spectrum, clustering_comparison, dense_eigenvalues, hessian_diagonals, ClusteringReport,
    SpectrumReport, DENSE_PIXEL_LIMIT,
};
use crate::objective::{Model, PhaseObjective};
use crate::optim::{Method, RunTrace, SolverConfig};
use crate::problems::{aberration_stats, AberrationStats, ProblemInstance};

use super::config::ExperimentConfig;
use super::runner::{random_start, records, run_batch, MorozovSetting, RestartRecord, RestartRun};

/// Threshold used for the iterations-to-accuracy comparison of models.
pub const MODEL_RMS_THRESHOLD: f64 = 1e-3;

pub const SNR_DEFINITION: &str = "per plane, photon scale s with ||s I||_2 / sqrt(sum s I) = snr";

/// Aggregates over the restarts of one batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean_fft_calls: f64,
    pub mean_iterations: f64,
    pub success_threshold: f64,
    pub success_rate: f64,
    pub best_rms: Option<f64>,
}

impl Aggregates {
    pub fn from_records(rows: &[RestartRecord], success_threshold: f64) -> Self {
        let count = rows.len().max(1) as f64;
        Self {
            mean_fft_calls: rows.iter().map(|r| r.fft_calls as f64).sum::<f64>() / count,
            mean_iterations: rows.iter().map(|r| r.iterations as f64).sum::<f64>() / count,
            success_threshold,
            success_rate: rows
                .iter()
                .filter(|r| r.final_rms.is_some_and(|v| v < success_threshold))
                .count() as f64
                / count,
            best_rms: rows.iter().filter_map(|r| r.final_rms).reduce(f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub config: ExperimentConfig,
    pub method: Method,
    pub model: Model,
    pub seeds: Vec<u64>,
    pub snr_definition: Option<String>,
    pub morozov_level: Option<f64>,
    pub restarts: Vec<RestartRecord>,
    pub aggregates: Aggregates,
}

/// Instance from `dir` when given, otherwise generated from the config.
pub fn load_or_generate(config: &ExperimentConfig, dir: Option<&Path>) -> Result<ProblemInstance> {
    match dir {
        Some(dir) => ProblemInstance::load(dir),
        None => ProblemInstance::generate(&config.problem_spec()),
    }
}

fn with_config_header(config: &ExperimentConfig, body: &str) -> String {
    let mut out = String::new();
    for line in config.to_toml().lines() {
        let _ = writeln!(out, "# {line}");
    }
    out.push_str(body);
    out
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

fn write_trace(config: &ExperimentConfig, path: &Path, trace: &RunTrace) -> Result<()> {
    fs::write(path, with_config_header(config, &trace.to_csv()))?;
    Ok(())
}

fn morozov_setting(config: &ExperimentConfig, obj: &PhaseObjective, truth: &ComplexField) -> Option<MorozovSetting> {
    if !config.run.morozov {
        return None;
    }
    let mut setting = MorozovSetting::at_truth(obj, truth);
    setting.tau = config.run.morozov_tau;
    if let Some(level) = config.run.morozov_level {
        setting.level = level;
    }
    Some(setting)
}

/// Writes the instance (with its config) into `out` and returns it.
pub fn cmd_simulate(config: &ExperimentConfig, out: &Path) -> Result<(ProblemInstance, AberrationStats)> {
    let instance = ProblemInstance::generate(&config.problem_spec())?;
    instance.save(out, Some(&config.to_toml()))?;
    let stats = aberration_stats(&instance.phase, &instance.grid)?;
    Ok((instance, stats))
}

fn batch(
    config: &ExperimentConfig,
    instance: &ProblemInstance,
    model: Model,
    solver: &SolverConfig,
) -> Result<(Vec<RestartRun>, Option<MorozovSetting>)> {
    let obj = instance.objective(model, config.objective.epsilon)?;
    let morozov = morozov_setting(config, &obj, &instance.truth);
    let runs = run_batch(
        &obj,
        solver,
        Some(&instance.truth),
        config.run.restarts,
        config.run.seed_base,
        morozov,
    );
    Ok((runs, morozov))
}

fn summary(config: &ExperimentConfig, method: Method, model: Model, runs: &[RestartRun], morozov: Option<MorozovSetting>) -> ExperimentSummary {
    let rows = records(runs);
    ExperimentSummary {
        config: config.clone(),
        method,
        model,
        seeds: config.restart_seeds(),
        snr_definition: config.noise.snr.map(|_| SNR_DEFINITION.to_string()),
        morozov_level: morozov.map(|m| m.level),
        aggregates: Aggregates::from_records(&rows, config.run.success_rms),
        restarts: rows,
    }
}

/// Seeded restarts of the configured solver; one trace CSV per restart and
/// `summary.json`.
pub fn cmd_solve(config: &ExperimentConfig, instance: &ProblemInstance, out: &Path) -> Result<ExperimentSummary> {
    fs::create_dir_all(out)?;
    let (runs, morozov) = batch(config, instance, config.objective.model, &config.solver)?;
    for run in &runs {
        if let Some(trace) = run.trace() {
            write_trace(config, &out.join(format!("trace_r{:02}.csv", run.record.restart)), trace)?;
        }
    }
    let summary = summary(config, config.solver.method, config.objective.model, &runs, morozov);
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    pub mean_fft_calls: f64,
    pub mean_iterations: f64,
    pub success_rate: f64,
    pub best_rms: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MethodOrdering {
    pub lbfgs_below_ncg: bool,
    pub ncg_below_sd: bool,
    pub lbfgs_below_tn: bool,
}

impl MethodOrdering {
    pub fn holds(&self) -> bool {
        self.lbfgs_below_ncg && self.ncg_below_sd && self.lbfgs_below_tn
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComparison {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub rows: Vec<MethodRow>,
    /// Methods by increasing mean FFT calls.
    pub ranking: Vec<Method>,
    pub ordering: MethodOrdering,
    pub summaries: Vec<ExperimentSummary>,
}

pub const COMPARED_METHODS: [Method; 4] = [Method::Sd, Method::Ncg, Method::Lbfgs, Method::Tn];

/// SD, NCG, LBFGS and TN on identical restart seeds.
pub fn cmd_compare_methods(config: &ExperimentConfig, instance: &ProblemInstance, out: &Path) -> Result<MethodComparison> {
    fs::create_dir_all(out)?;
    let mut summaries = Vec::new();
    for method in COMPARED_METHODS {
        let solver = SolverConfig {
            method,
            ..config.solver.clone()
        };
        let (runs, morozov) = batch(config, instance, config.objective.model, &solver)?;
        for run in &runs {
            if let Some(trace) = run.trace() {
                let name = format!("trace_{}_r{:02}.csv", method.name(), run.record.restart);
                write_trace(config, &out.join(name), trace)?;
            }
        }
        summaries.push(summary(config, method, config.objective.model, &runs, morozov));
    }
    let rows: Vec<MethodRow> = summaries
        .iter()
        .map(|s| MethodRow {
            method: s.method,
            mean_fft_calls: s.aggregates.mean_fft_calls,
            mean_iterations: s.aggregates.mean_iterations,
            success_rate: s.aggregates.success_rate,
            best_rms: s.aggregates.best_rms,
        })
        .collect();
    let fft = |m: Method| rows.iter().find(|r| r.method == m).map_or(f64::NAN, |r| r.mean_fft_calls);
    let ordering = MethodOrdering {
        lbfgs_below_ncg: fft(Method::Lbfgs) < fft(Method::Ncg),
        ncg_below_sd: fft(Method::Ncg) < fft(Method::Sd),
        lbfgs_below_tn: fft(Method::Lbfgs) < fft(Method::Tn),
    };
    let mut ranked = rows.clone();
    ranked.sort_by(|a, b| a.mean_fft_calls.total_cmp(&b.mean_fft_calls));
    let comparison = MethodComparison {
        config: config.clone(),
        seeds: config.restart_seeds(),
        ranking: ranked.iter().map(|r| r.method).collect(),
        rows,
        ordering,
        summaries,
    };
    let mut table = String::from("method,mean_fft_calls,mean_iterations,success_rate,best_rms\n");
    for r in &comparison.rows {
        let best = r.best_rms.map(|v| format!("{v:e}")).unwrap_or_default();
        let _ = writeln!(table, "{},{},{},{},{}", r.method, r.mean_fft_calls, r.mean_iterations, r.success_rate, best);
    }
    fs::write(out.join("methods.csv"), with_config_header(config, &table))?;
    write_json(&out.join("methods.json"), &comparison)?;
    Ok(comparison)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSeries {
    pub model: Model,
    pub restart: usize,
    pub seed: u64,
    pub rms: Vec<f64>,
    pub misfit: Vec<f64>,
    /// First iteration with RMS below [`MODEL_RMS_THRESHOLD`].
    pub iterations_to_threshold: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelComparison {
    pub config: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub threshold: f64,
    pub series: Vec<ModelSeries>,
    /// Restarts where LS ≤ MLP ≤ LSI in iterations to the threshold
    /// (never reaching it counts as infinitely many).
    pub ordered_restarts: usize,
    /// Restarts where LSI never reaches the threshold.
    pub lsi_failures: usize,
}

impl ModelComparison {
    pub fn iterations(&self, model: Model, restart: usize) -> Option<usize> {
        self.series
            .iter()
            .find(|s| s.model == model && s.restart == restart)
            .and_then(|s| s.iterations_to_threshold)
    }
}

/// LBFGS on MLP, LS and LSI with shared restart seeds.
pub fn cmd_compare_models(config: &ExperimentConfig, instance: &ProblemInstance, out: &Path) -> Result<ModelComparison> {
    fs::create_dir_all(out)?;
    let solver = SolverConfig {
        method: Method::Lbfgs,
        ..config.solver.clone()
    };
    let mut series = Vec::new();
    for model in Model::ALL {
        let (runs, _) = batch(config, instance, model, &solver)?;
        for run in &runs {
            let Some(trace) = run.trace() else {
                continue;
            };
            series.push(ModelSeries {
                model,
                restart: run.record.restart,
                seed: run.record.seed,
                rms: trace.rms_series(),
                misfit: trace.values(),
                iterations_to_threshold: trace.iterations_to_rms(MODEL_RMS_THRESHOLD),
            });
        }
    }
    let key = |v: Option<usize>| v.unwrap_or(usize::MAX);
    let mut comparison = ModelComparison {
        config: config.clone(),
        seeds: config.restart_seeds(),
        threshold: MODEL_RMS_THRESHOLD,
        series,
        ordered_restarts: 0,
        lsi_failures: 0,
    };
    for restart in 0..config.run.restarts {
        let it = |m| key(comparison.iterations(m, restart));
        if it(Model::Ls) <= it(Model::Mlp) && it(Model::Mlp) <= it(Model::Lsi) {
            comparison.ordered_restarts += 1;
        }
        if comparison.iterations(Model::Lsi, restart).is_none() {
            comparison.lsi_failures += 1;
        }
    }
    let mut csv = String::from("model,restart,iter,rms,misfit\n");
    for s in &comparison.series {
        for (i, (rms, f)) in s.rms.iter().zip(&s.misfit).enumerate() {
            let _ = writeln!(csv, "{},{},{},{:e},{:e}", s.model, s.restart, i, rms, f);
        }
    }
    fs::write(out.join("models_series.csv"), with_config_header(config, &csv))?;
    write_json(&out.join("models.json"), &comparison)?;
    Ok(comparison)
}

/// Where the Hessian is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub enum HessianPoint {
    Truth,
    /// `random_start` with the first restart seed.
    Random,
    /// Complex field in the binary container format.
    File(PathBuf),
}

impl std::str::FromStr for HessianPoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "truth" => Ok(Self::Truth),
            "random" => Ok(Self::Random),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(Self::File(path.into())),
                _ => Err(Error::Config(format!("point must be truth, random or file:<path>, got `{s}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpectra {
    pub plane: usize,
    pub closed_form: SpectrumReport,
    pub dense: SpectrumReport,
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpectra {
    pub model: Model,
    pub planes: Vec<PlaneSpectra>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HessianAnalysis {
    pub config: ExperimentConfig,
    pub point: String,
    pub models: Vec<ModelSpectra>,
    /// MLP against doubled LS spectrum, per plane.
    pub clustering: Vec<ClusteringReport>,
}

/// Closed-form and dense per-plane spectra for every model plus the
/// MLP/LS clustering comparison.
pub fn cmd_analyze_hessian(
    config: &ExperimentConfig,
    instance: &ProblemInstance,
    point: &HessianPoint,
    out: &Path,
) -> Result<HessianAnalysis> {
    let grid = &instance.grid;
    let pixels = grid.n() * grid.n();
    if pixels > DENSE_PIXEL_LIMIT {
        return Err(Error::TooLarge {
            requested: pixels,
            limit: DENSE_PIXEL_LIMIT,
        });
    }
    let (u, label) = match point {
        HessianPoint::Truth => (instance.truth.clone(), "truth".to_string()),
        HessianPoint::Random => (random_start(grid, config.run.seed_base), format!("random:{}", config.run.seed_base)),
        HessianPoint::File(path) => {
            let field = ComplexField::read_binary(&mut BufReader::new(fs::File::open(path)?))?;
            field.ensure_shape(grid.shape())?;
            (field, format!("file:{}", path.display()))
        }
    };
    let eps = config.objective.epsilon;
    let mut models = Vec::new();
    for model in Model::ALL {
        let mut planes = Vec::new();
        for (m, plane) in instance.plan.planes().iter().enumerate() {
            let intensity = instance.data.intensity(m);
            let closed = closed_form_spectrum(model, &u, plane, grid, intensity, eps)?;
            let dense = SpectrumReport::from_eigenvalues(dense_eigenvalues(
                &hessian_diagonals(model, &u, plane, grid, intensity, eps)?.assemble(grid)?,
            ))
            .tagged(model);
            planes.push(PlaneSpectra {
                plane: m,
                max_deviation: closed.max_deviation(&dense.eigenvalues),
                closed_form: closed,
                dense,
            });
        }
        models.push(ModelSpectra { model, planes });
    }
    let clustering = instance
        .plan
        .planes()
        .iter()
        .enumerate()
        .map(|(m, plane)| clustering_comparison(&u, plane, grid, instance.data.intensity(m), eps))
        .collect::<Result<Vec<_>>>()?;
    let analysis = HessianAnalysis {
        config: config.clone(),
        point: label,
        models,
        clustering,
    };
    fs::create_dir_all(out)?;
    write_json(&out.join("hessian.json"), &analysis)?;
    Ok(analysis)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        let mut config = ExperimentConfig::default();
        config.problem.n = 8;
        config.problem.r_outer = 0.45;
        config.problem.zernike_index = 4;
        config.plan.defocus = vec![-1.0, 1.0];
        config.run.restarts = 2;
        config.solver.max_iters = 20;
        config
    }

    fn row(fft: u64, iters: usize, rms: Option<f64>) -> RestartRecord {
        RestartRecord {
            restart: 0,
            seed: 0,
            method: Method::Lbfgs,
            final_rms: rms,
            min_rms: rms,
            iterations: iters,
            fft_calls: fft,
            stop_reason: None,
            error: None,
            morozov: None,
        }
    }

    #[test]
    fn aggregates_by_hand() {
        let rows = [row(10, 4, Some(1e-6)), row(20, 6, Some(1e-3)), row(30, 2, None)];
        let agg = Aggregates::from_records(&rows, 1e-5);
        assert_eq!(agg.mean_fft_calls, 20.0);
        assert_eq!(agg.mean_iterations, 4.0);
        assert!((agg.success_rate - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(agg.best_rms, Some(1e-6));
    }

    #[test]
    fn hessian_point_parsing() {
        assert_eq!("truth".parse::<HessianPoint>().unwrap(), HessianPoint::Truth);
        assert_eq!("random".parse::<HessianPoint>().unwrap(), HessianPoint::Random);
        assert_eq!("file:a.bin".parse::<HessianPoint>().unwrap(), HessianPoint::File("a.bin".into()));
        assert!("file:".parse::<HessianPoint>().is_err());
        assert!("origin".parse::<HessianPoint>().is_err());
    }

    #[test]
    fn solve_writes_traces_and_summary() {
        let dir = tempfile::tempdir().unwrap();
        let config = small();
        let instance = load_or_generate(&config, None).unwrap();
        let summary = cmd_solve(&config, &instance, dir.path()).unwrap();
        assert_eq!(summary.restarts.len(), 2);
        assert_eq!(summary.seeds, vec![100, 101]);
        let text = fs::read_to_string(dir.path().join("trace_r01.csv")).unwrap();
        assert!(text.starts_with("# "));
        assert!(RunTrace::from_csv(&text).unwrap().iterations() > 0);
        let back: ExperimentSummary =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(back, summary);
    }

    #[test]
    fn hessian_analysis_guard_and_truth() {
        let dir = tempfile::tempdir().unwrap();
        let config = small();
        let instance = load_or_generate(&config, None).unwrap();
        let analysis = cmd_analyze_hessian(&config, &instance, &HessianPoint::Truth, dir.path()).unwrap();
        assert_eq!(analysis.models.len(), 3);
        for spectra in &analysis.models {
            for p in &spectra.planes {
                assert!(p.max_deviation < 1e-9, "{:?} plane {}: {}", spectra.model, p.plane, p.max_deviation);
            }
        }
        let big = ExperimentConfig {
            problem: crate::experiment::ProblemSection { n: 16, ..config.problem.clone() },
            ..config.clone()
        };
        let instance = load_or_generate(&big, None).unwrap();
        assert!(matches!(
            cmd_analyze_hessian(&big, &instance, &HessianPoint::Truth, dir.path()),
            Err(Error::TooLarge { .. })
        ));
    }
}
