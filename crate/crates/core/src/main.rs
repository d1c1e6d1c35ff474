use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use phasediv::error::{Error, Result};
use phasediv::experiment::{
    cmd_analyze_hessian, cmd_compare_methods, cmd_compare_models, cmd_simulate, cmd_solve, load_or_generate,
    ExperimentConfig, HessianPoint,
};

/// Environment variable naming the default output directory.
const OUTPUT_ENV: &str = "PHASEDIV_OUTPUT_DIR";

#[derive(Parser)]
#[command(name = "phasediv", version, about = "Phase-diversity wavefront retrieval experiments")]
struct Cli {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set solver.method=ncg`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory; falls back to `output_dir` in the config, then $PHASEDIV_OUTPUT_DIR, then ./phasediv-out.
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InstanceArg {
    /// Instance directory written by `simulate`; generated from the config when omitted.
    #[arg(long)]
    instance: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a problem instance.
    Simulate,
    /// Seeded restarts of the configured solver.
    Solve(InstanceArg),
    /// SD, NCG, LBFGS and TN on shared seeds.
    CompareMethods(InstanceArg),
    /// LBFGS on the MLP, LS and LSI models.
    CompareModels(InstanceArg),
    /// Hessian spectra at a point (small grids only).
    AnalyzeHessian {
        #[command(flatten)]
        instance: InstanceArg,
        /// truth, random or file:<path>
        #[arg(long, default_value = "truth")]
        point: String,
    },
}

fn output_root(cli: &Cli, config: &ExperimentConfig) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("phasediv-out"))
}

fn run(cli: &Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path, &cli.overrides)?,
        None => ExperimentConfig::from_toml("", &cli.overrides)?,
    };
    let root = output_root(cli, &config);
    let instance = |arg: &InstanceArg| load_or_generate(&config, arg.instance.as_deref());
    match &cli.command {
        Command::Simulate => {
            let out = root.join("instance");
            let (instance, stats) = cmd_simulate(&config, &out)?;
            println!(
                "instance n={} planes={} pupil pixels={} pv={:.4} rms={:.4} -> {}",
                instance.grid.n(),
                instance.plan.len(),
                instance.grid.pupil_pixels(),
                stats.pv,
                stats.rms,
                out.display()
            );
        }
        Command::Solve(arg) => {
            let out = root.join("solve");
            let s = cmd_solve(&config, &instance(arg)?, &out)?;
            for r in &s.restarts {
                println!(
                    "restart {:>2} seed {:>4}: iters {:>4} fft {:>6} rms {} {}",
                    r.restart,
                    r.seed,
                    r.iterations,
                    r.fft_calls,
                    fmt_rms(r.final_rms),
                    r.error.as_deref().unwrap_or(r.stop_reason.map_or("", |s| s.name()))
                );
            }
            let a = &s.aggregates;
            println!(
                "{} / {}: mean fft {:.1}, mean iters {:.1}, success(rms<{:e}) {:.2}, best rms {} -> {}",
                s.method,
                s.model,
                a.mean_fft_calls,
                a.mean_iterations,
                a.success_threshold,
                a.success_rate,
                fmt_rms(a.best_rms),
                out.display()
            );
        }
        Command::CompareMethods(arg) => {
            let out = root.join("compare-methods");
            let c = cmd_compare_methods(&config, &instance(arg)?, &out)?;
            println!("{:<8}{:>12}{:>12}{:>10}{:>12}", "method", "mean fft", "mean iters", "success", "best rms");
            for r in &c.rows {
                println!(
                    "{:<8}{:>12.1}{:>12.1}{:>10.2}{:>12}",
                    r.method.name(),
                    r.mean_fft_calls,
                    r.mean_iterations,
                    r.success_rate,
                    fmt_rms(r.best_rms)
                );
            }
            let ranking: Vec<&str> = c.ranking.iter().map(|m| m.name()).collect();
            println!("ranking by fft calls: {}", ranking.join(" < "));
            println!(
                "ordering lbfgs<ncg<sd and lbfgs<tn: {} -> {}",
                if c.ordering.holds() { "holds" } else { "violated" },
                out.display()
            );
        }
        Command::CompareModels(arg) => {
            let out = root.join("compare-models");
            let c = cmd_compare_models(&config, &instance(arg)?, &out)?;
            for restart in 0..config.run.restarts {
                let cell = |m| c.iterations(m, restart).map_or("-".to_string(), |i| i.to_string());
                println!(
                    "restart {restart:>2}: iterations to rms<{:e}  mlp {:>4}  ls {:>4}  lsi {:>4}",
                    c.threshold,
                    cell(phasediv::Model::Mlp),
                    cell(phasediv::Model::Ls),
                    cell(phasediv::Model::Lsi)
                );
            }
            println!(
                "ls<=mlp<=lsi in {}/{} restarts, lsi failed in {} -> {}",
                c.ordered_restarts,
                config.run.restarts,
                c.lsi_failures,
                out.display()
            );
        }
        Command::AnalyzeHessian { instance: arg, point } => {
            let out = root.join("analyze-hessian");
            let point: HessianPoint = point.parse()?;
            let a = cmd_analyze_hessian(&config, &instance(arg)?, &point, &out)?;
            for spectra in &a.models {
                for p in &spectra.planes {
                    println!(
                        "{:<4} plane {}: eig [{:.6}, {:.6}]  closed-form vs dense {:.2e}",
                        spectra.model.name(),
                        p.plane,
                        p.closed_form.min,
                        p.closed_form.max,
                        p.max_deviation
                    );
                }
            }
            for (m, c) in a.clustering.iter().enumerate() {
                println!(
                    "plane {m}: mlp [{:.4}, {:.4}]  2*ls [{:.4}, {:.4}]",
                    c.mlp_min, c.mlp_max, c.ls_min_times2, c.ls_max_times2
                );
            }
            println!("-> {}", out.display());
        }
    }
    Ok(())
}

fn fmt_rms(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.3e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phasediv: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(3),
            }
        }
    }
}
