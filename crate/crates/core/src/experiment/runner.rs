use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::field::ComplexField;
use crate::forward::PupilGrid;
use crate::objective::{Model, PhaseObjective};
use crate::optim::{misell_iterate, solve, Method, RunTrace, Solution, SolverConfig, StopReason};
use crate::problems::{morozov_stop, MorozovStop, MOROZOV_TAU};

/// Unit amplitude on the pupil with phase uniform on `(−π, π]`, zero outside.
pub fn random_start(grid: &PupilGrid, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = grid.n();
    ComplexField::from_fn(grid.shape(), |r, c| {
        // draw for every pixel so the stream does not depend on the mask
        let t: f64 = rng.random();
        if grid.mask()[r * n + c] {
            Complex64::from_polar(1.0, PI - 2.0 * PI * t)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Discrepancy-principle settings for a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorozovSetting {
    pub level: f64,
    pub tau: f64,
    pub offset: f64,
}

impl MorozovSetting {
    /// Level estimated as the misfit of the truth on the (noisy) data;
    /// the LS objective is shifted by the total flux to give the misfit.
    pub fn at_truth(objective: &PhaseObjective, truth: &ComplexField) -> Self {
        let offset = match objective.model() {
            Model::Ls => objective.data().total_flux(),
            _ => 0.0,
        };
        let probe = objective.with_model(objective.model());
        Self {
            level: probe.value(truth) + offset,
            tau: MOROZOV_TAU,
            offset,
        }
    }
}

/// One solver run from one seeded start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRecord {
    pub restart: usize,
    pub seed: u64,
    pub method: Method,
    pub final_rms: Option<f64>,
    pub min_rms: Option<f64>,
    pub iterations: usize,
    pub fft_calls: u64,
    pub stop_reason: Option<StopReason>,
    pub error: Option<String>,
    pub morozov: Option<MorozovStop>,
}

/// Full outcome of one restart: summary row plus trace and solution.
#[derive(Debug, Clone)]
pub struct RestartRun {
    pub record: RestartRecord,
    pub solution: Option<Solution>,
}

impl RestartRun {
    pub fn trace(&self) -> Option<&RunTrace> {
        self.solution.as_ref().map(|s| &s.trace)
    }
}

/// Solves from `random_start(grid, seed)` with a private copy of the
/// objective, so the FFT counter belongs to this run alone.
pub fn run_restart(
    objective: &PhaseObjective,
    config: &SolverConfig,
    truth: Option<&ComplexField>,
    restart: usize,
    seed: u64,
    morozov: Option<MorozovSetting>,
) -> RestartRun {
    let objective = objective.with_model(objective.model());
    let z0 = random_start(objective.grid(), seed);
    let result = match config.method {
        Method::Misell => misell_iterate(&objective, &z0, config.max_iters, truth),
        _ => solve(&objective, config, &z0, truth),
    };
    match result {
        Ok(solution) => {
            let trace = &solution.trace;
            let morozov = morozov.and_then(|m| morozov_stop(trace, m.level, m.tau, m.offset).ok());
            let record = RestartRecord {
                restart,
                seed,
                method: config.method,
                final_rms: trace.final_rms(),
                min_rms: trace.rms_series().into_iter().reduce(f64::min),
                iterations: trace.iterations(),
                fft_calls: trace.fft_calls(),
                stop_reason: Some(trace.stop),
                error: None,
                morozov,
            };
            RestartRun {
                record,
                solution: Some(solution),
            }
        }
        Err(e) => RestartRun {
            record: RestartRecord {
                restart,
                seed,
                method: config.method,
                final_rms: None,
                min_rms: None,
                iterations: 0,
                fft_calls: objective.transform_count(),
                stop_reason: None,
                error: Some(e.to_string()),
                morozov: None,
            },
            solution: None,
        },
    }
}

/// Runs `restarts` seeded solves (`seed_base + index`) on worker threads.
/// Results come back in restart order.
pub fn run_batch(
    objective: &PhaseObjective,
    config: &SolverConfig,
    truth: Option<&ComplexField>,
    restarts: usize,
    seed_base: u64,
    morozov: Option<MorozovSetting>,
) -> Vec<RestartRun> {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(restarts.max(1));
    let mut slots: Vec<Option<RestartRun>> = (0..restarts).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<Vec<usize>> = (0..workers)
            .map(|w| (w..restarts).step_by(workers).collect())
            .collect();
        let handles: Vec<_> = chunks
            .into_iter()
            .map(|indices| {
                scope.spawn(move || {
                    indices
                        .into_iter()
                        .map(|i| (i, run_restart(objective, config, truth, i, seed_base + i as u64, morozov)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for handle in handles {
            for (i, run) in handle.join().expect("restart worker panicked") {
                slots[i] = Some(run);
            }
        }
    });
    slots.into_iter().map(|s| s.expect("every restart ran")).collect()
}

/// Convenience for callers that only need the rows.
pub fn records(runs: &[RestartRun]) -> Vec<RestartRecord> {
    runs.iter().map(|r| r.record.clone()).collect()
}
