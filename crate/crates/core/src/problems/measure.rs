use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::forward::{predict_intensity, DiversityPlan, PupilGrid};
use crate::objective::MeasurementSet;
use crate::optim::RunTrace;

/// Safety factor applied to the noise level by the discrepancy principle.
pub const MOROZOV_TAU: f64 = 1.05;

/// Noiseless intensities `|F_m u|²` for every plane.
pub fn simulate_measurements(truth: &ComplexField, plan: &DiversityPlan, grid: &PupilGrid) -> Result<MeasurementSet> {
    truth.ensure_shape(grid.shape())?;
    MeasurementSet::new(plan.planes().iter().map(|p| predict_intensity(truth, p, grid)).collect())
}

/// Photon scale `s` with `‖sI‖ / √(Σ sI) = snr`, i.e. `s = snr² ΣI / ‖I‖²`.
pub fn photon_scale(intensity: &RealField, snr: f64) -> f64 {
    let norm2 = intensity.values().iter().map(|v| v * v).sum::<f64>();
    if norm2 == 0.0 {
        return 0.0;
    }
    snr * snr * intensity.sum() / norm2
}

/// Replaces every plane `I` by `Poisson(sI)/s` with a per-plane photon
/// scale chosen so the expected SNR equals `snr`. Planes listed in `skip`
/// are copied unchanged.
pub fn add_poisson_noise_except(data: &MeasurementSet, snr: f64, seed: u64, skip: &[usize]) -> Result<MeasurementSet> {
    if !(snr > 0.0) || !snr.is_finite() {
        return Err(Error::Domain(format!("SNR must be positive and finite, got {snr}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut planes = Vec::with_capacity(data.len());
    for (m, intensity) in data.intensities().iter().enumerate() {
        if skip.contains(&m) {
            planes.push(intensity.clone());
            continue;
        }
        let s = photon_scale(intensity, snr);
        let noisy = intensity
            .values()
            .iter()
            .map(|&i| {
                let lambda = s * i;
                if lambda > 0.0 {
                    let counts: f64 = Poisson::new(lambda)
                        .map_err(|e| Error::Domain(format!("Poisson rate {lambda}: {e}")))?
                        .sample(&mut rng);
                    Ok(counts / s)
                } else {
                    Ok(0.0)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        planes.push(RealField::from_vec(intensity.shape(), noisy)?);
    }
    MeasurementSet::new(planes)
}

pub fn add_poisson_noise(data: &MeasurementSet, snr: f64, seed: u64) -> Result<MeasurementSet> {
    add_poisson_noise_except(data, snr, seed, &[])
}

/// Outcome of the discrepancy principle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MorozovStop {
    /// Iteration number of the selected record.
    pub index: usize,
    /// False when the misfit never fell to the level; `index` is then the last iteration.
    pub reached: bool,
}

/// First iteration whose misfit is at most `tau · level`.
pub fn morozov_stop_values(misfits: &[(usize, f64)], level: f64, tau: f64) -> Result<MorozovStop> {
    let last = misfits.last().ok_or_else(|| Error::Domain("Morozov stop needs a nonempty trace".into()))?;
    Ok(misfits
        .iter()
        .find(|(_, f)| *f <= tau * level)
        .map_or(MorozovStop { index: last.0, reached: false }, |&(i, _)| MorozovStop { index: i, reached: true }))
}

/// Discrepancy principle on a trace whose values are `misfit − offset`
/// (the LS objective equals `Σ‖|F_m u| − M_m‖² − Σ‖M_m‖²`, so its offset
/// is the total flux).
pub fn morozov_stop(trace: &RunTrace, level: f64, tau: f64, offset: f64) -> Result<MorozovStop> {
    let misfits: Vec<(usize, f64)> = trace.records.iter().map(|r| (r.iter, r.f + offset)).collect();
    morozov_stop_values(&misfits, level, tau)
}

/// Peak-to-valley and RMS (after mean removal) of a phase over a mask, in waves.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AberrationStats {
    pub pv: f64,
    pub rms: f64,
}

pub fn aberration_stats(phase: &RealField, grid: &PupilGrid) -> Result<AberrationStats> {
    phase.ensure_shape(grid.shape())?;
    let inside: Vec<f64> = phase
        .values()
        .iter()
        .zip(grid.mask())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .collect();
    if inside.is_empty() {
        return Err(Error::Domain("aberration statistics need a nonempty mask".into()));
    }
    let count = inside.len() as f64;
    let mean = inside.iter().sum::<f64>() / count;
    let rms = (inside.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count).sqrt();
    let max = inside.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = inside.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(AberrationStats { pv: max - min, rms })
}
