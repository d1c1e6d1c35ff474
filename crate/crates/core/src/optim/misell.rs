use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{aligned_rms, ComplexField};
use crate::objective::PhaseObjective;

use super::driver::Solution;
use super::trace::{IterRecord, RunTrace, StopReason};

/// Cyclic modulus replacement over all planes; one sweep is one iteration.
///
/// Each plane maps `u` forward, replaces the modulus by the measured
/// amplitude (zero-modulus pixels are left alone) and maps back. The trace
/// reports the objective's own value and gradient at the end of each sweep,
/// evaluated outside the transform count.
pub fn misell_iterate(
    objective: &PhaseObjective,
    u0: &ComplexField,
    iters: usize,
    truth: Option<&ComplexField>,
) -> Result<Solution> {
    let plan_len = objective.plan().len();
    if plan_len < 2 {
        return Err(Error::Config("Misell iteration needs at least two planes".into()));
    }
    let prop = objective.propagator();
    let data = objective.data();
    let evaluator = objective.clone();
    let base = prop.transform_count();

    let observe = |iter: usize, u: &ComplexField, fft_calls: u64| {
        let (f, g) = evaluator.value_and_gradient(u);
        IterRecord {
            iter,
            f,
            grad_norm: g.norm(),
            alpha: if iter == 0 { 0.0 } else { 1.0 },
            rms: truth.and_then(|t| aligned_rms(t, u).ok()),
            fft_calls,
            neg_curv: false,
            step: None,
        }
    };

    let mut trace = RunTrace::new();
    let mut u = u0.clone();
    trace.push(observe(0, &u, 0));
    for k in 1..=iters {
        for m in 0..plan_len {
            let mut v = prop.forward(m, &u);
            project_modulus(v.values_mut(), data.amplitude(m).values());
            u = prop.adjoint(m, &v);
        }
        trace.push(observe(k, &u, prop.transform_count() - base));
    }
    trace.stop = StopReason::MaxIters;
    Ok(Solution {
        z: u,
        trace,
        rejected_pairs: 0,
        stored_curvatures: Vec::new(),
    })
}

fn project_modulus(v: &mut [Complex64], amplitude: &[f64]) {
    for (x, &m) in v.iter_mut().zip(amplitude) {
        let r = x.norm();
        if r > 0.0 {
            *x *= m / r;
        }
    }
}
