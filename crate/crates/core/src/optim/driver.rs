use crate::error::{Error, Result};
use crate::field::{aligned_rms, ComplexField};

use super::lbfgs::{lbfgs_direction, LbfgsMemory};
use super::line_search::{strong_wolfe_line_search, wolfe_line_search, LineSearchStep};
use super::trace::{IterRecord, RunTrace, StepWitness, StopReason};
use super::{Method, Objective, SecondOrderObjective, SolverConfig, GRAD_ZERO_TOL, HS_DENOMINATOR_FLOOR};

#[derive(Debug, Clone)]
pub struct Solution {
    pub z: ComplexField,
    pub trace: RunTrace,
    /// L-BFGS pairs refused for nonpositive curvature (always 0 for other methods).
    pub rejected_pairs: usize,
    /// `Re⟨y, s⟩` of every pair L-BFGS stored over the run.
    pub stored_curvatures: Vec<f64>,
}

/// Direction rule shared by the line-search solvers.
trait DirectionRule {
    /// Returns the direction and whether negative curvature was hit.
    fn direction(&mut self, z: &ComplexField, g: &ComplexField) -> (ComplexField, bool);
    fn update(&mut self, _s: ComplexField, _y: ComplexField, _d: &ComplexField) {}
    fn reset(&mut self) {}
    /// Curvature constant and whether the strong Wolfe test is used.
    fn curvature(&self, config: &SolverConfig) -> (f64, bool) {
        (config.c2, false)
    }
}

struct Steepest;

impl DirectionRule for Steepest {
    fn direction(&mut self, _z: &ComplexField, g: &ComplexField) -> (ComplexField, bool) {
        (-g, false)
    }
}

/// Hestenes–Stiefel nonlinear CG.
#[derive(Default)]
struct HestenesStiefel {
    prev: Option<(ComplexField, ComplexField)>, // (d_{k-1}, g_{k-1})
}

impl DirectionRule for HestenesStiefel {
    fn direction(&mut self, _z: &ComplexField, g: &ComplexField) -> (ComplexField, bool) {
        let steepest = -g;
        let Some((d_prev, g_prev)) = &self.prev else {
            return (steepest, false);
        };
        let y = g - g_prev;
        let denom = d_prev.re_dot(&y);
        if denom.abs() < HS_DENOMINATOR_FLOOR {
            return (steepest, false);
        }
        let beta = g.re_dot(&y) / denom;
        let d = steepest.added(beta, d_prev);
        if d.re_dot(g) < 0.0 {
            (d, false)
        } else {
            (steepest, false)
        }
    }

    fn reset(&mut self) {
        self.prev = None;
    }
}

struct Lbfgs {
    memory: LbfgsMemory,
    stored: Vec<f64>,
}

impl DirectionRule for Lbfgs {
    fn direction(&mut self, _z: &ComplexField, g: &ComplexField) -> (ComplexField, bool) {
        (lbfgs_direction(g, &self.memory), false)
    }

    fn update(&mut self, s: ComplexField, y: ComplexField, _d: &ComplexField) {
        let curvature = y.re_dot(&s);
        if self.memory.push(s, y) {
            self.stored.push(curvature);
        }
    }

    fn reset(&mut self) {
        self.memory.clear();
    }
}

struct TruncatedNewton<'a, O: SecondOrderObjective + ?Sized> {
    objective: &'a O,
    cg_max: usize,
}

impl<O: SecondOrderObjective + ?Sized> DirectionRule for TruncatedNewton<'_, O> {
    fn direction(&mut self, z: &ComplexField, g: &ComplexField) -> (ComplexField, bool) {
        let hess = self.objective.hessian_operator(z);
        let gn = g.norm();
        let tol = gn.sqrt().min(0.5) * gn;
        truncated_newton_direction(&*hess, g, tol, self.cg_max)
    }
}

/// Approximately solves `H d = −g` by CG in the real inner product
/// `Re⟨·,·⟩`. On nonpositive curvature returns the current iterate (or `−g`
/// on the first CG step) together with `true`.
pub fn truncated_newton_direction(
    hess: &dyn Fn(&ComplexField) -> ComplexField,
    g: &ComplexField,
    tol: f64,
    max_iters: usize,
) -> (ComplexField, bool) {
    let mut x = ComplexField::zeros(g.shape());
    let mut r = -g;
    let mut p = r.clone();
    let mut rr = r.norm_sqr();
    for j in 0..max_iters.max(1) {
        let hp = hess(&p);
        let curvature = p.re_dot(&hp);
        if curvature <= 0.0 || !curvature.is_finite() {
            return if j == 0 { (-g, true) } else { (x, true) };
        }
        let a = rr / curvature;
        x.axpy(a, &p);
        r.axpy(-a, &hp);
        let rr_new = r.norm_sqr();
        if rr_new.sqrt() <= tol {
            break;
        }
        let b = rr_new / rr;
        rr = rr_new;
        p = r.added(b, &p);
    }
    (x, false)
}

fn record(
    iter: usize,
    f: f64,
    g: &ComplexField,
    z: &ComplexField,
    truth: Option<&ComplexField>,
    fft_calls: u64,
) -> IterRecord {
    IterRecord {
        iter,
        f,
        grad_norm: g.norm(),
        alpha: 0.0,
        rms: truth.and_then(|t| aligned_rms(t, z).ok()),
        fft_calls,
        neg_curv: false,
        step: None,
    }
}

fn run<O: Objective + ?Sized>(
    objective: &O,
    config: &SolverConfig,
    z0: &ComplexField,
    truth: Option<&ComplexField>,
    rule: &mut dyn DirectionRule,
) -> Result<(ComplexField, RunTrace)> {
    config.validate()?;
    let fft_base = objective.fft_calls();
    let mut trace = RunTrace::new();
    let mut z = z0.clone();
    let (mut f, mut g) = objective.value_and_gradient(&z);
    trace.push(record(0, f, &g, &z, truth, objective.fft_calls() - fft_base));

    if g.norm() <= GRAD_ZERO_TOL {
        trace.stop = StopReason::GradZero;
        return Ok((z, trace));
    }

    for k in 1..=config.max_iters {
        let (mut d, neg_curv) = rule.direction(&z, &g);
        if !(d.re_dot(&g) < 0.0) {
            rule.reset();
            d = -&g;
        }
        let (c2, strong) = rule.curvature(config);
        let search = |d: &ComplexField| -> Result<LineSearchStep> {
            if strong {
                strong_wolfe_line_search(objective, &z, f, &g, d, config.c1, c2)
            } else {
                wolfe_line_search(objective, &z, f, &g, d, config.c1, c2)
            }
        };
        let step = match search(&d) {
            Ok(step) => step,
            Err(Error::LineSearch { .. }) => {
                // one steepest-descent retry, then give up
                rule.reset();
                d = -&g;
                match search(&d) {
                    Ok(step) => step,
                    Err(Error::LineSearch { .. }) => {
                        trace.stop = StopReason::LineSearchFail;
                        return Ok((z, trace));
                    }
                    Err(e) => return Err(e),
                }
            }
            Err(e) => return Err(e),
        };

        let s = &step.z - &z;
        let y = &step.g - &g;
        let s_norm = s.norm();
        let z_norm = z.norm();
        let witness = StepWitness {
            f_prev: f,
            slope: d.re_dot(&g),
            slope_new: step.slope_new,
            direction_norm: d.norm(),
        };

        rule.update(s, y, &d);
        let f_prev = f;
        z = step.z;
        f = step.f;
        g = step.g;

        let mut rec = record(k, f, &g, &z, truth, objective.fft_calls() - fft_base);
        rec.alpha = step.alpha;
        rec.neg_curv = neg_curv;
        rec.step = Some(witness);
        trace.push(rec);

        if g.norm() <= GRAD_ZERO_TOL {
            trace.stop = StopReason::GradZero;
            break;
        }
        if (f_prev - f).abs() <= config.tol_fun * f_prev.abs().max(1.0) {
            trace.stop = StopReason::TolFun;
            break;
        }
        if s_norm <= config.tol_x * z_norm.max(1.0) {
            trace.stop = StopReason::TolX;
            break;
        }
    }
    Ok((z, trace))
}

fn finish(z: ComplexField, trace: RunTrace) -> Solution {
    Solution {
        z,
        trace,
        rejected_pairs: 0,
        stored_curvatures: Vec::new(),
    }
}

pub fn solve_sd<O: Objective + ?Sized>(
    objective: &O,
    config: &SolverConfig,
    z0: &ComplexField,
    truth: Option<&ComplexField>,
) -> Result<Solution> {
    let (z, trace) = run(objective, config, z0, truth, &mut Steepest)?;
    Ok(finish(z, trace))
}

pub fn solve_ncg<O: Objective + ?Sized>(
    objective: &O,
    config: &SolverConfig,
    z0: &ComplexField,
    truth: Option<&ComplexField>,
) -> Result<Solution> {
    let mut rule = NcgRule::default();
    let (z, trace) = run(objective, config, z0, truth, &mut rule)?;
    Ok(finish(z, trace))
}

pub fn solve_lbfgs<O: Objective + ?Sized>(
    objective: &O,
    config: &SolverConfig,
    z0: &ComplexField,
    truth: Option<&ComplexField>,
) -> Result<Solution> {
    config.validate()?;
    let mut rule = Lbfgs {
        memory: LbfgsMemory::new(config.lbfgs_memory),
        stored: Vec::new(),
    };
    let (z, trace) = run(objective, config, z0, truth, &mut rule)?;
    Ok(Solution {
        z,
        trace,
        rejected_pairs: rule.memory.rejected(),
        stored_curvatures: rule.stored,
    })
}

pub fn solve_tn<O: SecondOrderObjective + ?Sized>(
    objective: &O,
    config: &SolverConfig,
    z0: &ComplexField,
    truth: Option<&ComplexField>,
) -> Result<Solution> {
    let cg_max = if config.tn_cg_max == 0 {
        2 * z0.len()
    } else {
        config.tn_cg_max
    };
    let mut rule = TruncatedNewton { objective, cg_max };
    let (z, trace) = run(objective, config, z0, truth, &mut rule)?;
    Ok(finish(z, trace))
}

/// Dispatches on `config.method`. Misell needs measurement data and is
/// rejected here; see [`super::misell_iterate`].
pub fn solve<O: SecondOrderObjective + ?Sized>(
    objective: &O,
    config: &SolverConfig,
    z0: &ComplexField,
    truth: Option<&ComplexField>,
) -> Result<Solution> {
    match config.method {
        Method::Sd => solve_sd(objective, config, z0, truth),
        Method::Ncg => solve_ncg(objective, config, z0, truth),
        Method::Lbfgs => solve_lbfgs(objective, config, z0, truth),
        Method::Tn => solve_tn(objective, config, z0, truth),
        Method::Misell => Err(Error::Config(
            "misell is a projection method and needs measurement data".into(),
        )),
    }
}

/// NCG rule that remembers the previous direction and gradient.
#[derive(Default)]
struct NcgRule {
    inner: HestenesStiefel,
    last_g: Option<ComplexField>,
}

impl DirectionRule for NcgRule {
    fn direction(&mut self, z: &ComplexField, g: &ComplexField) -> (ComplexField, bool) {
        let out = self.inner.direction(z, g);
        self.last_g = Some(g.clone());
        out
    }

    fn update(&mut self, _s: ComplexField, _y: ComplexField, d: &ComplexField) {
        if let Some(g) = self.last_g.take() {
            self.inner.prev = Some((d.clone(), g));
        }
    }

    fn reset(&mut self) {
        self.inner.reset();
    }
    // weak Wolfe steps let HS zig-zag and stall
    fn curvature(&self, config: &SolverConfig) -> (f64, bool) {
        (config.ncg_c2, true)
    }
}
