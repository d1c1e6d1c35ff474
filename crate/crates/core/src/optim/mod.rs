//! Line-search minimization of real-valued functions of complex variables.
//!
//! Gradients follow the conjugate-coordinate convention
//! `f(z + h) ≈ f(z) + 2 Re⟨h, ∇f(z)⟩ + Re⟨h, H[z](h)⟩`; every inner product a
//! method needs is `Re⟨·,·⟩`.

mod driver;
mod lbfgs;
mod line_search;
mod misell;
mod trace;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ComplexField;

pub use driver::{solve, solve_lbfgs, solve_ncg, solve_sd, solve_tn, truncated_newton_direction, Solution};
pub use lbfgs::{lbfgs_direction, LbfgsMemory};
pub use line_search::{strong_wolfe_line_search, wolfe_line_search, LineSearchStep, MAX_LINE_SEARCH_EVALS};
pub use misell::misell_iterate;
pub use trace::{IterRecord, RunTrace, StopReason, StepWitness, TRACE_CSV_HEADER};

/// Objective value and complex gradient `(∂f/∂z̄)ᵀ` at a point.
pub trait Objective {
    fn value_and_gradient(&self, z: &ComplexField) -> (f64, ComplexField);

    /// Cumulative 2-D transforms spent so far; zero for analytic test functions.
    fn fft_calls(&self) -> u64 {
        0
    }
}

/// Objectives that also provide the Hessian operator `h ↦ H_zz h + H_z̄z conj(h)`.
pub trait SecondOrderObjective: Objective {
    fn hessian_operator<'a>(&'a self, z: &ComplexField) -> Box<dyn Fn(&ComplexField) -> ComplexField + 'a>;
}

/// Adapter turning a closure into an [`Objective`].
pub struct FnObjective<F>(pub F);

impl<F> Objective for FnObjective<F>
where
    F: Fn(&ComplexField) -> (f64, ComplexField),
{
    fn value_and_gradient(&self, z: &ComplexField) -> (f64, ComplexField) {
        (self.0)(z)
    }
}

/// Closure pair adapter with a Hessian operator.
pub struct FnSecondOrder<F, H>(pub F, pub H);

impl<F, H> Objective for FnSecondOrder<F, H>
where
    F: Fn(&ComplexField) -> (f64, ComplexField),
{
    fn value_and_gradient(&self, z: &ComplexField) -> (f64, ComplexField) {
        (self.0)(z)
    }
}

impl<F, H> SecondOrderObjective for FnSecondOrder<F, H>
where
    F: Fn(&ComplexField) -> (f64, ComplexField),
    H: Fn(&ComplexField, &ComplexField) -> ComplexField,
{
    fn hessian_operator<'a>(&'a self, z: &ComplexField) -> Box<dyn Fn(&ComplexField) -> ComplexField + 'a> {
        let z = z.clone();
        Box::new(move |h| (self.1)(&z, h))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sd,
    Ncg,
    Lbfgs,
    Tn,
    Misell,
}

impl Method {
    pub const LINE_SEARCH: [Method; 4] = [Method::Sd, Method::Ncg, Method::Lbfgs, Method::Tn];

    pub fn name(&self) -> &'static str {
        match self {
            Method::Sd => "sd",
            Method::Ncg => "ncg",
            Method::Lbfgs => "lbfgs",
            Method::Tn => "tn",
            Method::Misell => "misell",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sd" => Ok(Method::Sd),
            "ncg" => Ok(Method::Ncg),
            "lbfgs" => Ok(Method::Lbfgs),
            "tn" => Ok(Method::Tn),
            "misell" => Ok(Method::Misell),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Gradient norm at or below which a point is treated as stationary.
pub const GRAD_ZERO_TOL: f64 = 1e-12;

/// Smallest `|Re⟨d_{k-1}, y⟩|` accepted in the Hestenes–Stiefel denominator.
pub const HS_DENOMINATOR_FLOOR: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub max_iters: usize,
    pub tol_fun: f64,
    pub tol_x: f64,
    pub c1: f64,
    pub c2: f64,
    /// Curvature constant of the strong Wolfe search used by nonlinear CG.
    pub ncg_c2: f64,
    pub lbfgs_memory: usize,
    /// Inner CG cap for truncated Newton; 0 selects twice the pixel count.
    pub tn_cg_max: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Lbfgs,
            max_iters: 150,
            tol_fun: 1e-12,
            tol_x: 1e-12,
            c1: 1e-4,
            c2: 0.9,
            ncg_c2: 0.1,
            lbfgs_memory: 2,
            tn_cg_max: 0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_method(method: Method) -> Self {
        Self {
            method,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.c1 && self.c1 < self.c2 && self.c2 < 1.0) {
            return Err(Error::Config(format!(
                "Wolfe constants need 0 < c1 < c2 < 1, got c1 = {}, c2 = {}",
                self.c1, self.c2
            )));
        }
        if self.method == Method::Ncg && !(self.c1 < self.ncg_c2 && self.ncg_c2 < 1.0) {
            return Err(Error::Config(format!(
                "ncg_c2 needs c1 < ncg_c2 < 1, got {}",
                self.ncg_c2
            )));
        }
        if self.method == Method::Lbfgs && self.lbfgs_memory == 0 {
            return Err(Error::Config("lbfgs_memory must be at least 1".into()));
        }
        if self.tol_fun < 0.0 || self.tol_x < 0.0 {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}
