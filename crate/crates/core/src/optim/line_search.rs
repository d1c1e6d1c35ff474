//! Bracket-and-zoom search for a step satisfying
//! `f(z+αd) ≤ f(z) + c1 α Re⟨d,g⟩` and `Re⟨d,g(z+αd)⟩ ≥ c2 Re⟨d,g⟩`,
//! optionally with the strong curvature test `|Re⟨d,g(z+αd)⟩| ≤ c2 |Re⟨d,g⟩|`.

use crate::error::{Error, Result};
use crate::field::ComplexField;

use super::Objective;

pub const MAX_LINE_SEARCH_EVALS: usize = 50;

const EXPANSION: f64 = 2.0;
// interpolated trial points stay this fraction away from the bracket ends
const SAFEGUARD: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct LineSearchStep {
    pub alpha: f64,
    pub z: ComplexField,
    pub g: ComplexField,
    pub f: f64,
    pub evaluations: usize,
    /// `Re⟨d, g_new⟩`
    pub slope_new: f64,
}

#[derive(Clone, Copy)]
struct Sample {
    alpha: f64,
    f: f64,
    /// derivative of `α ↦ f(z + αd)`, i.e. `2 Re⟨d, g(z+αd)⟩`
    dphi: f64,
}

/// Minimizer of the cubic matching value and slope at both ends, or `None`
/// when the fit is degenerate.
fn cubic_minimizer(a: Sample, b: Sample) -> Option<f64> {
    let d1 = a.dphi + b.dphi - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.dphi * b.dphi;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let denom = b.dphi - a.dphi + 2.0 * d2;
    if denom == 0.0 {
        return None;
    }
    let t = b.alpha - (b.alpha - a.alpha) * (b.dphi + d2 - d1) / denom;
    t.is_finite().then_some(t)
}

pub fn wolfe_line_search<O: Objective + ?Sized>(
    objective: &O,
    z: &ComplexField,
    f: f64,
    g: &ComplexField,
    d: &ComplexField,
    c1: f64,
    c2: f64,
) -> Result<LineSearchStep> {
    search(objective, z, f, g, d, c1, c2, false)
}

/// Same search with the strong curvature condition.
pub fn strong_wolfe_line_search<O: Objective + ?Sized>(
    objective: &O,
    z: &ComplexField,
    f: f64,
    g: &ComplexField,
    d: &ComplexField,
    c1: f64,
    c2: f64,
) -> Result<LineSearchStep> {
    search(objective, z, f, g, d, c1, c2, true)
}

#[allow(clippy::too_many_arguments)]
fn search<O: Objective + ?Sized>(
    objective: &O,
    z: &ComplexField,
    f: f64,
    g: &ComplexField,
    d: &ComplexField,
    c1: f64,
    c2: f64,
    strong: bool,
) -> Result<LineSearchStep> {
    let slope = d.re_dot(g);
    if !(slope < 0.0) {
        return Err(Error::NotDescent(slope));
    }

    let mut lo = Sample {
        alpha: 0.0,
        f,
        dphi: 2.0 * slope,
    };
    let mut hi: Option<Sample> = None;
    let mut alpha = 1.0;

    for evaluations in 1..=MAX_LINE_SEARCH_EVALS {
        let trial = z.added(alpha, d);
        let (ft, gt) = objective.value_and_gradient(&trial);
        let slope_t = d.re_dot(&gt);
        let sample = Sample {
            alpha,
            f: ft,
            dphi: 2.0 * slope_t,
        };

        if !ft.is_finite() || ft > f + c1 * alpha * slope {
            hi = Some(sample);
        } else if slope_t < c2 * slope {
            lo = sample;
        } else if strong && slope_t > -c2 * slope {
            // minimizer lies behind this point
            hi = Some(sample);
        } else {
            return Ok(LineSearchStep {
                alpha,
                z: trial,
                g: gt,
                f: ft,
                evaluations,
                slope_new: slope_t,
            });
        }

        alpha = match hi {
            None => alpha * EXPANSION,
            Some(hi) => {
                let width = hi.alpha - lo.alpha;
                let (left, right) = (lo.alpha + SAFEGUARD * width, hi.alpha - SAFEGUARD * width);
                let guess = if hi.f.is_finite() && hi.dphi.is_finite() {
                    cubic_minimizer(lo, hi)
                } else {
                    None
                };
                guess.map_or(0.5 * (lo.alpha + hi.alpha), |t| t.clamp(left, right))
            }
        };
    }
    Err(Error::LineSearch {
        evaluations: MAX_LINE_SEARCH_EVALS,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Shape;
    use crate::optim::FnObjective;
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn scalar(v: Complex64) -> ComplexField {
        ComplexField::from_vec(Shape::new(1, 1), vec![v]).unwrap()
    }

    // f(z) = (|z|² − 1)² + |z − 1|²,  ∂f/∂z̄ = 2(|z|² − 1) z + (z − 1)
    fn bumpy() -> FnObjective<impl Fn(&ComplexField) -> (f64, ComplexField)> {
        FnObjective(|z: &ComplexField| {
            let v = z.values()[0];
            let m = v.norm_sqr() - 1.0;
            let f = m * m + (v - 1.0).norm_sqr();
            (f, scalar(v * (2.0 * m) + (v - 1.0)))
        })
    }

    #[test]
    fn quadratic_accepts_exact_minimizer() {
        let a = ComplexField::from_vec(Shape::new(1, 3), vec![c(1.0, 2.0), c(-1.0, 0.5), c(0.0, -3.0)]).unwrap();
        let obj = FnObjective(|z: &ComplexField| {
            let r = z - &a;
            (r.norm_sqr(), r)
        });
        let z = ComplexField::zeros(a.shape());
        let (f, g) = obj.value_and_gradient(&z);
        let d = -&g;
        let step = wolfe_line_search(&obj, &z, f, &g, &d, 1e-4, 0.9).unwrap();
        // with the conjugate-coordinate gradient g = z − a the exact step is 1
        assert_eq!(step.alpha, 1.0);
        assert!(step.f <= f + 1e-4 * step.alpha * d.re_dot(&g));
        assert!((&step.z - &a).norm() < 1e-15);
    }

    #[test]
    fn rejects_ascent_direction() {
        let obj = bumpy();
        let z = scalar(c(0.0, 2.0));
        let (f, g) = obj.value_and_gradient(&z);
        assert!(matches!(
            wolfe_line_search(&obj, &z, f, &g, &g, 1e-4, 0.9),
            Err(Error::NotDescent(_))
        ));
    }

    #[test]
    fn step_lies_in_first_wolfe_interval_of_dense_scan() {
        let obj = bumpy();
        let z = scalar(c(0.0, 2.0));
        let (f, g) = obj.value_and_gradient(&z);
        let d = -&g;
        let slope = d.re_dot(&g);
        let (c1, c2) = (1e-4, 0.9);
        let feasible = |alpha: f64| {
            let (ft, gt) = obj.value_and_gradient(&z.added(alpha, &d));
            ft <= f + c1 * alpha * slope && d.re_dot(&gt) >= c2 * slope
        };
        // dense scan over (0, 4] for the first feasible interval
        let grid: Vec<f64> = (1..=40_000).map(|k| k as f64 * 1e-4).collect();
        let start = grid.iter().position(|&a| feasible(a)).expect("some feasible step");
        let end = start + grid[start..].iter().position(|&a| !feasible(a)).unwrap_or(grid.len() - start);
        let (lo, hi) = (grid[start], grid[end - 1]);

        let step = wolfe_line_search(&obj, &z, f, &g, &d, c1, c2).unwrap();
        assert!(feasible(step.alpha));
        assert!(step.alpha >= lo - 1e-4 && step.alpha <= hi + 1e-4, "alpha {} outside [{lo}, {hi}]", step.alpha);
    }

    #[test]
    fn strong_search_rejects_overshoot() {
        // f = |z − 1|² from z = 0 along d = −1.8g: α=1 passes Armijo but overshoots
        let obj = FnObjective(|z: &ComplexField| {
            let r = z - &scalar(c(1.0, 0.0));
            (r.norm_sqr(), r)
        });
        let z = scalar(c(0.0, 0.0));
        let (f, g) = obj.value_and_gradient(&z);
        let d = g.scale(-1.8);
        let slope = d.re_dot(&g);
        let weak = wolfe_line_search(&obj, &z, f, &g, &d, 1e-4, 0.1).unwrap();
        assert_eq!(weak.alpha, 1.0);
        let strong = strong_wolfe_line_search(&obj, &z, f, &g, &d, 1e-4, 0.1).unwrap();
        assert!(strong.slope_new.abs() <= 0.1 * slope.abs());
        assert!(strong.f <= f + 1e-4 * strong.alpha * slope);
    }

    #[test]
    fn unbounded_below_exhausts_search() {
        // f = −|z|² has no Wolfe step along d = z (curvature never satisfied)
        let obj = FnObjective(|z: &ComplexField| (-z.norm_sqr(), -z));
        let z = scalar(c(1.0, 0.0));
        let (f, g) = obj.value_and_gradient(&z);
        let d = -&g;
        assert!(matches!(
            wolfe_line_search(&obj, &z, f, &g, &d, 1e-4, 0.9),
            Err(Error::LineSearch { .. })
        ));
    }
}
