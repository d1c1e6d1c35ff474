//! Data-misfit objectives summed over diversity planes with equal weights.
//!
//! All three models share one shape: with `w = F_m u` and `K = |w|²`, the
//! per-plane gradient is `F_m^*(w ∘ weight)` and the Hessian-vector product is
//! `F_m^*(r ∘ F_m h + c ∘ conj(F_m h))` for per-pixel diagonals `r`, `c`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::forward::{DiversityPlan, PlaneSpec, Propagator, PupilGrid};
use crate::optim::{Objective, SecondOrderObjective};

/// Default intensity perturbation.
pub const DEFAULT_EPSILON: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    /// Poisson negative log-likelihood.
    Mlp,
    /// Least squares on Fourier amplitudes.
    Ls,
    /// Least squares on intensities.
    Lsi,
}

impl Model {
    pub const ALL: [Model; 3] = [Model::Mlp, Model::Ls, Model::Lsi];

    pub fn name(&self) -> &'static str {
        match self {
            Model::Mlp => "mlp",
            Model::Ls => "ls",
            Model::Lsi => "lsi",
        }
    }
}

impl std::str::FromStr for Model {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mlp" => Ok(Model::Mlp),
            "ls" => Ok(Model::Ls),
            "lsi" => Ok(Model::Lsi),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

impl std::fmt::Display for Model {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Observed intensities per plane and the derived amplitudes `sqrt(I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    intensities: Vec<RealField>,
    amplitudes: Vec<RealField>,
}

impl MeasurementSet {
    pub fn new(intensities: Vec<RealField>) -> Result<Self> {
        if let Some(bad) = intensities.iter().position(|i| !i.is_nonnegative()) {
            return Err(Error::Domain(format!("plane {bad} has negative intensity")));
        }
        let amplitudes = intensities.iter().map(RealField::sqrt).collect();
        Ok(Self {
            intensities,
            amplitudes,
        })
    }

    pub fn intensities(&self) -> &[RealField] {
        &self.intensities
    }

    pub fn amplitudes(&self) -> &[RealField] {
        &self.amplitudes
    }

    pub fn intensity(&self, m: usize) -> &RealField {
        &self.intensities[m]
    }

    pub fn amplitude(&self, m: usize) -> &RealField {
        &self.amplitudes[m]
    }

    pub fn len(&self) -> usize {
        self.intensities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intensities.is_empty()
    }

    /// `Σ_m ‖M_m‖²`, the offset between the LS objective and `Σ ‖|F_m u| − M_m‖²`.
    pub fn total_flux(&self) -> f64 {
        self.intensities.iter().map(RealField::sum).sum()
    }
}

/// Per-pixel quantities of one plane at one point.
pub(crate) struct PlanePoint<'a> {
    pub transformed: &'a [Complex64],
    pub intensity: &'a [f64],
    pub amplitude: &'a [f64],
    pub eps2: f64,
}

impl PlanePoint<'_> {
    fn value(&self, model: Model) -> f64 {
        let mut acc = 0.0;
        for ((w, &i), &m) in self.transformed.iter().zip(self.intensity).zip(self.amplitude) {
            let k = w.norm_sqr();
            acc += match model {
                Model::Mlp => k - i * (k + self.eps2).ln(),
                Model::Ls => k - 2.0 * (k + self.eps2).sqrt() * m,
                Model::Lsi => 0.5 * (k - i) * (k - i),
            };
        }
        acc
    }

    /// `w ∘ weight`, the quantity the adjoint maps back to the gradient.
    fn gradient_kernel(&self, model: Model) -> Vec<Complex64> {
        self.transformed
            .iter()
            .zip(self.intensity)
            .zip(self.amplitude)
            .map(|((w, &i), &m)| {
                let k = w.norm_sqr();
                let weight = match model {
                    Model::Mlp => 1.0 - i / (k + self.eps2),
                    Model::Ls => 1.0 - m / (k + self.eps2).sqrt(),
                    Model::Lsi => k - i,
                };
                w * weight
            })
            .collect()
    }

    /// Hessian diagonals `(r, c)`.
    pub fn diagonals(&self, model: Model) -> (Vec<f64>, Vec<Complex64>) {
        let eps2 = self.eps2;
        let mut r = Vec::with_capacity(self.transformed.len());
        let mut c = Vec::with_capacity(self.transformed.len());
        for ((w, &i), &m) in self.transformed.iter().zip(self.intensity).zip(self.amplitude) {
            let k = w.norm_sqr();
            let w2 = w * w;
            let (ri, ci) = match model {
                Model::Mlp => {
                    let denom = (k + eps2) * (k + eps2);
                    (1.0 - eps2 * i / denom, w2 * (i / denom))
                }
                Model::Ls => {
                    let s = (k + eps2).sqrt();
                    let ri = 1.0 - (m / (2.0 * s)) * ((k + 2.0 * eps2) / (k + eps2));
                    (ri, w2 * (m / (2.0 * s * s * s)))
                }
                Model::Lsi => (2.0 * k - i, w2),
            };
            r.push(ri);
            c.push(ci);
        }
        (r, c)
    }
}

/// A complete misfit: model, perturbation, forward operators and data.
#[derive(Debug, Clone)]
pub struct PhaseObjective {
    model: Model,
    epsilon: f64,
    propagator: Propagator,
    data: MeasurementSet,
}

impl PhaseObjective {
    pub fn new(
        model: Model,
        epsilon: f64,
        grid: PupilGrid,
        plan: DiversityPlan,
        data: MeasurementSet,
    ) -> Result<Self> {
        if !(epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        if data.len() != plan.len() {
            return Err(Error::Config(format!(
                "{} measurement planes for a {}-plane plan",
                data.len(),
                plan.len()
            )));
        }
        for i in data.intensities() {
            i.ensure_shape(grid.shape())?;
        }
        Ok(Self {
            model,
            epsilon,
            propagator: Propagator::new(grid, plan),
            data,
        })
    }

    /// Same data and operators under a different model.
    pub fn with_model(&self, model: Model) -> Self {
        let mut out = self.clone();
        out.model = model;
        out.propagator.reset_count();
        out
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn grid(&self) -> &PupilGrid {
        self.propagator.grid()
    }

    pub fn plan(&self) -> &DiversityPlan {
        self.propagator.plan()
    }

    pub fn planes(&self) -> &[PlaneSpec] {
        self.propagator.plan().planes()
    }

    pub fn data(&self) -> &MeasurementSet {
        &self.data
    }

    pub fn propagator(&self) -> &Propagator {
        &self.propagator
    }

    pub fn transform_count(&self) -> u64 {
        self.propagator.transform_count()
    }

    pub fn reset_transform_count(&self) {
        self.propagator.reset_count()
    }

    fn point<'a>(&'a self, m: usize, transformed: &'a ComplexField) -> PlanePoint<'a> {
        PlanePoint {
            transformed: transformed.values(),
            intensity: self.data.intensity(m).values(),
            amplitude: self.data.amplitude(m).values(),
            eps2: self.epsilon * self.epsilon,
        }
    }

    pub fn value(&self, u: &ComplexField) -> f64 {
        (0..self.plan().len())
            .map(|m| {
                let fu = self.propagator.forward(m, u);
                self.point(m, &fu).value(self.model)
            })
            .sum()
    }

    pub fn value_and_gradient(&self, u: &ComplexField) -> (f64, ComplexField) {
        let mut value = 0.0;
        let mut grad = ComplexField::zeros(u.shape());
        for m in 0..self.plan().len() {
            let fu = self.propagator.forward(m, u);
            let point = self.point(m, &fu);
            value += point.value(self.model);
            let kernel = ComplexField::from_vec(u.shape(), point.gradient_kernel(self.model))
                .expect("kernel shaped like field");
            grad += &self.propagator.adjoint(m, &kernel);
        }
        (value, grad)
    }

    pub fn gradient(&self, u: &ComplexField) -> ComplexField {
        self.value_and_gradient(u).1
    }

    /// Per-plane Hessian diagonals at `u`.
    pub fn plane_diagonals(&self, m: usize, u: &ComplexField) -> (RealField, ComplexField) {
        let fu = self.propagator.forward(m, u);
        let (r, c) = self.point(m, &fu).diagonals(self.model);
        (
            RealField::from_vec(u.shape(), r).expect("shape"),
            ComplexField::from_vec(u.shape(), c).expect("shape"),
        )
    }

    /// Hessian at `u`, reusable for many products.
    pub fn hessian_at(&self, u: &ComplexField) -> LocalHessian<'_> {
        let diagonals = (0..self.plan().len())
            .map(|m| self.plane_diagonals(m, u))
            .collect();
        LocalHessian {
            objective: self,
            diagonals,
        }
    }

    pub fn hvp(&self, u: &ComplexField, h: &ComplexField) -> ComplexField {
        self.hessian_at(u).apply(h)
    }
}

/// Hessian operator frozen at a point: `h ↦ Σ_m F_m^*(r_m ∘ F_m h + c_m ∘ conj(F_m h))`.
pub struct LocalHessian<'a> {
    objective: &'a PhaseObjective,
    diagonals: Vec<(RealField, ComplexField)>,
}

impl LocalHessian<'_> {
    pub fn diagonals(&self) -> &[(RealField, ComplexField)] {
        &self.diagonals
    }

    pub fn apply(&self, h: &ComplexField) -> ComplexField {
        let prop = &self.objective.propagator;
        let mut out = ComplexField::zeros(h.shape());
        for (m, (r, c)) in self.diagonals.iter().enumerate() {
            let fh = prop.forward(m, h);
            let mixed: Vec<Complex64> = fh
                .values()
                .iter()
                .zip(r.values())
                .zip(c.values())
                .map(|((v, &ri), ci)| v * ri + ci * v.conj())
                .collect();
            let mixed = ComplexField::from_vec(h.shape(), mixed).expect("shape");
            out += &prop.adjoint(m, &mixed);
        }
        out
    }
}

impl Objective for PhaseObjective {
    fn value_and_gradient(&self, z: &ComplexField) -> (f64, ComplexField) {
        PhaseObjective::value_and_gradient(self, z)
    }

    fn fft_calls(&self) -> u64 {
        self.transform_count()
    }
}

impl SecondOrderObjective for PhaseObjective {
    fn hessian_operator<'a>(&'a self, z: &ComplexField) -> Box<dyn Fn(&ComplexField) -> ComplexField + 'a> {
        let hess = self.hessian_at(z);
        Box::new(move |h| hess.apply(h))
    }
}
