//! Explicit Hessians of the per-plane misfits, their closed-form spectra and
//! global Lipschitz constants of the gradient.
//!
//! For one plane with operator `F` and diagonals `(r, c)` the augmented
//! Hessian acting on `(h; conj h)` is
//!
//! ```text
//! [ F* R F    F* C conj(F) ]
//! [ Fᵀ C̄ F    Fᵀ R conj(F) ]
//! ```
//!
//! which is unitarily similar to `[[R, C], [C̄, R]]` and therefore has the
//! eigenvalues `r_i ± |c_i|`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::forward::{diversity_forward, PlaneSpec, PupilGrid};
use crate::objective::{MeasurementSet, Model, PhaseObjective, PlanePoint};

/// Largest pixel count for which dense matrices are built (2N = 128).
pub const DENSE_PIXEL_LIMIT: usize = 64;

/// Diagonal data of one plane's Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredHessian {
    pub r: RealField,
    pub c: ComplexField,
    pub plane: PlaneSpec,
}

impl StructuredHessian {
    pub fn spectrum(&self) -> SpectrumReport {
        structured_eigenvalues(&self.r, &self.c)
    }

    /// Dense `2N × 2N` matrix of this plane's Hessian on the given grid.
    pub fn assemble(&self, grid: &PupilGrid) -> Result<DMatrix<Complex64>> {
        let f = operator_matrix(&self.plane, grid)?;
        Ok(augmented(&f, &self.r, &self.c))
    }
}

/// Sorted eigenvalues with summary numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumReport {
    /// Model the spectrum belongs to, if any.
    pub model: Option<Model>,
    /// True when the formulas are not the published ones (LSI).
    pub extension: bool,
    pub eigenvalues: Vec<f64>,
    pub min: f64,
    pub max: f64,
    /// `max / (smallest positive eigenvalue)`; infinite if none is positive.
    pub condition_ratio: f64,
    /// `max − min`
    pub clustering_width: f64,
}

impl SpectrumReport {
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Self {
        eigenvalues.sort_by(f64::total_cmp);
        let min = eigenvalues.first().copied().unwrap_or(f64::NAN);
        let max = eigenvalues.last().copied().unwrap_or(f64::NAN);
        let min_positive = eigenvalues.iter().copied().find(|&v| v > 0.0);
        let condition_ratio = min_positive.map_or(f64::INFINITY, |p| max / p);
        Self {
            model: None,
            extension: false,
            eigenvalues,
            min,
            max,
            condition_ratio,
            clustering_width: max - min,
        }
    }

    pub fn tagged(mut self, model: Model) -> Self {
        self.model = Some(model);
        self.extension = model == Model::Lsi;
        self
    }

    /// Largest elementwise distance to another sorted spectrum of equal length.
    pub fn max_deviation(&self, other: &[f64]) -> f64 {
        assert_eq!(self.eigenvalues.len(), other.len(), "spectrum lengths differ");
        self.eigenvalues
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spectrum serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("spectrum report: {e}")))
    }
}

pub fn hessian_diagonals(
    model: Model,
    u: &ComplexField,
    plane: &PlaneSpec,
    grid: &PupilGrid,
    intensity: &RealField,
    eps: f64,
) -> Result<StructuredHessian> {
    intensity.ensure_shape(u.shape())?;
    let fu = diversity_forward(u, plane, grid);
    let amplitude = intensity.sqrt();
    let point = PlanePoint {
        transformed: fu.values(),
        intensity: intensity.values(),
        amplitude: amplitude.values(),
        eps2: eps * eps,
    };
    let (r, c) = point.diagonals(model);
    Ok(StructuredHessian {
        r: RealField::from_vec(u.shape(), r)?,
        c: ComplexField::from_vec(u.shape(), c)?,
        plane: *plane,
    })
}

/// The multiset `{r_i + |c_i|, r_i − |c_i|}`.
pub fn structured_eigenvalues(r: &RealField, c: &ComplexField) -> SpectrumReport {
    assert_eq!(r.shape(), c.shape(), "diagonals differ in shape");
    let eig = r
        .values()
        .iter()
        .zip(c.values())
        .flat_map(|(&ri, ci)| [ri + ci.norm(), ri - ci.norm()])
        .collect();
    SpectrumReport::from_eigenvalues(eig)
}

/// Eigenvalues evaluated directly from the per-pixel formulas.
pub fn closed_form_spectrum(
    model: Model,
    u: &ComplexField,
    plane: &PlaneSpec,
    grid: &PupilGrid,
    intensity: &RealField,
    eps: f64,
) -> Result<SpectrumReport> {
    intensity.ensure_shape(u.shape())?;
    let fu = diversity_forward(u, plane, grid);
    let eps2 = eps * eps;
    let mut eig = Vec::with_capacity(2 * u.len());
    for (w, &i) in fu.values().iter().zip(intensity.values()) {
        let k = w.norm_sqr();
        let m = i.sqrt();
        let pair = match model {
            Model::Mlp => {
                let d = k + eps2;
                [1.0 + (k - eps2) * i / (d * d), 1.0 - i / d]
            }
            Model::Ls => {
                let s = (k + eps2).sqrt();
                [1.0 - eps2 * m / (s * s * s), 1.0 - m / s]
            }
            Model::Lsi => [3.0 * k - i, k - i],
        };
        eig.extend(pair);
    }
    Ok(SpectrumReport::from_eigenvalues(eig).tagged(model))
}

/// Spectral extremes of MLP and (doubled) LS at the same point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub mlp_max: f64,
    pub mlp_min: f64,
    pub ls_max_times2: f64,
    pub ls_min_times2: f64,
}

impl ClusteringReport {
    /// `2 λ_max(LS) ≤ 2` up to rounding.
    pub fn ls_bounded_by_two(&self) -> bool {
        self.ls_max_times2 <= 2.0 + 1e-12
    }

    /// Doubled LS interval lies inside the MLP interval.
    pub fn ls_contained(&self) -> bool {
        self.mlp_min <= self.ls_min_times2 && self.ls_max_times2 <= self.mlp_max
    }
}

pub fn clustering_comparison(
    u: &ComplexField,
    plane: &PlaneSpec,
    grid: &PupilGrid,
    intensity: &RealField,
    eps: f64,
) -> Result<ClusteringReport> {
    let mlp = closed_form_spectrum(Model::Mlp, u, plane, grid, intensity, eps)?;
    let ls = closed_form_spectrum(Model::Ls, u, plane, grid, intensity, eps)?;
    Ok(ClusteringReport {
        mlp_max: mlp.max,
        mlp_min: mlp.min,
        ls_max_times2: 2.0 * ls.max,
        ls_min_times2: 2.0 * ls.min,
    })
}

/// Clustering reports at `trials` points `truth + σ·ξ` with complex Gaussian
/// `ξ` and `σ = scale · ‖truth‖/√N`, data taken noiselessly at the truth.
pub fn sample_clustering(
    truth: &ComplexField,
    plane: &PlaneSpec,
    grid: &PupilGrid,
    eps: f64,
    scale: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<ClusteringReport>> {
    let intensity = crate::forward::predict_intensity(truth, plane, grid);
    let sigma = scale * truth.norm() / (truth.len() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials)
        .map(|_| {
            let u = ComplexField::from_fn(truth.shape(), |r, c| {
                let xi = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                truth.get(r, c) + xi * (sigma / std::f64::consts::SQRT_2)
            });
            clustering_comparison(&u, plane, grid, &intensity, eps)
        })
        .collect()
}

/// Global Lipschitz constant of the gradient: `L + Σ‖I_m‖∞/ε²` for MLP and
/// `L + Σ‖M_m‖∞/ε` for LS, with `L` the number of planes. The LSI gradient
/// is not globally Lipschitz.
pub fn lipschitz_bound(model: Model, data: &MeasurementSet, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("epsilon must be positive, got {eps}")));
    }
    let planes = data.len() as f64;
    match model {
        Model::Mlp => Ok(planes + data.intensities().iter().map(|i| i.max_abs() / (eps * eps)).sum::<f64>()),
        Model::Ls => Ok(planes + data.amplitudes().iter().map(|m| m.max_abs() / eps).sum::<f64>()),
        Model::Lsi => Err(Error::Domain("the LSI gradient has no global Lipschitz constant".into())),
    }
}

fn guard(n_pixels: usize) -> Result<()> {
    if n_pixels > DENSE_PIXEL_LIMIT {
        return Err(Error::TooLarge {
            requested: n_pixels,
            limit: DENSE_PIXEL_LIMIT,
        });
    }
    Ok(())
}

/// Matrix of the linear map `u ↦ F_m u` in row-major pixel order.
pub fn operator_matrix(plane: &PlaneSpec, grid: &PupilGrid) -> Result<DMatrix<Complex64>> {
    let n = grid.shape().len();
    guard(n)?;
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut e = ComplexField::zeros(grid.shape());
        e.values_mut()[j] = Complex64::new(1.0, 0.0);
        let col = diversity_forward(&e, plane, grid);
        for (i, v) in col.values().iter().enumerate() {
            out[(i, j)] = *v;
        }
    }
    Ok(out)
}

fn augmented(f: &DMatrix<Complex64>, r: &RealField, c: &ComplexField) -> DMatrix<Complex64> {
    let n = f.nrows();
    let rd = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        r.values().iter().map(|&v| Complex64::new(v, 0.0)),
    ));
    let cd = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(c.values()));
    let fa = f.adjoint();
    let ft = f.transpose();
    let fc = f.conjugate();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&(&fa * &rd * f));
    h.view_mut((0, n), (n, n)).copy_from(&(&fa * &cd * &fc));
    h.view_mut((n, 0), (n, n)).copy_from(&(&ft * cd.conjugate() * f));
    h.view_mut((n, n), (n, n)).copy_from(&(&ft * &rd * &fc));
    h
}

/// The literal block matrix `[[U* R U, U* C U*], [U C̄ U, U R U*]]`.
pub fn structured_matrix(r: &RealField, c: &ComplexField, u: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = r.len();
    guard(n)?;
    if u.nrows() != n || u.ncols() != n || c.len() != n {
        return Err(Error::ShapeMismatch {
            left: (u.nrows(), u.ncols()),
            right: (n, n),
        });
    }
    let rd = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        r.values().iter().map(|&v| Complex64::new(v, 0.0)),
    ));
    let cd = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(c.values()));
    let ua = u.adjoint();
    let mut h = DMatrix::zeros(2 * n, 2 * n);
    h.view_mut((0, 0), (n, n)).copy_from(&(&ua * &rd * u));
    h.view_mut((0, n), (n, n)).copy_from(&(&ua * &cd * &ua));
    h.view_mut((n, 0), (n, n)).copy_from(&(u * cd.conjugate() * u));
    h.view_mut((n, n), (n, n)).copy_from(&(u * &rd * &ua));
    Ok(h)
}

/// Dense Hessian of the full objective (sum over planes) at `u`.
pub fn assemble_objective(objective: &PhaseObjective, u: &ComplexField) -> Result<DMatrix<Complex64>> {
    let n = u.len();
    guard(n)?;
    let mut total = DMatrix::zeros(2 * n, 2 * n);
    for (m, plane) in objective.planes().iter().enumerate() {
        let (r, c) = objective.plane_diagonals(m, u);
        let f = operator_matrix(plane, objective.grid())?;
        total += augmented(&f, &r, &c);
    }
    Ok(total)
}

/// Sorted eigenvalues of a Hermitian matrix.
pub fn dense_eigenvalues(h: &DMatrix<Complex64>) -> Vec<f64> {
    let mut eig: Vec<f64> = SymmetricEigen::new(h.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(h: &DMatrix<Complex64>) -> f64 {
    (h - h.adjoint()).iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Applies an augmented matrix to `(h; conj h)` and returns the top half.
pub fn apply_augmented(h: &DMatrix<Complex64>, v: &ComplexField) -> ComplexField {
    let n = v.len();
    let stacked = nalgebra::DVector::from_iterator(
        2 * n,
        v.values().iter().copied().chain(v.values().iter().map(|x| x.conj())),
    );
    let out = h * stacked;
    ComplexField::from_vec(v.shape(), out.rows(0, n).iter().copied().collect()).expect("shape")
}
