//! Phase-diversity image formation: a known quadratic pupil phase followed by
//! a unitary 2-D DFT, and its adjoint.

use std::cell::{Cell, RefCell};
use std::f64::consts::TAU;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static DFT_CALLS: Cell<u64> = const { Cell::new(0) };
}

/// Number of 2-D transforms executed on the current thread so far.
pub fn dft_invocations() -> u64 {
    DFT_CALLS.with(|c| c.get())
}

fn plan(len: usize, direction: Direction) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        match direction {
            Direction::Forward => p.plan_fft_forward(len),
            Direction::Inverse => p.plan_fft_inverse(len),
        }
    })
}

/// 2-D DFT scaled by `1/sqrt(rows*cols)` so that it is unitary.
pub fn unitary_dft2(f: &ComplexField, direction: Direction) -> ComplexField {
    DFT_CALLS.with(|c| c.set(c.get() + 1));
    let (rows, cols) = (f.rows(), f.cols());
    let mut data = f.values().to_vec();

    let row_fft = plan(cols, direction);
    let col_fft = plan(rows, direction);
    let scratch_len = row_fft
        .get_inplace_scratch_len()
        .max(col_fft.get_inplace_scratch_len());
    let mut scratch = vec![Complex64::new(0.0, 0.0); scratch_len];

    row_fft.process_with_scratch(&mut data, &mut scratch);

    let mut column = vec![Complex64::new(0.0, 0.0); rows];
    for c in 0..cols {
        for r in 0..rows {
            column[r] = data[r * cols + c];
        }
        col_fft.process_with_scratch(&mut column, &mut scratch);
        for r in 0..rows {
            data[r * cols + c] = column[r];
        }
    }

    let norm = 1.0 / ((rows * cols) as f64).sqrt();
    for v in &mut data {
        *v *= norm;
    }
    ComplexField::from_vec(f.shape(), data).expect("shape preserved")
}

/// One measurement plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PlaneSpec {
    /// Pupil-plane amplitude measurement; the forward operator is the identity.
    Amplitude,
    /// Fourier-plane image with defocus `defocus` (waves at unit squared radius).
    Defocus { defocus: f64 },
}

impl PlaneSpec {
    pub fn defocus(d: f64) -> Self {
        PlaneSpec::Defocus { defocus: d }
    }

    /// Number of 2-D transforms one forward (or adjoint) application costs.
    pub fn transform_cost(&self) -> u64 {
        match self {
            PlaneSpec::Amplitude => 0,
            PlaneSpec::Defocus { .. } => 1,
        }
    }
}

/// Ordered measurement planes. An amplitude plane, if any, comes first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiversityPlan {
    planes: Vec<PlaneSpec>,
}

impl DiversityPlan {
    pub fn new(planes: Vec<PlaneSpec>) -> Result<Self> {
        if planes.is_empty() {
            return Err(Error::Config("diversity plan needs at least one plane".into()));
        }
        let amplitude_at: Vec<usize> = planes
            .iter()
            .enumerate()
            .filter(|(_, p)| matches!(p, PlaneSpec::Amplitude))
            .map(|(i, _)| i)
            .collect();
        match amplitude_at.as_slice() {
            [] | [0] => Ok(Self { planes }),
            [_] => Err(Error::Config("amplitude plane must be plane 0".into())),
            _ => Err(Error::Config("at most one amplitude plane is allowed".into())),
        }
    }

    /// Optional amplitude plane followed by one defocus plane per entry.
    pub fn from_defocus(defocus: &[f64], amplitude_plane: bool) -> Result<Self> {
        let mut planes = Vec::with_capacity(defocus.len() + 1);
        if amplitude_plane {
            planes.push(PlaneSpec::Amplitude);
        }
        planes.extend(defocus.iter().map(|&d| PlaneSpec::defocus(d)));
        Self::new(planes)
    }

    pub fn planes(&self) -> &[PlaneSpec] {
        &self.planes
    }

    pub fn len(&self) -> usize {
        self.planes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.planes.is_empty()
    }

    pub fn has_amplitude_plane(&self) -> bool {
        matches!(self.planes.first(), Some(PlaneSpec::Amplitude))
    }
}

/// Square sampling lattice with normalized coordinates `x_j = (j - n/2)/n`
/// and a pupil support mask.
#[derive(Debug, Clone, PartialEq)]
pub struct PupilGrid {
    n: usize,
    mask: Vec<bool>,
}

impl PupilGrid {
    pub fn new(n: usize, mask: Vec<bool>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain("grid side must be at least 2".into()));
        }
        if mask.len() != n * n {
            return Err(Error::Domain(format!(
                "mask has {} entries, grid needs {}",
                mask.len(),
                n * n
            )));
        }
        Ok(Self { n, mask })
    }

    /// Grid whose mask covers every pixel.
    pub fn full(n: usize) -> Result<Self> {
        Self::new(n, vec![true; n * n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn shape(&self) -> Shape {
        Shape::square(self.n)
    }

    #[inline]
    pub fn coord(&self, index: usize) -> f64 {
        (index as f64 - (self.n / 2) as f64) / self.n as f64
    }

    /// `(x, y)` of pixel `(row, col)`; `x` runs along columns.
    #[inline]
    pub fn xy(&self, row: usize, col: usize) -> (f64, f64) {
        (self.coord(col), self.coord(row))
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn mask_field(&self) -> RealField {
        RealField::from_vec(
            self.shape(),
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask matches grid")
    }

    pub fn pupil_pixels(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn fill_fraction(&self) -> f64 {
        self.pupil_pixels() as f64 / self.mask.len() as f64
    }
}

/// `exp(i 2π d (x² + y²))` over the grid; all ones for an amplitude plane.
pub fn defocus_diag(plane: &PlaneSpec, grid: &PupilGrid) -> ComplexField {
    let d = match plane {
        PlaneSpec::Amplitude => 0.0,
        PlaneSpec::Defocus { defocus } => *defocus,
    };
    ComplexField::from_fn(grid.shape(), |r, c| {
        let (x, y) = grid.xy(r, c);
        Complex64::from_polar(1.0, TAU * d * (x * x + y * y))
    })
}

fn check_grid(u: &ComplexField, grid: &PupilGrid) {
    assert_eq!(u.shape(), grid.shape(), "field not shaped to the pupil grid");
}

/// `F_m(u)`: identity for the amplitude plane, otherwise `DFT(D_m ∘ u)`.
pub fn diversity_forward(u: &ComplexField, plane: &PlaneSpec, grid: &PupilGrid) -> ComplexField {
    check_grid(u, grid);
    match plane {
        PlaneSpec::Amplitude => u.clone(),
        PlaneSpec::Defocus { .. } => {
            let mut shifted = u.clone();
            apply_phase(&mut shifted, plane, grid, false);
            unitary_dft2(&shifted, Direction::Forward)
        }
    }
}

/// `F_m^*(v)`: identity for the amplitude plane, otherwise `conj(D_m) ∘ IDFT(v)`.
pub fn diversity_adjoint(v: &ComplexField, plane: &PlaneSpec, grid: &PupilGrid) -> ComplexField {
    check_grid(v, grid);
    match plane {
        PlaneSpec::Amplitude => v.clone(),
        PlaneSpec::Defocus { .. } => {
            let mut out = unitary_dft2(v, Direction::Inverse);
            apply_phase(&mut out, plane, grid, true);
            out
        }
    }
}

fn apply_phase(f: &mut ComplexField, plane: &PlaneSpec, grid: &PupilGrid, conjugate: bool) {
    let PlaneSpec::Defocus { defocus } = plane else {
        return;
    };
    let sign = if conjugate { -1.0 } else { 1.0 };
    let n = grid.n();
    for (k, v) in f.values_mut().iter_mut().enumerate() {
        let (x, y) = grid.xy(k / n, k % n);
        *v *= Complex64::from_polar(1.0, sign * TAU * defocus * (x * x + y * y));
    }
}

pub fn predict_intensity(u: &ComplexField, plane: &PlaneSpec, grid: &PupilGrid) -> RealField {
    diversity_forward(u, plane, grid).abs_sqr()
}

/// Forward/adjoint operators bound to a grid, with a transform counter.
///
/// Every 2-D transform issued through this type is tallied, which is how
/// solver traces report FFT calls.
#[derive(Debug)]
pub struct Propagator {
    grid: PupilGrid,
    plan: DiversityPlan,
    transforms: AtomicU64,
}

impl Clone for Propagator {
    fn clone(&self) -> Self {
        Self {
            grid: self.grid.clone(),
            plan: self.plan.clone(),
            transforms: AtomicU64::new(self.transforms.load(Ordering::Relaxed)),
        }
    }
}

impl Propagator {
    pub fn new(grid: PupilGrid, plan: DiversityPlan) -> Self {
        Self {
            grid,
            plan,
            transforms: AtomicU64::new(0),
        }
    }

    pub fn grid(&self) -> &PupilGrid {
        &self.grid
    }

    pub fn plan(&self) -> &DiversityPlan {
        &self.plan
    }

    pub fn forward(&self, m: usize, u: &ComplexField) -> ComplexField {
        let plane = &self.plan.planes()[m];
        self.transforms.fetch_add(plane.transform_cost(), Ordering::Relaxed);
        diversity_forward(u, plane, &self.grid)
    }

    pub fn adjoint(&self, m: usize, v: &ComplexField) -> ComplexField {
        let plane = &self.plan.planes()[m];
        self.transforms.fetch_add(plane.transform_cost(), Ordering::Relaxed);
        diversity_adjoint(v, plane, &self.grid)
    }

    pub fn transform_count(&self) -> u64 {
        self.transforms.load(Ordering::Relaxed)
    }

    pub fn reset_count(&self) {
        self.transforms.store(0, Ordering::Relaxed);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::inner;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(seed: u64, n: usize) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexField::from_fn(Shape::square(n), |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Direct O(n^4) unitary DFT.
    fn naive_dft(f: &ComplexField, sign: f64) -> ComplexField {
        let (rows, cols) = (f.rows(), f.cols());
        let norm = 1.0 / ((rows * cols) as f64).sqrt();
        ComplexField::from_fn(f.shape(), |k, l| {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..rows {
                for c in 0..cols {
                    let phase = sign * TAU * ((k * r) as f64 / rows as f64 + (l * c) as f64 / cols as f64);
                    acc += f.get(r, c) * Complex64::from_polar(1.0, phase);
                }
            }
            acc * norm
        })
    }

    fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn dft_of_delta_is_flat() {
        let mut f = ComplexField::zeros(Shape::square(4));
        f.set(0, 0, Complex64::new(1.0, 0.0));
        let g = unitary_dft2(&f, Direction::Forward);
        for v in g.values() {
            assert!((v - Complex64::new(0.25, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn dft_matches_naive_and_is_unitary() {
        let f = random_field(1, 3);
        assert!(max_diff(&unitary_dft2(&f, Direction::Forward), &naive_dft(&f, -1.0)) < 1e-12);
        assert!(max_diff(&unitary_dft2(&f, Direction::Inverse), &naive_dft(&f, 1.0)) < 1e-12);

        let rect = ComplexField::from_fn(Shape::new(3, 5), |r, c| Complex64::new(r as f64, c as f64 * 0.5));
        assert!(max_diff(&unitary_dft2(&rect, Direction::Forward), &naive_dft(&rect, -1.0)) < 1e-12);

        let f = random_field(2, 8);
        let g = unitary_dft2(&f, Direction::Forward);
        assert!((g.norm() - f.norm()).abs() < 1e-12);
        assert!(max_diff(&unitary_dft2(&g, Direction::Inverse), &f) < 1e-12);
    }

    #[test]
    fn defocus_diag_examples() {
        let grid = PupilGrid::full(8).unwrap();
        let zero = defocus_diag(&PlaneSpec::defocus(0.0), &grid);
        assert!(zero.values().iter().all(|v| *v == Complex64::new(1.0, 0.0)));

        let d3 = defocus_diag(&PlaneSpec::defocus(3.0), &grid);
        assert!(d3.values().iter().all(|v| (v.norm() - 1.0).abs() < 1e-15));
        // x = 1/4 is column 6 on the n = 8 lattice, y = 0 is row 4
        assert_eq!(grid.xy(4, 6), (0.25, 0.0));
        let expected = Complex64::from_polar(1.0, 3.0 * std::f64::consts::PI / 8.0);
        assert!((d3.get(4, 6) - expected).norm() < 1e-15);
    }

    #[test]
    fn amplitude_plane_is_identity() {
        let grid = PupilGrid::full(4).unwrap();
        let u = random_field(3, 4);
        assert_eq!(diversity_forward(&u, &PlaneSpec::Amplitude, &grid), u);
        assert_eq!(diversity_adjoint(&u, &PlaneSpec::Amplitude, &grid), u);
        let zero_defocus = diversity_forward(&u, &PlaneSpec::defocus(0.0), &grid);
        assert!(max_diff(&zero_defocus, &unitary_dft2(&u, Direction::Forward)) < 1e-15);
    }

    #[test]
    fn adjoint_identity_and_unitarity() {
        let grid = PupilGrid::full(8).unwrap();
        let plane = PlaneSpec::defocus(3.0);
        for seed in 0..100 {
            let u = random_field(2 * seed, 8);
            let v = random_field(2 * seed + 1, 8);
            let lhs = inner(&diversity_forward(&u, &plane, &grid), &v).unwrap();
            let rhs = inner(&u, &diversity_adjoint(&v, &plane, &grid)).unwrap();
            assert!((lhs - rhs).norm() <= 1e-10 * u.norm() * v.norm());
        }
        let u = random_field(5, 8);
        let fu = diversity_forward(&u, &plane, &grid);
        assert!((fu.norm() - u.norm()).abs() < 1e-12);
        assert!(max_diff(&diversity_adjoint(&fu, &plane, &grid), &u) < 1e-12);
    }

    #[test]
    fn adjoint_matches_dense_conjugate_transpose() {
        let n = 4;
        let grid = PupilGrid::full(n).unwrap();
        let plane = PlaneSpec::defocus(-3.0);
        let size = n * n;
        // columns of U_m by probing unit vectors
        let mut dense = vec![Complex64::new(0.0, 0.0); size * size];
        for j in 0..size {
            let mut e = ComplexField::zeros(grid.shape());
            e.values_mut()[j] = Complex64::new(1.0, 0.0);
            let col = naive_dft(
                &crate::field::hadamard(&defocus_diag(&plane, &grid), &e).unwrap(),
                -1.0,
            );
            for i in 0..size {
                dense[i * size + j] = col.values()[i];
            }
        }
        let v = random_field(9, n);
        let expected: Vec<Complex64> = (0..size)
            .map(|j| (0..size).map(|i| dense[i * size + j].conj() * v.values()[i]).sum())
            .collect();
        let got = diversity_adjoint(&v, &plane, &grid);
        let expected = ComplexField::from_vec(grid.shape(), expected).unwrap();
        assert!(max_diff(&got, &expected) < 1e-12);
    }

    #[test]
    fn intensity_examples() {
        let grid = PupilGrid::full(4).unwrap();
        let u = ComplexField::from_fn(grid.shape(), |r, c| Complex64::from_polar(1.0, (r * 4 + c) as f64));
        let amp = predict_intensity(&u, &PlaneSpec::Amplitude, &grid);
        assert!(amp.values().iter().all(|v| (v - 1.0).abs() < 1e-15));

        let u = random_field(4, 4);
        for d in [-3.0, 0.0, 1.5, 3.0] {
            let plane = PlaneSpec::defocus(d);
            let i = predict_intensity(&u, &plane, &grid);
            assert!(i.is_nonnegative());
            assert!((i.sum() - u.norm_sqr()).abs() < 1e-12);
        }
        let plane = PlaneSpec::defocus(3.0);
        let oracle = naive_dft(&crate::field::hadamard(&defocus_diag(&plane, &grid), &u).unwrap(), -1.0).abs_sqr();
        let got = predict_intensity(&u, &plane, &grid);
        for (a, b) in got.values().iter().zip(oracle.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn plan_validation() {
        assert!(DiversityPlan::new(vec![]).is_err());
        assert!(DiversityPlan::new(vec![PlaneSpec::defocus(1.0), PlaneSpec::Amplitude]).is_err());
        assert!(DiversityPlan::new(vec![PlaneSpec::Amplitude, PlaneSpec::Amplitude]).is_err());
        let plan = DiversityPlan::from_defocus(&[-3.0, 3.0], true).unwrap();
        assert_eq!(plan.len(), 3);
        assert!(plan.has_amplitude_plane());
    }

    #[test]
    fn propagator_counts_transforms() {
        let grid = PupilGrid::full(4).unwrap();
        let plan = DiversityPlan::from_defocus(&[3.0], true).unwrap();
        let prop = Propagator::new(grid, plan);
        let u = random_field(1, 4);
        let before = dft_invocations();
        let _ = prop.forward(0, &u);
        let v = prop.forward(1, &u);
        let _ = prop.adjoint(1, &v);
        assert_eq!(prop.transform_count(), 2);
        assert_eq!(dft_invocations() - before, 2);
    }
}
