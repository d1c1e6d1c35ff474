use crate::error::{Error, Result};
use crate::field::RealField;
use crate::forward::PupilGrid;

/// Largest Noll index the basis generator accepts (radial order 10).
pub const MAX_NOLL_INDEX: usize = 66;

/// Radial order `n` and signed azimuthal frequency `m` of Noll index `j`.
/// Even `j` carry `cos(|m|θ)` (`m > 0`), odd `j` carry `sin(|m|θ)` (`m < 0`).
pub fn noll_to_nm(j: usize) -> (usize, i64) {
    assert!(j >= 1, "Noll indices start at 1");
    let mut n = 0;
    while (n + 1) * (n + 2) / 2 < j {
        n += 1;
    }
    let p = j - n * (n + 1) / 2 - 1;
    let m_abs = if n % 2 == 0 { 2 * ((p + 1) / 2) } else { 2 * (p / 2) + 1 };
    let m = m_abs as i64;
    if m_abs == 0 || j % 2 == 0 {
        (n, m)
    } else {
        (n, -m)
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

fn radial(n: usize, m_abs: usize, rho: f64) -> f64 {
    (0..=(n - m_abs) / 2)
        .map(|s| {
            let sign = if s % 2 == 0 { 1.0 } else { -1.0 };
            sign * factorial(n - s) / (factorial(s) * factorial((n + m_abs) / 2 - s) * factorial((n - m_abs) / 2 - s))
                * rho.powi((n - 2 * s) as i32)
        })
        .sum()
}

/// Circle Zernike polynomial (unnormalized) at polar coordinates.
pub fn zernike(j: usize, rho: f64, theta: f64) -> f64 {
    let (n, m) = noll_to_nm(j);
    let r = radial(n, m.unsigned_abs() as usize, rho);
    match m {
        0 => r,
        m if m > 0 => r * (m as f64 * theta).cos(),
        m => r * ((-m) as f64 * theta).sin(),
    }
}

/// Zernike modes orthonormalized over the pixels of a mask.
///
/// The inner product is the mean over masked pixels, so mode 1 is the
/// constant 1 and every higher mode has zero mean and unit RMS.
#[derive(Debug, Clone)]
pub struct ZernikeBasis {
    grid: PupilGrid,
    pixels: Vec<usize>,
    modes: Vec<Vec<f64>>,
}

impl ZernikeBasis {
    /// Modes `1..=count`, with radius normalized to the outermost mask pixel.
    pub fn new(grid: &PupilGrid, count: usize) -> Result<Self> {
        if count == 0 || count > MAX_NOLL_INDEX {
            return Err(Error::Domain(format!("basis size must lie in 1..={MAX_NOLL_INDEX}, got {count}")));
        }
        let n = grid.n();
        let pixels: Vec<usize> = (0..n * n).filter(|&k| grid.mask()[k]).collect();
        if pixels.len() < count {
            return Err(Error::Domain(format!(
                "{} pupil pixels cannot carry {count} orthonormal modes",
                pixels.len()
            )));
        }
        let polar: Vec<(f64, f64)> = pixels
            .iter()
            .map(|&k| {
                let (x, y) = grid.xy(k / n, k % n);
                (x.hypot(y), y.atan2(x))
            })
            .collect();
        let r_max = polar.iter().map(|p| p.0).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let npix = pixels.len() as f64;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / npix;

        let mut modes: Vec<Vec<f64>> = Vec::with_capacity(count);
        for j in 1..=count {
            let mut v: Vec<f64> = polar.iter().map(|&(r, t)| zernike(j, r / r_max, t)).collect();
            // two passes of modified Gram–Schmidt
            for _ in 0..2 {
                for q in &modes {
                    let proj = dot(&v, q);
                    v.iter_mut().zip(q).for_each(|(x, y)| *x -= proj * y);
                }
            }
            let norm = dot(&v, &v).sqrt();
            if !(norm > 1e-8) {
                return Err(Error::Domain(format!("Zernike mode {j} is degenerate on this mask")));
            }
            v.iter_mut().for_each(|x| *x /= norm);
            modes.push(v);
        }
        Ok(Self {
            grid: grid.clone(),
            pixels,
            modes,
        })
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// `Σ coeffs[k] · Z̃_{k+1}`, zero outside the mask.
    pub fn phase(&self, coeffs: &[f64]) -> Result<RealField> {
        if coeffs.len() > self.modes.len() {
            return Err(Error::Domain(format!(
                "{} coefficients for a {}-mode basis",
                coeffs.len(),
                self.modes.len()
            )));
        }
        let mut out = RealField::zeros(self.grid.shape());
        for (mode, &a) in self.modes.iter().zip(coeffs) {
            for (&k, &v) in self.pixels.iter().zip(mode) {
                out.values_mut()[k] += a * v;
            }
        }
        Ok(out)
    }

    /// Mask-mean inner product of two modes (1-based Noll indices).
    pub fn mode_dot(&self, a: usize, b: usize) -> f64 {
        let (x, y) = (&self.modes[a - 1], &self.modes[b - 1]);
        x.iter().zip(y).map(|(p, q)| p * q).sum::<f64>() / self.pixels.len() as f64
    }
}

/// Phase `coeff · Z̃_j` in waves over the grid's mask.
pub fn zernike_annular_phase(grid: &PupilGrid, j: usize, coeff: f64) -> Result<RealField> {
    if j == 0 || j > MAX_NOLL_INDEX {
        return Err(Error::Domain(format!("Noll index must lie in 1..={MAX_NOLL_INDEX}, got {j}")));
    }
    let basis = ZernikeBasis::new(grid, j)?;
    let mut coeffs = vec![0.0; j];
    coeffs[j - 1] = coeff;
    basis.phase(&coeffs)
}
