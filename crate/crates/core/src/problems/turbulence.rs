use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::forward::{unitary_dft2, Direction, PupilGrid};

/// Default mask RMS of generated screens, in waves.
pub const DEFAULT_SCREEN_RMS: f64 = 0.19;

/// Parameters of a von Karman phase screen. Lengths are in grid units (the
/// grid spans one unit).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VonKarman {
    /// Fried parameter.
    pub r0: f64,
    /// Outer scale.
    pub outer_scale: f64,
    /// Mask RMS the screen is rescaled to, in waves; `None` keeps the
    /// physical amplitude implied by `r0`.
    pub target_rms: Option<f64>,
}

impl Default for VonKarman {
    fn default() -> Self {
        Self {
            r0: 0.2,
            outer_scale: 10.0,
            target_rms: Some(DEFAULT_SCREEN_RMS),
        }
    }
}

/// `0.023 r0^{-5/3} (k² + 1/L0²)^{-11/6}`, phase PSD in rad² per unit area
/// of spatial frequency (cycles per grid unit).
pub fn von_karman_psd(k: f64, r0: f64, outer_scale: f64) -> f64 {
    0.023 * r0.powf(-5.0 / 3.0) * (k * k + 1.0 / (outer_scale * outer_scale)).powf(-11.0 / 6.0)
}

/// Phase screen in waves: complex white noise shaped by `√Φ`, inverse
/// transformed, real part, mean removed over the mask and optionally
/// rescaled to a target RMS over the mask. The DC term is zero.
pub fn von_karman_screen(grid: &PupilGrid, params: &VonKarman, seed: u64) -> Result<RealField> {
    if !(params.r0 > 0.0 && params.outer_scale > 0.0) {
        return Err(Error::Domain(format!(
            "r0 and outer scale must be positive, got {} and {}",
            params.r0, params.outer_scale
        )));
    }
    if let Some(t) = params.target_rms {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("target RMS must be nonnegative, got {t}")));
        }
    }
    if grid.pupil_pixels() == 0 {
        return Err(Error::Domain("screen needs a nonempty mask".into()));
    }
    let n = grid.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // integer frequency index in FFT order, in cycles per grid unit
    let freq = |i: usize| if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
    let spectrum = ComplexField::from_fn(grid.shape(), |r, c| {
        let noise = Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        if r == 0 && c == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let k = freq(r).hypot(freq(c));
        noise * von_karman_psd(k, params.r0, params.outer_scale).sqrt()
    });
    // unitary inverse scaled back to Σ_k c_k e^{2πi k·x}
    let radians = unitary_dft2(&spectrum, Direction::Inverse).real_part().map(|v| v * n as f64);

    let mask = grid.mask();
    let pixels = grid.pupil_pixels() as f64;
    let mean = radians.values().iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v).sum::<f64>() / pixels;
    let mut waves = RealField::from_vec(
        grid.shape(),
        radians
            .values()
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m { (v - mean) / TAU } else { 0.0 })
            .collect(),
    )?;
    if let Some(target) = params.target_rms {
        let rms = (waves.values().iter().map(|v| v * v).sum::<f64>() / pixels).sqrt();
        if rms > 0.0 {
            waves = waves.map(|v| v * target / rms);
        }
    }
    Ok(waves)
}
