//! Synthetic wavefronts, pupils, measurement simulation and noise.

mod instance;
mod measure;
mod pupil;
mod turbulence;
mod zernike;

pub use instance::{Aberration, NoiseSpec, ProblemInstance, ProblemSpec};
pub use measure::{
    add_poisson_noise, add_poisson_noise_except, aberration_stats, morozov_stop, morozov_stop_values, photon_scale,
    simulate_measurements, AberrationStats, MorozovStop, MOROZOV_TAU,
};
pub use pupil::{annular_pupil, connected_components, segmented_pupil, segmented_pupil_with, HexLayout};
pub use turbulence::{von_karman_psd, von_karman_screen, VonKarman, DEFAULT_SCREEN_RMS};
pub use zernike::{noll_to_nm, zernike, zernike_annular_phase, ZernikeBasis, MAX_NOLL_INDEX};
