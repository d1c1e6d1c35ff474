use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{ComplexField, RealField};
use crate::forward::{DiversityPlan, PlaneSpec, PupilGrid};
use crate::objective::{MeasurementSet, Model, PhaseObjective};

use super::measure::{add_poisson_noise_except, simulate_measurements};
use super::pupil::{annular_pupil, segmented_pupil_with, HexLayout};
use super::turbulence::{von_karman_screen, VonKarman};
use super::zernike::zernike_annular_phase;

/// Which synthetic wavefront to build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Aberration {
    /// Single annular Zernike mode.
    Zernike {
        r_inner: f64,
        r_outer: f64,
        index: usize,
        coeff: f64,
    },
    /// von Karman screen on an annulus.
    VonKarman {
        r_inner: f64,
        r_outer: f64,
        screen: VonKarman,
    },
    /// von Karman screen on a hexagonal segmented aperture.
    Segmented {
        rings: usize,
        gap_frac: f64,
        extent: f64,
        screen: VonKarman,
    },
}

impl Aberration {
    pub fn kind(&self) -> &'static str {
        match self {
            Aberration::Zernike { .. } => "zernike",
            Aberration::VonKarman { .. } => "vonkarman",
            Aberration::Segmented { .. } => "segmented",
        }
    }

    /// Pupil grid and phase (waves) on an `n × n` lattice.
    pub fn build(&self, n: usize, seed: u64) -> Result<(PupilGrid, RealField)> {
        match self {
            Aberration::Zernike {
                r_inner,
                r_outer,
                index,
                coeff,
            } => {
                let grid = annular_pupil(n, *r_inner, *r_outer)?;
                let phase = zernike_annular_phase(&grid, *index, *coeff)?;
                Ok((grid, phase))
            }
            Aberration::VonKarman { r_inner, r_outer, screen } => {
                let grid = annular_pupil(n, *r_inner, *r_outer)?;
                let phase = von_karman_screen(&grid, screen, seed)?;
                Ok((grid, phase))
            }
            Aberration::Segmented {
                rings,
                gap_frac,
                extent,
                screen,
            } => {
                let layout = HexLayout {
                    rings: *rings,
                    gap_frac: *gap_frac,
                    extent: *extent,
                };
                let grid = segmented_pupil_with(n, &layout)?;
                let phase = von_karman_screen(&grid, screen, seed)?;
                Ok((grid, phase))
            }
        }
    }
}

/// Photon noise applied to the simulated data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub snr: f64,
    pub seed: u64,
    /// Leave the in-focus amplitude plane noiseless.
    pub skip_amplitude_plane: bool,
}

/// Everything needed to generate a problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub seed: u64,
    pub aberration: Aberration,
    pub defocus: Vec<f64>,
    pub amplitude_plane: bool,
    pub noise: Option<NoiseSpec>,
}

/// A synthetic retrieval problem: pupil, ground truth, plan and data.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub grid: PupilGrid,
    /// Phase of the truth in waves, zero outside the pupil.
    pub phase: RealField,
    /// `mask · exp(i 2π phase)`
    pub truth: ComplexField,
    pub plan: DiversityPlan,
    pub data: MeasurementSet,
    pub noise: Option<NoiseSpec>,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    n: usize,
    planes: Vec<PlaneSpec>,
    noise: Option<NoiseSpec>,
}

const META_FILE: &str = "instance.toml";
const MASK_FILE: &str = "mask.bin";
const PHASE_FILE: &str = "phase.bin";
const TRUTH_FILE: &str = "truth.bin";

fn intensity_file(m: usize) -> String {
    format!("intensity_{m}.csv")
}

impl ProblemInstance {
    pub fn generate(spec: &ProblemSpec) -> Result<Self> {
        let (grid, phase) = spec.aberration.build(spec.n, spec.seed)?;
        let truth = ComplexField::from_polar(&grid.mask_field(), &phase)?;
        let plan = DiversityPlan::from_defocus(&spec.defocus, spec.amplitude_plane)?;
        let clean = simulate_measurements(&truth, &plan, &grid)?;
        let data = match &spec.noise {
            None => clean,
            Some(noise) => {
                let skip: Vec<usize> = if noise.skip_amplitude_plane && plan.has_amplitude_plane() {
                    vec![0]
                } else {
                    Vec::new()
                };
                add_poisson_noise_except(&clean, noise.snr, noise.seed, &skip)?
            }
        };
        Ok(Self {
            grid,
            phase,
            truth,
            plan,
            data,
            noise: spec.noise,
        })
    }

    pub fn objective(&self, model: Model, eps: f64) -> Result<PhaseObjective> {
        PhaseObjective::new(model, eps, self.grid.clone(), self.plan.clone(), self.data.clone())
    }

    /// Noiseless data for the same truth and plan.
    pub fn clean_data(&self) -> Result<MeasurementSet> {
        simulate_measurements(&self.truth, &self.plan, &self.grid)
    }

    /// Writes the instance into `dir`; `config` (structured text) is stored
    /// alongside so the directory describes how it was made.
    pub fn save(&self, dir: &Path, config: Option<&str>) -> Result<()> {
        fs::create_dir_all(dir)?;
        let meta = Meta {
            n: self.grid.n(),
            planes: self.plan.planes().to_vec(),
            noise: self.noise,
        };
        let mut text = toml::to_string(&meta).map_err(|e| Error::Format(format!("instance metadata: {e}")))?;
        if let Some(config) = config {
            fs::write(dir.join("config.toml"), config)?;
            text.push_str("\n# generated with config.toml in this directory\n");
        }
        fs::write(dir.join(META_FILE), text)?;
        let mut buf = Vec::new();
        self.grid.mask_field().write_binary(&mut buf)?;
        fs::write(dir.join(MASK_FILE), &buf)?;
        buf.clear();
        self.phase.write_binary(&mut buf)?;
        fs::write(dir.join(PHASE_FILE), &buf)?;
        buf.clear();
        self.truth.write_binary(&mut buf)?;
        fs::write(dir.join(TRUTH_FILE), &buf)?;
        for (m, intensity) in self.data.intensities().iter().enumerate() {
            fs::write(dir.join(intensity_file(m)), intensity.to_csv())?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = fs::read_to_string(dir.join(META_FILE))?;
        let meta: Meta = toml::from_str(&text).map_err(|e| Error::Format(format!("{META_FILE}: {e}")))?;
        let read_real = |name: &str| -> Result<RealField> {
            RealField::read_binary(&mut BufReader::new(fs::File::open(dir.join(name))?))
        };
        let mask = read_real(MASK_FILE)?;
        let grid = PupilGrid::new(meta.n, mask.values().iter().map(|&v| v != 0.0).collect())?;
        let phase = read_real(PHASE_FILE)?;
        let truth = ComplexField::read_binary(&mut BufReader::new(fs::File::open(dir.join(TRUTH_FILE))?))?;
        let plan = DiversityPlan::new(meta.planes)?;
        let data = MeasurementSet::new(
            (0..plan.len())
                .map(|m| RealField::from_csv(&fs::read_to_string(dir.join(intensity_file(m)))?))
                .collect::<Result<Vec<_>>>()?,
        )?;
        for field in [phase.shape(), truth.shape()] {
            if field != grid.shape() {
                return Err(Error::Format(format!("stored field of shape {field:?} on an n={} grid", meta.n)));
            }
        }
        let instance = Self {
            grid,
            phase,
            truth,
            plan,
            data,
            noise: meta.noise,
        };
        instance.objective(Model::Ls, 1.0)?;
        Ok(instance)
    }
}
