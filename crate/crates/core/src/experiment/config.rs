use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{Model, DEFAULT_EPSILON};
use crate::optim::SolverConfig;
use crate::problems::{Aberration, NoiseSpec, ProblemSpec, VonKarman, DEFAULT_SCREEN_RMS};

/// Wavefront generator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProblemKind {
    Zernike,
    Vonkarman,
    Segmented,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    #[serde(rename = "type")]
    pub kind: ProblemKind,
    pub n: usize,
    pub seed: u64,
    pub r_inner: f64,
    pub r_outer: f64,
    pub zernike_index: usize,
    pub zernike_coeff: f64,
    pub r0: f64,
    pub outer_scale: f64,
    pub screen_rms: f64,
    pub rings: usize,
    pub gap_frac: f64,
    pub extent: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        let vk = VonKarman::default();
        Self {
            kind: ProblemKind::Zernike,
            n: 32,
            seed: 1,
            r_inner: 0.1,
            r_outer: 0.3,
            zernike_index: 13,
            zernike_coeff: 0.1,
            r0: vk.r0,
            outer_scale: vk.outer_scale,
            screen_rms: DEFAULT_SCREEN_RMS,
            rings: 2,
            gap_frac: 0.05,
            extent: 0.48,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanSection {
    pub defocus: Vec<f64>,
    pub amplitude_plane: bool,
}

impl Default for PlanSection {
    fn default() -> Self {
        Self {
            defocus: vec![-3.0, 3.0],
            amplitude_plane: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSection {
    pub model: Model,
    pub epsilon: f64,
}

impl Default for ObjectiveSection {
    fn default() -> Self {
        Self {
            model: Model::Ls,
            epsilon: DEFAULT_EPSILON,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    /// Absent means noiseless data.
    pub snr: Option<f64>,
    pub seed: u64,
    pub skip_amplitude_plane: bool,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            snr: None,
            seed: 0,
            skip_amplitude_plane: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub restarts: usize,
    /// Restart `k` starts from seed `seed_base + k`.
    pub seed_base: u64,
    pub success_rms: f64,
    /// Apply the discrepancy principle to every trace.
    pub morozov: bool,
    /// Noise misfit level; estimated from the truth when absent.
    pub morozov_level: Option<f64>,
    pub morozov_tau: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            restarts: 10,
            seed_base: 100,
            success_rms: 1e-5,
            morozov: false,
            morozov_level: None,
            morozov_tau: crate::problems::MOROZOV_TAU,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSection,
    pub plan: PlanSection,
    pub objective: ObjectiveSection,
    pub solver: SolverConfig,
    pub noise: NoiseSection,
    pub run: RunSection,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses TOML text, applies `key=value` overrides (dotted keys, TOML
    /// values; bare words are taken as strings) and validates.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for item in overrides {
            apply_override(&mut table, item)?;
        }
        let config: Self = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        let field = |name: &str, msg: String| Err(Error::Config(format!("{name}: {msg}")));
        if p.n < 2 {
            return field("problem.n", format!("must be at least 2, got {}", p.n));
        }
        if self.run.restarts == 0 {
            return field("run.restarts", "must be at least 1".into());
        }
        if !(self.objective.epsilon > 0.0) {
            return field("objective.epsilon", format!("must be positive, got {}", self.objective.epsilon));
        }
        if let Some(snr) = self.noise.snr {
            if !(snr > 0.0 && snr.is_finite()) {
                return field("noise.snr", format!("must be positive, got {snr}"));
            }
        }
        if self.plan.defocus.is_empty() && !self.plan.amplitude_plane {
            return field("plan.defocus", "needs at least one plane".into());
        }
        self.solver.validate().map_err(|e| Error::Config(format!("solver: {e}")))?;
        // generator parameters are checked by building the pupil and phase
        self.problem_spec()
            .aberration
            .build(p.n, p.seed)
            .map_err(|e| Error::Config(format!("problem: {e}")))?;
        Ok(())
    }

    pub fn problem_spec(&self) -> ProblemSpec {
        let p = &self.problem;
        let screen = VonKarman {
            r0: p.r0,
            outer_scale: p.outer_scale,
            target_rms: Some(p.screen_rms),
        };
        let aberration = match p.kind {
            ProblemKind::Zernike => Aberration::Zernike {
                r_inner: p.r_inner,
                r_outer: p.r_outer,
                index: p.zernike_index,
                coeff: p.zernike_coeff,
            },
            ProblemKind::Vonkarman => Aberration::VonKarman {
                r_inner: p.r_inner,
                r_outer: p.r_outer,
                screen,
            },
            ProblemKind::Segmented => Aberration::Segmented {
                rings: p.rings,
                gap_frac: p.gap_frac,
                extent: p.extent,
                screen,
            },
        };
        ProblemSpec {
            n: p.n,
            seed: p.seed,
            aberration,
            defocus: self.plan.defocus.clone(),
            amplitude_plane: self.plan.amplitude_plane,
            noise: self.noise.snr.map(|snr| NoiseSpec {
                snr,
                seed: self.noise.seed,
                skip_amplitude_plane: self.noise.skip_amplitude_plane,
            }),
        }
    }

    /// Seeds of all restarts, in order.
    pub fn restart_seeds(&self) -> Vec<u64> {
        (0..self.run.restarts as u64).map(|k| self.run.seed_base + k).collect()
    }
}

fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = parse_value(raw);
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let mut cursor = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a section")))?;
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    // parse as the right-hand side of a TOML assignment
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}
