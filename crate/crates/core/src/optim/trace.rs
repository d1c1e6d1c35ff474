use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_CSV_HEADER: &str = "iter,f,grad_norm,alpha,rms,fft_calls,neg_curv";

/// Why a solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    TolFun,
    TolX,
    GradZero,
    LineSearchFail,
}

impl StopReason {
    pub fn name(&self) -> &'static str {
        match self {
            StopReason::MaxIters => "max_iters",
            StopReason::TolFun => "tol_fun",
            StopReason::TolX => "tol_x",
            StopReason::GradZero => "grad_zero",
            StopReason::LineSearchFail => "line_search_fail",
        }
    }
}

/// Line-search quantities of an accepted step, enough to re-check both
/// Wolfe inequalities after the fact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepWitness {
    pub f_prev: f64,
    /// `Re⟨d_k, g_k⟩`
    pub slope: f64,
    /// `Re⟨d_k, g_{k+1}⟩`
    pub slope_new: f64,
    pub direction_norm: f64,
}

impl StepWitness {
    pub fn satisfies_wolfe(&self, f_new: f64, alpha: f64, c1: f64, c2: f64) -> bool {
        f_new <= self.f_prev + c1 * alpha * self.slope && self.slope_new >= c2 * self.slope
    }

    /// `(Re⟨d,g⟩)² / ‖d‖²`, one term of the Zoutendijk sum.
    pub fn zoutendijk_term(&self) -> f64 {
        self.slope * self.slope / (self.direction_norm * self.direction_norm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub f: f64,
    pub grad_norm: f64,
    /// Accepted step length; 0 for the initial record.
    pub alpha: f64,
    pub rms: Option<f64>,
    pub fft_calls: u64,
    pub neg_curv: bool,
    pub step: Option<StepWitness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<IterRecord>,
    pub stop: StopReason,
}

impl RunTrace {
    pub fn new() -> Self {
        Self {
            records: Vec::new(),
            stop: StopReason::MaxIters,
        }
    }

    pub fn push(&mut self, record: IterRecord) {
        self.records.push(record);
    }

    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn first(&self) -> Option<&IterRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&IterRecord> {
        self.records.last()
    }

    pub fn fft_calls(&self) -> u64 {
        self.records.last().map_or(0, |r| r.fft_calls)
    }

    pub fn values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.f).collect()
    }

    pub fn rms_series(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.rms).collect()
    }

    pub fn final_rms(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.rms)
    }

    /// First iteration whose RMS drops below `threshold`.
    pub fn iterations_to_rms(&self, threshold: f64) -> Option<usize> {
        self.records
            .iter()
            .find(|r| r.rms.is_some_and(|v| v < threshold))
            .map(|r| r.iter)
    }

    pub fn negative_curvature_fraction(&self) -> f64 {
        let steps = self.records.iter().filter(|r| r.iter > 0).count();
        if steps == 0 {
            return 0.0;
        }
        let flagged = self.records.iter().filter(|r| r.neg_curv).count();
        flagged as f64 / steps as f64
    }

    pub fn zoutendijk_sum(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|r| r.step.map(|s| s.zoutendijk_term()))
            .sum()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let rms = r.rms.map(|v| format!("{v:e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{:e},{:e},{:e},{},{},{}",
                r.iter,
                r.f,
                r.grad_norm,
                r.alpha,
                rms,
                r.fft_calls,
                u8::from(r.neg_curv)
            );
        }
        out
    }

    /// Parses the CSV written by [`RunTrace::to_csv`]. Step witnesses are not
    /// part of the file and come back empty.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Format("empty trace".into()))?;
        if header.trim() != TRACE_CSV_HEADER {
            return Err(Error::Format(format!("unexpected trace header '{header}'")));
        }
        let mut trace = RunTrace::new();
        for line in lines {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 7 {
                return Err(Error::Format(format!("trace row has {} cells: '{line}'", cells.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad number '{s}': {e}")))
            };
            trace.push(IterRecord {
                iter: num(cells[0])? as usize,
                f: num(cells[1])?,
                grad_norm: num(cells[2])?,
                alpha: num(cells[3])?,
                rms: if cells[4].trim().is_empty() { None } else { Some(num(cells[4])?) },
                fft_calls: num(cells[5])? as u64,
                neg_curv: cells[6].trim() == "1",
                step: None,
            });
        }
        Ok(trace)
    }
}

impl Default for RunTrace {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_keeps_columns() {
        let mut trace = RunTrace::new();
        trace.push(IterRecord {
            iter: 0,
            f: 3.5,
            grad_norm: 1.0,
            alpha: 0.0,
            rms: Some(1.2),
            fft_calls: 4,
            neg_curv: false,
            step: None,
        });
        trace.push(IterRecord {
            iter: 1,
            f: -2.0,
            grad_norm: 0.25,
            alpha: 0.5,
            rms: None,
            fft_calls: 8,
            neg_curv: true,
            step: None,
        });
        let csv = trace.to_csv();
        assert!(csv.starts_with(TRACE_CSV_HEADER));
        let back = RunTrace::from_csv(&csv).unwrap();
        assert_eq!(back.records, trace.records);
        assert!(RunTrace::from_csv("iter,f\n1,2\n").is_err());
    }
}
