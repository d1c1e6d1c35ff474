use std::collections::VecDeque;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::forward::PupilGrid;

/// Pixels with `r_inner ≤ √(x²+y²) < r_outer`; a disc when `r_inner = 0`.
pub fn annular_pupil(n: usize, r_inner: f64, r_outer: f64) -> Result<PupilGrid> {
    if !(0.0..r_outer).contains(&r_inner) || r_outer > 0.5 {
        return Err(Error::Domain(format!(
            "annulus needs 0 <= r_inner < r_outer <= 0.5, got {r_inner}, {r_outer}"
        )));
    }
    let grid = PupilGrid::full(n)?;
    let mask = (0..n * n)
        .map(|k| {
            let (x, y) = grid.xy(k / n, k % n);
            let r = x.hypot(y);
            r_inner <= r && r < r_outer
        })
        .collect();
    let grid = PupilGrid::new(n, mask)?;
    if grid.pupil_pixels() == 0 {
        return Err(Error::Domain(format!("annulus {r_inner}..{r_outer} covers no pixel at n={n}")));
    }
    Ok(grid)
}

/// Hexagonal segment layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HexLayout {
    /// Rings of segments around the center; 0 gives a single hexagon.
    pub rings: usize,
    /// Gap between neighboring segments as a fraction of the pitch.
    pub gap_frac: f64,
    /// Radius (grid units) the outermost segment corners reach.
    pub extent: f64,
}

impl HexLayout {
    pub fn new(rings: usize, gap_frac: f64) -> Self {
        Self {
            rings,
            gap_frac,
            extent: 0.48,
        }
    }

    /// Center-to-center distance of neighboring segments.
    pub fn pitch(&self) -> f64 {
        self.extent / (self.rings as f64 + 1.0 / 3f64.sqrt())
    }

    /// Segment centers; the central segment is absent when there are rings.
    pub fn centers(&self) -> Vec<(f64, f64)> {
        let p = self.pitch();
        let r = self.rings as i64;
        let mut out = Vec::new();
        for q in -r..=r {
            for s in -r..=r {
                let dist = (q.abs() + s.abs() + (q + s).abs()) / 2;
                if dist > r || (dist == 0 && r > 0) {
                    continue;
                }
                let (qf, sf) = (q as f64, s as f64);
                out.push((p * (qf + 0.5 * sf), p * sf * 3f64.sqrt() / 2.0));
            }
        }
        out
    }

    fn contains(&self, centers: &[(f64, f64)], x: f64, y: f64) -> bool {
        let half = 0.5 * self.pitch() * (1.0 - self.gap_frac);
        let normals = [0.0, PI / 3.0, 2.0 * PI / 3.0].map(|a: f64| (a.cos(), a.sin()));
        centers.iter().any(|&(cx, cy)| {
            normals
                .iter()
                .all(|&(nx, ny)| ((x - cx) * nx + (y - cy) * ny).abs() <= half)
        })
    }
}

/// Hexagonal segmented aperture; `rings = 2` gives the 18-segment layout
/// with the central segment missing.
pub fn segmented_pupil(n: usize, rings: usize, gap_frac: f64) -> Result<PupilGrid> {
    segmented_pupil_with(n, &HexLayout::new(rings, gap_frac))
}

pub fn segmented_pupil_with(n: usize, layout: &HexLayout) -> Result<PupilGrid> {
    if !(0.0..1.0).contains(&layout.gap_frac) {
        return Err(Error::Domain(format!("gap fraction must lie in [0, 1), got {}", layout.gap_frac)));
    }
    if !(layout.extent > 0.0 && layout.extent <= 0.5) {
        return Err(Error::Domain(format!("segment extent must lie in (0, 0.5], got {}", layout.extent)));
    }
    let grid = PupilGrid::full(n)?;
    let centers = layout.centers();
    let mask = (0..n * n)
        .map(|k| {
            let (x, y) = grid.xy(k / n, k % n);
            layout.contains(&centers, x, y)
        })
        .collect();
    let grid = PupilGrid::new(n, mask)?;
    if grid.pupil_pixels() == 0 {
        return Err(Error::Domain(format!("segmented pupil covers no pixel at n={n}")));
    }
    Ok(grid)
}

/// Number of 4-connected components of the mask.
pub fn connected_components(grid: &PupilGrid) -> usize {
    let n = grid.n();
    let mask = grid.mask();
    let mut seen = vec![false; n * n];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..n * n {
        if !mask[start] || seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        queue.push_back(start);
        while let Some(k) = queue.pop_front() {
            let (r, c) = (k / n, k % n);
            let mut visit = |rr: usize, cc: usize| {
                let j = rr * n + cc;
                if mask[j] && !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if r > 0 {
                visit(r - 1, c);
            }
            if r + 1 < n {
                visit(r + 1, c);
            }
            if c > 0 {
                visit(r, c - 1);
            }
            if c + 1 < n {
                visit(r, c + 1);
            }
        }
    }
    count
}
