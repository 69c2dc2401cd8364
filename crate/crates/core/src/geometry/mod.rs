//! Barriers, the triangular pinball lattice and its detector arms.
//!
//! The 2D lattice is laid out in "Galton" coordinates: axis 0 (`x`) is the
//! lateral coordinate, perpendicular to every barrier, and axis 1 (`y`) is the
//! progress coordinate down the board. Every barrier is a short segment
//! parallel to `y`, so scattering only reverses the lateral velocity.

mod calibration;

pub use calibration::{
    calibrate_half_transmission, transmission_coefficient, CalibrationOptions, CalibrationReport,
    CalibrationSample, ScatteringOutcome,
};

use crate::wavefield::{Grid, Point, WavefieldError};

#[derive(Debug, thiserror::Error)]
pub enum GeometryError {
    #[error("barrier at ({x:.3}, {y:.3}) lies within {margin:.3} of the grid boundary")]
    BarrierOutsideGrid { x: f64, y: f64, margin: f64 },
    #[error("invalid barrier: {0}")]
    InvalidBarrier(String),
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),
    #[error("arm index out of range: level {level}, node {node} (levels = {levels})")]
    IndexOutOfRange {
        level: usize,
        node: usize,
        levels: usize,
    },
    #[error("lobes did not separate within {steps} steps (t = {time:.3})")]
    NoSeparation { steps: usize, time: f64 },
    #[error("calibration bracket [{h_low}, {h_high}] has T = {t_low:.6} .. {t_high:.6}; no crossing of {target}")]
    NoSignChange {
        h_low: f64,
        h_high: f64,
        t_low: f64,
        t_high: f64,
        target: f64,
    },
    #[error("calibration did not reach tolerance after {0} bisection steps")]
    NotConverged(usize),
    #[error(transparent)]
    Wavefield(#[from] WavefieldError),
}

/// Gaussian bump barrier `V = h exp(-d²/2w²)`.
///
/// In 1D `d = x - center.x`. In 2D `d` is the distance to the segment
/// `x = center.x`, `|y - center.y| <= half_length`; `half_length = None`
/// makes it an infinite line.
#[derive(Debug, Clone, PartialEq)]
pub struct Barrier {
    pub center: Point,
    pub height: f64,
    pub width: f64,
    pub half_length: Option<f64>,
}

impl Barrier {
    pub fn new_1d(center: f64, height: f64, width: f64) -> Self {
        Barrier {
            center: [center, 0.0],
            height,
            width,
            half_length: None,
        }
    }

    pub fn validate(&self, grid: &Grid) -> Result<(), GeometryError> {
        if !(self.height.is_finite() && self.height >= 0.0) {
            return Err(GeometryError::InvalidBarrier(format!(
                "height {} must be >= 0",
                self.height
            )));
        }
        if !(self.width.is_finite() && self.width >= 2.0 * grid.spacing(0)) {
            return Err(GeometryError::InvalidBarrier(format!(
                "width {} is below two grid spacings ({})",
                self.width,
                2.0 * grid.spacing(0)
            )));
        }
        let margin = 5.0 * self.width;
        let mut probes = vec![self.center];
        if let (2, Some(hl)) = (grid.dims(), self.half_length) {
            probes.push([self.center[0], self.center[1] - hl]);
            probes.push([self.center[0], self.center[1] + hl]);
        }
        for p in probes {
            if grid.boundary_distance(p) < margin {
                return Err(GeometryError::BarrierOutsideGrid {
                    x: p[0],
                    y: p[1],
                    margin,
                });
            }
        }
        Ok(())
    }

    pub fn value_at(&self, p: Point, dims: usize) -> f64 {
        let dx = p[0] - self.center[0];
        let d2 = if dims == 1 {
            dx * dx
        } else {
            let dy = match self.half_length {
                Some(hl) => ((p[1] - self.center[1]).abs() - hl).max(0.0),
                None => 0.0,
            };
            dx * dx + dy * dy
        };
        self.height * (-d2 / (2.0 * self.width * self.width)).exp()
    }
}

/// Sum of Gaussian bumps sampled on `grid`.
pub fn barrier_potential(barriers: &[Barrier], grid: &Grid) -> Result<Vec<f64>, GeometryError> {
    for b in barriers {
        b.validate(grid)?;
    }
    Ok((0..grid.len())
        .map(|idx| {
            let p = grid.point(idx);
            barriers.iter().map(|b| b.value_at(p, grid.dims())).sum()
        })
        .collect())
}

/// Reflected or transmitted outcome of one scattering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Reflected,
    Transmitted,
}

impl Outcome {
    /// Record bit: 1 = transmitted, 0 = reflected.
    pub fn bit(self) -> bool {
        matches!(self, Outcome::Transmitted)
    }

    pub fn from_bit(bit: bool) -> Self {
        if bit {
            Outcome::Transmitted
        } else {
            Outcome::Reflected
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Outcome::Reflected => 'R',
            Outcome::Transmitted => 'T',
        }
    }
}

/// Axis-aligned half-open box `[min, max)`. 1D regions ignore `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Region {
    pub min: Point,
    pub max: Point,
}

impl Region {
    pub fn interval(min: f64, max: f64) -> Self {
        Region {
            min: [min, f64::NEG_INFINITY],
            max: [max, f64::INFINITY],
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        (0..2).all(|a| p[a] >= self.min[a] && p[a] < self.max[a])
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        (0..2).all(|a| self.min[a] < other.max[a] && other.min[a] < self.max[a])
    }

    pub fn area(&self) -> f64 {
        (self.max[0] - self.min[0]) * (self.max[1] - self.min[1])
    }
}

/// Detector placement: one detector per arm when enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectorLayout {
    pub enabled: bool,
}

impl DetectorLayout {
    pub fn detector_count(&self, geom: &PinballGeometry) -> usize {
        if self.enabled {
            geom.arm_count()
        } else {
            0
        }
    }
}

/// Triangular lattice of identical barriers: row `l` holds `l + 1` nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct PinballGeometry {
    pub levels: usize,
    /// Position of the apex barrier (row 0, node 0).
    pub apex: Point,
    /// Progress distance between consecutive rows.
    pub row_spacing: f64,
    /// Lateral distance between neighbouring nodes of one row.
    pub pitch: f64,
    /// Height and width of every barrier.
    pub height: f64,
    pub width: f64,
    /// Barrier segment half length along `y`.
    pub half_length: f64,
    pub detectors: DetectorLayout,
}

impl PinballGeometry {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let positive = [
            ("row_spacing", self.row_spacing),
            ("pitch", self.pitch),
            ("width", self.width),
            ("half_length", self.half_length),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(GeometryError::InvalidLattice(format!(
                    "{name} = {v} must be > 0"
                )));
            }
        }
        if self.pitch / 2.0 <= 2.0 * self.width {
            return Err(GeometryError::InvalidLattice(
                "half pitch must exceed the detector gap 2w".into(),
            ));
        }
        if 2.0 * self.half_length >= 2.0 * self.row_spacing {
            return Err(GeometryError::InvalidLattice(
                "barrier segments would reach the next row with the same lateral position".into(),
            ));
        }
        Ok(())
    }

    /// Center of node `node` in row `level`.
    pub fn node_position(&self, level: usize, node: usize) -> Point {
        [
            self.apex[0] + (node as f64 - level as f64 / 2.0) * self.pitch,
            self.apex[1] + level as f64 * self.row_spacing,
        ]
    }

    pub fn barriers(&self) -> Vec<Barrier> {
        (0..self.levels)
            .flat_map(|l| (0..=l).map(move |j| (l, j)))
            .map(|(l, j)| Barrier {
                center: self.node_position(l, j),
                height: self.height,
                width: self.width,
                half_length: Some(self.half_length),
            })
            .collect()
    }

    pub fn barrier_count(&self) -> usize {
        self.levels * (self.levels + 1) / 2
    }

    pub fn arm_count(&self) -> usize {
        2 * self.barrier_count()
    }

    /// Arm between row `level` and row `level + 1` on the reflected (left,
    /// `-x`) or transmitted (right, `+x`) side of `node`. The arm starts `2w`
    /// beyond the barrier line so detection never overlaps the scattering zone.
    pub fn arm_region_of(
        &self,
        level: usize,
        node: usize,
        outcome: Outcome,
    ) -> Result<Region, GeometryError> {
        if level >= self.levels || node > level {
            return Err(GeometryError::IndexOutOfRange {
                level,
                node,
                levels: self.levels,
            });
        }
        let c = self.node_position(level, node);
        let gap = 2.0 * self.width;
        let half = self.pitch / 2.0;
        let (x0, x1) = match outcome {
            Outcome::Reflected => (c[0] - half, c[0] - gap),
            Outcome::Transmitted => (c[0] + gap, c[0] + half),
        };
        Ok(Region {
            min: [x0, c[1]],
            max: [x1, c[1] + self.row_spacing],
        })
    }

    pub fn arm_regions(&self) -> Vec<(usize, usize, Outcome, Region)> {
        let mut out = Vec::with_capacity(self.arm_count());
        for l in 0..self.levels {
            for j in 0..=l {
                for o in [Outcome::Reflected, Outcome::Transmitted] {
                    out.push((l, j, o, self.arm_region_of(l, j, o).unwrap()));
                }
            }
        }
        out
    }
}

/// Potential of the whole lattice sampled on a 2D grid.
pub fn build_potential(geom: &PinballGeometry, grid: &Grid) -> Result<Vec<f64>, GeometryError> {
    if grid.dims() != 2 {
        return Err(GeometryError::InvalidLattice(
            "lattice needs a 2D grid".into(),
        ));
    }
    if geom.levels > 0 {
        geom.validate()?;
    }
    barrier_potential(&geom.barriers(), grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lattice(levels: usize) -> PinballGeometry {
        PinballGeometry {
            levels,
            apex: [0.0, -8.0],
            row_spacing: 8.0,
            pitch: 16.0,
            height: 50.0,
            width: 0.25,
            half_length: 6.0,
            detectors: DetectorLayout { enabled: true },
        }
    }

    fn grid2() -> Grid {
        Grid::new_2d([512, 512], [64.0, 64.0]).unwrap()
    }

    #[test]
    fn empty_geometry_is_zero() {
        let v = build_potential(&lattice(0), &grid2()).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_barrier_peak_value() {
        let grid = Grid::new_1d(2048, 40.96).unwrap();
        let b = Barrier::new_1d(0.0, 75.0, 0.25);
        let v = barrier_potential(&[b], &grid).unwrap();
        let center = v[1024];
        assert!((center - 75.0).abs() < 1e-9);
    }

    #[test]
    fn three_level_lattice_has_six_maxima() {
        let grid = grid2();
        let v = build_potential(&lattice(3), &grid).unwrap();
        assert_eq!(count_plateau_maxima(&v, &grid, 25.0), 6);
        assert_eq!(lattice(3).barrier_count(), 6);
    }

    /// Connected components of grid points that are >= all 8 neighbours and
    /// above `floor`; barrier segments produce flat ridges, so maxima are
    /// counted as plateaus.
    fn count_plateau_maxima(v: &[f64], grid: &Grid, floor: f64) -> usize {
        let (nx, ny) = (grid.n(0), grid.n(1));
        let at = |ix: isize, iy: isize| -> f64 {
            if ix < 0 || iy < 0 || ix >= nx as isize || iy >= ny as isize {
                f64::NEG_INFINITY
            } else {
                v[iy as usize * nx + ix as usize]
            }
        };
        let mut is_max = vec![false; v.len()];
        for iy in 0..ny as isize {
            for ix in 0..nx as isize {
                let c = at(ix, iy);
                if c <= floor {
                    continue;
                }
                let mut ok = true;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        if (dx, dy) != (0, 0) && at(ix + dx, iy + dy) > c + 1e-12 {
                            ok = false;
                        }
                    }
                }
                is_max[iy as usize * nx + ix as usize] = ok;
            }
        }
        let mut seen = vec![false; v.len()];
        let mut components = 0;
        for start in 0..v.len() {
            if !is_max[start] || seen[start] {
                continue;
            }
            components += 1;
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                let (ix, iy) = ((i % nx) as isize, (i / nx) as isize);
                for dy in -1..=1isize {
                    for dx in -1..=1isize {
                        let (jx, jy) = (ix + dx, iy + dy);
                        if jx < 0 || jy < 0 || jx >= nx as isize || jy >= ny as isize {
                            continue;
                        }
                        let j = jy as usize * nx + jx as usize;
                        if is_max[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        components
    }

    #[test]
    fn barrier_near_edge_is_rejected() {
        let grid = Grid::new_1d(256, 25.6).unwrap();
        let b = Barrier::new_1d(12.0, 10.0, 0.25);
        assert!(matches!(
            barrier_potential(&[b], &grid),
            Err(GeometryError::BarrierOutsideGrid { .. })
        ));
        let thin = Barrier::new_1d(0.0, 10.0, 0.1);
        assert!(barrier_potential(&[thin], &grid).is_err());
    }

    #[test]
    fn apex_arms_are_disjoint() {
        let g = lattice(3);
        let r = g.arm_region_of(0, 0, Outcome::Reflected).unwrap();
        let t = g.arm_region_of(0, 0, Outcome::Transmitted).unwrap();
        assert!(!r.overlaps(&t));
        assert!(g.arm_region_of(3, 0, Outcome::Reflected).is_err());
        assert!(g.arm_region_of(1, 2, Outcome::Reflected).is_err());
    }

    #[test]
    fn all_arms_pairwise_disjoint() {
        let g = lattice(3);
        let arms = g.arm_regions();
        assert_eq!(arms.len(), 12);
        assert_eq!(g.detectors.detector_count(&g), 12);
        for (i, a) in arms.iter().enumerate() {
            for b in &arms[i + 1..] {
                assert!(!a.3.overlaps(&b.3), "{a:?} overlaps {b:?}");
            }
        }
    }

    #[test]
    fn arms_tile_band_minus_gaps() {
        // every point of the band between two rows is either within 2w of a
        // barrier line of that row or inside exactly one arm
        let g = lattice(3);
        let arms = g.arm_regions();
        for level in 0..g.levels {
            let left = g.node_position(level, 0)[0] - g.pitch / 2.0;
            let right = g.node_position(level, level)[0] + g.pitch / 2.0;
            let y0 = g.node_position(level, 0)[1];
            for iy in 0..7 {
                let y = y0 + (iy as f64 + 0.5) / 7.0 * g.row_spacing;
                let steps = 3989;
                for ix in 0..steps {
                    let x = left + (ix as f64 + 0.5) / steps as f64 * (right - left);
                    let hits = arms
                        .iter()
                        .filter(|(l, _, _, r)| *l == level && r.contains([x, y]))
                        .count();
                    let in_gap = (0..=level)
                        .any(|j| (x - g.node_position(level, j)[0]).abs() < 2.0 * g.width);
                    if in_gap {
                        assert_eq!(hits, 0, "gap point ({x}, {y}) inside an arm");
                    } else {
                        assert_eq!(hits, 1, "({x}, {y}) covered {hits} times");
                    }
                }
            }
        }
    }

    #[test]
    fn outcome_bits() {
        assert!(Outcome::Transmitted.bit());
        assert!(!Outcome::Reflected.bit());
        assert_eq!(Outcome::from_bit(true), Outcome::Transmitted);
    }
}
