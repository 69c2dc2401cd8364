use std::f64::consts::PI;

use super::WavefieldError;

/// A position in one or two dimensions. One-dimensional grids ignore the
/// second component.
pub type Point = [f64; 2];

/// Uniform periodic grid in 1D or 2D.
///
/// Axis 0 is `x`, axis 1 is `y`. Storage is row-major with `x` fastest, so
/// the flat index of `(ix, iy)` is `iy * nx + ix`. Coordinates run from
/// `-length/2` to `length/2 - spacing` on every axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: usize,
    n: [usize; 2],
    length: [f64; 2],
}

pub const MIN_POINTS: usize = 64;

impl Grid {
    pub fn new_1d(n: usize, length: f64) -> Result<Self, WavefieldError> {
        check_axis(n, length)?;
        Ok(Grid {
            dims: 1,
            n: [n, 1],
            length: [length, 1.0],
        })
    }

    pub fn new_2d(n: [usize; 2], length: [f64; 2]) -> Result<Self, WavefieldError> {
        check_axis(n[0], length[0])?;
        check_axis(n[1], length[1])?;
        Ok(Grid { dims: 2, n, length })
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.length[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.length[axis] / self.n[axis] as f64
    }

    /// Total number of grid points.
    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element (`dx` in 1D, `dx*dy` in 2D).
    pub fn cell_volume(&self) -> f64 {
        (0..self.dims).map(|a| self.spacing(a)).product()
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        -0.5 * self.length[axis] + i as f64 * self.spacing(axis)
    }

    pub fn lower(&self, axis: usize) -> f64 {
        -0.5 * self.length[axis]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        0.5 * self.length[axis]
    }

    /// Angular wavenumber of FFT bin `i` along `axis` (standard FFT ordering).
    pub fn wavenumber(&self, axis: usize, i: usize) -> f64 {
        let n = self.n[axis];
        let m = if i < n / 2 {
            i as isize
        } else {
            i as isize - n as isize
        };
        2.0 * PI * m as f64 / self.length[axis]
    }

    /// Largest representable wavenumber along `axis`.
    pub fn nyquist(&self, axis: usize) -> f64 {
        PI / self.spacing(axis)
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.n[0] + ix
    }

    /// Position of flat index `idx`.
    pub fn point(&self, idx: usize) -> Point {
        let ix = idx % self.n[0];
        let iy = idx / self.n[0];
        if self.dims == 1 {
            [self.coord(0, ix), 0.0]
        } else {
            [self.coord(0, ix), self.coord(1, iy)]
        }
    }

    /// Whether `p` lies inside the fundamental cell on every active axis.
    pub fn contains(&self, p: Point) -> bool {
        (0..self.dims).all(|a| p[a] >= self.lower(a) && p[a] < self.upper(a))
    }

    /// Distance from `p` to the nearest boundary over the active axes.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        (0..self.dims)
            .map(|a| (p[a] - self.lower(a)).min(self.upper(a) - p[a]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn check_axis(n: usize, length: f64) -> Result<(), WavefieldError> {
    if n < MIN_POINTS || !n.is_power_of_two() {
        return Err(WavefieldError::InvalidGrid(format!(
            "{n} points per axis; need a power of two >= {MIN_POINTS}"
        )));
    }
    if !(length.is_finite() && length > 0.0) {
        return Err(WavefieldError::InvalidGrid(format!(
            "axis length {length} must be positive and finite"
        )));
    }
    Ok(())
}
