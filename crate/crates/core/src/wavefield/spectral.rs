use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::Grid;

/// Forward/inverse FFT over a 1D or 2D [`Grid`].
///
/// The inverse transform is normalized, so `inverse(forward(a)) == a`.
/// Rows are transformed in parallel; the 2D column pass goes through a
/// transpose buffer.
pub struct Spectral {
    grid: Grid,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
    transpose: Vec<Complex64>,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral")
            .field("grid", &self.grid)
            .finish()
    }
}

impl Spectral {
    pub fn new(grid: &Grid) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = [
            planner.plan_fft_forward(grid.n(0)),
            planner.plan_fft_forward(grid.n(1)),
        ];
        let inv = [
            planner.plan_fft_inverse(grid.n(0)),
            planner.plan_fft_inverse(grid.n(1)),
        ];
        let transpose = if grid.dims() == 2 {
            vec![Complex64::new(0.0, 0.0); grid.len()]
        } else {
            Vec::new()
        };
        Spectral {
            grid: grid.clone(),
            fwd,
            inv,
            transpose,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        let plans = self.fwd.clone();
        self.transform(data, &plans);
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let plans = self.inv.clone();
        self.transform(data, &plans);
        let scale = 1.0 / self.grid.len() as f64;
        data.par_iter_mut().for_each(|z| *z *= scale);
    }

    fn transform(&mut self, data: &mut [Complex64], plans: &[Arc<dyn Fft<f64>>; 2]) {
        assert_eq!(data.len(), self.grid.len(), "buffer does not match grid");
        let nx = self.grid.n(0);
        run_rows(data, nx, &plans[0]);
        if self.grid.dims() == 2 {
            let ny = self.grid.n(1);
            transpose(data, &mut self.transpose, nx, ny);
            run_rows(&mut self.transpose, ny, &plans[1]);
            transpose(&self.transpose, data, ny, nx);
        }
    }
}

fn run_rows(data: &mut [Complex64], row: usize, plan: &Arc<dyn Fft<f64>>) {
    let scratch_len = plan.get_inplace_scratch_len();
    data.par_chunks_mut(row).for_each_init(
        || vec![Complex64::new(0.0, 0.0); scratch_len],
        |scratch, chunk| plan.process_with_scratch(chunk, scratch),
    );
}

/// `dst[c][r] = src[r][c]` for a `rows x cols` row-major source.
fn transpose(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    const BLOCK: usize = 32;
    dst.par_chunks_mut(rows * BLOCK)
        .enumerate()
        .for_each(|(cb, out)| {
            let c0 = cb * BLOCK;
            let c1 = (c0 + BLOCK).min(cols);
            for r0 in (0..rows).step_by(BLOCK) {
                let r1 = (r0 + BLOCK).min(rows);
                for c in c0..c1 {
                    let line = &mut out[(c - c0) * rows..(c - c0 + 1) * rows];
                    for r in r0..r1 {
                        line[r] = src[r * cols + c];
                    }
                }
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal(len: usize) -> Vec<Complex64> {
        (0..len)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect()
    }

    #[test]
    fn round_trip_1d_and_2d() {
        for grid in [
            Grid::new_1d(256, 10.0).unwrap(),
            Grid::new_2d([64, 128], [3.0, 5.0]).unwrap(),
        ] {
            let mut fft = Spectral::new(&grid);
            let orig = signal(grid.len());
            let mut data = orig.clone();
            fft.forward(&mut data);
            fft.inverse(&mut data);
            let err = data
                .iter()
                .zip(&orig)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(err < 1e-12, "round trip error {err}");
        }
    }

    #[test]
    fn plane_wave_lands_in_one_bin() {
        let grid = Grid::new_2d([64, 64], [6.4, 6.4]).unwrap();
        let mut fft = Spectral::new(&grid);
        let (kx, ky) = (grid.wavenumber(0, 3), grid.wavenumber(1, 61));
        let mut data: Vec<Complex64> = (0..grid.len())
            .map(|i| {
                let p = grid.point(i);
                Complex64::from_polar(1.0, kx * p[0] + ky * p[1])
            })
            .collect();
        fft.forward(&mut data);
        let peak = grid.index(3, 61);
        for (i, z) in data.iter().enumerate() {
            if i == peak {
                assert!((z.norm() - grid.len() as f64).abs() < 1e-8);
            } else {
                assert!(z.norm() < 1e-8);
            }
        }
    }
}
