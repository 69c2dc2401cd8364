use num_complex::Complex64;
use rayon::prelude::*;

use super::{Grid, Spectral, WavefieldError, Wavefunction};

/// Symmetric Strang split-operator propagator for `H = -Δ/2 + V` (ħ = m = 1).
///
/// One step applies `exp(-i k² dt/4)` in the spectral domain, `exp(-i V dt)`
/// in position space, then the kinetic half step again. Both factors are
/// pure phases, so every step is exactly unitary up to round-off.
#[derive(Debug)]
pub struct SplitStep {
    grid: Grid,
    dt: f64,
    fft: Spectral,
    kinetic_half: Vec<Complex64>,
    potential_phase: Vec<Complex64>,
    steps: usize,
}

impl SplitStep {
    /// `dt` may be negative (backward evolution) but not zero.
    pub fn new(grid: &Grid, potential: &[f64], dt: f64) -> Result<Self, WavefieldError> {
        if !(dt.is_finite() && dt != 0.0) {
            return Err(WavefieldError::InvalidStep(dt));
        }
        if potential.len() != grid.len() {
            return Err(WavefieldError::ShapeMismatch {
                expected: grid.len(),
                found: potential.len(),
            });
        }
        if potential.iter().any(|v| !v.is_finite()) {
            return Err(WavefieldError::NonFinite);
        }
        let k2 = squared_wavenumbers(grid);
        let kinetic_half = k2
            .iter()
            .map(|&k2| Complex64::from_polar(1.0, -k2 * dt / 4.0))
            .collect();
        let potential_phase = potential
            .iter()
            .map(|&v| Complex64::from_polar(1.0, -v * dt))
            .collect();
        Ok(SplitStep {
            grid: grid.clone(),
            dt,
            fft: Spectral::new(grid),
            kinetic_half,
            potential_phase,
            steps: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of steps taken so far.
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn spectral(&mut self) -> &mut Spectral {
        &mut self.fft
    }

    /// Forward transform of `psi`.
    pub fn spectrum(&mut self, psi: &Wavefunction) -> Vec<Complex64> {
        let mut hat = psi.amplitudes().to_vec();
        self.fft.forward(&mut hat);
        hat
    }

    pub fn step(&mut self, psi: &mut Wavefunction) {
        let hat = self.spectrum(psi);
        self.step_from_spectrum(psi, hat);
    }

    /// Advance `psi` by one step, reusing `hat = FFT(psi)` computed by the
    /// caller (saves one transform when the caller needed it anyway).
    pub fn step_from_spectrum(&mut self, psi: &mut Wavefunction, mut hat: Vec<Complex64>) {
        assert_eq!(psi.grid(), &self.grid, "wavefunction on a different grid");
        multiply(&mut hat, &self.kinetic_half);
        self.fft.inverse(&mut hat);
        multiply(&mut hat, &self.potential_phase);
        self.fft.forward(&mut hat);
        multiply(&mut hat, &self.kinetic_half);
        self.fft.inverse(&mut hat);
        psi.amplitudes_mut().copy_from_slice(&hat);
        psi.set_time(psi.time() + self.dt);
        self.steps += 1;
    }

    /// Spectral gradient components of the field whose transform is `hat`.
    pub fn gradient_from_spectrum(&mut self, hat: &[Complex64]) -> Vec<Vec<Complex64>> {
        gradient_from_spectrum(&mut self.fft, hat)
    }
}

pub(crate) fn multiply(data: &mut [Complex64], phase: &[Complex64]) {
    data.par_iter_mut()
        .zip(phase.par_iter())
        .for_each(|(z, p)| *z *= p);
}

fn squared_wavenumbers(grid: &Grid) -> Vec<f64> {
    let kx: Vec<f64> = (0..grid.n(0)).map(|i| grid.wavenumber(0, i)).collect();
    if grid.dims() == 1 {
        return kx.iter().map(|k| k * k).collect();
    }
    let ky: Vec<f64> = (0..grid.n(1)).map(|i| grid.wavenumber(1, i)).collect();
    ky.iter()
        .flat_map(|y| kx.iter().map(move |x| x * x + y * y))
        .collect()
}

/// `i k_axis * hat`, transformed back, for each active axis.
pub fn gradient_from_spectrum(fft: &mut Spectral, hat: &[Complex64]) -> Vec<Vec<Complex64>> {
    let grid = fft.grid().clone();
    let nx = grid.n(0);
    (0..grid.dims())
        .map(|axis| {
            let mut d: Vec<Complex64> = hat
                .par_iter()
                .enumerate()
                .map(|(idx, z)| {
                    let i = if axis == 0 { idx % nx } else { idx / nx };
                    let k = grid.wavenumber(axis, i);
                    // the Nyquist bin has no well-defined sign; drop it
                    if 2 * i == grid.n(axis) {
                        Complex64::new(0.0, 0.0)
                    } else {
                        z * Complex64::new(0.0, k)
                    }
                })
                .collect();
            fft.inverse(&mut d);
            d
        })
        .collect()
}

/// Exact free evolution for time `t` followed by a rigid translation by
/// `shift`, both applied as spectral phases. `t` may be negative.
pub fn free_flight(fft: &mut Spectral, psi: &mut Wavefunction, t: f64, shift: [f64; 2]) {
    let grid = psi.grid().clone();
    let nx = grid.n(0);
    let mut hat = psi.amplitudes().to_vec();
    fft.forward(&mut hat);
    hat.par_iter_mut().enumerate().for_each(|(idx, z)| {
        let kx = grid.wavenumber(0, idx % nx);
        let (ky, sy) = if grid.dims() == 2 {
            (grid.wavenumber(1, idx / nx), shift[1])
        } else {
            (0.0, 0.0)
        };
        let phase = -(kx * kx + ky * ky) * t / 2.0 - kx * shift[0] - ky * sy;
        *z *= Complex64::from_polar(1.0, phase);
    });
    fft.inverse(&mut hat);
    psi.amplitudes_mut().copy_from_slice(&hat);
}
