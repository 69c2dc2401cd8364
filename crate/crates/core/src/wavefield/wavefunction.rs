use num_complex::Complex64;

use super::{Grid, Point, Spectral, WavefieldError};

/// Initial Gaussian wavepacket description (per active axis).
#[derive(Debug, Clone, PartialEq)]
pub struct PacketSpec {
    pub center: Point,
    /// Mean wave vector `k0`.
    pub momentum: Point,
    pub sigma: Point,
}

impl PacketSpec {
    pub fn new_1d(center: f64, momentum: f64, sigma: f64) -> Self {
        PacketSpec {
            center: [center, 0.0],
            momentum: [momentum, 0.0],
            sigma: [sigma, 1.0],
        }
    }

    pub fn new_2d(center: Point, momentum: Point, sigma: Point) -> Self {
        PacketSpec {
            center,
            momentum,
            sigma,
        }
    }

    /// Scattering packets must carry a well-defined momentum:
    /// `|k0| * sigma >= 5` along the scattering axis.
    pub fn check_scattering(&self, axis: usize) -> Result<(), WavefieldError> {
        let product = self.momentum[axis].abs() * self.sigma[axis];
        if product < 5.0 {
            return Err(WavefieldError::InvalidPacket(format!(
                "|k0|*sigma = {product:.3} along axis {axis}; need >= 5"
            )));
        }
        Ok(())
    }
}

/// Complex amplitude field on a [`Grid`] at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavefunction {
    grid: Grid,
    amps: Vec<Complex64>,
    time: f64,
}

/// Moments of the position and momentum densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub norm: f64,
    pub position_mean: Point,
    pub position_variance: Point,
    pub momentum_mean: Point,
}

impl Wavefunction {
    pub fn from_amplitudes(
        grid: Grid,
        amps: Vec<Complex64>,
        time: f64,
    ) -> Result<Self, WavefieldError> {
        if amps.len() != grid.len() {
            return Err(WavefieldError::ShapeMismatch {
                expected: grid.len(),
                found: amps.len(),
            });
        }
        if amps.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(WavefieldError::NonFinite);
        }
        Ok(Wavefunction { grid, amps, time })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn density(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn normalize(&mut self) -> Result<f64, WavefieldError> {
        let norm = self.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(WavefieldError::NonFinite);
        }
        let s = 1.0 / norm.sqrt();
        self.amps.iter_mut().for_each(|z| *z *= s);
        Ok(norm)
    }

    pub fn is_finite(&self) -> bool {
        self.amps
            .iter()
            .all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Probability within `cells` grid cells of any boundary.
    pub fn boundary_mass(&self, cells: usize) -> f64 {
        let g = &self.grid;
        let near = |i: usize, n: usize| i < cells || i >= n.saturating_sub(cells);
        let nx = g.n(0);
        let ny = g.n(1);
        let mut mass = 0.0;
        for (idx, z) in self.amps.iter().enumerate() {
            let (ix, iy) = (idx % nx, idx / nx);
            if near(ix, nx) || (g.dims() == 2 && near(iy, ny)) {
                mass += z.norm_sqr();
            }
        }
        mass * g.cell_volume()
    }

    /// Position and momentum moments. Momentum moments are taken from the
    /// spectral density, so this needs an FFT.
    pub fn observables(&self, fft: &mut Spectral) -> Observables {
        let g = &self.grid;
        let dv = g.cell_volume();
        let mut norm = 0.0;
        let mut m1 = [0.0; 2];
        for (idx, z) in self.amps.iter().enumerate() {
            let rho = z.norm_sqr();
            let p = g.point(idx);
            norm += rho;
            m1[0] += rho * p[0];
            m1[1] += rho * p[1];
        }
        let mean = [m1[0] / norm, m1[1] / norm];
        let mut var = [0.0; 2];
        for (idx, z) in self.amps.iter().enumerate() {
            let rho = z.norm_sqr();
            let p = g.point(idx);
            var[0] += rho * (p[0] - mean[0]).powi(2);
            var[1] += rho * (p[1] - mean[1]).powi(2);
        }
        var = [var[0] / norm, var[1] / norm];

        let mut hat = self.amps.clone();
        fft.forward(&mut hat);
        let (mut total, mut k1) = (0.0, [0.0; 2]);
        for (idx, z) in hat.iter().enumerate() {
            let w = z.norm_sqr();
            total += w;
            k1[0] += w * g.wavenumber(0, idx % g.n(0));
            if g.dims() == 2 {
                k1[1] += w * g.wavenumber(1, idx / g.n(0));
            }
        }
        let mut observables = Observables {
            norm: norm * dv,
            position_mean: mean,
            position_variance: var,
            momentum_mean: [k1[0] / total, k1[1] / total],
        };
        if g.dims() == 1 {
            observables.position_mean[1] = 0.0;
            observables.position_variance[1] = 0.0;
            observables.momentum_mean[1] = 0.0;
        }
        observables
    }

    /// `|psi|^2` integrated over every axis except `axis`; the result is a
    /// density on that axis' grid (it integrates to the norm with the
    /// rectangle rule).
    pub fn marginal_1d(&self, axis: usize) -> Vec<f64> {
        let g = &self.grid;
        if g.dims() == 1 {
            return self.density();
        }
        let nx = g.n(0);
        let ny = g.n(1);
        let mut out = vec![0.0; g.n(axis)];
        let other = g.spacing(1 - axis);
        for iy in 0..ny {
            for ix in 0..nx {
                let rho = self.amps[iy * nx + ix].norm_sqr() * other;
                if axis == 0 {
                    out[ix] += rho;
                } else {
                    out[iy] += rho;
                }
            }
        }
        out
    }
}

/// Normalized Gaussian packet `exp(-(x-c)^2/(4 sigma^2) + i k0 x)` per axis.
pub fn gaussian_packet(grid: &Grid, spec: &PacketSpec) -> Result<Wavefunction, WavefieldError> {
    for axis in 0..grid.dims() {
        let sigma = spec.sigma[axis];
        let dx = grid.spacing(axis);
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(WavefieldError::InvalidPacket(format!(
                "sigma {sigma} on axis {axis} must be positive"
            )));
        }
        if sigma < 4.0 * dx {
            return Err(WavefieldError::UnderResolved {
                axis,
                sigma,
                spacing: dx,
            });
        }
        let c = spec.center[axis];
        let margin = (c - grid.lower(axis)).min(grid.upper(axis) - c);
        if margin < 5.0 * sigma {
            return Err(WavefieldError::TooCloseToBoundary {
                axis,
                center: c,
                margin,
                needed: 5.0 * sigma,
            });
        }
        let kmax = spec.momentum[axis].abs() + 3.0 / sigma;
        if kmax >= grid.nyquist(axis) {
            return Err(WavefieldError::InvalidPacket(format!(
                "momentum {} on axis {axis} exceeds grid bandwidth {}",
                spec.momentum[axis],
                grid.nyquist(axis)
            )));
        }
    }
    let factor = |axis: usize, x: f64| -> Complex64 {
        let d = x - spec.center[axis];
        let s = spec.sigma[axis];
        Complex64::from_polar((-d * d / (4.0 * s * s)).exp(), spec.momentum[axis] * x)
    };
    let xs: Vec<Complex64> = (0..grid.n(0))
        .map(|i| factor(0, grid.coord(0, i)))
        .collect();
    let amps: Vec<Complex64> = if grid.dims() == 1 {
        xs
    } else {
        let ys: Vec<Complex64> = (0..grid.n(1))
            .map(|i| factor(1, grid.coord(1, i)))
            .collect();
        ys.iter()
            .flat_map(|fy| xs.iter().map(move |fx| fx * fy))
            .collect()
    };
    let mut psi = Wavefunction::from_amplitudes(grid.clone(), amps, 0.0)?;
    psi.normalize()?;
    Ok(psi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> Grid {
        Grid::new_1d(1024, 40.96).unwrap()
    }

    #[test]
    fn packet_is_normalized_and_centered() {
        let g = grid1();
        let psi = gaussian_packet(&g, &PacketSpec::new_1d(0.0, 10.0, 1.0)).unwrap();
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let obs = psi.observables(&mut Spectral::new(&g));
        assert!(obs.position_mean[0].abs() < 1e-8);
        assert!((obs.position_variance[0] - 1.0).abs() < 0.01);
    }

    #[test]
    fn momentum_mean_matches_spectral_moment() {
        // oracle: first moment of |FFT|^2 computed independently by direct DFT
        let g = Grid::new_1d(256, 25.6).unwrap();
        let psi = gaussian_packet(&g, &PacketSpec::new_1d(0.0, 10.0, 1.0)).unwrap();
        let n = g.n(0);
        let (mut total, mut first) = (0.0, 0.0);
        for m in 0..n {
            let k = g.wavenumber(0, m);
            let mut acc = Complex64::new(0.0, 0.0);
            for (j, z) in psi.amplitudes().iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (m * j) as f64 / n as f64;
                acc += z * Complex64::from_polar(1.0, ang);
            }
            total += acc.norm_sqr();
            first += k * acc.norm_sqr();
        }
        let direct = first / total;
        assert!((direct - 10.0).abs() < 1e-6, "direct DFT moment {direct}");
        let obs = psi.observables(&mut Spectral::new(&g));
        assert!((obs.momentum_mean[0] - 10.0).abs() < 1e-6);
    }

    #[test]
    fn rest_packet_has_zero_momentum() {
        let g = grid1();
        let psi = gaussian_packet(&g, &PacketSpec::new_1d(1.3, 0.0, 1.0)).unwrap();
        let obs = psi.observables(&mut Spectral::new(&g));
        assert!(obs.momentum_mean[0].abs() < 1e-8);
    }

    #[test]
    fn packet_errors() {
        let g = grid1();
        let near_edge = gaussian_packet(&g, &PacketSpec::new_1d(18.0, 10.0, 1.0));
        assert!(matches!(
            near_edge,
            Err(WavefieldError::TooCloseToBoundary { .. })
        ));
        let thin = gaussian_packet(&g, &PacketSpec::new_1d(0.0, 0.0, 0.1));
        assert!(matches!(thin, Err(WavefieldError::UnderResolved { .. })));
        assert!(PacketSpec::new_1d(0.0, 4.0, 1.0)
            .check_scattering(0)
            .is_err());
        assert!(PacketSpec::new_1d(0.0, 10.0, 1.0)
            .check_scattering(0)
            .is_ok());
    }

    #[test]
    fn separable_marginal_matches_1d_density() {
        let g2 = Grid::new_2d([128, 64], [25.6, 12.8]).unwrap();
        let spec = PacketSpec::new_2d([0.5, -1.0], [3.0, 1.0], [1.0, 0.8]);
        let psi2 = gaussian_packet(&g2, &spec).unwrap();
        let g1 = Grid::new_1d(128, 25.6).unwrap();
        let psi1 = gaussian_packet(&g1, &PacketSpec::new_1d(0.5, 3.0, 1.0)).unwrap();
        let marg = psi2.marginal_1d(0);
        let dens = psi1.density();
        let dev = marg
            .iter()
            .zip(&dens)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-10, "max deviation {dev}");
        let integral: f64 = psi2.marginal_1d(1).iter().sum::<f64>() * g2.spacing(1);
        assert!((integral - 1.0).abs() < 1e-10);
    }
}
