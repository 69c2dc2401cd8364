//! Single-barrier scattering and barrier-height calibration.

use std::io::Write;

use super::{barrier_potential, Barrier, GeometryError};
use crate::wavefield::{gaussian_packet, Grid, PacketSpec, SplitStep};

/// Steps between separation checks.
const CHECK_EVERY: usize = 10;

/// Transmitted / reflected mass of one packet after it has cleared a barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatteringOutcome {
    pub transmission: f64,
    pub reflection: f64,
    /// Time at which the lobes were declared separated.
    pub time: f64,
    pub steps: usize,
}

/// Scatter a 1D packet off `barrier` and measure the split.
///
/// The packet starts at `packet.center`, which must be on the `-x` side of the
/// barrier. Evolution stops once the packet has had time to reach the barrier
/// and less than `1e-7` of the mass remains within `3 sigma` of it; `T` is then
/// the mass beyond the barrier center and `R` the mass before it.
pub fn transmission_coefficient(
    grid: &Grid,
    barrier: &Barrier,
    packet: &PacketSpec,
    dt: f64,
) -> Result<ScatteringOutcome, GeometryError> {
    if grid.dims() != 1 {
        return Err(GeometryError::InvalidBarrier(
            "transmission probe runs on a 1D grid".into(),
        ));
    }
    packet.check_scattering(0)?;
    let xb = barrier.center[0];
    let distance = xb - packet.center[0];
    if !(distance > 0.0 && packet.momentum[0] > 0.0) {
        return Err(GeometryError::InvalidBarrier(
            "packet must start before the barrier moving toward it".into(),
        ));
    }
    let potential = barrier_potential(std::slice::from_ref(barrier), grid)?;
    let mut psi = gaussian_packet(grid, packet)?;
    let mut stepper = SplitStep::new(grid, &potential, dt)?;

    let arrival = distance / packet.momentum[0];
    let zone = 3.0 * packet.sigma[0];
    let dx = grid.spacing(0);
    let max_steps = ((20.0 * arrival) / dt.abs()).ceil() as usize + 1000;
    let mut steps = 0;
    while steps < max_steps {
        for _ in 0..CHECK_EVERY {
            stepper.step(&mut psi);
        }
        steps += CHECK_EVERY;
        if psi.time() < arrival {
            continue;
        }
        if psi.boundary_mass(5) > 1e-6 {
            break;
        }
        let rho = psi.density();
        let (mut near, mut ahead, mut behind) = (0.0, 0.0, 0.0);
        for (i, r) in rho.iter().enumerate() {
            let x = grid.coord(0, i);
            let m = r * dx;
            if (x - xb).abs() < zone {
                near += m;
            }
            if x > xb {
                ahead += m;
            } else {
                behind += m;
            }
        }
        if near < 1e-7 {
            return Ok(ScatteringOutcome {
                transmission: ahead,
                reflection: behind,
                time: psi.time(),
                steps,
            });
        }
    }
    Err(GeometryError::NoSeparation {
        steps,
        time: psi.time(),
    })
}

/// Inputs for [`calibrate_half_transmission`].
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOptions {
    pub grid: Grid,
    pub momentum: f64,
    pub sigma: f64,
    pub width: f64,
    pub dt: f64,
    pub target: f64,
    pub tol: f64,
    /// Height bracket; defaults to `[0, 4 E]` with `E = k0²/2`.
    pub bracket: Option<(f64, f64)>,
    pub max_iterations: usize,
}

impl CalibrationOptions {
    pub fn new(grid: Grid, momentum: f64, sigma: f64, width: f64, dt: f64) -> Self {
        CalibrationOptions {
            grid,
            momentum,
            sigma,
            width,
            dt,
            target: 0.5,
            tol: 1e-3,
            bracket: None,
            max_iterations: 60,
        }
    }

    pub fn energy(&self) -> f64 {
        0.5 * self.momentum * self.momentum
    }

    fn packet(&self) -> PacketSpec {
        PacketSpec::new_1d(-8.0 * self.sigma, self.momentum, self.sigma)
    }

    /// Probe `T` at barrier height `h`.
    pub fn probe(&self, height: f64) -> Result<ScatteringOutcome, GeometryError> {
        let barrier = Barrier::new_1d(0.0, height, self.width);
        transmission_coefficient(&self.grid, &barrier, &self.packet(), self.dt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationSample {
    pub iteration: usize,
    pub height: f64,
    pub transmission: f64,
    pub reflection: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub target: f64,
    pub tol: f64,
    pub samples: Vec<CalibrationSample>,
    /// Index into `samples` of the accepted height.
    pub selected: usize,
}

impl CalibrationReport {
    pub fn height(&self) -> f64 {
        self.samples[self.selected].height
    }

    pub fn transmission(&self) -> f64 {
        self.samples[self.selected].transmission
    }

    pub fn reflection(&self) -> f64 {
        self.samples[self.selected].reflection
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "iteration,h,transmission,reflection,selected")?;
        for (i, s) in self.samples.iter().enumerate() {
            writeln!(
                out,
                "{},{:?},{:?},{:?},{}",
                s.iteration,
                s.height,
                s.transmission,
                s.reflection,
                u8::from(i == self.selected)
            )?;
        }
        Ok(())
    }
}

/// Bisect the barrier height until `|T - target| <= tol`.
///
/// `T(h)` decreases monotonically for the Gaussian bump, so the bracket ends
/// must straddle the target.
pub fn calibrate_half_transmission(
    opts: &CalibrationOptions,
) -> Result<CalibrationReport, GeometryError> {
    let (mut lo, mut hi) = opts.bracket.unwrap_or((0.0, 4.0 * opts.energy()));
    if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && hi > lo) {
        return Err(GeometryError::InvalidBarrier(format!(
            "bad calibration bracket [{lo}, {hi}]"
        )));
    }
    let mut samples = Vec::new();
    let mut record = |iteration: usize, h: f64| -> Result<CalibrationSample, GeometryError> {
        let o = opts.probe(h)?;
        let s = CalibrationSample {
            iteration,
            height: h,
            transmission: o.transmission,
            reflection: o.reflection,
        };
        samples.push(s);
        Ok(s)
    };
    let s_lo = record(0, lo)?;
    let s_hi = record(0, hi)?;
    let err_lo = s_lo.transmission - opts.target;
    let err_hi = s_hi.transmission - opts.target;
    if err_lo.abs() <= opts.tol || err_hi.abs() <= opts.tol {
        let selected = usize::from(err_lo.abs() > err_hi.abs());
        return Ok(CalibrationReport {
            target: opts.target,
            tol: opts.tol,
            samples,
            selected,
        });
    }
    if err_lo.signum() == err_hi.signum() {
        return Err(GeometryError::NoSignChange {
            h_low: lo,
            h_high: hi,
            t_low: s_lo.transmission,
            t_high: s_hi.transmission,
            target: opts.target,
        });
    }
    let lo_above = err_lo > 0.0;
    for iteration in 1..=opts.max_iterations {
        let mid = 0.5 * (lo + hi);
        let s = record(iteration, mid)?;
        let err = s.transmission - opts.target;
        if err.abs() <= opts.tol {
            let selected = samples.len() - 1;
            return Ok(CalibrationReport {
                target: opts.target,
                tol: opts.tol,
                samples,
                selected,
            });
        }
        if (err > 0.0) == lo_above {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(GeometryError::NotConverged(opts.max_iterations))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse_grid() -> Grid {
        Grid::new_1d(1024, 40.96).unwrap()
    }

    #[test]
    fn free_packet_is_fully_transmitted() {
        let grid = coarse_grid();
        let b = Barrier::new_1d(0.0, 0.0, 0.25);
        let o = transmission_coefficient(&grid, &b, &PacketSpec::new_1d(-8.0, 10.0, 1.0), 2e-3)
            .unwrap();
        assert!(o.transmission > 1.0 - 1e-7);
        assert!(o.reflection < 1e-7);
    }

    #[test]
    fn tall_barrier_reflects() {
        let grid = coarse_grid();
        let b = Barrier::new_1d(0.0, 400.0, 0.25);
        let o = transmission_coefficient(&grid, &b, &PacketSpec::new_1d(-8.0, 10.0, 1.0), 2e-3)
            .unwrap();
        assert!(o.transmission < 1e-3, "{o:?}");
        assert!((o.transmission + o.reflection - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_packet_behind_barrier() {
        let grid = coarse_grid();
        let b = Barrier::new_1d(0.0, 10.0, 0.25);
        let err = transmission_coefficient(&grid, &b, &PacketSpec::new_1d(8.0, 10.0, 1.0), 1e-3);
        assert!(err.is_err());
    }

    #[test]
    fn bracket_without_crossing_is_reported() {
        let mut opts = CalibrationOptions::new(coarse_grid(), 10.0, 1.0, 0.25, 2e-3);
        opts.bracket = Some((0.0, 5.0));
        assert!(matches!(
            calibrate_half_transmission(&opts),
            Err(GeometryError::NoSignChange { .. })
        ));
    }

    #[test]
    fn report_csv_marks_selection() {
        let report = CalibrationReport {
            target: 0.5,
            tol: 1e-3,
            samples: vec![
                CalibrationSample {
                    iteration: 0,
                    height: 0.0,
                    transmission: 1.0,
                    reflection: 0.0,
                },
                CalibrationSample {
                    iteration: 1,
                    height: 50.5,
                    transmission: 0.5004,
                    reflection: 0.4996,
                },
            ],
            selected: 1,
        };
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "iteration,h,transmission,reflection,selected");
        assert!(lines[2].ends_with(",1"));
        assert!(lines[1].ends_with(",0"));
        assert_eq!(report.height(), 50.5);
    }
}
