//! Unitary scattering of a particle ensemble off one barrier (1D).

use super::{MeasurementError, LEAK_TOLERANCE, OUTPUT_EVERY};
use crate::bohm::{quantile_ahead, GuidanceStats, Lockstep, Trajectory};
use crate::geometry::{barrier_potential, Barrier, Outcome};
use crate::wavefield::{gaussian_packet, Grid, PacketSpec, Point, SplitStep, Wavefunction};

#[derive(Debug, Clone, PartialEq)]
pub struct SingleBarrierSetup {
    pub grid: Grid,
    pub packet: PacketSpec,
    pub barrier: Barrier,
    pub dt: f64,
    pub duration: f64,
}

impl SingleBarrierSetup {
    /// Duration long enough for the lobes of a packet launched `d` before the
    /// barrier to clear it by about `d`.
    pub fn new(grid: Grid, packet: PacketSpec, barrier: Barrier, dt: f64) -> Self {
        let d = barrier.center[0] - packet.center[0];
        let duration = 2.0 * d / packet.momentum[0].abs();
        SingleBarrierSetup {
            grid,
            packet,
            barrier,
            dt,
            duration,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SingleBarrierRun {
    pub trajectories: Vec<Trajectory>,
    /// Internal coordinate of each particle at `t = 0`.
    pub q0: Vec<f64>,
    /// Mass beyond / before the barrier center at the end.
    pub transmission: f64,
    pub reflection: f64,
    pub max_norm_drift: f64,
    pub max_boundary_mass: f64,
    pub guidance: GuidanceStats,
    pub final_psi: Wavefunction,
}

impl SingleBarrierRun {
    pub fn final_positions(&self) -> Vec<f64> {
        self.trajectories
            .iter()
            .map(|t| t.last().map_or(f64::NAN, |p| p[0]))
            .collect()
    }

    /// Side of the barrier each particle ends on.
    pub fn outcomes(&self, barrier_x: f64) -> Vec<Outcome> {
        self.final_positions()
            .into_iter()
            .map(|x| {
                if x > barrier_x {
                    Outcome::Transmitted
                } else {
                    Outcome::Reflected
                }
            })
            .collect()
    }

    /// Final internal coordinate of each particle, measured within the lobe
    /// it ends in.
    pub fn lobe_quantiles(&self, barrier_x: f64) -> Vec<f64> {
        let grid = self.final_psi.grid();
        let (x0, dx) = (grid.lower(0), grid.spacing(0));
        let marginal = self.final_psi.marginal_1d(0);
        let side = |keep_right: bool| -> Vec<f64> {
            marginal
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    if (grid.coord(0, i) > barrier_x) == keep_right {
                        m
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let (right, left) = (side(true), side(false));
        self.final_positions()
            .into_iter()
            .map(|x| {
                let m = if x > barrier_x { &right } else { &left };
                quantile_ahead(m, x0, dx, x)
            })
            .collect()
    }

    /// Particles that end on the wrong side for their starting coordinate
    /// (`q0 < 1/2` transmits, `q0 > 1/2` reflects), ignoring those within
    /// `band` of one half.
    pub fn half_rule_violations(&self, barrier_x: f64, band: f64) -> usize {
        self.q0
            .iter()
            .zip(self.outcomes(barrier_x))
            .filter(|(&q, o)| {
                (q < 0.5 - band && *o != Outcome::Transmitted)
                    || (q > 0.5 + band && *o != Outcome::Reflected)
            })
            .count()
    }

    /// Largest order reversal between particles adjacent in their initial
    /// order, over every recorded sample, in grid cells. Zero when order is
    /// preserved.
    pub fn max_reordering_cells(&self) -> f64 {
        let dx = self.final_psi.grid().spacing(0);
        let mut order: Vec<usize> = (0..self.trajectories.len()).collect();
        let start = |i: usize| self.trajectories[i].samples[0].1[0];
        order.sort_by(|&a, &b| start(a).total_cmp(&start(b)));
        let samples = self.trajectories.first().map_or(0, |t| t.samples.len());
        let mut worst = 0.0f64;
        for k in 0..samples {
            for w in order.windows(2) {
                let a = self.trajectories[w[0]].samples[k].1[0];
                let b = self.trajectories[w[1]].samples[k].1[0];
                worst = worst.max((a - b) / dx);
            }
        }
        worst
    }
}

pub fn run_single_barrier(
    setup: &SingleBarrierSetup,
    particles: &[Point],
) -> Result<SingleBarrierRun, MeasurementError> {
    let grid = &setup.grid;
    if grid.dims() != 1 {
        return Err(MeasurementError::InvalidSetup(
            "single-barrier runs use a 1D grid".into(),
        ));
    }
    if !(setup.dt > 0.0 && setup.duration >= 0.0) {
        return Err(MeasurementError::InvalidSetup(
            "dt must be > 0 and duration >= 0".into(),
        ));
    }
    let potential = barrier_potential(std::slice::from_ref(&setup.barrier), grid)?;
    let mut psi = gaussian_packet(grid, &setup.packet)?;
    let vmax = 10.0 * setup.packet.momentum[0].abs().max(1.0);
    let mut lockstep = Lockstep::new(SplitStep::new(grid, &potential, setup.dt)?, vmax);

    let marginal = psi.marginal_1d(0);
    let q0 = particles
        .iter()
        .map(|p| quantile_ahead(&marginal, grid.lower(0), grid.spacing(0), p[0]))
        .collect();
    let mut positions = particles.to_vec();
    let mut trajectories: Vec<Trajectory> = (0..particles.len()).map(Trajectory::new).collect();
    let record = |traj: &mut Vec<Trajectory>, t: f64, pos: &[Point]| {
        for (tr, p) in traj.iter_mut().zip(pos) {
            tr.push(t, *p);
        }
    };
    record(&mut trajectories, 0.0, &positions);

    let blocks = (setup.duration / (OUTPUT_EVERY as f64 * setup.dt)).round() as usize;
    let (mut drift, mut leak_max) = (0.0f64, 0.0f64);
    for _ in 0..blocks {
        for _ in 0..OUTPUT_EVERY / 2 {
            lockstep.advance(&mut psi, &mut positions)?;
        }
        record(&mut trajectories, psi.time(), &positions);
        drift = drift.max((psi.norm() - 1.0).abs());
        let leak = psi.boundary_mass(5);
        leak_max = leak_max.max(leak);
        if leak > LEAK_TOLERANCE {
            return Err(MeasurementError::BoundaryLeak {
                mass: leak,
                time: psi.time(),
            });
        }
    }
    let xb = setup.barrier.center[0];
    let dx = grid.spacing(0);
    let (mut t, mut r) = (0.0, 0.0);
    for (i, z) in psi.amplitudes().iter().enumerate() {
        if grid.coord(0, i) > xb {
            t += z.norm_sqr() * dx;
        } else {
            r += z.norm_sqr() * dx;
        }
    }
    Ok(SingleBarrierRun {
        trajectories,
        q0,
        transmission: t,
        reflection: r,
        max_norm_drift: drift,
        max_boundary_mass: leak_max,
        guidance: lockstep.stats(),
        final_psi: psi,
    })
}
