//! Iterated 1D engine for the measured pinball.
//!
//! After a collapse the surviving packet meets exactly one barrier at the next
//! level, and only the coordinate perpendicular to that barrier matters. Each
//! level is therefore the same 1D problem: launch the effective packet toward
//! a barrier at `x = 0`, wait for the lobes to separate, detect, collapse and
//! re-center. All coordinates here are in the canonical frame where the
//! incident packet moves toward `+x`.
//!
//! Particles that share a record prefix share the field, so an ensemble is
//! simulated as a tree of branches; a single run is an ensemble of one.

use num_complex::Complex64;

use super::{
    collapse_to, separation_overlap, DetectorRecord, MeasurementError, LEAK_TOLERANCE, OUTPUT_EVERY,
};
use crate::bohm::{
    position_at_quantile, quantile_ahead, GuidanceStats, Lockstep, ScatterEvent, Trajectory,
};
use crate::geometry::{barrier_potential, Barrier, Outcome, Region};
use crate::wavefield::{
    free_flight, gaussian_packet, gradient_from_spectrum, Grid, PacketSpec, Spectral, SplitStep,
    Wavefunction,
};

#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredSetup {
    /// 1D grid for the perpendicular coordinate.
    pub grid: Grid,
    pub momentum: f64,
    pub sigma: f64,
    /// Barrier height and width; the barrier sits at `x = 0`.
    pub height: f64,
    pub width: f64,
    pub dt: f64,
    pub levels: usize,
    pub eps_sep: f64,
    /// Launch distance in units of `sigma`.
    pub launch_sigmas: f64,
    /// Lateral pitch used to place trajectories in the lattice frame.
    pub pitch: f64,
    pub record_trajectories: bool,
}

impl MeasuredSetup {
    pub fn new(grid: Grid, momentum: f64, sigma: f64, height: f64, width: f64) -> Self {
        MeasuredSetup {
            grid,
            momentum,
            sigma,
            height,
            width,
            dt: 1e-3,
            levels: 4,
            eps_sep: super::DEFAULT_EPS_SEP,
            launch_sigmas: 8.0,
            pitch: 16.0,
            record_trajectories: true,
        }
    }

    pub fn launch_point(&self) -> f64 {
        -self.launch_sigmas * self.sigma
    }

    pub fn initial_packet(&self) -> PacketSpec {
        PacketSpec::new_1d(self.launch_point(), self.momentum, self.sigma)
    }

    pub fn vmax(&self) -> f64 {
        10.0 * self.momentum.abs()
    }

    fn validate(&self) -> Result<(), MeasurementError> {
        if self.grid.dims() != 1 {
            return Err(MeasurementError::InvalidSetup(
                "measured mode runs on a 1D grid".into(),
            ));
        }
        if self.levels == 0 || self.levels > 16 {
            return Err(MeasurementError::InvalidSetup(format!(
                "levels = {} must be in 1..=16",
                self.levels
            )));
        }
        if !(self.eps_sep > 0.0 && self.eps_sep < 1.0) {
            return Err(MeasurementError::InvalidSetup(format!(
                "eps_sep = {} must be in (0, 1)",
                self.eps_sep
            )));
        }
        if self.dt.is_nan() || self.dt <= 0.0 {
            return Err(MeasurementError::InvalidSetup("dt must be > 0".into()));
        }
        self.initial_packet().check_scattering(0)?;
        Ok(())
    }

    fn regions(&self) -> (Region, Region) {
        let gap = 2.0 * self.width;
        (
            Region::interval(f64::NEG_INFINITY, -gap),
            Region::interval(gap, f64::INFINITY),
        )
    }
}

/// Transformation applied to a collapsed packet before the next level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recentering {
    /// Momentum kick that restores the mean momentum to `+k0`.
    pub boost: f64,
    /// Free evolution time that brings the packet back to its waist (<= 0
    /// for a spreading packet).
    pub rewind: f64,
    /// Translation that puts the mean position on the launch point.
    pub shift: f64,
}

/// Half-width of the momentum window kept after a collapse, in units of the
/// lobe's momentum spread.
pub const MOMENTUM_WINDOW: f64 = 8.0;

/// Zero the spectrum of `psi` outside `|k - <k>| <= MOMENTUM_WINDOW * sd(k)`
/// and renormalize. A collapse leaves the tail of the other lobe and the
/// broadband spectrum of the mask edge inside the kept region; content far
/// from the lobe's momentum crosses every later barrier almost freely and is
/// doubled by each renormalization.
pub fn trim_spectrum(psi: &mut Wavefunction, fft: &mut Spectral) -> Result<(), MeasurementError> {
    let grid = psi.grid().clone();
    let mut hat = psi.amplitudes().to_vec();
    fft.forward(&mut hat);
    let (mut n, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (i, z) in hat.iter().enumerate() {
        let (w, k) = (z.norm_sqr(), grid.wavenumber(0, i));
        n += w;
        m1 += w * k;
        m2 += w * k * k;
    }
    let mean = m1 / n;
    let half = MOMENTUM_WINDOW * (m2 / n - mean * mean).max(0.0).sqrt();
    for (i, z) in hat.iter_mut().enumerate() {
        if (grid.wavenumber(0, i) - mean).abs() > half {
            *z = Default::default();
        }
    }
    fft.inverse(&mut hat);
    psi.amplitudes_mut().copy_from_slice(&hat);
    psi.normalize()?;
    Ok(())
}

/// Boost `psi` to mean momentum `momentum`, rewind it freely to its waist and
/// translate its mean to `target`. Quantiles are preserved: the boost leaves
/// `|ψ|²` unchanged and 1D free flight never reorders trajectories.
pub fn recenter(
    psi: &mut Wavefunction,
    fft: &mut Spectral,
    momentum: f64,
    target: f64,
) -> Recentering {
    let grid = psi.grid().clone();
    let obs = psi.observables(fft);
    let boost = momentum - obs.momentum_mean[0];
    for (i, z) in psi.amplitudes_mut().iter_mut().enumerate() {
        *z *= Complex64::from_polar(1.0, boost * grid.coord(0, i));
    }

    let mut hat = psi.amplitudes().to_vec();
    fft.forward(&mut hat);
    let grad = gradient_from_spectrum(fft, &hat).remove(0);
    let dx = grid.spacing(0);
    let (mut norm, mut xm, mut p2, mut pm) = (0.0, 0.0, 0.0, 0.0);
    for (i, (z, g)) in psi.amplitudes().iter().zip(&grad).enumerate() {
        let rho = z.norm_sqr();
        let x = grid.coord(0, i);
        norm += rho * dx;
        xm += rho * x * dx;
        p2 += g.norm_sqr() * dx;
        pm += (z.conj() * g).im * dx;
    }
    xm /= norm;
    pm /= norm;
    let var_p = p2 / norm - pm * pm;
    let mut cov = 0.0;
    for (i, (z, g)) in psi.amplitudes().iter().zip(&grad).enumerate() {
        let j = (z.conj() * g).im;
        cov += (grid.coord(0, i) - xm) * (j - pm * z.norm_sqr()) * dx;
    }
    cov /= norm;
    let rewind = if var_p > 0.0 { -cov / var_p } else { 0.0 };
    let shift = target - (xm + pm * rewind);
    free_flight(fft, psi, rewind, [shift, 0.0]);
    Recentering {
        boost,
        rewind,
        shift,
    }
}

/// Outcome of one particle through the measured pinball.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredParticle {
    pub id: usize,
    /// Internal coordinate read off the simulated initial condition.
    pub q0: f64,
    pub record: DetectorRecord,
    /// Probability of the branch the particle ended in.
    pub weight: f64,
    pub events: Vec<ScatterEvent>,
    pub trajectory: Trajectory,
}

impl MeasuredParticle {
    /// Internal coordinate at the start of every level.
    pub fn quantiles(&self) -> Vec<f64> {
        self.events.iter().map(|e| e.q_before).collect()
    }

    pub fn final_node(&self) -> usize {
        self.record.final_node()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasuredRun {
    pub particles: Vec<MeasuredParticle>,
    /// Number of (branch, level) field evolutions performed.
    pub branch_levels: usize,
    pub max_norm_drift: f64,
    pub max_boundary_mass: f64,
    /// Largest gap mass dropped at a detection.
    pub max_residual: f64,
    pub guidance: GuidanceStats,
}

struct PendingBranch {
    level: usize,
    psi: Wavefunction,
    members: Vec<usize>,
    record: DetectorRecord,
    weight: f64,
    clock: f64,
}

struct ParticleState {
    q: f64,
    events: Vec<ScatterEvent>,
    trajectory: Trajectory,
    record: DetectorRecord,
    weight: f64,
}

pub fn run_measured_pinball(
    setup: &MeasuredSetup,
    q0: f64,
) -> Result<MeasuredParticle, MeasurementError> {
    let mut run = run_measured_ensemble(setup, &[q0])?;
    Ok(run.particles.remove(0))
}

/// Run every `q0` through the measured pinball, sharing field evolution
/// between particles with a common record prefix.
pub fn run_measured_ensemble(
    setup: &MeasuredSetup,
    q0s: &[f64],
) -> Result<MeasuredRun, MeasurementError> {
    setup.validate()?;
    for &q in q0s {
        if !(0.0..=1.0).contains(&q) {
            return Err(MeasurementError::InvalidSetup(format!(
                "q0 = {q} outside [0, 1]"
            )));
        }
    }
    let grid = &setup.grid;
    let barrier = Barrier::new_1d(0.0, setup.height, setup.width);
    let potential = barrier_potential(std::slice::from_ref(&barrier), grid)?;
    let psi0 = gaussian_packet(grid, &setup.initial_packet())?;
    let mut fft = Spectral::new(grid);
    let mut lockstep = Lockstep::new(SplitStep::new(grid, &potential, setup.dt)?, setup.vmax());

    let mut states: Vec<ParticleState> = q0s
        .iter()
        .enumerate()
        .map(|(id, &q)| ParticleState {
            q,
            events: Vec::new(),
            trajectory: Trajectory::new(id),
            record: DetectorRecord::new(),
            weight: 1.0,
        })
        .collect();
    let mut run = MeasuredRun {
        particles: Vec::new(),
        branch_levels: 0,
        max_norm_drift: 0.0,
        max_boundary_mass: 0.0,
        max_residual: 0.0,
        guidance: GuidanceStats::default(),
    };
    // the oracle comparison needs the coordinate of the simulated initial
    // condition, not the requested one
    let m0 = psi0.marginal_1d(0);
    for s in states.iter_mut() {
        let x = position_at_quantile(&m0, grid.lower(0), grid.spacing(0), s.q);
        s.q = quantile_ahead(&m0, grid.lower(0), grid.spacing(0), x);
    }

    let mut stack = vec![PendingBranch {
        level: 0,
        psi: psi0,
        members: (0..q0s.len()).collect(),
        record: DetectorRecord::new(),
        weight: 1.0,
        clock: 0.0,
    }];
    let (region_r, region_t) = setup.regions();
    let arrival = setup.launch_sigmas * setup.sigma / setup.momentum;
    let max_time = 20.0 * arrival;

    while let Some(node) = stack.pop() {
        if node.level == setup.levels || node.members.is_empty() {
            for &m in &node.members {
                states[m].record = node.record.clone();
                states[m].weight = node.weight;
            }
            continue;
        }
        run.branch_levels += 1;
        let mut psi = node.psi;
        psi.set_time(0.0);
        let marginal = psi.marginal_1d(0);
        let mut positions: Vec<[f64; 2]> = node
            .members
            .iter()
            .map(|&m| {
                let x =
                    position_at_quantile(&marginal, grid.lower(0), grid.spacing(0), states[m].q);
                [x, 0.0]
            })
            .collect();
        let lattice_x = (node.record.final_node() as f64 - node.level as f64 / 2.0) * setup.pitch;
        let record_sample = |states: &mut Vec<ParticleState>, t: f64, pos: &[[f64; 2]]| {
            if setup.record_trajectories {
                for (k, &m) in node.members.iter().enumerate() {
                    states[m]
                        .trajectory
                        .push(node.clock + t, [lattice_x + pos[k][0], f64::NAN]);
                }
            }
        };
        record_sample(&mut states, 0.0, &positions);
        lockstep.invalidate();
        let detected_at = loop {
            for _ in 0..OUTPUT_EVERY / 2 {
                lockstep.advance(&mut psi, &mut positions)?;
            }
            let t = psi.time();
            record_sample(&mut states, t, &positions);
            run.max_norm_drift = run.max_norm_drift.max((psi.norm() - 1.0).abs());
            let leak = psi.boundary_mass(5);
            run.max_boundary_mass = run.max_boundary_mass.max(leak);
            if leak > LEAK_TOLERANCE {
                return Err(MeasurementError::BoundaryLeak {
                    mass: leak,
                    time: t,
                });
            }
            if t >= arrival {
                let o = separation_overlap(&psi, &region_r, &region_t);
                let placed = positions
                    .iter()
                    .all(|p| region_r.contains(*p) || region_t.contains(*p));
                if o.residual < setup.eps_sep && placed {
                    run.max_residual = run.max_residual.max(o.residual);
                    break t;
                }
            }
            if t > max_time {
                return Err(MeasurementError::NoDetection {
                    level: node.level,
                    time: t,
                });
            }
        };

        for outcome in [Outcome::Reflected, Outcome::Transmitted] {
            let region = if outcome == Outcome::Transmitted {
                &region_t
            } else {
                &region_r
            };
            let members: Vec<(usize, f64)> = node
                .members
                .iter()
                .zip(&positions)
                .filter(|(_, p)| region.contains(**p))
                .map(|(&m, p)| (m, p[0]))
                .collect();
            if members.is_empty() {
                continue;
            }
            let mut kept = psi.clone();
            let mass = collapse_to(&mut kept, region)?;
            trim_spectrum(&mut kept, &mut fft)?;
            let km = kept.marginal_1d(0);
            for &(m, x) in &members {
                let q_after = quantile_ahead(&km, grid.lower(0), grid.spacing(0), x);
                let s = &mut states[m];
                s.events.push(ScatterEvent {
                    level: node.level,
                    q_before: s.q,
                    outcome,
                    q_after,
                });
                s.q = q_after;
            }
            recenter(&mut kept, &mut fft, setup.momentum, setup.launch_point());
            let mut record = node.record.clone();
            record.push(outcome);
            stack.push(PendingBranch {
                level: node.level + 1,
                psi: kept,
                members: members.iter().map(|m| m.0).collect(),
                record,
                weight: node.weight * mass,
                clock: node.clock + detected_at,
            });
        }
    }
    run.guidance = lockstep.stats();
    run.particles = states
        .into_iter()
        .enumerate()
        .map(|(id, s)| MeasuredParticle {
            id,
            q0: s.events.first().map_or(s.q, |e| e.q_before),
            record: s.record,
            weight: s.weight,
            events: s.events,
            trajectory: s.trajectory,
        })
        .collect();
    Ok(run)
}
