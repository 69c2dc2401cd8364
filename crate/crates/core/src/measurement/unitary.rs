//! Full 2D evolution of the un-collapsed field through the lattice.

use super::{MeasurementError, LEAK_TOLERANCE, OUTPUT_EVERY};
use crate::bohm::{quantile_ahead, GuidanceStats, Lockstep, Trajectory};
use crate::geometry::{build_potential, Outcome, PinballGeometry};
use crate::wavefield::{gaussian_packet, Grid, PacketSpec, Point, SplitStep, Wavefunction};

#[derive(Debug, Clone, PartialEq)]
pub struct UnitarySetup {
    pub grid: Grid,
    pub geometry: PinballGeometry,
    pub packet: PacketSpec,
    pub dt: f64,
    pub duration: f64,
}

impl UnitarySetup {
    /// Duration that carries the packet center from its start past the last
    /// row by `tail` along the progress axis.
    pub fn duration_past_last_row(packet: &PacketSpec, geom: &PinballGeometry, tail: f64) -> f64 {
        let last = geom.apex[1] + geom.levels.saturating_sub(1) as f64 * geom.row_spacing;
        (last + tail - packet.center[1]) / packet.momentum[1]
    }
}

/// Arm a particle occupied half-way between row `level` and the next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmVisit {
    pub level: usize,
    pub node: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone)]
pub struct UnitaryRun {
    pub trajectories: Vec<Trajectory>,
    /// Per particle: `(level, q)` with `q` the lateral quantile (mass on the
    /// `+x` side) when the particle first reaches row `level`.
    pub level_quantiles: Vec<Vec<(usize, f64)>>,
    /// Per particle and level: the arm visited, `None` if it sat in a gap.
    pub arms: Vec<Vec<Option<ArmVisit>>>,
    pub max_norm_drift: f64,
    pub max_boundary_mass: f64,
    pub guidance: GuidanceStats,
    pub steps: usize,
    pub final_psi: Wavefunction,
}

impl UnitaryRun {
    /// Bit string of the arms visited (`1` = `+x` side), `None` where the
    /// particle was in a gap.
    pub fn bits(&self, particle: usize) -> Vec<Option<bool>> {
        self.arms[particle]
            .iter()
            .map(|a| a.map(|v| v.outcome.bit()))
            .collect()
    }
}

pub fn run_unitary_pinball(
    setup: &UnitarySetup,
    particles: &[Point],
) -> Result<UnitaryRun, MeasurementError> {
    let grid = &setup.grid;
    let geom = &setup.geometry;
    if grid.dims() != 2 {
        return Err(MeasurementError::InvalidSetup(
            "unitary pinball needs a 2D grid".into(),
        ));
    }
    if geom.levels > 3 {
        return Err(MeasurementError::InvalidSetup(format!(
            "unitary mode supports at most 3 levels, got {}",
            geom.levels
        )));
    }
    if !(setup.dt > 0.0 && setup.duration >= 0.0) {
        return Err(MeasurementError::InvalidSetup(
            "dt must be > 0 and duration >= 0".into(),
        ));
    }
    let potential = build_potential(geom, grid)?;
    let mut psi = gaussian_packet(grid, &setup.packet)?;
    let k = setup.packet.momentum[0].hypot(setup.packet.momentum[1]);
    let mut lockstep = Lockstep::new(SplitStep::new(grid, &potential, setup.dt)?, 10.0 * k);

    let n = particles.len();
    let mut positions = particles.to_vec();
    let mut trajectories: Vec<Trajectory> = (0..n).map(Trajectory::new).collect();
    let mut level_quantiles = vec![Vec::new(); n];
    let mut arms = vec![vec![None; geom.levels]; n];
    let mut arm_done = vec![vec![false; geom.levels]; n];
    let row_y = |l: usize| geom.apex[1] + l as f64 * geom.row_spacing;

    let observe = |psi: &Wavefunction,
                   positions: &[Point],
                   trajectories: &mut [Trajectory],
                   level_quantiles: &mut [Vec<(usize, f64)>],
                   arms: &mut [Vec<Option<ArmVisit>>],
                   arm_done: &mut [Vec<bool>]| {
        let mut marginal = None;
        for (i, p) in positions.iter().enumerate() {
            trajectories[i].push(psi.time(), *p);
            let next = level_quantiles[i].len();
            if next < geom.levels && p[1] >= row_y(next) {
                let m = marginal.get_or_insert_with(|| psi.marginal_1d(0));
                let q = quantile_ahead(m, grid.lower(0), grid.spacing(0), p[0]);
                level_quantiles[i].push((next, q));
            }
            for l in 0..geom.levels {
                if arm_done[i][l] || p[1] < row_y(l) + 0.5 * geom.row_spacing {
                    continue;
                }
                arm_done[i][l] = true;
                arms[i][l] = geom
                    .arm_regions()
                    .into_iter()
                    .find(|(lv, _, _, r)| *lv == l && r.contains(*p))
                    .map(|(level, node, outcome, _)| ArmVisit {
                        level,
                        node,
                        outcome,
                    });
            }
        }
    };
    observe(
        &psi,
        &positions,
        &mut trajectories,
        &mut level_quantiles,
        &mut arms,
        &mut arm_done,
    );

    let blocks = (setup.duration / (OUTPUT_EVERY as f64 * setup.dt)).round() as usize;
    let (mut drift, mut leak_max) = (0.0f64, 0.0f64);
    for _ in 0..blocks {
        for _ in 0..OUTPUT_EVERY / 2 {
            lockstep.advance(&mut psi, &mut positions)?;
        }
        observe(
            &psi,
            &positions,
            &mut trajectories,
            &mut level_quantiles,
            &mut arms,
            &mut arm_done,
        );
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
    Ok(UnitaryRun {
        trajectories,
        level_quantiles,
        arms,
        max_norm_drift: drift,
        max_boundary_mass: leak_max,
        guidance: lockstep.stats(),
        steps: lockstep.stepper().steps(),
        final_psi: psi,
    })
}
