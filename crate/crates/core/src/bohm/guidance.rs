use num_complex::Complex64;
use rayon::prelude::*;

use super::BohmError;
use crate::wavefield::{gradient_from_spectrum, Grid, Point, Spectral, SplitStep, Wavefunction};

/// `|ψ|²` below this is treated as a node.
pub const DENSITY_FLOOR: f64 = 1e-30;

/// Result of one velocity evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityEval {
    pub v: Point,
    pub capped: bool,
    pub near_node: bool,
}

/// Counters accumulated over velocity evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GuidanceStats {
    pub evaluations: u64,
    pub capped: u64,
    pub nodes: u64,
    /// Substeps halved to resolve a near-node spike.
    pub refined: u64,
}

impl GuidanceStats {
    fn record(&mut self, e: &VelocityEval) {
        self.evaluations += 1;
        self.capped += u64::from(e.capped);
        self.nodes += u64::from(e.near_node);
    }

    pub fn merge(&mut self, other: &GuidanceStats) {
        self.evaluations += other.evaluations;
        self.capped += other.capped;
        self.nodes += other.nodes;
        self.refined += other.refined;
    }
}

pub trait VelocityField: Sync {
    fn eval(&self, p: Point) -> VelocityEval;
}

/// `ψ` and its spectral gradient frozen at one instant, with 6-point
/// Lagrange interpolation between grid points.
#[derive(Debug, Clone)]
pub struct GuidanceSnapshot {
    grid: Grid,
    psi: Vec<Complex64>,
    grad: Vec<Vec<Complex64>>,
    time: f64,
    vmax: f64,
}

const STENCIL: usize = 6;
const OFFSET: isize = 2;

fn lagrange_weights(s: f64) -> [f64; STENCIL] {
    let mut w = [0.0; STENCIL];
    for (m, wm) in w.iter_mut().enumerate() {
        let xm = m as f64 - OFFSET as f64;
        let mut num = 1.0;
        let mut den = 1.0;
        for k in 0..STENCIL {
            if k != m {
                let xk = k as f64 - OFFSET as f64;
                num *= s - xk;
                den *= xm - xk;
            }
        }
        *wm = num / den;
    }
    w
}

impl GuidanceSnapshot {
    /// Snapshot of `psi`, whose forward transform is `hat`.
    pub fn new(psi: &Wavefunction, hat: &[Complex64], fft: &mut Spectral, vmax: f64) -> Self {
        GuidanceSnapshot {
            grid: psi.grid().clone(),
            psi: psi.amplitudes().to_vec(),
            grad: gradient_from_spectrum(fft, hat),
            time: psi.time(),
            vmax,
        }
    }

    pub fn from_wavefunction(psi: &Wavefunction, fft: &mut Spectral, vmax: f64) -> Self {
        let mut hat = psi.amplitudes().to_vec();
        fft.forward(&mut hat);
        Self::new(psi, &hat, fft, vmax)
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    fn axis_stencil(&self, axis: usize, x: f64) -> ([usize; STENCIL], [f64; STENCIL]) {
        let n = self.grid.n(axis) as isize;
        let u = (x - self.grid.lower(axis)) / self.grid.spacing(axis);
        let i0 = u.floor();
        let w = lagrange_weights(u - i0);
        let mut idx = [0usize; STENCIL];
        for (m, id) in idx.iter_mut().enumerate() {
            let i = i0 as isize + m as isize - OFFSET;
            *id = i.rem_euclid(n) as usize;
        }
        (idx, w)
    }

    /// Interpolated `ψ` and `∇ψ` at `p`.
    pub fn interpolate(&self, p: Point) -> (Complex64, [Complex64; 2]) {
        let zero = Complex64::new(0.0, 0.0);
        let (ix, wx) = self.axis_stencil(0, p[0]);
        if self.grid.dims() == 1 {
            let mut psi = zero;
            let mut g = zero;
            for m in 0..STENCIL {
                psi += self.psi[ix[m]] * wx[m];
                g += self.grad[0][ix[m]] * wx[m];
            }
            return (psi, [g, zero]);
        }
        let (iy, wy) = self.axis_stencil(1, p[1]);
        let nx = self.grid.n(0);
        let mut psi = zero;
        let mut gx = zero;
        let mut gy = zero;
        for my in 0..STENCIL {
            let row = iy[my] * nx;
            let mut rp = zero;
            let mut rx = zero;
            let mut ry = zero;
            for mx in 0..STENCIL {
                let k = row + ix[mx];
                rp += self.psi[k] * wx[mx];
                rx += self.grad[0][k] * wx[mx];
                ry += self.grad[1][k] * wx[mx];
            }
            psi += rp * wy[my];
            gx += rx * wy[my];
            gy += ry * wy[my];
        }
        (psi, [gx, gy])
    }

    /// Guidance velocity `Im(∇ψ / ψ)` with the density floor and speed cap.
    pub fn velocity(&self, p: Point) -> VelocityEval {
        let (psi, grad) = self.interpolate(p);
        clamp(raw_velocity(psi, grad, self.grid.dims()), self.vmax)
    }
}

/// Unclamped guidance velocity and whether `|ψ|²` fell below the floor.
fn raw_velocity(psi: Complex64, grad: [Complex64; 2], dims: usize) -> (Point, bool) {
    let rho = psi.norm_sqr();
    let near_node = rho < DENSITY_FLOOR;
    let rho = rho.max(DENSITY_FLOOR);
    let mut v = [0.0; 2];
    for a in 0..dims {
        v[a] = (psi.conj() * grad[a]).im / rho;
    }
    (v, near_node)
}

fn speed(v: Point) -> f64 {
    v[0].hypot(v[1])
}

fn clamp((v, near_node): (Point, bool), vmax: f64) -> VelocityEval {
    let s = speed(v);
    let capped = !s.is_finite() || s > vmax;
    let v = if capped {
        let f = if s.is_finite() { vmax / s } else { 0.0 };
        [v[0] * f, v[1] * f]
    } else {
        v
    };
    VelocityEval {
        v,
        capped,
        near_node,
    }
}

impl VelocityField for GuidanceSnapshot {
    fn eval(&self, p: Point) -> VelocityEval {
        self.velocity(p)
    }
}

fn axpy(p: Point, h: f64, v: Point) -> Point {
    [p[0] + h * v[0], p[1] + h * v[1]]
}

/// Classical RK4 step of length `h` using the field at the start (`f0`),
/// midpoint (`fm`) and end (`f1`) of the step.
pub fn rk4_step(
    p: Point,
    h: f64,
    f0: &impl VelocityField,
    fm: &impl VelocityField,
    f1: &impl VelocityField,
    stats: &mut GuidanceStats,
) -> Point {
    let e1 = f0.eval(p);
    let e2 = fm.eval(axpy(p, h / 2.0, e1.v));
    let e3 = fm.eval(axpy(p, h / 2.0, e2.v));
    let e4 = f1.eval(axpy(p, h, e3.v));
    for e in [&e1, &e2, &e3, &e4] {
        stats.record(e);
    }
    std::array::from_fn(|a| p[a] + h / 6.0 * (e1.v[a] + 2.0 * e2.v[a] + 2.0 * e3.v[a] + e4.v[a]))
}

/// Unclamped velocity from three snapshots at `t0`, `t0 + dt`, `t0 + 2 dt`.
/// `ψ` and `∇ψ` are interpolated quadratically in time before forming the
/// ratio, which keeps short near-node spikes between snapshots. `u` is the
/// offset from `t0` in units of `dt`.
fn velocity_at(s: [&GuidanceSnapshot; 3], u: f64, p: Point) -> (Point, bool) {
    let dims = s[0].grid.dims();
    let node = u.round();
    if (u - node).abs() < 1e-12 && (0.0..=2.0).contains(&node) {
        let (psi, grad) = s[node as usize].interpolate(p);
        return raw_velocity(psi, grad, dims);
    }
    let w = [
        0.5 * (u - 1.0) * (u - 2.0),
        -u * (u - 2.0),
        0.5 * u * (u - 1.0),
    ];
    let zero = Complex64::new(0.0, 0.0);
    let (mut psi, mut grad) = (zero, [zero; 2]);
    for (snap, wk) in s.iter().zip(w) {
        let (z, g) = snap.interpolate(p);
        psi += z * wk;
        grad[0] += g[0] * wk;
        grad[1] += g[1] * wk;
    }
    raw_velocity(psi, grad, dims)
}

/// Deepest halving of a substep.
const MAX_REFINE: u32 = 12;

/// One RK4 stage set over `[u, u + hu]` (units of `dt`).
///
/// Stages faster than `vmax` mark a near-node spike. While such a substep
/// moves a particle by more than an eighth of a cell it is split in two,
/// down to `MAX_REFINE` levels; a spike resolved that way keeps its true
/// speed. Only a spike still unresolved at the deepest level is clamped to
/// `vmax` and counted as capped.
#[allow(clippy::too_many_arguments)]
fn rk4_refined(
    p: Point,
    dt: f64,
    u: f64,
    hu: f64,
    depth: u32,
    s: [&GuidanceSnapshot; 3],
    vmax: f64,
    stats: &mut GuidanceStats,
) -> Point {
    let h = hu * dt;
    let resolution = (0..s[0].grid.dims())
        .map(|a| s[0].grid.spacing(a))
        .fold(f64::INFINITY, f64::min)
        / 8.0;
    let r1 = velocity_at(s, u, p);
    let r2 = velocity_at(s, u + hu / 2.0, axpy(p, h / 2.0, r1.0));
    let r3 = velocity_at(s, u + hu / 2.0, axpy(p, h / 2.0, r2.0));
    let r4 = velocity_at(s, u + hu, axpy(p, h, r3.0));
    let raw = [r1, r2, r3, r4];
    let fastest = raw.iter().map(|r| speed(r.0)).fold(0.0, f64::max);
    let unresolved = !fastest.is_finite() || (fastest > vmax && fastest * h > resolution);
    if unresolved && depth < MAX_REFINE {
        stats.refined += 1;
        let mid = rk4_refined(p, dt, u, hu / 2.0, depth + 1, s, vmax, stats);
        return rk4_refined(mid, dt, u + hu / 2.0, hu / 2.0, depth + 1, s, vmax, stats);
    }
    let e = raw.map(|r| {
        if unresolved {
            clamp(r, vmax)
        } else {
            VelocityEval {
                v: r.0,
                capped: false,
                near_node: r.1,
            }
        }
    });
    for x in &e {
        stats.record(x);
    }
    std::array::from_fn(|a| {
        p[a] + h / 6.0 * (e[0].v[a] + 2.0 * e[1].v[a] + 2.0 * e[2].v[a] + e[3].v[a])
    })
}

/// `n` RK4 substeps across `[t0, t0 + 2 dt]`. With `n = 1` and no
/// near-node spike this is [`rk4_step`] on the three snapshots.
fn rk4_substeps(
    p: Point,
    dt: f64,
    n: usize,
    s: [&GuidanceSnapshot; 3],
    vmax: f64,
    stats: &mut GuidanceStats,
) -> Point {
    let hu = 2.0 / n as f64;
    (0..n).fold(p, |p, k| {
        rk4_refined(p, dt, k as f64 * hu, hu, 0, s, vmax, stats)
    })
}

/// Default number of RK4 substeps per lockstep advance.
pub const DEFAULT_SUBSTEPS: usize = 4;

/// Evolves a field and a set of particles in lockstep.
///
/// Each [`advance`](Lockstep::advance) takes two PDE steps and moves the
/// particles across the same `2 dt` with RK4 substeps. The velocity between
/// the fields at `t`, `t + dt` and `t + 2 dt` is interpolated quadratically in
/// time; with one substep the stages use the three fields directly.
#[derive(Debug)]
pub struct Lockstep {
    stepper: SplitStep,
    vmax: f64,
    substeps: usize,
    pending: Option<(GuidanceSnapshot, Vec<Complex64>)>,
    stats: GuidanceStats,
}

impl Lockstep {
    pub fn new(stepper: SplitStep, vmax: f64) -> Self {
        Lockstep {
            stepper,
            vmax,
            substeps: DEFAULT_SUBSTEPS,
            pending: None,
            stats: GuidanceStats::default(),
        }
    }

    pub fn with_substeps(mut self, n: usize) -> Self {
        self.substeps = n.max(1);
        self
    }

    pub fn substeps(&self) -> usize {
        self.substeps
    }

    pub fn stepper(&mut self) -> &mut SplitStep {
        &mut self.stepper
    }

    pub fn pde_dt(&self) -> f64 {
        self.stepper.dt()
    }

    pub fn particle_dt(&self) -> f64 {
        2.0 * self.stepper.dt()
    }

    pub fn stats(&self) -> GuidanceStats {
        self.stats
    }

    /// Forget cached snapshots; required after `psi` is changed externally.
    pub fn invalidate(&mut self) {
        self.pending = None;
    }

    fn snapshot(&mut self, psi: &Wavefunction) -> (GuidanceSnapshot, Vec<Complex64>) {
        let hat = self.stepper.spectrum(psi);
        let snap = GuidanceSnapshot::new(psi, &hat, self.stepper.spectral(), self.vmax);
        (snap, hat)
    }

    /// Field-only evolution by two PDE steps.
    pub fn advance_field(&mut self, psi: &mut Wavefunction) {
        self.pending = None;
        self.stepper.step(psi);
        self.stepper.step(psi);
    }

    pub fn advance(
        &mut self,
        psi: &mut Wavefunction,
        particles: &mut [Point],
    ) -> Result<(), BohmError> {
        if particles.is_empty() {
            self.advance_field(psi);
            return Ok(());
        }
        let (s0, hat0) = match self.pending.take() {
            Some((s, hat)) if s.time == psi.time() => (s, hat),
            _ => self.snapshot(psi),
        };
        self.stepper.step_from_spectrum(psi, hat0);
        let (s1, hat1) = self.snapshot(psi);
        self.stepper.step_from_spectrum(psi, hat1);
        let (s2, hat2) = self.snapshot(psi);
        let dt = self.pde_dt();
        let n = self.substeps;
        let vmax = self.vmax;
        let grid = psi.grid();
        let stats = particles
            .par_iter_mut()
            .map(|p| {
                let mut st = GuidanceStats::default();
                *p = rk4_substeps(*p, dt, n, [&s0, &s1, &s2], vmax, &mut st);
                (
                    st,
                    grid.contains(*p) && p[0].is_finite() && p[1].is_finite(),
                )
            })
            .collect::<Vec<_>>();
        let mut bad = None;
        for (i, (st, ok)) in stats.iter().enumerate() {
            self.stats.merge(st);
            if !ok && bad.is_none() {
                bad = Some(i);
            }
        }
        self.pending = Some((s2, hat2));
        if let Some(i) = bad {
            return Err(BohmError::LeftGrid {
                index: i,
                position: particles[i],
                time: psi.time(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefield::{gaussian_packet, PacketSpec};

    #[test]
    fn lagrange_weights_reproduce_quintics() {
        for &s in &[0.0, 0.25, 0.5, 0.9] {
            let w = lagrange_weights(s);
            let poly = |x: f64| 1.0 - 2.0 * x + 0.5 * x.powi(3) - 0.1 * x.powi(5);
            let interp: f64 = (0..STENCIL)
                .map(|m| w[m] * poly(m as f64 - OFFSET as f64))
                .sum();
            assert!((interp - poly(s)).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_wave_gives_its_wavenumber() {
        let grid = Grid::new_1d(256, 25.6).unwrap();
        let k = grid.wavenumber(0, 20);
        let amps = (0..256)
            .map(|i| Complex64::from_polar(0.1, k * grid.coord(0, i)))
            .collect();
        let psi = Wavefunction::from_amplitudes(grid.clone(), amps, 0.0).unwrap();
        let mut fft = Spectral::new(&grid);
        let snap = GuidanceSnapshot::from_wavefunction(&psi, &mut fft, 100.0);
        for &x in &[-3.01, 0.0, 5.55] {
            let e = snap.velocity([x, 0.0]);
            assert!((e.v[0] - k).abs() < 1e-8, "{:?}", e);
        }
    }

    #[test]
    fn gaussian_2d_velocity_matches_analytic() {
        let grid = Grid::new_2d([256, 256], [25.6, 25.6]).unwrap();
        let psi = gaussian_packet(
            &grid,
            &PacketSpec::new_2d([0.0, 0.0], [3.0, -2.0], [1.5, 1.5]),
        )
        .unwrap();
        let mut fft = Spectral::new(&grid);
        let snap = GuidanceSnapshot::from_wavefunction(&psi, &mut fft, 100.0);
        let e = snap.velocity([0.37, -1.11]);
        assert!(
            (e.v[0] - 3.0).abs() < 1e-5 && (e.v[1] + 2.0).abs() < 1e-5,
            "{e:?}"
        );
    }

    #[test]
    fn cap_and_node_flags() {
        let grid = Grid::new_1d(64, 6.4).unwrap();
        let amps = vec![Complex64::new(0.0, 0.0); 64];
        let psi = Wavefunction::from_amplitudes(grid.clone(), amps, 0.0).unwrap();
        let mut fft = Spectral::new(&grid);
        let snap = GuidanceSnapshot::from_wavefunction(&psi, &mut fft, 1.0);
        let e = snap.velocity([0.1, 0.0]);
        assert!(e.near_node);
        assert_eq!(e.v, [0.0, 0.0]);

        let k = grid.wavenumber(0, 5);
        let amps = (0..64)
            .map(|i| Complex64::from_polar(1.0, k * grid.coord(0, i)))
            .collect();
        let psi = Wavefunction::from_amplitudes(grid, amps, 0.0).unwrap();
        let snap = GuidanceSnapshot::from_wavefunction(&psi, &mut fft, 1.0);
        let e = snap.velocity([0.2, 0.0]);
        assert!(e.capped && (e.v[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn one_substep_matches_rk4_step() {
        let grid = Grid::new_1d(512, 51.2).unwrap();
        let pot = vec![0.0; 512];
        let mut stepper = SplitStep::new(&grid, &pot, 1e-2).unwrap();
        let mut psi = gaussian_packet(&grid, &PacketSpec::new_1d(0.0, 2.0, 1.0)).unwrap();
        let mut snaps = Vec::new();
        for _ in 0..3 {
            snaps.push(GuidanceSnapshot::from_wavefunction(
                &psi,
                stepper.spectral(),
                100.0,
            ));
            stepper.step(&mut psi);
        }
        let p = [0.7, 0.0];
        let mut st = GuidanceStats::default();
        let a = rk4_step(p, 2e-2, &snaps[0], &snaps[1], &snaps[2], &mut st);
        let b = rk4_substeps(
            p,
            1e-2,
            1,
            [&snaps[0], &snaps[1], &snaps[2]],
            100.0,
            &mut st,
        );
        assert_eq!(a, b);
        assert_eq!(st.evaluations, 8);
    }

    #[test]
    fn free_gaussian_trajectory_scales_with_width() {
        // x(t) = c + k t + (x0 - c) sqrt(1 + t^2 / (4 s^4))
        let (c, k, s) = (-2.0, 1.5, 0.8);
        let grid = Grid::new_1d(1024, 51.2).unwrap();
        let pot = vec![0.0; 1024];
        let mut psi = gaussian_packet(&grid, &PacketSpec::new_1d(c, k, s)).unwrap();
        let dt = 2e-3;
        let mut ls = Lockstep::new(SplitStep::new(&grid, &pot, dt).unwrap(), 100.0);
        let x0 = [-3.1, -2.0, -1.2, 0.3];
        let mut parts: Vec<Point> = x0.iter().map(|&x| [x, 0.0]).collect();
        for _ in 0..500 {
            ls.advance(&mut psi, &mut parts).unwrap();
        }
        let t = psi.time();
        assert!((t - 2.0).abs() < 1e-9);
        let spread = (1.0 + t * t / (4.0 * s.powi(4))).sqrt();
        for (p, x) in parts.iter().zip(x0) {
            let exact = c + k * t + (x - c) * spread;
            assert!((p[0] - exact).abs() < 1e-6, "{} vs {exact}", p[0]);
        }
    }
}
