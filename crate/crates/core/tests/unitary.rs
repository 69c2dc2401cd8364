use pinball::bohm::sample_ensemble;
use pinball::chaos::bit_of;
use pinball::geometry::{DetectorLayout, PinballGeometry};
use pinball::measurement::{run_unitary_pinball, UnitaryRun, UnitarySetup};
use pinball::stats::{ks_p_value, ks_statistic, GridCdf};
use pinball::wavefield::{gaussian_packet, Grid, PacketSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_run(n: usize) -> (Grid, UnitaryRun) {
    let grid = Grid::new_2d([512, 256], [51.2, 51.2]).unwrap();
    let geometry = PinballGeometry {
        levels: 1,
        apex: [0.0, -12.0],
        row_spacing: 8.0,
        pitch: 16.0,
        height: 50.78125,
        width: 0.25,
        half_length: 6.0,
        detectors: DetectorLayout { enabled: false },
    };
    let packet = PacketSpec::new_2d([-8.0, -20.0], [10.0, 10.0], [1.0, 1.0]);
    let setup = UnitarySetup {
        grid: grid.clone(),
        duration: UnitarySetup::duration_past_last_row(&packet, &geometry, 10.0),
        geometry,
        packet: packet.clone(),
        dt: 1e-3,
    };
    let psi0 = gaussian_packet(&grid, &packet).unwrap();
    let particles = sample_ensemble(&psi0, n, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    (grid, run_unitary_pinball(&setup, &particles).unwrap())
}

#[test]
fn one_row_ensemble() {
    let n = 100;
    let (grid, run) = small_run(n);
    assert!(run.max_norm_drift < 1e-10);
    assert_eq!(run.guidance.capped, 0);

    // lateral positions stay distributed as the lateral marginal
    let cdf = GridCdf::new(
        &run.final_psi.marginal_1d(0),
        grid.lower(0),
        grid.spacing(0),
    );
    let xs: Vec<f64> = run
        .trajectories
        .iter()
        .map(|t| t.last().unwrap()[0])
        .collect();
    let d = ks_statistic(&xs, |x| cdf.cdf(x));
    assert!(ks_p_value(d, n) > 0.01, "D = {d}");

    // front half of the lateral marginal crosses, back half turns around;
    // the side of the barrier line is read off the end point, since the
    // outgoing lobes spread past the arm boundaries at +-pitch/2
    let mut in_arm = 0;
    for (i, &x) in xs.iter().enumerate() {
        let (level, q) = run.level_quantiles[i][0];
        assert_eq!(level, 0);
        let side = x > 0.0;
        if let Some(bit) = run.bits(i)[0] {
            in_arm += 1;
            assert_eq!(bit, side, "particle {i}");
        }
        if (q - 0.5).abs() > 0.02 {
            assert_eq!(side, bit_of(q), "particle {i}: q = {q}");
        }
    }
    assert!(in_arm >= n * 9 / 10, "{in_arm} of {n} ended in an arm");
    let transmitted = xs.iter().filter(|&&x| x > 0.0).count();
    let sd = (n as f64 * 0.25).sqrt();
    assert!(
        (transmitted as f64 - 0.5 * n as f64).abs() <= 3.0 * sd,
        "{transmitted}"
    );
}
