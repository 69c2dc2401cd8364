//! Free Gaussian spreading under the split-step propagator.

use pinball::wavefield::{gaussian_packet, Grid, PacketSpec, Spectral, SplitStep};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::new_1d(2048, 81.92)?;
    let sigma = 1.0;
    let mut psi = gaussian_packet(&grid, &PacketSpec::new_1d(-20.0, 10.0, sigma))?;
    let mut stepper = SplitStep::new(&grid, &vec![0.0; grid.len()], 1e-3)?;
    let mut fft = Spectral::new(&grid);

    println!(
        "{:>6} {:>10} {:>10} {:>10}",
        "t", "<x>", "width", "analytic"
    );
    for _ in 0..=4 {
        let obs = psi.observables(&mut fft);
        let t = psi.time();
        let analytic = sigma * (1.0 + t * t / (4.0 * sigma.powi(4))).sqrt();
        println!(
            "{t:>6.2} {:>10.5} {:>10.6} {analytic:>10.6}",
            obs.position_mean[0],
            obs.position_variance[0].sqrt()
        );
        for _ in 0..1000 {
            stepper.step(&mut psi);
        }
    }
    println!("norm drift {:.2e}", (psi.norm() - 1.0).abs());
    Ok(())
}
