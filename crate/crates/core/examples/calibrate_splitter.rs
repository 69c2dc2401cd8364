//! Bisect the height of a Gaussian barrier until it transmits half the packet.

use pinball::geometry::{calibrate_half_transmission, CalibrationOptions};
use pinball::wavefield::Grid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::new_1d(2048, 40.96)?;
    let mut opts = CalibrationOptions::new(grid, 10.0, 1.0, 0.25, 1e-3);
    opts.tol = 1e-3;
    let report = calibrate_half_transmission(&opts)?;
    for s in &report.samples {
        println!(
            "iter {:2}  h = {:>10.6}  T = {:.6}",
            s.iteration, s.height, s.transmission
        );
    }
    println!(
        "h* = {}  T = {:.6}  R + T - 1 = {:.1e}",
        report.height(),
        report.transmission(),
        report.transmission() + report.reflection() - 1.0
    );
    Ok(())
}
