//! Field snapshot files.
//!
//! Binary layout (all little-endian):
//!
//! | offset | size | content                         |
//! |--------|------|---------------------------------|
//! | 0      | 4    | magic `BPWF`                    |
//! | 4      | 4    | dims (u32, 1 or 2)              |
//! | 8      | 8    | n along x (u64)                 |
//! | 16     | 8    | n along y (u64, 1 for 1D)       |
//! | 24     | 8    | length along x (f64)            |
//! | 32     | 8    | length along y (f64, 0 for 1D)  |
//! | 40     | 8    | time (f64)                      |
//! | 48     | 16   | reserved, zero                  |
//!
//! followed by `re, im` f64 pairs in row-major order (x fastest).

use std::io::{Read, Write};

use num_complex::Complex64;

use super::{Grid, WavefieldError, Wavefunction};

pub const MAGIC: &[u8; 4] = b"BPWF";
pub const HEADER_LEN: usize = 64;

pub fn write_snapshot<W: Write>(psi: &Wavefunction, mut out: W) -> std::io::Result<()> {
    let g = psi.grid();
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&(g.dims() as u32).to_le_bytes());
    header[8..16].copy_from_slice(&(g.n(0) as u64).to_le_bytes());
    header[16..24].copy_from_slice(&(g.n(1) as u64).to_le_bytes());
    header[24..32].copy_from_slice(&g.length(0).to_le_bytes());
    let ly = if g.dims() == 2 { g.length(1) } else { 0.0 };
    header[32..40].copy_from_slice(&ly.to_le_bytes());
    header[40..48].copy_from_slice(&psi.time().to_le_bytes());
    out.write_all(&header)?;
    let mut body = Vec::with_capacity(16 * g.len());
    for z in psi.amplitudes() {
        body.extend_from_slice(&z.re.to_le_bytes());
        body.extend_from_slice(&z.im.to_le_bytes());
    }
    out.write_all(&body)
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<Wavefunction, WavefieldError> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(WavefieldError::BadSnapshot("missing BPWF magic".into()));
    }
    let word = |r: std::ops::Range<usize>| -> [u8; 8] { header[r].try_into().unwrap() };
    let dims = u32::from_le_bytes(header[4..8].try_into().unwrap());
    let nx = u64::from_le_bytes(word(8..16)) as usize;
    let ny = u64::from_le_bytes(word(16..24)) as usize;
    let lx = f64::from_le_bytes(word(24..32));
    let ly = f64::from_le_bytes(word(32..40));
    let time = f64::from_le_bytes(word(40..48));
    let grid = match dims {
        1 if ny == 1 => Grid::new_1d(nx, lx)?,
        2 => Grid::new_2d([nx, ny], [lx, ly])?,
        _ => {
            return Err(WavefieldError::BadSnapshot(format!(
                "dims {dims} with n = ({nx}, {ny})"
            )))
        }
    };
    let mut body = vec![0u8; 16 * grid.len()];
    input.read_exact(&mut body)?;
    let amps = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[0..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..16].try_into().unwrap()),
            )
        })
        .collect();
    Wavefunction::from_amplitudes(grid, amps, time)
}

/// CSV dump (`x[,y],re,im`) meant for small grids.
pub fn write_snapshot_csv<W: Write>(psi: &Wavefunction, mut out: W) -> std::io::Result<()> {
    let g = psi.grid();
    if g.dims() == 1 {
        writeln!(out, "x,re,im")?;
    } else {
        writeln!(out, "x,y,re,im")?;
    }
    for (idx, z) in psi.amplitudes().iter().enumerate() {
        let p = g.point(idx);
        if g.dims() == 1 {
            writeln!(out, "{:e},{:e},{:e}", p[0], z.re, z.im)?;
        } else {
            writeln!(out, "{:e},{:e},{:e},{:e}", p[0], p[1], z.re, z.im)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavefield::{gaussian_packet, PacketSpec};

    #[test]
    fn binary_snapshot_round_trips() {
        let grid = Grid::new_2d([64, 128], [6.4, 25.6]).unwrap();
        let mut psi = gaussian_packet(
            &grid,
            &PacketSpec::new_2d([0.0, 1.0], [2.0, -3.0], [0.5, 1.5]),
        )
        .unwrap();
        psi.set_time(0.125);
        let mut buf = Vec::new();
        write_snapshot(&psi, &mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 16 * grid.len());
        assert_eq!(&buf[0..4], b"BPWF");
        let back = read_snapshot(&buf[..]).unwrap();
        assert_eq!(back, psi);
    }

    #[test]
    fn rejects_wrong_magic() {
        let buf = [0u8; 128];
        assert!(matches!(
            read_snapshot(&buf[..]),
            Err(WavefieldError::BadSnapshot(_))
        ));
    }

    #[test]
    fn csv_has_header_and_one_row_per_point() {
        let grid = Grid::new_1d(64, 12.8).unwrap();
        let psi = gaussian_packet(&grid, &PacketSpec::new_1d(0.0, 1.0, 1.0)).unwrap();
        let mut buf = Vec::new();
        write_snapshot_csv(&psi, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,re,im\n"));
        assert_eq!(text.lines().count(), 65);
    }
}
