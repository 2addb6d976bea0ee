//! Binary checkpoint files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "MXDN"
//! 4       4     format version (u32, currently 1)
//! 8       1     statistics of species A (0 = boson, 1 = fermion)
//! 9       1     statistics of species B
//! 10      4     N_A (u32)        14  4  N_B (u32)
//! 18      4     M   (u32)        22  4  m_A (u32)   26  4  m_B (u32)
//! 30      4     K_A (u32)        34  4  K_B (u32)
//! 38      4     G   (u32)
//! 42      8     grid half width L (f64)
//! 50      8     time t (f64)
//! 58      -     complex arrays as (re: f64, im: f64) pairs, row-major:
//!               A [M x M], C_A [M x K_A], C_B [M x K_B],
//!               Phi_A [m_A x G], Phi_B [m_B x G]
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::eom::MixtureState;
use crate::error::{Error, Result};
use crate::fock::Statistics;
use crate::system::MixtureSystem;

const MAGIC: &[u8; 4] = b"MXDN";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointHeader {
    pub statistics_a: Statistics,
    pub statistics_b: Statistics,
    pub particles_a: u32,
    pub particles_b: u32,
    pub species_states: usize,
    pub orbitals_a: usize,
    pub orbitals_b: usize,
    pub basis_a: usize,
    pub basis_b: usize,
    pub grid_len: usize,
    pub half_width: f64,
    pub time: f64,
}

fn stats_code(s: Statistics) -> u8 {
    match s {
        Statistics::Boson => 0,
        Statistics::Fermion => 1,
    }
}

fn stats_from_code(code: u8) -> Result<Statistics> {
    match code {
        0 => Ok(Statistics::Boson),
        1 => Ok(Statistics::Fermion),
        other => Err(Error::Checkpoint(format!("unknown statistics code {other}"))),
    }
}

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_complex_array(w: &mut impl Write, a: &Array2<C64>) -> Result<()> {
    for v in a.iter() {
        write_f64(w, v.re)?;
        write_f64(w, v.im)?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn read_complex_array(r: &mut impl Read, rows: usize, cols: usize) -> Result<Array2<C64>> {
    let mut out = Array2::zeros((rows, cols));
    for v in out.iter_mut() {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        *v = C64::new(re, im);
    }
    Ok(out)
}

/// Write a checkpoint of the state, with system metadata for validation.
pub fn write_checkpoint(path: &Path, state: &MixtureState, system: &MixtureSystem) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    write_u32(&mut w, VERSION)?;
    w.write_all(&[stats_code(system.a.statistics), stats_code(system.b.statistics)])?;
    write_u32(&mut w, system.a.particles)?;
    write_u32(&mut w, system.b.particles)?;
    write_u32(&mut w, state.species_states() as u32)?;
    write_u32(&mut w, state.orbitals_a.nrows() as u32)?;
    write_u32(&mut w, state.orbitals_b.nrows() as u32)?;
    write_u32(&mut w, state.coeff_a.ncols() as u32)?;
    write_u32(&mut w, state.coeff_b.ncols() as u32)?;
    write_u32(&mut w, system.grid.len() as u32)?;
    write_f64(&mut w, system.grid.half_width())?;
    write_f64(&mut w, state.time)?;
    write_complex_array(&mut w, &state.top)?;
    write_complex_array(&mut w, &state.coeff_a)?;
    write_complex_array(&mut w, &state.coeff_b)?;
    write_complex_array(&mut w, &state.orbitals_a)?;
    write_complex_array(&mut w, &state.orbitals_b)?;
    w.flush()?;
    Ok(())
}

/// Read a checkpoint file.
pub fn read_checkpoint(path: &Path) -> Result<(CheckpointHeader, MixtureState)> {
    let file = File::open(path)?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let mut stats = [0u8; 2];
    r.read_exact(&mut stats)?;
    let statistics_a = stats_from_code(stats[0])?;
    let statistics_b = stats_from_code(stats[1])?;
    let particles_a = read_u32(&mut r)?;
    let particles_b = read_u32(&mut r)?;
    let species_states = read_u32(&mut r)? as usize;
    let orbitals_a = read_u32(&mut r)? as usize;
    let orbitals_b = read_u32(&mut r)? as usize;
    let basis_a = read_u32(&mut r)? as usize;
    let basis_b = read_u32(&mut r)? as usize;
    let grid_len = read_u32(&mut r)? as usize;
    let half_width = read_f64(&mut r)?;
    let time = read_f64(&mut r)?;

    let top = read_complex_array(&mut r, species_states, species_states)?;
    let coeff_a = read_complex_array(&mut r, species_states, basis_a)?;
    let coeff_b = read_complex_array(&mut r, species_states, basis_b)?;
    let orbitals_a_arr = read_complex_array(&mut r, orbitals_a, grid_len)?;
    let orbitals_b_arr = read_complex_array(&mut r, orbitals_b, grid_len)?;

    let header = CheckpointHeader {
        statistics_a,
        statistics_b,
        particles_a,
        particles_b,
        species_states,
        orbitals_a,
        orbitals_b,
        basis_a,
        basis_b,
        grid_len,
        half_width,
        time,
    };
    let state = MixtureState {
        time,
        top,
        coeff_a,
        coeff_b,
        orbitals_a: orbitals_a_arr,
        orbitals_b: orbitals_b_arr,
    };
    Ok((header, state))
}

/// Check that a checkpoint header matches the system and truncation of a run.
pub fn validate_header(
    header: &CheckpointHeader,
    system: &MixtureSystem,
    truncation: &crate::eom::Truncation,
) -> Result<()> {
    let mismatch = |what: &str| Err(Error::Checkpoint(format!("checkpoint mismatch: {what}")));
    if header.statistics_a != system.a.statistics || header.statistics_b != system.b.statistics {
        return mismatch("statistics");
    }
    if header.particles_a != system.a.particles || header.particles_b != system.b.particles {
        return mismatch("particle numbers");
    }
    if header.species_states != truncation.species_states {
        return mismatch("species state count");
    }
    if header.orbitals_a != truncation.orbitals_a || header.orbitals_b != truncation.orbitals_b {
        return mismatch("orbital counts");
    }
    if header.grid_len != system.grid.len()
        || (header.half_width - system.grid.half_width()).abs() > 1e-12
    {
        return mismatch("grid");
    }
    Ok(())
}
