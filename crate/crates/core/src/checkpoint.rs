//! Binary state snapshots.
//!
//! Layout (all little-endian):
//!
//! | bytes | content                                   |
//! |-------|-------------------------------------------|
//! | 4     | magic `BDF1`                              |
//! | 8     | cutoff Λ (f64)                            |
//! | 8     | points per axis (u64)                     |
//! | 1     | grid offset flag (0 or 1)                 |
//! | 8     | Fermi velocity (f64)                      |
//! | 8     | matrix dimension d (u64)                  |
//! | 16·d² | row-major entries, (re, im) f64 pairs     |

use crate::error::{BdfError, Result};
use crate::free::PhysicalParams;
use crate::grid::GridSpec;
use crate::linalg::CMatrix;
use crate::model::Model;
use crate::state::OperatorKernel;
use num_complex::Complex64;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"BDF1";
const HEADER_LEN: usize = 4 + 8 + 8 + 1 + 8 + 8;

/// Decoded contents of a checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub grid: GridSpec,
    pub params: PhysicalParams,
    pub matrix: CMatrix,
}

pub fn encode(grid: &GridSpec, params: &PhysicalParams, matrix: &CMatrix) -> Vec<u8> {
    let d = matrix.nrows();
    let mut out = Vec::with_capacity(HEADER_LEN + 16 * d * d);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&grid.cutoff.to_le_bytes());
    out.extend_from_slice(&(grid.points_per_axis as u64).to_le_bytes());
    out.push(grid.offset as u8);
    out.extend_from_slice(&params.fermi_velocity.to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for r in 0..d {
        for c in 0..d {
            let z = matrix[(r, c)];
            out.extend_from_slice(&z.re.to_le_bytes());
            out.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    out
}

fn take<'a>(bytes: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if bytes.len() < n {
        return Err(BdfError::Checkpoint("truncated file".into()));
    }
    let (head, tail) = bytes.split_at(n);
    *bytes = tail;
    Ok(head)
}

fn f64_at(bytes: &mut &[u8]) -> Result<f64> {
    Ok(f64::from_le_bytes(take(bytes, 8)?.try_into().expect("8 bytes")))
}

fn u64_at(bytes: &mut &[u8]) -> Result<u64> {
    Ok(u64::from_le_bytes(take(bytes, 8)?.try_into().expect("8 bytes")))
}

pub fn decode(mut bytes: &[u8]) -> Result<Checkpoint> {
    let b = &mut bytes;
    if take(b, 4)? != MAGIC {
        return Err(BdfError::Checkpoint("bad magic bytes".into()));
    }
    let cutoff = f64_at(b)?;
    let points_per_axis = usize::try_from(u64_at(b)?).map_err(|_| BdfError::Checkpoint("grid size overflow".into()))?;
    let offset = match take(b, 1)?[0] {
        0 => false,
        1 => true,
        v => return Err(BdfError::Checkpoint(format!("invalid offset flag {v}"))),
    };
    let fermi_velocity = f64_at(b)?;
    let d = u64_at(b)?;
    let expected = d.checked_mul(d).and_then(|n| n.checked_mul(16)).ok_or_else(|| BdfError::Checkpoint("dimension overflow".into()))?;
    if (b.len() as u64) < expected {
        return Err(BdfError::Checkpoint("truncated file".into()));
    }
    if (b.len() as u64) > expected {
        return Err(BdfError::Checkpoint("trailing bytes after matrix data".into()));
    }
    let d = d as usize;
    let mut matrix = CMatrix::zeros(d, d);
    for r in 0..d {
        for c in 0..d {
            let re = f64_at(b)?;
            let im = f64_at(b)?;
            matrix[(r, c)] = Complex64::new(re, im);
        }
    }
    Ok(Checkpoint { grid: GridSpec { cutoff, points_per_axis, offset }, params: PhysicalParams { fermi_velocity, cutoff }, matrix })
}

/// Write a state atomically (temporary file, then rename).
pub fn save(path: &Path, model: &Model, state: &OperatorKernel) -> Result<()> {
    let bytes = encode(model.grid().spec(), model.params(), state.matrix());
    let tmp = path.with_extension("bdf.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Read a state and check that it belongs to `model`'s grid.
pub fn load(path: &Path, model: &Model) -> Result<OperatorKernel> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let ck = decode(&bytes)?;
    if ck.grid != *model.grid().spec() || ck.matrix.nrows() != model.dim() {
        return Err(BdfError::Checkpoint(format!(
            "dimension mismatch: file holds {}x{} on {:?}, model expects {}x{} on {:?}",
            ck.matrix.nrows(),
            ck.matrix.ncols(),
            ck.grid,
            model.dim(),
            model.dim(),
            model.grid().spec()
        )));
    }
    OperatorKernel::from_matrix(model.grid(), ck.matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::random_admissible_state;

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = Model::new(GridSpec::new(1.0, 8), 1.1).unwrap();
        let g = random_admissible_state(&m, 42, 0.4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.bdf");
        save(&path, &m, &g).unwrap();
        let back = load(&path, &m).unwrap();
        assert!(g
            .matrix()
            .iter()
            .zip(back.matrix().iter())
            .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let m = Model::new(GridSpec::new(1.0, 8), 1.1).unwrap();
        let bytes = encode(m.grid().spec(), m.params(), m.free_sea().matrix());
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        assert!(decode(&bytes[..10]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(BdfError::Checkpoint(msg)) if msg.contains("magic")));
    }

    #[test]
    fn other_grid_is_a_mismatch() {
        let a = Model::new(GridSpec::new(1.0, 8), 1.1).unwrap();
        let b = Model::new(GridSpec::new(1.0, 10), 1.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.bdf");
        save(&path, &a, &a.free_sea()).unwrap();
        assert!(matches!(load(&path, &b), Err(BdfError::Checkpoint(msg)) if msg.contains("mismatch")));
    }
}
