//! Versioned binary disk cache for eigenbases.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "SLEIGB01" (format tag + version)
//! 8       8     grid hash   (fnv1a-64 over dim, half_width bits, points)
//! 16      8     potential hash (fnv1a-64 over the sampled potential values)
//! 24      1     request kind: 0 = lambda_max, 1 = count
//! 25      8     request value (f64 bits or u64 count)
//! 33      8     lambda_complete (f64 bits)
//! 41      4     n_modes   (u32)
//! 45      8     n_points  (u64)
//! 53      8·K   eigenvalues, ascending
//! ...     8·K·P eigenvector matrix, column-major (mode-major), full grid
//! ```
//!
//! A cache hit requires the grid hash, potential hash, and request to match
//! exactly; anything else is reported as a miss, never silently adapted.

use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::schrodinger::{EigenBasis, EigenRequest};
use nalgebra::DMatrix;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"SLEIGB01";

/// FNV-1a 64-bit over a byte stream.
pub(crate) fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// Hash of the grid geometry.
pub fn grid_hash(grid: &Grid) -> u64 {
    let mut bytes = Vec::with_capacity(24);
    bytes.extend_from_slice(&(grid.dim() as u64).to_le_bytes());
    bytes.extend_from_slice(&grid.half_width().to_bits().to_le_bytes());
    bytes.extend_from_slice(&(grid.points_per_axis() as u64).to_le_bytes());
    fnv1a(bytes)
}

/// Hash of the potential as actually sampled on the grid.
pub fn potential_hash_from_values(values: &[f64]) -> u64 {
    fnv1a(values.iter().flat_map(|v| v.to_bits().to_le_bytes()))
}

fn request_tag(request: EigenRequest) -> (u8, u64) {
    match request {
        EigenRequest::LambdaMax(l) => (0, l.to_bits()),
        EigenRequest::Count(c) => (1, c as u64),
    }
}

/// Write the basis to `path`, atomically via a sibling temp file.
pub fn save(path: &Path, basis: &EigenBasis) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&basis.grid_hash().to_le_bytes());
    buf.extend_from_slice(&basis.potential_hash().to_le_bytes());
    let (tag, val) = request_tag(basis.request());
    buf.push(tag);
    buf.extend_from_slice(&val.to_le_bytes());
    buf.extend_from_slice(&basis.lambda_complete().to_bits().to_le_bytes());
    buf.extend_from_slice(&(basis.n_modes() as u32).to_le_bytes());
    buf.extend_from_slice(&(basis.grid().npoints() as u64).to_le_bytes());
    for &l in basis.eigenvalues() {
        buf.extend_from_slice(&l.to_bits().to_le_bytes());
    }
    for c in 0..basis.n_modes() {
        for i in 0..basis.grid().npoints() {
            buf.extend_from_slice(&basis.modes()[(i, c)].to_bits().to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Try to load a basis matching the grid, potential hash, and request.
/// `Ok(None)` is a miss (absent file or hash/request mismatch).
pub fn load(
    path: &Path,
    grid: &Grid,
    potential_hash: u64,
    request: EigenRequest,
) -> Result<Option<EigenBasis>> {
    let mut bytes = Vec::new();
    match std::fs::File::open(path) {
        Ok(mut f) => {
            f.read_to_end(&mut bytes)?;
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > bytes.len() {
            return Err(Error::Io(format!("cache file truncated at offset {pos}", pos = *pos)));
        }
        let s = &bytes[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };
    let u64_at = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());

    if take(&mut pos, 8)? != MAGIC {
        return Err(Error::Io("not an eigenbasis cache file (bad magic)".into()));
    }
    let gh = u64_at(take(&mut pos, 8)?);
    let ph = u64_at(take(&mut pos, 8)?);
    let tag = take(&mut pos, 1)?[0];
    let val = u64_at(take(&mut pos, 8)?);
    let lambda_complete = f64::from_bits(u64_at(take(&mut pos, 8)?));
    let n_modes = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
    let n_points = u64_at(take(&mut pos, 8)?) as usize;

    let (want_tag, want_val) = request_tag(request);
    if gh != grid_hash(grid) || ph != potential_hash || tag != want_tag || val != want_val {
        return Ok(None);
    }
    if n_points != grid.npoints() {
        return Ok(None);
    }

    let mut eigenvalues = Vec::with_capacity(n_modes);
    for _ in 0..n_modes {
        eigenvalues.push(f64::from_bits(u64_at(take(&mut pos, 8)?)));
    }
    let mut modes = DMatrix::zeros(n_points, n_modes);
    for c in 0..n_modes {
        for i in 0..n_points {
            modes[(i, c)] = f64::from_bits(u64_at(take(&mut pos, 8)?));
        }
    }
    if pos != bytes.len() {
        return Err(Error::Io("cache file has trailing bytes".into()));
    }

    Ok(Some(EigenBasis::from_parts(
        grid.clone(),
        eigenvalues,
        modes,
        request,
        lambda_complete,
        gh,
        ph,
    )))
}

/// Conventional cache file name for a (grid, potential, request) triple.
pub fn cache_file_name(grid_hash: u64, potential_hash: u64, request: EigenRequest) -> String {
    let (tag, val) = request_tag(request);
    format!("eig_{grid_hash:016x}_{potential_hash:016x}_{tag}{val:016x}.slb")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, Potential};
    use crate::schrodinger::{assemble, eigensolve};

    #[test]
    fn roundtrip_bitexact() {
        let grid = build_grid(1, 6.0, 201).unwrap();
        let pot = Potential::polynomial_radial(2.0);
        let op = assemble(&grid, &pot).unwrap();
        let basis = eigensolve(&op, EigenRequest::Count(5)).unwrap();

        let dir = std::env::temp_dir().join("speclab-cache-test");
        let path = dir.join(cache_file_name(
            basis.grid_hash(),
            basis.potential_hash(),
            basis.request(),
        ));
        save(&path, &basis).unwrap();
        let loaded = load(&path, &grid, basis.potential_hash(), basis.request())
            .unwrap()
            .expect("cache hit");
        assert_eq!(loaded.eigenvalues(), basis.eigenvalues());
        assert_eq!(loaded.modes(), basis.modes());
        assert_eq!(loaded.lambda_complete(), basis.lambda_complete());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn mismatch_is_a_miss() {
        let grid = build_grid(1, 6.0, 201).unwrap();
        let pot = Potential::polynomial_radial(2.0);
        let op = assemble(&grid, &pot).unwrap();
        let basis = eigensolve(&op, EigenRequest::Count(3)).unwrap();
        let dir = std::env::temp_dir().join("speclab-cache-test2");
        let path = dir.join("basis.slb");
        save(&path, &basis).unwrap();

        // different potential → miss
        let other = assemble(&grid, &Potential::polynomial_radial(1.0)).unwrap();
        let other_basis = eigensolve(&other, EigenRequest::Count(3)).unwrap();
        assert!(load(&path, &grid, other_basis.potential_hash(), basis.request())
            .unwrap()
            .is_none());
        // different request → miss
        assert!(load(&path, &grid, basis.potential_hash(), EigenRequest::Count(4))
            .unwrap()
            .is_none());
        // different grid → miss
        let grid2 = build_grid(1, 6.0, 301).unwrap();
        assert!(load(&path, &grid2, basis.potential_hash(), basis.request())
            .unwrap()
            .is_none());
        // absent file → miss, not error
        assert!(load(&dir.join("nope.slb"), &grid, 0, basis.request()).unwrap().is_none());
        std::fs::remove_file(&path).ok();
    }
}
