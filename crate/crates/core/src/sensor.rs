//! Sensor-set families as boolean grid masks.
//!
//! Three constructions, all driven by the cube lattice:
//!
//! * decaying balls — a ball of radius `δ^(1+|j|^σ) · L` centered at the
//!   cube center `z_j`;
//! * density-random — per-cube uniform random cells until the relative
//!   density reaches `δ^(1+|j|^σ)`;
//! * thick periodic — the same sub-region of relative volume ≥ δ in every
//!   cube (Eq.-style thick sets).
//!
//! Conventions: `|j|` is the Euclidean norm of the recentered integer cube
//! index and `|0|^σ := 0`, so the central cube always gets exponent 1. The
//! discrete measure of a mask is cell count × spacing^dim and ball
//! membership is a center-of-cell test.

use crate::cache::{fnv1a, grid_hash};
use crate::domain::{CubeLattice, Grid};
use crate::error::{invalid, Error, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

/// Which construction produced a mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SensorKind {
    DecayingBalls,
    DensityRandom,
    ThickPeriodic,
}

impl SensorKind {
    fn tag(self) -> &'static str {
        match self {
            SensorKind::DecayingBalls => "decaying_balls",
            SensorKind::DensityRandom => "density_random",
            SensorKind::ThickPeriodic => "thick_periodic",
        }
    }

    fn from_tag(s: &str) -> Option<Self> {
        match s {
            "decaying_balls" => Some(SensorKind::DecayingBalls),
            "density_random" => Some(SensorKind::DensityRandom),
            "thick_periodic" => Some(SensorKind::ThickPeriodic),
            _ => None,
        }
    }
}

/// Sub-cube pattern for thick sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThickPattern {
    /// Slab of width `δ·L` at the low edge of every cube (first axis).
    LeftSlab,
    /// Slab at the low or high edge, alternating with cube parity.
    Alternating,
}

/// Boolean grid mask with its generating metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSet {
    pub mask: Vec<bool>,
    pub kind: SensorKind,
    pub delta: f64,
    pub sigma: f64,
    pub side: f64,
    pub seed: Option<u64>,
    pub grid_hash: u64,
    /// Cubes whose ball shrank below the grid resolution and were assigned
    /// their single nearest grid point.
    pub degenerate_cubes: Vec<[i64; 2]>,
    /// Cubes whose requested density exceeded 1 and were clamped full.
    pub clamped_cubes: Vec<[i64; 2]>,
}

impl SensorSet {
    pub fn n_active(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Discrete measure: active cells × cell volume.
    pub fn measure(&self, grid: &Grid) -> f64 {
        self.n_active() as f64 * grid.cell_volume()
    }
}

fn check_delta_sigma(delta: f64, sigma: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("δ must lie in (0,1), got {delta}")));
    }
    if !(0.0..1.0).contains(&sigma) {
        return Err(invalid("sigma", format!("σ must lie in [0,1), got {sigma}")));
    }
    Ok(())
}

/// Density exponent `1 + |j|^σ` under the convention `|0|^σ := 0`.
pub fn density_exponent(index_norm: f64, sigma: f64) -> f64 {
    if index_norm == 0.0 {
        1.0
    } else {
        1.0 + index_norm.powf(sigma)
    }
}

/// Required per-cube relative density `δ^(1+|j|^σ)`.
pub fn required_density(delta: f64, sigma: f64, index_norm: f64) -> f64 {
    delta.powf(density_exponent(index_norm, sigma))
}

/// Mark, in each cube, the ball of radius `δ^(1+|j|^σ)·L` around the cube
/// center. A ball smaller than the grid resolution degenerates to the
/// single nearest grid point, flagged in the metadata.
pub fn decaying_ball_set(
    grid: &Grid,
    lattice: &CubeLattice,
    delta: f64,
    sigma: f64,
) -> Result<SensorSet> {
    check_delta_sigma(delta, sigma)?;
    let mut mask = vec![false; grid.npoints()];
    let mut degenerate = Vec::new();
    for c in 0..lattice.n_cubes() {
        let z = lattice.center(c);
        let r = required_density(delta, sigma, lattice.index_norm(c)) * lattice.side();
        let mut any = false;
        let mut nearest = (f64::INFINITY, usize::MAX);
        for &p in lattice.points(c) {
            let q = grid.point(p);
            let d2 = (q[0] - z[0]).powi(2) + (q[1] - z[1]).powi(2);
            if d2.sqrt() <= r {
                mask[p] = true;
                any = true;
            }
            if d2 < nearest.0 {
                nearest = (d2, p);
            }
        }
        if !any {
            if nearest.1 != usize::MAX {
                mask[nearest.1] = true;
            }
            degenerate.push(lattice.index(c));
        }
    }
    Ok(SensorSet {
        mask,
        kind: SensorKind::DecayingBalls,
        delta,
        sigma,
        side: lattice.side(),
        seed: None,
        grid_hash: grid_hash(grid),
        degenerate_cubes: degenerate,
        clamped_cubes: Vec::new(),
    })
}

/// Select cells uniformly at random (without replacement) in each cube
/// until the cube density reaches `δ^(1+|j|^σ)`, within one cell of
/// equality. The per-cube choice is a seeded permutation prefix, so masks
/// with the same seed are nested across increasing δ.
pub fn density_random_set(
    grid: &Grid,
    lattice: &CubeLattice,
    delta: f64,
    sigma: f64,
    seed: u64,
) -> Result<SensorSet> {
    check_delta_sigma(delta, sigma)?;
    let mut mask = vec![false; grid.npoints()];
    let mut clamped = Vec::new();
    for c in 0..lattice.n_cubes() {
        let pts = lattice.points(c);
        if pts.is_empty() {
            continue;
        }
        let target = required_density(delta, sigma, lattice.index_norm(c));
        let mut take = (target * pts.len() as f64).ceil() as usize;
        if take > pts.len() {
            take = pts.len();
            clamped.push(lattice.index(c));
        }
        if take == 0 {
            take = 1;
        }
        // per-cube stream keyed on (seed, j): stable under lattice iteration order
        let j = lattice.index(c);
        let key = fnv1a(
            seed.to_le_bytes()
                .into_iter()
                .chain((j[0] as u64).to_le_bytes())
                .chain((j[1] as u64).to_le_bytes()),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        let mut perm: Vec<usize> = pts.to_vec();
        perm.shuffle(&mut rng);
        for &p in &perm[..take] {
            mask[p] = true;
        }
    }
    Ok(SensorSet {
        mask,
        kind: SensorKind::DensityRandom,
        delta,
        sigma,
        side: lattice.side(),
        seed: Some(seed),
        grid_hash: grid_hash(grid),
        degenerate_cubes: Vec::new(),
        clamped_cubes: clamped,
    })
}

/// Same sub-region of relative volume ≥ δ in every cube.
pub fn thick_periodic_set(
    grid: &Grid,
    lattice: &CubeLattice,
    delta: f64,
    pattern: ThickPattern,
) -> Result<SensorSet> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", format!("δ must lie in (0,1), got {delta}")));
    }
    let mut mask = vec![false; grid.npoints()];
    let l = lattice.side();
    for c in 0..lattice.n_cubes() {
        let z = lattice.center(c);
        let low0 = z[0] - l / 2.0;
        let j = lattice.index(c);
        let flip = matches!(pattern, ThickPattern::Alternating) && (j[0] + j[1]).rem_euclid(2) == 1;
        for &p in lattice.points(c) {
            let x = grid.point(p)[0];
            let rel = (x - low0) / l;
            let inside = if flip { rel >= 1.0 - delta } else { rel < delta };
            if inside {
                mask[p] = true;
            }
        }
    }
    Ok(SensorSet {
        mask,
        kind: SensorKind::ThickPeriodic,
        delta,
        sigma: 0.0,
        side: l,
        seed: None,
        grid_hash: grid_hash(grid),
        degenerate_cubes: Vec::new(),
        clamped_cubes: Vec::new(),
    })
}

/// Per-cube density report of [`verify_density`].
#[derive(Debug, Clone, Serialize)]
pub struct CubeDensity {
    pub index: [i64; 2],
    pub measured: f64,
    pub required: f64,
    pub pass: bool,
}

/// Density verification report.
#[derive(Debug, Clone, Serialize)]
pub struct DensityReport {
    pub pass: bool,
    pub cubes: Vec<CubeDensity>,
    /// Ratio measured/required minimized over cubes: the effective margin.
    pub worst_margin: f64,
    /// Largest δ' such that every cube satisfies the (δ', σ) requirement —
    /// the effective density of the mask under the same σ.
    pub effective_delta: f64,
}

/// Measure `|Ω ∩ Λ_L(j)| / |Λ_L(j)|` per cube against `δ^(1+|j|^σ)`.
pub fn verify_density(
    sensor: &SensorSet,
    grid: &Grid,
    lattice: &CubeLattice,
) -> Result<DensityReport> {
    if sensor.mask.len() != grid.npoints() {
        return Err(invalid("sensor", "mask does not match the grid"));
    }
    let mut cubes = Vec::with_capacity(lattice.n_cubes());
    let mut pass = true;
    let mut worst = f64::INFINITY;
    let mut effective_delta = 1.0f64;
    for c in 0..lattice.n_cubes() {
        let pts = lattice.points(c);
        if pts.is_empty() {
            continue;
        }
        let active = pts.iter().filter(|&&p| sensor.mask[p]).count();
        let measured = active as f64 / pts.len() as f64;
        let required = required_density(sensor.delta, sensor.sigma, lattice.index_norm(c));
        let ok = measured + 1e-12 >= required;
        pass &= ok;
        worst = worst.min(measured / required);
        // invert measured = δ'^(1+|j|^σ) for the effective per-cube δ'
        let expo = density_exponent(lattice.index_norm(c), sensor.sigma);
        let eff = if measured > 0.0 { measured.powf(1.0 / expo) } else { 0.0 };
        effective_delta = effective_delta.min(eff);
        cubes.push(CubeDensity {
            index: lattice.index(c),
            measured,
            required,
            pass: ok,
        });
    }
    Ok(DensityReport {
        pass,
        cubes,
        worst_margin: worst,
        effective_delta,
    })
}

fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serialize a mask to the run-length-encoded text format.
///
/// Header lines carry the generating metadata at 17 significant digits
/// (lossless for f64); the body is `value:count` pairs over the row-major
/// cell order.
pub fn write_mask(path: &Path, sensor: &SensorSet) -> Result<()> {
    let mut out = String::new();
    out.push_str("speclab-mask v1\n");
    out.push_str(&format!("kind={}\n", sensor.kind.tag()));
    out.push_str(&format!("delta={}\n", fmt_f64(sensor.delta)));
    out.push_str(&format!("sigma={}\n", fmt_f64(sensor.sigma)));
    out.push_str(&format!("side={}\n", fmt_f64(sensor.side)));
    match sensor.seed {
        Some(s) => out.push_str(&format!("seed={s}\n")),
        None => out.push_str("seed=none\n"),
    }
    out.push_str(&format!("grid={:016x}\n", sensor.grid_hash));
    out.push_str(&format!("cells={}\n", sensor.mask.len()));
    out.push_str("rle=");
    let mut run_val = sensor.mask.first().copied().unwrap_or(false);
    let mut run_len = 0usize;
    let mut first = true;
    for &b in &sensor.mask {
        if b == run_val {
            run_len += 1;
        } else {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{}:{}", run_val as u8, run_len));
            first = false;
            run_val = b;
            run_len = 1;
        }
    }
    if run_len > 0 {
        if !first {
            out.push(' ');
        }
        out.push_str(&format!("{}:{}", run_val as u8, run_len));
    }
    out.push('\n');
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Parse a mask file back; the stored grid hash must match `grid`.
pub fn read_mask(path: &Path, grid: &Grid) -> Result<SensorSet> {
    let f = std::fs::File::open(path)?;
    let mut lines = BufReader::new(f).lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| Error::Io("mask file truncated".into()))
    };
    let header = next()?;
    if header.trim() != "speclab-mask v1" {
        return Err(Error::Io(format!("unknown mask format `{header}`")));
    }
    let mut kind = None;
    let mut delta = None;
    let mut sigma = None;
    let mut side = None;
    let mut seed = None;
    let mut gh = None;
    let mut cells = None;
    let rle = loop {
        let line = next()?;
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Io(format!("bad mask header line `{line}`")))?;
        match key {
            "kind" => {
                kind = Some(SensorKind::from_tag(value).ok_or_else(|| {
                    Error::Io(format!("unknown sensor kind `{value}`"))
                })?)
            }
            "delta" => delta = Some(value.parse::<f64>().map_err(|e| Error::Io(e.to_string()))?),
            "sigma" => sigma = Some(value.parse::<f64>().map_err(|e| Error::Io(e.to_string()))?),
            "side" => side = Some(value.parse::<f64>().map_err(|e| Error::Io(e.to_string()))?),
            "seed" => {
                seed = Some(if value == "none" {
                    None
                } else {
                    Some(value.parse::<u64>().map_err(|e| Error::Io(e.to_string()))?)
                })
            }
            "grid" => {
                gh = Some(u64::from_str_radix(value, 16).map_err(|e| Error::Io(e.to_string()))?)
            }
            "cells" => cells = Some(value.parse::<usize>().map_err(|e| Error::Io(e.to_string()))?),
            "rle" => break value.to_string(),
            other => return Err(Error::Io(format!("unknown mask header key `{other}`"))),
        }
    };
    let (Some(kind), Some(delta), Some(sigma), Some(side), Some(seed), Some(gh), Some(cells)) =
        (kind, delta, sigma, side, seed, gh, cells)
    else {
        return Err(Error::Io("mask header incomplete".into()));
    };
    if gh != grid_hash(grid) {
        return Err(Error::Io(
            "mask grid hash does not match the target grid".into(),
        ));
    }
    if cells != grid.npoints() {
        return Err(Error::Io("mask cell count does not match the grid".into()));
    }
    let mut mask = Vec::with_capacity(cells);
    for run in rle.split_whitespace() {
        let (v, c) = run
            .split_once(':')
            .ok_or_else(|| Error::Io(format!("bad rle run `{run}`")))?;
        let val = match v {
            "0" => false,
            "1" => true,
            _ => return Err(Error::Io(format!("bad rle value `{v}`"))),
        };
        let count: usize = c.parse().map_err(|e: std::num::ParseIntError| Error::Io(e.to_string()))?;
        mask.extend(std::iter::repeat(val).take(count));
    }
    if mask.len() != cells {
        return Err(Error::Io(format!(
            "rle expands to {} cells, expected {cells}",
            mask.len()
        )));
    }
    Ok(SensorSet {
        mask,
        kind,
        delta,
        sigma,
        side,
        seed,
        grid_hash: gh,
        degenerate_cubes: Vec::new(),
        clamped_cubes: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, cube_lattice};

    #[test]
    fn decaying_ball_radii_conventions() {
        // at j=0 the exponent is 1 (|0|^σ := 0) → radius δL; elsewhere with
        // σ=0 the exponent is 2 → radius δ²L
        let grid = build_grid(1, 4.0, 401).unwrap();
        let lat = cube_lattice(&grid, 1.0).unwrap();
        let s = decaying_ball_set(&grid, &lat, 0.5, 0.0).unwrap();
        let rep = verify_density(&s, &grid, &lat).unwrap();
        for cd in &rep.cubes {
            // interval of radius r captures ~2r/L of the cube
            let r = if cd.index == [0, 0] { 0.5 } else { 0.25 };
            assert!(
                (cd.measured - 2.0 * r).abs() < 0.05,
                "cube {:?}: measured {} expected ~{}",
                cd.index,
                cd.measured,
                2.0 * r
            );
        }
    }

    #[test]
    fn decaying_ball_paper_example_radius() {
        // δ=1/2, σ=1/2, |j|=4 → radius 2^{-(1+2)} = 1/8
        let r = required_density(0.5, 0.5, 4.0);
        assert!((r - 0.125).abs() < 1e-15);
    }

    #[test]
    fn decaying_ball_degenerate_cubes_flagged() {
        // σ>0 shrinks distant balls below the resolution of a coarse grid
        // (5 cells per cube puts the cube centers off the grid)
        let grid = build_grid(1, 8.0, 81).unwrap();
        let lat = cube_lattice(&grid, 1.0).unwrap();
        let s = decaying_ball_set(&grid, &lat, 0.1, 0.9).unwrap();
        assert!(!s.degenerate_cubes.is_empty());
        // every cube still contributes at least one point
        let rep = verify_density(&s, &grid, &lat).unwrap();
        for cd in rep.cubes {
            assert!(cd.measured > 0.0);
        }
    }

    #[test]
    fn density_random_meets_target_and_is_deterministic() {
        let grid = build_grid(1, 4.0, 513).unwrap();
        let lat = cube_lattice(&grid, 1.0).unwrap();
        let a = density_random_set(&grid, &lat, 0.5, 0.3, 42).unwrap();
        let rep = verify_density(&a, &grid, &lat).unwrap();
        assert!(rep.pass, "construction guarantees density");
        let b = density_random_set(&grid, &lat, 0.5, 0.3, 42).unwrap();
        assert_eq!(a.mask, b.mask, "same seed, same mask");
        let c = density_random_set(&grid, &lat, 0.5, 0.3, 43).unwrap();
        assert_ne!(a.mask, c.mask, "different seed, different mask");
    }

    #[test]
    fn density_random_nested_in_delta() {
        let grid = build_grid(1, 4.0, 513).unwrap();
        let lat = cube_lattice(&grid, 1.0).unwrap();
        let small = density_random_set(&grid, &lat, 0.3, 0.0, 7).unwrap();
        let big = density_random_set(&grid, &lat, 0.6, 0.0, 7).unwrap();
        for i in 0..small.mask.len() {
            assert!(!small.mask[i] || big.mask[i], "masks nested across δ");
        }
    }

    #[test]
    fn density_random_minimum_count() {
        // δ^{1+|j|^0}·64 = 16 cells for off-center cubes at δ=1/2
        let grid = build_grid(1, 4.0, 513).unwrap(); // 64 cells per unit cube
        let lat = cube_lattice(&grid, 1.0).unwrap();
        let s = density_random_set(&grid, &lat, 0.5, 0.0, 1).unwrap();
        for c in 0..lat.n_cubes() {
            let active = lat.points(c).iter().filter(|&&p| s.mask[p]).count();
            let expect = if lat.index(c) == [0, 0] { 33 } else { 17 }; // ceil of target incl. shared edge point
            assert!(active >= expect - 1, "cube {c} has {active}");
        }
    }

    #[test]
    fn thick_set_half_cubes() {
        let grid = build_grid(1, 2.0, 401).unwrap();
        let lat = cube_lattice(&grid, 1.0).unwrap();
        let s = thick_periodic_set(&grid, &lat, 0.5, ThickPattern::LeftSlab).unwrap();
        let rep = verify_density(&s, &grid, &lat).unwrap();
        for cd in &rep.cubes {
            assert!(cd.measured >= 0.5 - 1.0 / 100.0, "density ≥ δ − one cell");
        }
        // translation invariance of the density across cubes
        let d0 = rep.cubes[0].measured;
        for cd in &rep.cubes {
            assert!((cd.measured - d0).abs() < 2.0 / 100.0);
        }
        // δ = 1 (full space) is rejected
        assert!(thick_periodic_set(&grid, &lat, 1.0, ThickPattern::LeftSlab).is_err());
    }

    #[test]
    fn thick_sets_nested_in_delta() {
        let grid = build_grid(1, 2.0, 401).unwrap();
        let lat = cube_lattice(&grid, 1.0).unwrap();
        let small = thick_periodic_set(&grid, &lat, 0.25, ThickPattern::LeftSlab).unwrap();
        let big = thick_periodic_set(&grid, &lat, 0.5, ThickPattern::LeftSlab).unwrap();
        for i in 0..small.mask.len() {
            assert!(!small.mask[i] || big.mask[i]);
        }
    }

    #[test]
    fn sigma_positive_volume_bounded() {
        // Σ_j δ^(1+|j|^σ) L^n converges for σ>0: partial sums go Cauchy
        let delta: f64 = 0.5;
        let sigma = 0.5;
        let partial = |jmax: i64| -> f64 {
            (-jmax..=jmax)
                .map(|j| required_density(delta, sigma, (j.abs()) as f64))
                .sum()
        };
        let s1 = partial(200);
        let s2 = partial(400);
        let s3 = partial(800);
        let s4 = partial(1600);
        assert!((s2 - s1) > (s3 - s2) && (s3 - s2) > (s4 - s3), "increments shrink");
        assert!((s4 - s3).abs() < 1e-5, "tail is Cauchy-small, got {}", s4 - s3);
    }

    #[test]
    fn decaying_balls_report_effective_delta() {
        let grid = build_grid(1, 4.0, 801).unwrap();
        let lat = cube_lattice(&grid, 1.0).unwrap();
        let s = decaying_ball_set(&grid, &lat, 0.5, 0.0).unwrap();
        let rep = verify_density(&s, &grid, &lat).unwrap();
        // a ball of radius δ²L covers fraction 2δ² of a 1D cube; effective
        // δ' = √(2δ²)·…: just check it is reported in a sane range
        assert!(rep.effective_delta > 0.0 && rep.effective_delta < 1.0);
    }

    #[test]
    fn rle_roundtrip() {
        let grid = build_grid(2, 2.0, 41).unwrap();
        let lat = cube_lattice(&grid, 1.0).unwrap();
        let s = density_random_set(&grid, &lat, 0.4, 0.2, 99).unwrap();
        let path = std::env::temp_dir().join("speclab-mask-test.rle");
        write_mask(&path, &s).unwrap();
        let t = read_mask(&path, &grid).unwrap();
        assert_eq!(s.mask, t.mask);
        assert_eq!(s.delta, t.delta);
        assert_eq!(s.sigma, t.sigma);
        assert_eq!(s.seed, t.seed);
        assert_eq!(s.kind, t.kind);
        // wrong grid refuses
        let grid2 = build_grid(2, 2.0, 43).unwrap();
        assert!(read_mask(&path, &grid2).is_err());
        std::fs::remove_file(&path).ok();
    }
}
