//! Truncated spatial grids, the cube lattice, quadrature, and potential
//! families.
//!
//! The box `[-half_width, half_width]^dim` stands in for the whole space:
//! eigenfunctions below the spectral cutoff decay exponentially, so the
//! truncation error is controlled empirically via
//! [`crate::schrodinger::exterior_mass`]. Quadrature is the rectangle rule
//! with flat weight `spacing^dim`, which keeps Gram matrices exactly
//! symmetric and makes discrete orthonormality an exact matrix identity.

use crate::error::{invalid, Result};
use serde::Serialize;

/// Uniform tensor grid on `[-half_width, half_width]^dim`, `dim ∈ {1,2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points_per_axis: usize,
    spacing: f64,
}

/// Scalar field sampled at every grid point, row-major over axes.
pub type Field = Vec<f64>;

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points_per_axis(&self) -> usize {
        self.points_per_axis
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Total number of grid points, `points_per_axis^dim`.
    pub fn npoints(&self) -> usize {
        self.points_per_axis.pow(self.dim as u32)
    }

    /// Quadrature weight per point, `spacing^dim`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    /// Coordinate along one axis for index `i`.
    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing
    }

    /// All axis coordinates.
    pub fn axis(&self) -> Vec<f64> {
        (0..self.points_per_axis).map(|i| self.axis_coord(i)).collect()
    }

    /// Coordinates of the flat point index. The second entry is 0 in 1D.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        match self.dim {
            1 => [self.axis_coord(idx), 0.0],
            _ => {
                let n = self.points_per_axis;
                [self.axis_coord(idx / n), self.axis_coord(idx % n)]
            }
        }
    }

    /// Euclidean distance of a grid point from the origin.
    pub fn radius(&self, idx: usize) -> f64 {
        let p = self.point(idx);
        (p[0] * p[0] + p[1] * p[1]).sqrt()
    }

    /// True if the point lies on the box boundary (Dirichlet layer).
    pub fn is_boundary(&self, idx: usize) -> bool {
        let n = self.points_per_axis;
        match self.dim {
            1 => idx == 0 || idx == n - 1,
            _ => {
                let (ix, iy) = (idx / n, idx % n);
                ix == 0 || ix == n - 1 || iy == 0 || iy == n - 1
            }
        }
    }

    /// Number of interior points per axis.
    pub fn interior_per_axis(&self) -> usize {
        self.points_per_axis - 2
    }

    /// Total number of interior points.
    pub fn interior_npoints(&self) -> usize {
        self.interior_per_axis().pow(self.dim as u32)
    }

    /// Flat grid index of an interior index (row-major over interior axes).
    pub fn interior_to_grid(&self, k: usize) -> usize {
        let n = self.points_per_axis;
        let m = n - 2;
        match self.dim {
            1 => k + 1,
            _ => {
                let (ix, iy) = (k / m, k % m);
                (ix + 1) * n + (iy + 1)
            }
        }
    }

    /// Centered-difference gradient, one-sided at the box boundary.
    /// Returns one field per axis.
    pub fn gradient(&self, values: &[f64]) -> Vec<Field> {
        let n = self.points_per_axis;
        let h = self.spacing;
        let mut out = Vec::with_capacity(self.dim);
        match self.dim {
            1 => {
                let mut g = vec![0.0; n];
                for i in 0..n {
                    g[i] = if i == 0 {
                        (values[1] - values[0]) / h
                    } else if i == n - 1 {
                        (values[n - 1] - values[n - 2]) / h
                    } else {
                        (values[i + 1] - values[i - 1]) / (2.0 * h)
                    };
                }
                out.push(g);
            }
            _ => {
                let idx = |ix: usize, iy: usize| ix * n + iy;
                let mut gx = vec![0.0; n * n];
                let mut gy = vec![0.0; n * n];
                for ix in 0..n {
                    for iy in 0..n {
                        gx[idx(ix, iy)] = if ix == 0 {
                            (values[idx(1, iy)] - values[idx(0, iy)]) / h
                        } else if ix == n - 1 {
                            (values[idx(n - 1, iy)] - values[idx(n - 2, iy)]) / h
                        } else {
                            (values[idx(ix + 1, iy)] - values[idx(ix - 1, iy)]) / (2.0 * h)
                        };
                        gy[idx(ix, iy)] = if iy == 0 {
                            (values[idx(ix, 1)] - values[idx(ix, 0)]) / h
                        } else if iy == n - 1 {
                            (values[idx(ix, n - 1)] - values[idx(ix, n - 2)]) / h
                        } else {
                            (values[idx(ix, iy + 1)] - values[idx(ix, iy - 1)]) / (2.0 * h)
                        };
                    }
                }
                out.push(gx);
                out.push(gy);
            }
        }
        out
    }
}

/// Build a grid; `dim ∈ {1,2}`, `points_per_axis ≥ 3`, `half_width > 0`.
pub fn build_grid(dim: usize, half_width: f64, points_per_axis: usize) -> Result<Grid> {
    if dim != 1 && dim != 2 {
        return Err(invalid("dim", format!("unsupported dimension {dim}, expected 1 or 2")));
    }
    if points_per_axis < 3 {
        return Err(invalid(
            "points_per_axis",
            format!("need at least 3 points, got {points_per_axis}"),
        ));
    }
    if !(half_width > 0.0) || !half_width.is_finite() {
        return Err(invalid("half_width", format!("must be positive, got {half_width}")));
    }
    let spacing = 2.0 * half_width / (points_per_axis as f64 - 1.0);
    Ok(Grid {
        dim,
        half_width,
        points_per_axis,
        spacing,
    })
}

/// Discrete L² norm `sqrt(Σ_masked v² spacing^dim)`.
///
/// An empty mask gives 0; whether that is an error is the caller's call.
pub fn quadrature_norm(grid: &Grid, values: &[f64], mask: Option<&[bool]>) -> Result<f64> {
    if values.len() != grid.npoints() {
        return Err(invalid(
            "values",
            format!("field has {} entries, grid has {}", values.len(), grid.npoints()),
        ));
    }
    if let Some(m) = mask {
        if m.len() != grid.npoints() {
            return Err(invalid(
                "mask",
                format!("mask has {} entries, grid has {}", m.len(), grid.npoints()),
            ));
        }
    }
    let mut s = 0.0;
    match mask {
        Some(m) => {
            for (v, &keep) in values.iter().zip(m) {
                if keep {
                    s += v * v;
                }
            }
        }
        None => {
            for v in values {
                s += v * v;
            }
        }
    }
    Ok((s * grid.cell_volume()).sqrt())
}

/// Cube lattice `Λ_L(j)` covering the box.
///
/// Cubes are half-open, anchored at the low corner of the box:
/// per axis, cube slot `k` spans `[-w + k·L, -w + (k+1)·L)` and carries the
/// recentered integer index `j = k - floor(count/2)`, so on `[-2,2]` with
/// `L = 1` the indices run over `{-2,-1,0,1}`. The last cube may extend past
/// the box (boundary remainder); the point at `x = +w` is assigned to it.
/// `|j|` in density exponents is the Euclidean norm of the integer index,
/// with the convention `|0|^σ := 0`.
#[derive(Debug, Clone)]
pub struct CubeLattice {
    side: f64,
    requested_side: f64,
    snapped: bool,
    offsets: [i64; 2],
    indices: Vec<[i64; 2]>,
    points_in_cube: Vec<Vec<usize>>,
    dim: usize,
    low: f64,
}

impl CubeLattice {
    /// Side length actually used (after snapping to grid planes).
    pub fn side(&self) -> f64 {
        self.side
    }

    pub fn requested_side(&self) -> f64 {
        self.requested_side
    }

    /// True when the requested side was not commensurate with the grid.
    pub fn snapped(&self) -> bool {
        self.snapped
    }

    pub fn n_cubes(&self) -> usize {
        self.indices.len()
    }

    /// Integer index `j` of cube slot `c`.
    pub fn index(&self, c: usize) -> [i64; 2] {
        self.indices[c]
    }

    /// All integer indices.
    pub fn indices(&self) -> &[[i64; 2]] {
        &self.indices
    }

    /// Euclidean norm of the integer index of cube `c`.
    pub fn index_norm(&self, c: usize) -> f64 {
        let j = self.indices[c];
        ((j[0] * j[0] + j[1] * j[1]) as f64).sqrt()
    }

    /// Geometric center `z_j` of cube `c`.
    pub fn center(&self, c: usize) -> [f64; 2] {
        let j = self.indices[c];
        let mut z = [0.0; 2];
        for a in 0..self.dim {
            let k = j[a] + self.offsets[a];
            z[a] = self.low + (k as f64 + 0.5) * self.side;
        }
        z
    }

    /// Grid point indices belonging to cube `c`.
    pub fn points(&self, c: usize) -> &[usize] {
        &self.points_in_cube[c]
    }
}

/// Partition the grid box into a cube lattice of the given side.
///
/// A side not commensurate with the grid spacing is snapped to the nearest
/// grid plane and reported via [`CubeLattice::snapped`], not treated as an
/// error. A side at least as large as the box yields a single cube.
pub fn cube_lattice(grid: &Grid, side: f64) -> Result<CubeLattice> {
    if !(side > 0.0) || !side.is_finite() {
        return Err(invalid("side", format!("must be positive, got {side}")));
    }
    let h = grid.spacing();
    let cells = (side / h).round().max(1.0);
    let snapped_side = cells * h;
    let snapped = (snapped_side - side).abs() > 1e-12 * side.max(1.0);
    let width = 2.0 * grid.half_width();
    let count = ((width / snapped_side) - 1e-9).ceil().max(1.0) as usize;
    let dim = grid.dim();
    let counts = [count, if dim == 2 { count } else { 1 }];
    let offsets = [(count / 2) as i64, if dim == 2 { (count / 2) as i64 } else { 0 }];
    let low = -grid.half_width();

    let n_cubes = counts[0] * counts[1];
    let mut indices = Vec::with_capacity(n_cubes);
    for kx in 0..counts[0] {
        for ky in 0..counts[1] {
            indices.push([
                kx as i64 - offsets[0],
                if dim == 2 { ky as i64 - offsets[1] } else { 0 },
            ]);
        }
    }

    let slot = |x: f64| -> usize {
        let k = ((x - low) / snapped_side).floor() as i64;
        k.clamp(0, count as i64 - 1) as usize
    };
    let mut points_in_cube = vec![Vec::new(); n_cubes];
    for idx in 0..grid.npoints() {
        let p = grid.point(idx);
        let c = match dim {
            1 => slot(p[0]),
            _ => slot(p[0]) * counts[1] + slot(p[1]),
        };
        points_in_cube[c].push(idx);
    }

    Ok(CubeLattice {
        side: snapped_side,
        requested_side: side,
        snapped,
        offsets,
        indices,
        points_in_cube,
        dim,
        low,
    })
}

/// Which structural assumption a potential is validated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Assumption {
    /// Polynomial growth `c₁|x|^β₁ - C⁰ ≤ V` with `|V| + |DV| ≤ c₂(|x|+1)^β₂`.
    GrowthA,
    /// Bounded potential, `sup |V| ≤ C⁰`.
    BoundedB,
}

/// Kind-specific shape of the potential.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialKind {
    /// `V(x) = |x|^β₁` exactly.
    PolynomialRadial,
    /// `V(x) = Σ_a weight_a |x_a|^(exponent_a)`, one term per axis.
    PolynomialAniso { weights: Vec<f64>, exponents: Vec<f64> },
    /// `V(x) = -depth / cosh²(|x| / width)`.
    BoundedWell { depth: f64, width: f64 },
    /// Values tabulated on a specific grid (row-major).
    Tabulated { values: Vec<f64> },
}

/// Parameterized potential with its assumption constants.
///
/// The constants `(c1, c2, c_zero, beta1, beta2, r_lipschitz)` are the
/// claimed validation constants; [`verify_assumption`] checks them per grid
/// point rather than trusting them.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential {
    pub kind: PotentialKind,
    pub beta1: f64,
    pub beta2: f64,
    pub c1: f64,
    pub c2: f64,
    /// The constant `C⁰`: growth offset under A, sup bound under B.
    pub c_zero: f64,
    /// Lipschitz-exception radius: the gradient bound is skipped on `|x| < R`.
    pub r_lipschitz: f64,
}

impl Potential {
    /// `V(x) = |x|^β₁` with default assumption-A constants
    /// `c₁ = 1, C⁰ = 0, c₂ = β₁ + 1, β₂ = β₁`.
    pub fn polynomial_radial(beta1: f64) -> Self {
        Potential {
            kind: PotentialKind::PolynomialRadial,
            beta1,
            beta2: beta1,
            c1: 1.0,
            c2: beta1 + 1.0,
            c_zero: 0.0,
            r_lipschitz: if beta1 < 1.0 { 0.5 } else { 0.0 },
        }
    }

    /// Pöschl–Teller style well `-depth / cosh²(x / width)`.
    pub fn bounded_well(depth: f64, width: f64) -> Self {
        Potential {
            kind: PotentialKind::BoundedWell { depth, width },
            beta1: 0.0,
            beta2: 0.0,
            c1: 0.0,
            c2: 0.0,
            c_zero: depth.abs(),
            r_lipschitz: 0.0,
        }
    }

    /// Identically zero potential (free Dirichlet box), assumption B.
    pub fn free() -> Self {
        Potential {
            kind: PotentialKind::Tabulated { values: Vec::new() },
            beta1: 0.0,
            beta2: 0.0,
            c1: 0.0,
            c2: 0.0,
            c_zero: 0.0,
            r_lipschitz: 0.0,
        }
    }

    pub fn assumption(&self) -> Assumption {
        match self.kind {
            PotentialKind::PolynomialRadial | PotentialKind::PolynomialAniso { .. } => {
                Assumption::GrowthA
            }
            PotentialKind::BoundedWell { .. } | PotentialKind::Tabulated { .. } => {
                Assumption::BoundedB
            }
        }
    }

    /// Pointwise value for analytic kinds. `Tabulated` is only defined
    /// through [`eval_potential`].
    fn value_at(&self, p: [f64; 2]) -> f64 {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        match &self.kind {
            PotentialKind::PolynomialRadial => r.powf(self.beta1),
            PotentialKind::PolynomialAniso { weights, exponents } => weights
                .iter()
                .zip(exponents)
                .zip(p.iter())
                .map(|((w, e), x)| w * x.abs().powf(*e))
                .sum(),
            PotentialKind::BoundedWell { depth, width } => {
                let c = (r / width).cosh();
                -depth / (c * c)
            }
            PotentialKind::Tabulated { .. } => 0.0,
        }
    }
}

/// Sample the potential at every grid point.
pub fn eval_potential(potential: &Potential, grid: &Grid) -> Result<Field> {
    match &potential.kind {
        PotentialKind::Tabulated { values } => {
            if values.is_empty() {
                return Ok(vec![0.0; grid.npoints()]);
            }
            if values.len() != grid.npoints() {
                return Err(invalid(
                    "potential.values",
                    format!("tabulated {} entries, grid has {}", values.len(), grid.npoints()),
                ));
            }
            Ok(values.clone())
        }
        PotentialKind::PolynomialAniso { weights, exponents } => {
            if weights.len() != grid.dim() || exponents.len() != grid.dim() {
                return Err(invalid(
                    "potential.params",
                    format!(
                        "anisotropic potential has {} terms, grid dim is {}",
                        weights.len(),
                        grid.dim()
                    ),
                ));
            }
            Ok((0..grid.npoints()).map(|i| potential.value_at(grid.point(i))).collect())
        }
        _ => Ok((0..grid.npoints()).map(|i| potential.value_at(grid.point(i))).collect()),
    }
}

/// Worst offending point of one assumption check.
#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub check: String,
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Report of [`verify_assumption`]; report-only, never an error.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub assumption: Assumption,
    pub pass: bool,
    pub n_checked: usize,
    pub n_violations: usize,
    /// Worst violation by margin, when any.
    pub worst: Option<Violation>,
}

/// Check the assumption constants per grid point.
///
/// Under A: `c₁|x|^β₁ - C⁰ ≤ V(x)` everywhere and
/// `|V| + |DV| ≤ c₂(|x|+1)^β₂` with `DV` by centered differences, skipping
/// the ball `|x| < R` where the Lipschitz bound is not claimed.
/// Under B: `sup |V| ≤ C⁰`.
pub fn verify_assumption(potential: &Potential, grid: &Grid) -> Result<AssumptionReport> {
    let v = eval_potential(potential, grid)?;
    let assumption = potential.assumption();
    let mut n_violations = 0usize;
    let mut n_checked = 0usize;
    let mut worst: Option<Violation> = None;
    let record = |check: &str, point: [f64; 2], lhs: f64, rhs: f64, worst: &mut Option<Violation>| {
        let margin = lhs - rhs;
        let beat = worst.as_ref().map_or(true, |w| margin > w.lhs - w.rhs);
        if beat {
            *worst = Some(Violation {
                check: check.to_string(),
                point: point.to_vec(),
                lhs,
                rhs,
            });
        }
    };

    match assumption {
        Assumption::GrowthA => {
            let grads = grid.gradient(&v);
            for i in 0..grid.npoints() {
                let p = grid.point(i);
                let r = grid.radius(i);
                // Lower growth bound.
                n_checked += 1;
                let lhs = potential.c1 * r.powf(potential.beta1) - potential.c_zero;
                if lhs > v[i] + 1e-12 * (1.0 + v[i].abs()) {
                    n_violations += 1;
                    record("growth c1|x|^b1 - C0 <= V", p, lhs, v[i], &mut worst);
                }
                // Upper bound with gradient, outside the exception ball.
                if r >= potential.r_lipschitz && !grid.is_boundary(i) {
                    n_checked += 1;
                    let dv: f64 = grads.iter().map(|g| g[i] * g[i]).sum::<f64>().sqrt();
                    let lhs = v[i].abs() + dv;
                    let rhs = potential.c2 * (r + 1.0).powf(potential.beta2);
                    if lhs > rhs * (1.0 + 1e-12) {
                        n_violations += 1;
                        record("|V| + |DV| <= c2(|x|+1)^b2", p, lhs, rhs, &mut worst);
                    }
                }
            }
        }
        Assumption::BoundedB => {
            for i in 0..grid.npoints() {
                n_checked += 1;
                let lhs = v[i].abs();
                if lhs > potential.c_zero * (1.0 + 1e-12) + 1e-300 {
                    n_violations += 1;
                    record("|V| <= C0", grid.point(i), lhs, potential.c_zero, &mut worst);
                }
            }
        }
    }

    Ok(AssumptionReport {
        assumption,
        pass: n_violations == 0,
        n_checked,
        n_violations,
        worst: if n_violations > 0 { worst } else { None },
    })
}
