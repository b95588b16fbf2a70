//! Assembly of `H = -Δ_h + V` with Dirichlet boundary, eigensolves up to a
//! cutoff, spectral projections, and decay/truncation diagnostics.
//!
//! The operator acts on interior grid points with the standard 3-point
//! (1D) / 5-point (2D) Laplacian stencil. Eigenvectors are returned as
//! full-grid fields, zero on the boundary layer, orthonormal under the
//! quadrature inner product `⟨f,g⟩ = Σ f g spacing^dim`.
//!
//! Eigensolve strategy: a dense symmetric solve up to [`DENSE_THRESHOLD`]
//! unknowns, shift-invert Lanczos with full reorthogonalization above it.
//! The shift sits just below `min V`, which bounds the spectrum from below
//! (the Laplacian part is positive semidefinite), so the shifted operator
//! is positive definite and admits a banded Cholesky factorization.
//! Completeness of the returned set (no skipped degenerate copies) is
//! verified against a Sylvester inertia count and repaired by deflated
//! restarts when needed.

use crate::domain::{eval_potential, Field, Grid, Potential};
use crate::error::{invalid, Error, Result};
use crate::linalg::SymBanded;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Largest interior dimension handled by the dense symmetric eigensolver.
/// Above this the shift-invert Lanczos path takes over.
pub const DENSE_THRESHOLD: usize = 1200;

/// Relative eigenpair residual accepted when locking a converged pair.
const LOCK_TOL: f64 = 1e-9;

/// Relative residual bound promised by [`EigenBasis`].
const RESIDUAL_BOUND: f64 = 1e-6;

/// Deterministic seed for Lanczos start vectors.
const LANCZOS_SEED: u64 = 0x5eed_1a4c_05b1;

/// Sparse symmetric discretization of `H = -Δ_h + V` on interior points.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    grid: Grid,
    /// Potential at every grid point.
    v_full: Field,
    /// Potential at interior points, in interior ordering.
    v_interior: Vec<f64>,
    v_min: f64,
}

impl DiscreteOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of interior unknowns.
    pub fn n(&self) -> usize {
        self.grid.interior_npoints()
    }

    /// Minimum of `V` over the grid; Gershgorin lower bound for the spectrum.
    pub fn v_min(&self) -> f64 {
        self.v_min
    }

    pub fn potential_values(&self) -> &[f64] {
        &self.v_full
    }

    /// `y = H x` on interior points (matrix-free stencil).
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let h2 = self.grid.spacing() * self.grid.spacing();
        match self.grid.dim() {
            1 => {
                let n = self.n();
                for i in 0..n {
                    let mut s = (2.0 / h2 + self.v_interior[i]) * x[i];
                    if i > 0 {
                        s -= x[i - 1] / h2;
                    }
                    if i + 1 < n {
                        s -= x[i + 1] / h2;
                    }
                    y[i] = s;
                }
            }
            _ => {
                let m = self.grid.interior_per_axis();
                for ix in 0..m {
                    for iy in 0..m {
                        let i = ix * m + iy;
                        let mut s = (4.0 / h2 + self.v_interior[i]) * x[i];
                        if iy > 0 {
                            s -= x[i - 1] / h2;
                        }
                        if iy + 1 < m {
                            s -= x[i + 1] / h2;
                        }
                        if ix > 0 {
                            s -= x[i - m] / h2;
                        }
                        if ix + 1 < m {
                            s -= x[i + m] / h2;
                        }
                        y[i] = s;
                    }
                }
            }
        }
    }

    /// Banded copy of `H + shift·I`.
    pub fn to_banded(&self, shift: f64) -> SymBanded {
        let h2 = self.grid.spacing() * self.grid.spacing();
        let n = self.n();
        match self.grid.dim() {
            1 => {
                let mut a = SymBanded::zeros(n, 1);
                for i in 0..n {
                    a.set(0, i, 2.0 / h2 + self.v_interior[i] + shift);
                    if i + 1 < n {
                        a.set(1, i, -1.0 / h2);
                    }
                }
                a
            }
            _ => {
                let m = self.grid.interior_per_axis();
                let mut a = SymBanded::zeros(n, m);
                for ix in 0..m {
                    for iy in 0..m {
                        let i = ix * m + iy;
                        a.set(0, i, 4.0 / h2 + self.v_interior[i] + shift);
                        if iy + 1 < m {
                            a.set(1, i, -1.0 / h2);
                        }
                        if ix + 1 < m {
                            a.set(m, i, -1.0 / h2);
                        }
                    }
                }
                a
            }
        }
    }
}

/// Assemble the discrete operator for a grid and potential.
pub fn assemble(grid: &Grid, potential: &Potential) -> Result<DiscreteOperator> {
    let v_full = eval_potential(potential, grid)?;
    let v_interior: Vec<f64> = (0..grid.interior_npoints())
        .map(|k| v_full[grid.interior_to_grid(k)])
        .collect();
    let v_min = v_full.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(DiscreteOperator {
        grid: grid.clone(),
        v_full,
        v_interior,
        v_min,
    })
}

/// What part of the spectrum an eigensolve should deliver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigenRequest {
    /// All eigenpairs with `λ_k ≤ lambda_max`.
    LambdaMax(f64),
    /// The lowest `count` eigenpairs.
    Count(usize),
}

/// Orthonormal eigenpairs of the discrete operator up to a cutoff.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    grid: Grid,
    eigenvalues: Vec<f64>,
    /// Full-grid eigenfields, one column per mode, quadrature-orthonormal.
    modes: DMatrix<f64>,
    request: EigenRequest,
    /// Spectrum is complete up to this value.
    lambda_complete: f64,
    grid_hash: u64,
    potential_hash: u64,
}

impl EigenBasis {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    /// Full-grid field of mode `k`.
    pub fn mode(&self, k: usize) -> Vec<f64> {
        self.modes.column(k).iter().cloned().collect()
    }

    pub fn modes(&self) -> &DMatrix<f64> {
        &self.modes
    }

    pub fn request(&self) -> EigenRequest {
        self.request
    }

    /// The basis contains every eigenvalue at or below this value.
    pub fn lambda_complete(&self) -> f64 {
        self.lambda_complete
    }

    pub fn grid_hash(&self) -> u64 {
        self.grid_hash
    }

    pub fn potential_hash(&self) -> u64 {
        self.potential_hash
    }

    /// Number of modes with `λ_k ≤ lambda`.
    pub fn count_below(&self, lambda: f64) -> usize {
        self.eigenvalues.iter().filter(|&&l| l <= lambda).count()
    }

    /// Reconstruct the grid field `Σ α_k φ_k`.
    pub fn synthesize(&self, element: &SpectralElement) -> Field {
        let v = &self.modes * &element.coeffs;
        v.iter().cloned().collect()
    }

    /// Quadrature inner products `⟨φ_k, f⟩` for every mode.
    pub fn coefficients_of(&self, f: &[f64]) -> DVector<f64> {
        let fv = DVector::from_column_slice(f);
        self.modes.transpose() * fv * self.grid.cell_volume()
    }

    /// Random unit element of `Ran P_lambda`, Gaussian over the active modes.
    pub fn random_element<R: Rng>(&self, lambda: f64, rng: &mut R) -> SpectralElement {
        let k = self.count_below(lambda);
        let mut coeffs = DVector::zeros(self.n_modes());
        for i in 0..k {
            coeffs[i] = standard_normal(rng);
        }
        let n = coeffs.norm();
        if n > 0.0 {
            coeffs /= n;
        } else if k > 0 {
            coeffs[0] = 1.0;
        }
        SpectralElement { coeffs }
    }

    pub(crate) fn from_parts(
        grid: Grid,
        eigenvalues: Vec<f64>,
        modes: DMatrix<f64>,
        request: EigenRequest,
        lambda_complete: f64,
        grid_hash: u64,
        potential_hash: u64,
    ) -> Self {
        EigenBasis {
            grid,
            eigenvalues,
            modes,
            request,
            lambda_complete,
            grid_hash,
            potential_hash,
        }
    }
}

/// Element of the spectral subspace: coefficients against the basis modes.
///
/// Parseval holds exactly under the quadrature inner product:
/// `‖Σ α_k φ_k‖² = Σ α_k²`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralElement {
    pub coeffs: DVector<f64>,
}

impl SpectralElement {
    pub fn from_coeffs(coeffs: Vec<f64>) -> Self {
        SpectralElement {
            coeffs: DVector::from_vec(coeffs),
        }
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }

    pub fn n_modes(&self) -> usize {
        self.coeffs.len()
    }
}

pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; the second variate is discarded.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Solve for eigenpairs per the request. See module docs for the strategy.
pub fn eigensolve(op: &DiscreteOperator, request: EigenRequest) -> Result<EigenBasis> {
    eigensolve_with_threshold(op, request, DENSE_THRESHOLD)
}

/// Eigensolve with an explicit dense/iterative crossover, so the two paths
/// can be cross-checked against each other.
pub fn eigensolve_with_threshold(
    op: &DiscreteOperator,
    request: EigenRequest,
    dense_threshold: usize,
) -> Result<EigenBasis> {
    let n = op.n();
    let want = match request {
        EigenRequest::Count(c) => {
            if c == 0 || c > n {
                return Err(invalid(
                    "request.count",
                    format!("count {c} outside 1..={n} (matrix dimension)"),
                ));
            }
            c
        }
        EigenRequest::LambdaMax(l) => {
            if !l.is_finite() {
                return Err(invalid("request.lambda_max", "must be finite"));
            }
            0 // resolved below
        }
    };

    let (values, vectors) = if n <= dense_threshold {
        dense_eigs(op, request, want)?
    } else {
        lanczos_eigs(op, request, want)?
    };

    build_basis(op, request, values, vectors)
}

/// Dense path: full symmetric eigendecomposition, then select.
fn dense_eigs(
    op: &DiscreteOperator,
    request: EigenRequest,
    want: usize,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let dense = op.to_banded(0.0).to_dense();
    let eig = dense.symmetric_eigen();
    let mut order: Vec<usize> = (0..op.n()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let take = match request {
        EigenRequest::Count(_) => want,
        EigenRequest::LambdaMax(l) => order
            .iter()
            .take_while(|&&i| eig.eigenvalues[i] <= l)
            .count(),
    };
    if take == 0 {
        return Err(invalid("request.lambda_max", "no eigenvalues at or below the cutoff"));
    }
    let values: Vec<f64> = order[..take].iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors: Vec<DVector<f64>> = order[..take]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();
    Ok((values, vectors))
}

/// Shift-invert Lanczos with full reorthogonalization and deflated restarts.
fn lanczos_eigs(
    op: &DiscreteOperator,
    request: EigenRequest,
    want_count: usize,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)> {
    let n = op.n();
    let sigma = op.v_min() - 1.0;
    let shifted = op.to_banded(-sigma);
    let want = match request {
        EigenRequest::LambdaMax(l) => {
            let tau = l + 1e-9 * l.abs().max(1.0);
            let c = shifted.inertia_below(tau - sigma)?;
            if c == 0 {
                return Err(invalid("request.lambda_max", "no eigenvalues at or below the cutoff"));
            }
            c
        }
        EigenRequest::Count(_) => want_count,
    };
    let chol = shifted.cholesky()?;
    let op_inv = |x: &[f64], y: &mut [f64]| {
        y.copy_from_slice(x);
        chol.solve(y);
    };

    let mut rng = ChaCha8Rng::seed_from_u64(LANCZOS_SEED);
    let mut locked_vals: Vec<f64> = Vec::new();
    let mut locked_vecs: Vec<DVector<f64>> = Vec::new();
    let mut best_residuals: Vec<f64> = Vec::new();

    for restart in 0..4 {
        if locked_vecs.len() >= want && completeness_ok(&shifted, sigma, &locked_vals)? {
            break;
        }
        let budget = n.min(2 * want + 80 + restart * 160);
        let (alphas, betas, basis) =
            lanczos_pass(n, &op_inv, &locked_vecs, budget, &mut rng);
        let m = alphas.len();
        if m == 0 {
            break;
        }
        // Ritz extraction from the tridiagonal section.
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alphas[i];
            if i + 1 < m {
                t[(i, i + 1)] = betas[i];
                t[(i + 1, i)] = betas[i];
            }
        }
        let te = t.symmetric_eigen();
        let mut idx: Vec<usize> = (0..m).collect();
        // largest θ of the inverted operator = smallest λ of H
        idx.sort_by(|&a, &b| te.eigenvalues[b].partial_cmp(&te.eigenvalues[a]).unwrap());
        best_residuals.clear();
        for &i in &idx {
            if locked_vecs.len() >= want {
                break;
            }
            let theta = te.eigenvalues[i];
            if theta <= 0.0 {
                break; // inverted spectrum is positive; below is noise
            }
            let lambda = sigma + 1.0 / theta;
            let y = te.eigenvectors.column(i);
            let mut x = DVector::zeros(n);
            for (j, col) in basis.iter().enumerate() {
                x.axpy(y[j], col, 1.0);
            }
            // fresh orthogonalization against locked pairs, then normalize
            for v in &locked_vecs {
                let p = v.dot(&x);
                x.axpy(-p, v, 1.0);
            }
            let nx = x.norm();
            if nx < 1e-8 {
                continue; // duplicate of an already locked vector
            }
            x /= nx;
            let mut hx = vec![0.0; n];
            op.apply(x.as_slice(), &mut hx);
            let mut res = 0.0f64;
            for j in 0..n {
                res += (hx[j] - lambda * x[j]).powi(2);
            }
            let res = res.sqrt() / lambda.abs().max(1.0);
            if res <= LOCK_TOL {
                locked_vals.push(lambda);
                locked_vecs.push(x);
            } else {
                best_residuals.push(res);
            }
        }
        // keep ascending in λ
        let mut order: Vec<usize> = (0..locked_vals.len()).collect();
        order.sort_by(|&a, &b| locked_vals[a].partial_cmp(&locked_vals[b]).unwrap());
        locked_vals = order.iter().map(|&i| locked_vals[i]).collect();
        locked_vecs = order.iter().map(|&i| locked_vecs[i].clone()).collect();
    }

    if locked_vecs.len() < want {
        return Err(Error::EigensolveNoConvergence {
            best_residuals: if best_residuals.is_empty() {
                vec![f64::INFINITY]
            } else {
                best_residuals
            },
        });
    }
    locked_vals.truncate(want);
    locked_vecs.truncate(want);
    if let EigenRequest::LambdaMax(l) = request {
        // inertia fixed `want`, but guard against a cluster straddling the cutoff
        while locked_vals.last().map_or(false, |&v| v > l + 1e-6 * l.abs().max(1.0)) {
            locked_vals.pop();
            locked_vecs.pop();
        }
    }
    Ok((locked_vals, locked_vecs))
}

/// One Lanczos sweep on the inverted operator, fully reorthogonalized
/// against both the growing basis and the locked (deflated) vectors.
fn lanczos_pass<F>(
    n: usize,
    op_inv: &F,
    locked: &[DVector<f64>],
    budget: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, Vec<f64>, Vec<DVector<f64>>)
where
    F: Fn(&[f64], &mut [f64]),
{
    let budget = budget.min(n.saturating_sub(locked.len()));
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new();

    let mut v = DVector::from_fn(n, |_, _| standard_normal(rng));
    orthogonalize(&mut v, locked, &basis);
    let nv = v.norm();
    if nv < 1e-12 {
        return (alphas, betas, basis);
    }
    v /= nv;

    let mut w = vec![0.0; n];
    for step in 0..budget {
        basis.push(v.clone());
        op_inv(v.as_slice(), &mut w);
        let mut wv = DVector::from_column_slice(&w);
        let alpha = v.dot(&wv);
        wv.axpy(-alpha, &v, 1.0);
        if step > 0 {
            let beta_prev = betas[step - 1];
            wv.axpy(-beta_prev, &basis[step - 1], 1.0);
        }
        // full reorthogonalization, two passes
        orthogonalize(&mut wv, locked, &basis);
        orthogonalize(&mut wv, locked, &basis);
        alphas.push(alpha);
        let beta = wv.norm();
        if step + 1 == budget {
            break;
        }
        if beta < 1e-13 {
            break; // invariant subspace exhausted
        }
        betas.push(beta);
        v = wv / beta;
    }
    (alphas, betas, basis)
}

fn orthogonalize(v: &mut DVector<f64>, locked: &[DVector<f64>], basis: &[DVector<f64>]) {
    for u in locked.iter().chain(basis.iter()) {
        let p = u.dot(v);
        v.axpy(-p, u, 1.0);
    }
}

/// Inertia cross-check: every eigenvalue strictly below the top locked
/// cluster must be present among the locked values.
fn completeness_ok(shifted: &SymBanded, sigma: f64, locked_vals: &[f64]) -> Result<bool> {
    let Some(&top) = locked_vals.last() else {
        return Ok(true);
    };
    let eps = 1e-8 * top.abs().max(1.0);
    let tau = top - eps;
    let have = locked_vals.iter().filter(|&&l| l < tau).count();
    match shifted.inertia_below(tau - sigma) {
        Ok(expect) => Ok(have == expect),
        // tau landed on spectrum: the cluster itself is the boundary; accept
        Err(_) => Ok(true),
    }
}

/// Normalize, orthonormalize degenerate clusters, validate invariants,
/// and embed interior vectors as full-grid fields.
fn build_basis(
    op: &DiscreteOperator,
    request: EigenRequest,
    values: Vec<f64>,
    mut vectors: Vec<DVector<f64>>,
) -> Result<EigenBasis> {
    let grid = op.grid().clone();
    let n = op.n();
    let k = values.len();

    // cluster-wise modified Gram-Schmidt (degenerate gap < 1e-8 · scale)
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k
            && (values[end] - values[end - 1]).abs() < 1e-8 * values[end].abs().max(1.0)
        {
            end += 1;
        }
        for i in start..end {
            for j in start..i {
                let p = {
                    let (vi, vj) = (&vectors[i], &vectors[j]);
                    vj.dot(vi)
                };
                let vj = vectors[j].clone();
                vectors[i].axpy(-p, &vj, 1.0);
            }
            let norm = vectors[i].norm();
            if norm < 1e-10 {
                return Err(invalid(
                    "eigenvectors",
                    format!("degenerate cluster at λ≈{} collapsed", values[i]),
                ));
            }
            vectors[i] /= norm;
        }
        start = end;
    }

    // deterministic sign: first entry reaching half the peak magnitude is
    // made positive (stable against tie-flips between symmetric lobes)
    for v in &mut vectors {
        let vmax = v.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        if vmax == 0.0 {
            continue;
        }
        let lead = v.iter().find(|x| x.abs() >= 0.5 * vmax).copied().unwrap_or(1.0);
        if lead < 0.0 {
            *v *= -1.0;
        }
    }

    // residual validation against the promised bound
    let mut hx = vec![0.0; n];
    for (lam, v) in values.iter().zip(&vectors) {
        op.apply(v.as_slice(), &mut hx);
        let mut res = 0.0;
        for j in 0..n {
            res += (hx[j] - lam * v[j]).powi(2);
        }
        let res = res.sqrt() / lam.abs().max(1.0);
        if res > RESIDUAL_BOUND {
            return Err(Error::EigensolveNoConvergence {
                best_residuals: vec![res],
            });
        }
    }

    // embed into full-grid fields, quadrature-orthonormal
    let scale = grid.cell_volume().sqrt().recip();
    let mut modes = DMatrix::zeros(grid.npoints(), k);
    for (c, v) in vectors.iter().enumerate() {
        for i in 0..n {
            modes[(grid.interior_to_grid(i), c)] = v[i] * scale;
        }
    }

    // orthonormality validation under quadrature
    let gram = modes.transpose() * &modes * grid.cell_volume();
    for i in 0..k {
        if (gram[(i, i)] - 1.0).abs() > 1e-10 {
            return Err(invalid("eigenvectors", format!("mode {i} not unit norm")));
        }
        for j in 0..i {
            if gram[(i, j)].abs() > 1e-8 {
                return Err(invalid(
                    "eigenvectors",
                    format!("modes {i},{j} not orthogonal ({:.3e})", gram[(i, j)]),
                ));
            }
        }
    }

    let lambda_complete = match request {
        EigenRequest::LambdaMax(l) => l,
        EigenRequest::Count(_) => *values.last().unwrap(),
    };
    let grid_hash = crate::cache::grid_hash(&grid);
    let potential_hash = crate::cache::potential_hash_from_values(&op.v_full);

    Ok(EigenBasis::from_parts(
        grid,
        values,
        modes,
        request,
        lambda_complete,
        grid_hash,
        potential_hash,
    ))
}

/// Project a grid field onto `Ran P_mu`: `α_k = ⟨φ_k, f⟩` for `λ_k ≤ mu`,
/// zero otherwise. `mu` above the basis completeness cutoff is an error,
/// because the projection would be silently truncated.
pub fn project(basis: &EigenBasis, f: &[f64], mu: f64) -> Result<SpectralElement> {
    if mu > basis.lambda_complete() * (1.0 + 1e-12) + 1e-12 {
        return Err(invalid(
            "mu",
            format!(
                "projection cutoff {mu} exceeds basis completeness {}",
                basis.lambda_complete()
            ),
        ));
    }
    if f.len() != basis.grid().npoints() {
        return Err(invalid("f", "field shape does not match the basis grid"));
    }
    let mut coeffs = basis.coefficients_of(f);
    for (k, c) in coeffs.iter_mut().enumerate() {
        if basis.eigenvalue(k) > mu {
            *c = 0.0;
        }
    }
    Ok(SpectralElement { coeffs })
}

/// Fractions of the squared L² and H¹ norms outside the ball of a radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExteriorMass {
    pub l2_frac: f64,
    pub h1_frac: f64,
}

/// Fraction of `‖φ‖²` (L² and H¹, gradient by centered differences)
/// carried outside the ball `|x| > radius`.
pub fn exterior_mass(basis: &EigenBasis, element: &SpectralElement, radius: f64) -> Result<ExteriorMass> {
    let grid = basis.grid();
    if radius >= grid.half_width() {
        return Err(invalid(
            "radius",
            format!("radius {radius} must lie inside the box (half_width {})", grid.half_width()),
        ));
    }
    let f = basis.synthesize(element);
    let grads = grid.gradient(&f);
    let mut tot_l2 = 0.0;
    let mut tot_h1 = 0.0;
    let mut ext_l2 = 0.0;
    let mut ext_h1 = 0.0;
    for i in 0..grid.npoints() {
        let l2 = f[i] * f[i];
        let h1 = l2 + grads.iter().map(|g| g[i] * g[i]).sum::<f64>();
        tot_l2 += l2;
        tot_h1 += h1;
        if grid.radius(i) > radius {
            ext_l2 += l2;
            ext_h1 += h1;
        }
    }
    Ok(ExteriorMass {
        l2_frac: if tot_l2 > 0.0 { ext_l2 / tot_l2 } else { 0.0 },
        h1_frac: if tot_h1 > 0.0 { ext_h1 / tot_h1 } else { 0.0 },
    })
}

/// Smallest grid-aligned radius `R = k·spacing` such that the exterior H¹
/// fraction stays at or below `threshold` for every one of `samples` random
/// unit elements of `Ran P_lambda`.
///
/// With `threshold = 1/2` this is the discrete analog of the half-mass
/// decay radius of low spectral elements; its growth in `λ` calibrates the
/// truncation constant empirically.
pub fn decay_radius(
    basis: &EigenBasis,
    lambda: f64,
    threshold: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(invalid("threshold", format!("must lie in (0,1], got {threshold}")));
    }
    if lambda > basis.lambda_complete() * (1.0 + 1e-12) + 1e-12 {
        return Err(invalid(
            "lambda",
            format!("cutoff {lambda} exceeds basis completeness {}", basis.lambda_complete()),
        ));
    }
    if samples == 0 {
        return Err(invalid("samples", "need at least one sample"));
    }
    if basis.count_below(lambda) == 0 {
        return Err(invalid("lambda", "no modes at or below the cutoff"));
    }

    let grid = basis.grid();
    let h = grid.spacing();
    let kmax = (grid.half_width() / h).ceil() as usize;
    // bin = number of grid radii k·h strictly below r_i, so a point is
    // outside radius k·h exactly when bin > k
    let bins: Vec<usize> = (0..grid.npoints())
        .map(|i| ((grid.radius(i) / h) - 1e-9).ceil().max(0.0) as usize)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_k = 0usize;
    let mut worst_frac_at_limit = 0.0f64;
    for _ in 0..samples {
        let el = basis.random_element(lambda, &mut rng);
        let f = basis.synthesize(&el);
        let grads = grid.gradient(&f);
        let mut mass = vec![0.0f64; kmax + 2];
        let mut total = 0.0;
        for i in 0..grid.npoints() {
            let h1 = f[i] * f[i] + grads.iter().map(|g| g[i] * g[i]).sum::<f64>();
            let b = bins[i].min(kmax + 1);
            mass[b] += h1;
            total += h1;
        }
        if total <= 0.0 {
            continue;
        }
        // ext[k] = Σ_{bin ≥ k+... } — suffix sums; exterior to radius k·h is bins > k
        let mut suffix = vec![0.0f64; kmax + 3];
        for k in (0..=kmax + 1).rev() {
            suffix[k] = suffix[k + 1] + mass[k];
        }
        // smallest k with ext fraction ≤ threshold
        let mut k_needed = kmax + 1;
        for k in 0..=kmax + 1 {
            let ext = suffix[(k + 1).min(kmax + 2)];
            if ext / total <= threshold {
                k_needed = k;
                break;
            }
        }
        if k_needed > worst_k {
            worst_k = k_needed;
            worst_frac_at_limit = suffix[kmax.min(kmax + 2)] / total;
        }
    }

    let r = worst_k as f64 * h;
    if r >= grid.half_width() {
        return Err(Error::DecayRadiusOutOfRange {
            half_width: grid.half_width(),
            worst_frac: worst_frac_at_limit,
        });
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, quadrature_norm};

    fn harmonic_1d(n: usize, w: f64) -> DiscreteOperator {
        let grid = build_grid(1, w, n).unwrap();
        assemble(&grid, &Potential::polynomial_radial(2.0)).unwrap()
    }

    #[test]
    fn assemble_minimal_matrix() {
        let grid = build_grid(1, 1.0, 3).unwrap();
        let op = assemble(&grid, &Potential::free()).unwrap();
        assert_eq!(op.n(), 1);
        let h2 = grid.spacing() * grid.spacing();
        let b = op.to_banded(0.0);
        assert_eq!(b.get(0, 0), 2.0 / h2);
    }

    #[test]
    fn assemble_harmonic_diagonal() {
        let grid = build_grid(1, 2.0, 9).unwrap();
        let op = assemble(&grid, &Potential::polynomial_radial(2.0)).unwrap();
        let h2 = grid.spacing() * grid.spacing();
        let b = op.to_banded(0.0);
        for i in 0..op.n() {
            let x = grid.point(grid.interior_to_grid(i))[0];
            assert!((b.get(0, i) - (2.0 / h2 + x * x)).abs() < 1e-14);
        }
    }

    #[test]
    fn assemble_exactly_symmetric() {
        let grid = build_grid(2, 2.0, 9).unwrap();
        let op = assemble(&grid, &Potential::polynomial_radial(2.0)).unwrap();
        let m = op.to_banded(0.0).to_dense();
        let diff = &m - &m.transpose();
        assert_eq!(diff.amax(), 0.0);
    }

    #[test]
    fn dirichlet_box_discrete_spectrum_exact() {
        // free Dirichlet box: discrete eigenvalues are (4/h²) sin²(kπ/(2(n+1)))
        let grid = build_grid(1, 2.0, 202).unwrap();
        let op = assemble(&grid, &Potential::free()).unwrap();
        let basis = eigensolve(&op, EigenRequest::Count(6)).unwrap();
        let n = op.n() as f64;
        let h = grid.spacing();
        for k in 0..6 {
            let exact = 4.0 / (h * h)
                * ((k as f64 + 1.0) * std::f64::consts::PI / (2.0 * (n + 1.0))).sin().powi(2);
            let got = basis.eigenvalue(k);
            assert!(
                (got - exact).abs() <= 1e-9 * exact.max(1.0),
                "k={k}: {got} vs {exact}"
            );
        }
    }

    #[test]
    fn harmonic_oscillator_dense() {
        let op = harmonic_1d(801, 12.0);
        let basis = eigensolve(&op, EigenRequest::Count(11)).unwrap();
        for k in 0..11 {
            let expect = 2.0 * k as f64 + 1.0;
            let rel = (basis.eigenvalue(k) - expect).abs() / expect;
            assert!(rel < 1e-3, "k={k} rel={rel}");
        }
    }

    #[test]
    fn lanczos_agrees_with_dense() {
        let op = harmonic_1d(601, 10.0);
        let dense = eigensolve_with_threshold(&op, EigenRequest::Count(12), usize::MAX).unwrap();
        let lanc = eigensolve_with_threshold(&op, EigenRequest::Count(12), 0).unwrap();
        for k in 0..12 {
            assert!(
                (dense.eigenvalue(k) - lanc.eigenvalue(k)).abs() < 1e-8,
                "k={k}: dense {} vs lanczos {}",
                dense.eigenvalue(k),
                lanc.eigenvalue(k)
            );
        }
        // eigenvectors agree up to sign, which the deterministic convention fixes
        for k in 0..12 {
            let d = dense.mode(k);
            let l = lanc.mode(k);
            let err: f64 = d.iter().zip(&l).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err < 1e-5, "mode {k} deviation {err}");
        }
    }

    #[test]
    fn lambda_max_request_complete() {
        let op = harmonic_1d(1401, 12.0); // interior 1399 > threshold → Lanczos
        let basis = eigensolve(&op, EigenRequest::LambdaMax(20.0)).unwrap();
        // expect modes near 1,3,...,19: ten of them
        assert_eq!(basis.n_modes(), 10);
        assert!(basis.eigenvalues().iter().all(|&l| l <= 20.0));
    }

    #[test]
    fn degenerate_pairs_2d_found() {
        // 2D harmonic oscillator: (k,l)/(l,k) pairs are exactly degenerate
        let grid = build_grid(2, 6.0, 41).unwrap();
        let op = assemble(&grid, &Potential::polynomial_radial(2.0)).unwrap();
        let basis = eigensolve(&op, EigenRequest::Count(6)).unwrap();
        let ev = basis.eigenvalues();
        assert!((ev[1] - ev[2]).abs() < 1e-9, "degenerate pair split: {ev:?}");
        assert!((ev[4] - ev[5]).abs() < 1e-9 || (ev[3] - ev[4]).abs() < 1e-9);
        // and the pair is genuinely orthonormal
        let gram = basis.modes().transpose() * basis.modes() * grid.cell_volume();
        assert!((gram[(1, 2)]).abs() < 1e-8);
    }

    #[test]
    fn poschl_teller_bound_state() {
        let grid = build_grid(1, 20.0, 1601).unwrap();
        let op = assemble(&grid, &Potential::bounded_well(2.0, 1.0)).unwrap();
        let basis = eigensolve(&op, EigenRequest::LambdaMax(0.0)).unwrap();
        assert_eq!(basis.n_modes(), 1, "exactly one negative eigenvalue");
        let rel = (basis.eigenvalue(0) + 1.0).abs();
        assert!(rel < 1e-2, "bound state {} vs -1", basis.eigenvalue(0));
    }

    #[test]
    fn eigenvalue_lower_bound_min_v() {
        let grid = build_grid(1, 20.0, 801).unwrap();
        let op = assemble(&grid, &Potential::bounded_well(2.0, 1.0)).unwrap();
        let basis = eigensolve(&op, EigenRequest::Count(5)).unwrap();
        assert!(basis.eigenvalue(0) >= op.v_min());
    }

    #[test]
    fn projection_examples() {
        let op = harmonic_1d(401, 8.0);
        let basis = eigensolve(&op, EigenRequest::Count(8)).unwrap();
        let phi0 = basis.mode(0);
        let el = project(&basis, &phi0, basis.lambda_complete()).unwrap();
        assert!((el.coeffs[0] - 1.0).abs() < 1e-8);
        for k in 1..8 {
            assert!(el.coeffs[k].abs() < 1e-8);
        }

        // f = φ0 + φ5, cutoff between λ0 and λ5
        let phi5 = basis.mode(5);
        let f: Vec<f64> = phi0.iter().zip(&phi5).map(|(a, b)| a + b).collect();
        let mid = (basis.eigenvalue(0) + basis.eigenvalue(5)) / 2.0;
        let el = project(&basis, &f, mid).unwrap();
        assert!((el.coeffs[0] - 1.0).abs() < 1e-8);
        assert!(el.coeffs[5].abs() == 0.0);

        // projection contracts
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let f: Vec<f64> = (0..op.grid().npoints()).map(|_| standard_normal(&mut rng)).collect();
        let nf = quadrature_norm(op.grid(), &f, None).unwrap();
        let el = project(&basis, &f, basis.lambda_complete()).unwrap();
        assert!(el.norm() <= nf * (1.0 + 1e-12));

        // cutoff above completeness is refused
        assert!(project(&basis, &phi0, basis.lambda_complete() * 2.0).is_err());
    }

    #[test]
    fn projection_idempotent() {
        let op = harmonic_1d(401, 8.0);
        let basis = eigensolve(&op, EigenRequest::Count(8)).unwrap();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let f: Vec<f64> = (0..op.grid().npoints()).map(|_| standard_normal(&mut rng)).collect();
        let mu = basis.eigenvalue(4);
        let p1 = project(&basis, &f, mu).unwrap();
        let p2 = project(&basis, &basis.synthesize(&p1), mu).unwrap();
        for k in 0..8 {
            assert!((p1.coeffs[k] - p2.coeffs[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn parseval_random_elements() {
        let op = harmonic_1d(401, 8.0);
        let basis = eigensolve(&op, EigenRequest::Count(8)).unwrap();
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..20 {
            let el = basis.random_element(basis.lambda_complete(), &mut rng);
            let f = basis.synthesize(&el);
            let n = quadrature_norm(op.grid(), &f, None).unwrap();
            assert!((n - el.norm()).abs() < 1e-8 * el.norm().max(1e-30));
        }
    }

    #[test]
    fn exterior_mass_ground_state() {
        let op = harmonic_1d(1025, 12.0);
        let basis = eigensolve(&op, EigenRequest::Count(1)).unwrap();
        let el = SpectralElement::from_coeffs(vec![1.0]);
        let m = exterior_mass(&basis, &el, 6.0).unwrap();
        assert!(m.h1_frac < 1e-6, "h1 frac {}", m.h1_frac);
        let m0 = exterior_mass(&basis, &el, 0.0).unwrap();
        assert!(m0.l2_frac > 0.98, "only the origin cell is excluded at radius 0");
        // monotone nonincreasing in the radius
        let mut prev = 1.0f64;
        for r in [1.0, 2.0, 3.0, 4.0, 5.0] {
            let m = exterior_mass(&basis, &el, r).unwrap();
            assert!(m.h1_frac <= prev + 1e-15);
            prev = m.h1_frac;
        }
        // near the box edge only the boundary strip remains
        let edge = exterior_mass(&basis, &el, 12.0 - 2.0 * op.grid().spacing()).unwrap();
        assert!(edge.h1_frac < 1e-12);
    }

    #[test]
    fn decay_radius_basics() {
        let op = harmonic_1d(1025, 14.0);
        let basis = eigensolve(&op, EigenRequest::LambdaMax(30.0)).unwrap();
        // threshold 1 is satisfied at radius zero
        assert_eq!(decay_radius(&basis, 9.0, 1.0, 4, 1).unwrap(), 0.0);
        // ground state at a lax threshold needs only a tiny ball
        let r0 = decay_radius(&basis, basis.eigenvalue(0), 0.99, 4, 1).unwrap();
        assert!(r0 < 2.0, "tiny radius expected, got {r0}");
        // monotone nondecreasing in λ
        let r1 = decay_radius(&basis, 9.0, 0.5, 8, 2).unwrap();
        let r2 = decay_radius(&basis, 25.0, 0.5, 8, 2).unwrap();
        assert!(r2 >= r1, "r({}) = {r1} vs r(25) = {r2}", 9.0);
    }
}
