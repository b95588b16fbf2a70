//! Symmetric banded storage with Cholesky, LDLᵀ inertia counts, and a
//! matrix-free conjugate-gradient solver.
//!
//! The finite-difference operators assembled in this crate are symmetric
//! with bandwidth 1 (1D) or `interior_per_axis` (2D), so a banded direct
//! factorization is the natural backend for shift-invert eigensolves and
//! for spectrum slicing via Sylvester inertia.

use crate::error::{invalid, Error, Result};

/// Symmetric banded matrix; band `d` stores entries `A[i+d, i]`
/// for `i = 0..n-d`, `d = 0..=bandwidth`.
#[derive(Debug, Clone)]
pub struct SymBanded {
    n: usize,
    bands: Vec<Vec<f64>>,
}

impl SymBanded {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let bands = (0..=bandwidth).map(|d| vec![0.0; n - d.min(n)]).collect();
        SymBanded { n, bands }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bands.len() - 1
    }

    /// Entry `A[i+d, i]` of band `d`.
    pub fn get(&self, d: usize, i: usize) -> f64 {
        self.bands[d][i]
    }

    pub fn set(&mut self, d: usize, i: usize, v: f64) {
        self.bands[d][i] = v;
    }

    /// Add `shift` to the diagonal.
    pub fn shift_diagonal(&mut self, shift: f64) {
        for v in &mut self.bands[0] {
            *v += shift;
        }
    }

    /// Dense symmetric copy (small problems and tests).
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (d, band) in self.bands.iter().enumerate() {
            for (i, &v) in band.iter().enumerate() {
                m[(i + d, i)] = v;
                m[(i, i + d)] = v;
            }
        }
        m
    }

    /// `y = A x` via the stored bands.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.fill(0.0);
        for (d, band) in self.bands.iter().enumerate() {
            if d == 0 {
                for i in 0..self.n {
                    y[i] += band[i] * x[i];
                }
            } else {
                for i in 0..band.len() {
                    y[i + d] += band[i] * x[i];
                    y[i] += band[i] * x[i + d];
                }
            }
        }
    }

    /// Banded Cholesky `A = L Lᵀ`; requires positive definiteness.
    pub fn cholesky(&self) -> Result<BandedCholesky> {
        let n = self.n;
        let bw = self.bandwidth();
        let mut l = self.bands.clone();
        for j in 0..n {
            let mut s = l[0][j];
            for d in 1..=bw.min(j) {
                s -= l[d][j - d] * l[d][j - d];
            }
            if s <= 0.0 {
                return Err(invalid(
                    "matrix",
                    format!("not positive definite at column {j} (pivot {s:.3e})"),
                ));
            }
            let diag = s.sqrt();
            l[0][j] = diag;
            let imax = (j + bw).min(n - 1);
            for i in (j + 1)..=imax {
                let di = i - j;
                let mut s = l[di][j];
                let kmin = i.saturating_sub(bw).max(0);
                for k in kmin..j {
                    s -= l[i - k][k] * l[j - k][k];
                }
                l[di][j] = s / diag;
            }
        }
        Ok(BandedCholesky { n, bands: l })
    }

    /// Number of eigenvalues strictly below `tau`, by counting negative
    /// pivots of the LDLᵀ factorization of `A - tau I`.
    ///
    /// A pivot too close to zero means `tau` essentially hits an eigenvalue
    /// of a leading principal submatrix; the shift is nudged and the count
    /// retried a few times before giving up.
    pub fn inertia_below(&self, tau: f64) -> Result<usize> {
        let scale = self.bands[0]
            .iter()
            .cloned()
            .fold(0.0f64, |a, b| a.max(b.abs()))
            .max(1.0);
        let mut t = tau;
        for attempt in 0..6 {
            match self.try_inertia(t, 1e-14 * scale) {
                Some(count) => return Ok(count),
                None => {
                    t = tau + (attempt as f64 + 1.0) * 1e-10 * scale;
                }
            }
        }
        Err(invalid(
            "tau",
            format!("inertia count unstable near {tau}; shift hits the spectrum"),
        ))
    }

    fn try_inertia(&self, tau: f64, pivot_floor: f64) -> Option<usize> {
        let n = self.n;
        let bw = self.bandwidth();
        let mut l = self.bands.clone();
        let mut d = vec![0.0; n];
        let mut negatives = 0usize;
        for j in 0..n {
            let mut s = l[0][j] - tau;
            for k in j.saturating_sub(bw)..j {
                s -= l[j - k][k] * l[j - k][k] * d[k];
            }
            if s.abs() < pivot_floor {
                return None;
            }
            d[j] = s;
            if s < 0.0 {
                negatives += 1;
            }
            let imax = (j + bw).min(n - 1);
            for i in (j + 1)..=imax {
                let di = i - j;
                let mut s = l[di][j];
                for k in i.saturating_sub(bw).max(0)..j {
                    s -= l[i - k][k] * l[j - k][k] * d[k];
                }
                l[di][j] = s / d[j];
            }
        }
        Some(negatives)
    }
}

/// Lower-triangular banded Cholesky factor.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bands: Vec<Vec<f64>>,
}

impl BandedCholesky {
    /// Solve `L Lᵀ x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        let n = self.n;
        let bw = self.bands.len() - 1;
        // forward: L y = b
        for i in 0..n {
            let mut s = b[i];
            for d in 1..=bw.min(i) {
                s -= self.bands[d][i - d] * b[i - d];
            }
            b[i] = s / self.bands[0][i];
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = b[i];
            let dmax = bw.min(n - 1 - i);
            for d in 1..=dmax {
                s -= self.bands[d][i] * b[i + d];
            }
            b[i] = s / self.bands[0][i];
        }
    }
}

/// Matrix-free conjugate gradient for s.p.d. systems.
///
/// Returns the iterate history of residual norms on failure so callers can
/// report convergence stalls.
pub fn cg_solve<F>(
    apply: F,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    max_iter: usize,
) -> Result<usize>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        x.fill(0.0);
        return Ok(0);
    }
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    apply(x, &mut ap);
    for i in 0..n {
        r[i] = b[i] - ap[i];
    }
    let mut p = r.clone();
    let mut rs = r.iter().map(|v| v * v).sum::<f64>();
    let mut history = Vec::new();
    for it in 0..max_iter {
        let rnorm = rs.sqrt();
        history.push(rnorm);
        if rnorm <= tol * bnorm {
            return Ok(it);
        }
        apply(&p, &mut ap);
        let pap = p.iter().zip(&ap).map(|(a, b)| a * b).sum::<f64>();
        if pap <= 0.0 {
            return Err(invalid("matrix", "cg: operator is not positive definite"));
        }
        let alpha = rs / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rs_new = r.iter().map(|v| v * v).sum::<f64>();
        let beta = rs_new / rs;
        rs = rs_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rs.sqrt() <= tol * bnorm {
        return Ok(max_iter);
    }
    Err(Error::CgNoConvergence { history })
}
