//! Least-squares line fits used by the exponent sweeps.

use crate::error::{invalid, Result};
use serde::Serialize;

/// Ordinary least squares `y ≈ slope·x + intercept`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope estimate.
    pub stderr_slope: f64,
    /// Coefficient of determination.
    pub r2: f64,
}

pub fn fit_line(points: &[(f64, f64)]) -> Result<LinearFit> {
    let n = points.len();
    if n < 2 {
        return Err(invalid("points", format!("need at least 2 samples, got {n}")));
    }
    let nf = n as f64;
    let xbar = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let ybar = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx = points.iter().map(|p| (p.0 - xbar).powi(2)).sum::<f64>();
    if sxx == 0.0 {
        return Err(invalid("points", "all abscissae coincide"));
    }
    let sxy = points.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum::<f64>();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - (slope * p.0 + intercept)).powi(2))
        .sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - ybar).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res <= 1e-30 {
        1.0
    } else {
        0.0
    };
    let stderr_slope = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        stderr_slope,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 3.0 * i as f64 - 1.0)).collect();
        let f = fit_line(&pts).unwrap();
        assert!((f.slope - 3.0).abs() < 1e-12);
        assert!((f.intercept + 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(f.stderr_slope < 1e-10);
    }

    #[test]
    fn noisy_line_reasonable() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<(f64, f64)> = (0..50)
            .map(|i| {
                let x = i as f64 / 10.0;
                (x, 2.0 * x + 0.5 + rng.gen_range(-0.05..0.05))
            })
            .collect();
        let f = fit_line(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 0.05);
        assert!(f.r2 > 0.99);
    }

    #[test]
    fn degenerate_inputs_rejected() {
        assert!(fit_line(&[(1.0, 2.0)]).is_err());
        assert!(fit_line(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
    }
}
