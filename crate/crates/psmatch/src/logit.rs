//! Binary logistic regression by iteratively reweighted least squares
//! (Newton steps with step-halving), with Wald inference on coefficients.

use crate::cohort::Cohort;
use nalgebra::{Cholesky, DMatrix, DVector};
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// 97.5% standard-normal quantile used for 95% Wald intervals.
pub const Z_95: f64 = 1.959964;

/// Coefficient magnitude beyond which the fit is flagged as separated.
const DIVERGENCE_BOUND: f64 = 15.0;

#[derive(Debug, Error)]
pub enum LogitError {
    #[error("information matrix is singular")]
    Singular,
    #[error("IRLS did not converge in {0} iterations")]
    NotConverged(usize),
    #[error("record has {got} covariates, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("standard error at index {0} is degenerate")]
    DegenerateSE(usize),
    #[error("design matrix is degenerate: {0}")]
    BadDesign(String),
}

/// Response vector plus predictor matrix with a leading intercept column.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    /// n x (k+1); column 0 is identically 1.
    pub x: DMatrix<f64>,
    /// Binary response, length n.
    pub y: DVector<f64>,
}

impl DesignMatrix {
    /// Build from raw covariate rows (without the intercept column).
    pub fn from_rows(rows: &[Vec<f64>], y: &[f64]) -> Result<Self, LogitError> {
        if rows.is_empty() || rows.len() != y.len() {
            return Err(LogitError::BadDesign(
                "predictor rows and response must be nonempty and equal length".into(),
            ));
        }
        let k = rows[0].len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(LogitError::BadDesign("ragged predictor rows".into()));
        }
        if y.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(LogitError::BadDesign("response entries must be 0 or 1".into()));
        }
        if !y.contains(&0.0) || !y.contains(&1.0) {
            return Err(LogitError::BadDesign("response has a single class".into()));
        }
        let n = rows.len();
        let mut x = DMatrix::zeros(n, k + 1);
        for (i, row) in rows.iter().enumerate() {
            x[(i, 0)] = 1.0;
            for (j, &v) in row.iter().enumerate() {
                x[(i, j + 1)] = v;
            }
        }
        Ok(DesignMatrix {
            x,
            y: DVector::from_column_slice(y),
        })
    }

    /// Design for a response column of `cohort` against the given predictor
    /// columns (schema indices).
    pub fn from_cohort(
        cohort: &Cohort,
        response: usize,
        predictors: &[usize],
    ) -> Result<Self, LogitError> {
        let rows: Vec<Vec<f64>> = cohort
            .records()
            .iter()
            .map(|r| predictors.iter().map(|&j| r[j]).collect())
            .collect();
        let y: Vec<f64> = cohort.records().iter().map(|r| r[response]).collect();
        DesignMatrix::from_rows(&rows, &y)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.x.ncols()
    }
}

/// A fitted logistic model.
#[derive(Debug, Clone, Serialize)]
pub struct LogisticFit {
    /// Intercept first, then one coefficient per predictor.
    pub coefficients: Vec<f64>,
    pub standard_errors: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when any coefficient crossed the divergence bound mid-iteration
    /// (quasi-separation); the fit is still usable for scoring.
    pub separation_warning: bool,
    pub log_likelihood: f64,
}

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn log_likelihood(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let mut ll = 0.0;
    for i in 0..y.len() {
        let e = eta[i];
        // log(1 + exp(e)) computed stably
        let log1pe = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
        ll += y[i] * e - log1pe;
    }
    ll
}

fn gradient(x: &DMatrix<f64>, y: &DVector<f64>, beta: &DVector<f64>) -> DVector<f64> {
    let eta = x * beta;
    let resid = DVector::from_fn(y.len(), |i, _| y[i] - sigmoid(eta[i]));
    x.transpose() * resid
}

fn information(x: &DMatrix<f64>, beta: &DVector<f64>) -> DMatrix<f64> {
    let eta = x * beta;
    let n = x.nrows();
    let k = x.ncols();
    let mut info = DMatrix::zeros(k, k);
    for i in 0..n {
        let p = sigmoid(eta[i]);
        let w = p * (1.0 - p);
        let row = x.row(i);
        for a in 0..k {
            for b in a..k {
                info[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            info[(a, b)] = info[(b, a)];
        }
    }
    info
}

/// Maximize the Bernoulli log-likelihood by Newton/IRLS with step-halving.
/// Stops when the relative log-likelihood change drops below `tolerance` or
/// after `max_iterations` Newton steps.
pub fn fit(
    design: &DesignMatrix,
    tolerance: f64,
    max_iterations: usize,
) -> Result<LogisticFit, LogitError> {
    // Identically-zero predictor columns carry no information; their
    // coefficients are exactly 0 and they are excluded from the solve so
    // the information matrix stays invertible.
    let active: Vec<usize> = (0..design.x.ncols())
        .filter(|&j| j == 0 || (0..design.x.nrows()).any(|i| design.x[(i, j)] != 0.0))
        .collect();
    if active.len() < design.x.ncols() {
        let reduced = DesignMatrix {
            x: design.x.select_columns(&active),
            y: design.y.clone(),
        };
        let sub = fit(&reduced, tolerance, max_iterations)?;
        let mut coefficients = vec![0.0; design.x.ncols()];
        let mut standard_errors = vec![f64::NAN; design.x.ncols()];
        for (slot, &j) in active.iter().enumerate() {
            coefficients[j] = sub.coefficients[slot];
            standard_errors[j] = sub.standard_errors[slot];
        }
        return Ok(LogisticFit {
            coefficients,
            standard_errors,
            ..sub
        });
    }

    let x = &design.x;
    let y = &design.y;
    let k = x.ncols();
    if x.nrows() <= k {
        return Err(LogitError::BadDesign(format!(
            "need more than {k} observations for {k} parameters",
        )));
    }
    let mut beta = DVector::zeros(k);
    let mut ll = log_likelihood(x, y, &beta);
    let mut separation_warning = false;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 1..=max_iterations {
        iterations = iter;
        let grad = gradient(x, y, &beta);
        let info = information(x, &beta);
        let chol = Cholesky::new(info).ok_or(LogitError::Singular)?;
        let delta = chol.solve(&grad);

        // Step-halving keeps the log-likelihood non-decreasing, up to a
        // floating-point noise allowance: near the optimum the Newton polish
        // step improves the likelihood by less than its representable
        // resolution, and rejecting it would leave the gradient stalled.
        let noise = 32.0 * f64::EPSILON * (1.0 + ll.abs());
        let mut step = 1.0;
        let mut next_beta;
        let mut next_ll;
        loop {
            next_beta = &beta + step * &delta;
            next_ll = log_likelihood(x, y, &next_beta);
            if next_ll >= ll - noise || step < 1e-10 {
                break;
            }
            step *= 0.5;
        }

        if next_beta.iter().any(|&b| b.abs() > DIVERGENCE_BOUND) {
            separation_warning = true;
        }
        let rel_change = (next_ll - ll).abs() / (1.0 + ll.abs());
        if next_ll >= ll - noise {
            beta = next_beta;
            ll = next_ll;
        }
        // A tiny change, improving or not, means the optimum is reached up
        // to floating-point noise. Convergence additionally requires a small
        // gradient at the solution; if the likelihood has flattened but the
        // gradient has not collapsed yet, keep taking Newton steps.
        if rel_change < tolerance && gradient(x, y, &beta).amax() <= 1e-6 {
            converged = true;
            break;
        }
    }

    if !converged && !separation_warning {
        return Err(LogitError::NotConverged(max_iterations));
    }

    let info = information(x, &beta);
    let standard_errors = match Cholesky::new(info) {
        Some(chol) => {
            let inv = chol.inverse();
            (0..k).map(|i| inv[(i, i)].max(0.0).sqrt()).collect()
        }
        None => vec![f64::NAN; k],
    };

    Ok(LogisticFit {
        coefficients: beta.iter().copied().collect(),
        standard_errors,
        iterations,
        converged,
        separation_warning,
        log_likelihood: ll,
    })
}

impl LogisticFit {
    /// Predicted probability for one record of covariates (without intercept).
    pub fn predict(&self, record: &[f64]) -> Result<f64, LogitError> {
        if record.len() + 1 != self.coefficients.len() {
            return Err(LogitError::DimensionMismatch {
                expected: self.coefficients.len() - 1,
                got: record.len(),
            });
        }
        let eta: f64 = self.coefficients[0]
            + record
                .iter()
                .zip(&self.coefficients[1..])
                .map(|(x, b)| x * b)
                .sum::<f64>();
        // Keep the score strictly inside (0,1).
        Ok(sigmoid(eta).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WaldTest {
    pub z: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Wald z-test and 95% CI for one coefficient.
pub fn wald_test(fit: &LogisticFit, index: usize) -> Result<WaldTest, LogitError> {
    let se = fit.standard_errors[index];
    if !se.is_finite() || se <= 0.0 {
        return Err(LogitError::DegenerateSE(index));
    }
    let coef = fit.coefficients[index];
    let z = coef / se;
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let p_value = 2.0 * (1.0 - normal.cdf(z.abs()));
    Ok(WaldTest {
        z,
        p_value,
        ci_low: coef - Z_95 * se,
        ci_high: coef + Z_95 * se,
    })
}
