//! Fitted regression models and the absolute-residual non-conformity score.
//!
//! Conformal validity does not depend on the fit, so two simple learners are
//! provided: (ridge) least squares with an intercept, and a Nadaraya–Watson
//! smoother with a product Gaussian kernel.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{cholesky, cholesky_solve, dot, Mat};

/// Learner choice, as named in configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelKind {
    Ols {
        #[serde(default)]
        ridge: f64,
    },
    KernelSmoother {
        /// Per-dimension bandwidths; Silverman's rule when absent.
        #[serde(default)]
        bandwidth: Option<Vec<f64>>,
    },
}

impl ModelKind {
    pub fn fit(&self, x: &Mat, y: &[f64]) -> Result<FittedModel> {
        match self {
            ModelKind::Ols { ridge } => fit_ols(x, y, *ridge),
            ModelKind::KernelSmoother { bandwidth } => {
                let h = match bandwidth {
                    Some(h) => h.clone(),
                    None => silverman_bandwidth(x),
                };
                fit_kernel_smoother(x, y, &h)
            }
        }
    }
}

/// An immutable fitted regression function `μ̂`.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Ols {
        intercept: f64,
        coefficients: Vec<f64>,
        ridge: f64,
    },
    KernelSmoother {
        bandwidth: Vec<f64>,
        train_x: Mat,
        train_y: Vec<f64>,
    },
}

/// Serializable description of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSummary {
    Ols {
        intercept: f64,
        coefficients: Vec<f64>,
        ridge: f64,
    },
    KernelSmoother {
        bandwidth: Vec<f64>,
        n_train: usize,
    },
}

impl FittedModel {
    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Ols { coefficients, .. } => coefficients.len(),
            FittedModel::KernelSmoother { bandwidth, .. } => bandwidth.len(),
        }
    }

    /// `μ̂(x)` for one feature row.
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            FittedModel::Ols {
                intercept,
                coefficients,
                ..
            } => intercept + dot(coefficients, x),
            FittedModel::KernelSmoother {
                bandwidth,
                train_x,
                train_y,
            } => {
                let logw: Vec<f64> = (0..train_x.rows())
                    .map(|r| {
                        -0.5 * train_x
                            .row(r)
                            .iter()
                            .zip(x)
                            .zip(bandwidth)
                            .map(|((xi, q), h)| ((xi - q) / h).powi(2))
                            .sum::<f64>()
                    })
                    .collect();
                // shift by the max so at least one weight is exactly 1
                let top = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let (num, den) = logw.iter().zip(train_y).fold((0.0, 0.0), |(n, d), (lw, y)| {
                    let w = (lw - top).exp();
                    (n + w * y, d + w)
                });
                num / den
            }
        }
    }

    pub fn predict_rows(&self, x: &Mat) -> Vec<f64> {
        (0..x.rows()).map(|r| self.predict(x.row(r))).collect()
    }

    pub fn summary(&self) -> ModelSummary {
        match self {
            FittedModel::Ols {
                intercept,
                coefficients,
                ridge,
            } => ModelSummary::Ols {
                intercept: *intercept,
                coefficients: coefficients.clone(),
                ridge: *ridge,
            },
            FittedModel::KernelSmoother {
                bandwidth, train_x, ..
            } => ModelSummary::KernelSmoother {
                bandwidth: bandwidth.clone(),
                n_train: train_x.rows(),
            },
        }
    }
}

fn check_training(x: &Mat, y: &[f64]) -> Result<()> {
    if x.rows() == 0 {
        return Err(invalid("design", "need at least one training row"));
    }
    if x.rows() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} design rows and {} responses",
            x.rows(),
            y.len()
        )));
    }
    if x.as_slice().iter().chain(y).any(|v| !v.is_finite()) {
        return Err(invalid("design", "non-finite training value"));
    }
    Ok(())
}

/// Least squares with an unpenalized intercept:
/// minimizes `‖y − b₀ − Xβ‖² + λ‖β‖²` via the normal equations.
pub fn fit_ols(x: &Mat, y: &[f64], ridge: f64) -> Result<FittedModel> {
    check_training(x, y)?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(invalid("ridge", format!("{ridge} must be finite and nonnegative")));
    }
    let m = x.rows();
    let q = x.cols() + 1;
    // Gram matrix of [1 | X]
    let mut gram = Mat::zeros(q, q);
    let mut rhs = vec![0.0; q];
    let mut row = vec![0.0; q];
    for r in 0..m {
        row[0] = 1.0;
        row[1..].copy_from_slice(x.row(r));
        for a in 0..q {
            rhs[a] += row[a] * y[r];
            for b in 0..=a {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..q {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    for a in 1..q {
        gram[(a, a)] += ridge;
    }
    let scale = (0..q).map(|a| gram[(a, a)]).fold(0.0f64, f64::max).max(1.0);
    let l = cholesky(&gram).map_err(|_| Error::RankDeficient { pivot: 0.0 })?;
    let pivot = (0..q).map(|a| l[(a, a)].powi(2)).fold(f64::INFINITY, f64::min);
    if pivot <= 1e-12 * scale {
        return Err(Error::RankDeficient { pivot });
    }
    let beta = cholesky_solve(&l, &rhs);
    Ok(FittedModel::Ols {
        intercept: beta[0],
        coefficients: beta[1..].to_vec(),
        ridge,
    })
}

/// Nadaraya–Watson regression with a product Gaussian kernel.
pub fn fit_kernel_smoother(x: &Mat, y: &[f64], bandwidth: &[f64]) -> Result<FittedModel> {
    check_training(x, y)?;
    if bandwidth.len() != x.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} bandwidths for {} features",
            bandwidth.len(),
            x.cols()
        )));
    }
    if let Some(h) = bandwidth.iter().find(|h| !(**h > 0.0)) {
        return Err(invalid("bandwidth", format!("{h} must be positive")));
    }
    Ok(FittedModel::KernelSmoother {
        bandwidth: bandwidth.to_vec(),
        train_x: x.clone(),
        train_y: y.to_vec(),
    })
}

/// Silverman-style `h = 1.06 σ̂ m^{-1/5}` per column; columns with zero
/// spread get `h = 1`.
pub fn silverman_bandwidth(x: &Mat) -> Vec<f64> {
    let m = x.rows() as f64;
    (0..x.cols())
        .map(|c| {
            let col = x.column(c);
            let mean = col.iter().sum::<f64>() / m;
            let var = if x.rows() > 1 {
                col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
            } else {
                0.0
            };
            let h = 1.06 * var.sqrt() * m.powf(-0.2);
            if h > 0.0 {
                h
            } else {
                1.0
            }
        })
        .collect()
}

/// Absolute-residual score `|y − μ̂(x, z)|`.
pub fn score(model: &FittedModel, y: f64, features: &[f64]) -> f64 {
    (y - model.predict(features)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_is_recovered() {
        let x = Mat::column_vector(&[0.0, 1.0, 2.0, 3.0]);
        let y = [0.0, 2.0, 4.0, 6.0];
        let FittedModel::Ols {
            intercept,
            coefficients,
            ..
        } = fit_ols(&x, &y, 0.0).unwrap()
        else {
            unreachable!()
        };
        assert!(intercept.abs() < 1e-10);
        assert!((coefficients[0] - 2.0).abs() < 1e-10);
    }

    #[test]
    fn constant_response() {
        let x = Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 5.0], vec![3.0, 1.0]])
            .unwrap();
        let m = fit_ols(&x, &[4.0; 4], 0.0).unwrap();
        let FittedModel::Ols {
            intercept,
            coefficients,
            ..
        } = &m
        else {
            unreachable!()
        };
        assert!((intercept - 4.0).abs() < 1e-10);
        assert!(coefficients.iter().all(|c| c.abs() < 1e-10));
    }

    #[test]
    fn rank_deficiency_needs_ridge() {
        let x = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        let y = [1.0, 2.0, 3.0];
        assert!(matches!(fit_ols(&x, &y, 0.0), Err(Error::RankDeficient { .. })));
        assert!(fit_ols(&x, &y, 1e-3).is_ok());
        assert!(fit_ols(&x, &y, -1.0).is_err());
    }

    #[test]
    fn smoother_limits() {
        let x = Mat::column_vector(&[0.0, 1.0, 2.0]);
        let y = [1.0, 5.0, 9.0];
        let wide = fit_kernel_smoother(&x, &y, &[1e6]).unwrap();
        assert!((wide.predict(&[0.3]) - 5.0).abs() < 1e-6);
        let narrow = fit_kernel_smoother(&x, &y, &[1e-3]).unwrap();
        assert!((narrow.predict(&[2.0]) - 9.0).abs() < 1e-12);
        assert!(fit_kernel_smoother(&x, &y, &[0.0]).is_err());
    }

    #[test]
    fn score_is_symmetric_and_zero_at_fit() {
        let m = fit_ols(&Mat::column_vector(&[0.0, 1.0]), &[1.0, 3.0], 0.0).unwrap();
        let mu = m.predict(&[0.5]);
        assert_eq!(score(&m, mu, &[0.5]), 0.0);
        assert!((score(&m, mu + 0.7, &[0.5]) - score(&m, mu - 0.7, &[0.5])).abs() < 1e-14);
    }

    #[test]
    fn hand_computed_residuals() {
        // points (0,1), (1,2), (2,4): slope 1.5, intercept 5/6
        let x = Mat::column_vector(&[0.0, 1.0, 2.0]);
        let m = fit_ols(&x, &[1.0, 2.0, 4.0], 0.0).unwrap();
        assert!((score(&m, 1.0, &[0.0]) - 1.0 / 6.0).abs() < 1e-12);
        assert!((score(&m, 2.0, &[1.0]) - 1.0 / 3.0).abs() < 1e-12);
        assert!((score(&m, 4.0, &[2.0]) - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn summaries_serialize() {
        let m = fit_ols(&Mat::column_vector(&[0.0, 1.0]), &[1.0, 3.0], 0.0).unwrap();
        let json = serde_json::to_string(&m.summary()).unwrap();
        assert!(json.contains("\"model\":\"ols\""));
        let k = fit_kernel_smoother(&Mat::column_vector(&[0.0, 1.0]), &[1.0, 3.0], &[0.5]).unwrap();
        let json = serde_json::to_value(k.summary()).unwrap();
        assert_eq!(json["n_train"], 2);
    }
}
