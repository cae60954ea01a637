//! Fixed parameter patterns used to build problems from the config grids.

use anyhow::Result;
use tradeoff_core::models::Head;
use tradeoff_core::{DataSpec, LinearClassifier, RidgeModel, XFamily};

use crate::config::{CovarianceConfig, DataConfig, RegressionBattery};

/// `θ*_i = (−1)^i / (1 + i)`
pub fn theta_star(d: usize) -> Vec<f64> {
    (0..d).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } / (1.0 + i as f64)).collect()
}

/// `θ = scale·θ* + offset·1`
pub fn audited_ridge(d: usize, degree: u32, scale: f64, offset: f64) -> Result<RidgeModel> {
    let theta = theta_star(d).iter().map(|t| scale * t + offset).collect();
    Ok(RidgeModel::new(theta, degree)?)
}

pub fn battery_spec(b: &RegressionBattery, family: XFamily, d: usize, degree: u32) -> Result<DataSpec> {
    Ok(DataSpec::regression(b.covariance.build(d)?, family, theta_star(d), degree, b.noise, b.sigma2)?)
}

pub fn data_spec(c: &DataConfig) -> Result<DataSpec> {
    let star = c.theta_star.clone().unwrap_or_else(|| theta_star(c.dim));
    Ok(DataSpec::regression(c.covariance.build(c.dim)?, c.family, star, c.degree, c.noise, c.sigma2)?)
}

/// Labels come from `W_cj = 1.5·cos(2πc/k + 0.7j)` with zero bias.
pub fn reference_classifier(k: usize, d: usize) -> Result<LinearClassifier> {
    let w = (0..k)
        .map(|c| {
            (0..d)
                .map(|j| 1.5 * (std::f64::consts::TAU * c as f64 / k as f64 + 0.7 * j as f64).cos())
                .collect()
        })
        .collect();
    Ok(LinearClassifier::new(w, vec![0.0; k], Head::default())?)
}

/// The reference weights shrunk by 0.8 and shifted by `0.2·sin(c + j)`, with bias `0.1·c`.
pub fn audited_classifier(k: usize, d: usize) -> Result<LinearClassifier> {
    let r = reference_classifier(k, d)?;
    let w = r
        .weights
        .iter()
        .enumerate()
        .map(|(c, row)| row.iter().enumerate().map(|(j, v)| 0.8 * v + 0.2 * ((c + j) as f64).sin()).collect())
        .collect();
    let b = (0..k).map(|c| 0.1 * c as f64).collect();
    Ok(LinearClassifier::new(w, b, Head::default())?)
}

pub fn classification_spec(cov: &CovarianceConfig, family: XFamily, k: usize, d: usize) -> Result<DataSpec> {
    Ok(DataSpec::classification(cov.build(d)?, family, reference_classifier(k, d)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn target_pattern() {
        assert_eq!(theta_star(4), vec![1.0, -0.5, 1.0 / 3.0, -0.25]);
    }

    #[test]
    fn classifiers_differ() {
        let r = reference_classifier(3, 2).unwrap();
        let a = audited_classifier(3, 2).unwrap();
        assert_eq!(r.classes(), 3);
        assert_ne!(r.weights, a.weights);
    }
}
