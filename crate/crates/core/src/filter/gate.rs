use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::FilterError;

/// Chi-square acceptance gate on squared Mahalanobis innovation distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiSquareGate {
    pub dof: usize,
    pub confidence: f64,
    pub threshold: f64,
}

impl ChiSquareGate {
    pub fn new(dof: usize, confidence: f64) -> Result<Self, FilterError> {
        Ok(Self {
            dof,
            confidence,
            threshold: chi_square_quantile(dof, confidence)?,
        })
    }

    pub fn accepts(&self, mahalanobis_sq: f64) -> bool {
        mahalanobis_sq <= self.threshold
    }
}

/// Inverse CDF of the chi-square distribution with `dof` degrees of freedom.
pub fn chi_square_quantile(dof: usize, confidence: f64) -> Result<f64, FilterError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(FilterError::InvalidConfig(format!(
            "gate confidence must lie in (0, 1), got {confidence}"
        )));
    }
    let dist = ChiSquared::new(dof as f64)
        .map_err(|e| FilterError::InvalidConfig(format!("chi-square dof {dof}: {e}")))?;
    Ok(dist.inverse_cdf(confidence))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Bisection on the closed-form 2-DOF CDF, 1 - exp(-x/2).
    fn two_dof_oracle(p: f64) -> f64 {
        let (mut lo, mut hi) = (0.0f64, 100.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if 1.0 - (-mid / 2.0).exp() < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn ninety_five_percent_two_dof() {
        let oracle = two_dof_oracle(0.95);
        assert!((oracle - 5.9915).abs() < 1e-3);
        let q = chi_square_quantile(2, 0.95).unwrap();
        assert!((q - oracle).abs() < 1e-6, "{q} vs {oracle}");
        for p in [0.5, 0.9, 0.99, 0.999] {
            assert!((chi_square_quantile(2, p).unwrap() - two_dof_oracle(p)).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_confidence() {
        assert!(chi_square_quantile(2, 1.0).is_err());
        assert!(chi_square_quantile(2, 0.0).is_err());
        assert!(chi_square_quantile(2, f64::NAN).is_err());
    }
}
