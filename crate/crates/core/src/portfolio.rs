//! Portfolio description for conditional-risk integration: simplex weights
//! plus one loss-quantile provider per asset. Providers are trait objects so
//! analytic test margins, empirical samples, and fitted GARCH forecasts all
//! plug into the same quadrature.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::util::{empirical_quantile_sorted, CompensatedSum};

/// A marginal loss quantile F^{-1}(p), defined for p strictly inside (0, 1).
pub trait Quantile: Send + Sync {
    fn quantile(&self, p: f64) -> Result<f64>;
}

fn check_prob(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "quantile level must lie in (0, 1), got {p}"
        )))
    }
}

/// Standard uniform margin: F^{-1}(p) = p.
pub struct UniformMargin;

impl Quantile for UniformMargin {
    fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        Ok(p)
    }
}

/// Exponential margin with the given rate.
pub struct ExponentialMargin {
    rate: f64,
}

impl ExponentialMargin {
    pub fn new(rate: f64) -> Result<Self> {
        if rate > 0.0 && rate.is_finite() {
            Ok(ExponentialMargin { rate })
        } else {
            Err(Error::parameter(format!(
                "exponential rate must be positive, got {rate}"
            )))
        }
    }
}

impl Quantile for ExponentialMargin {
    fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        Ok(-(-p).ln_1p() / self.rate)
    }
}

/// Gaussian margin.
pub struct GaussianMargin {
    inner: Normal,
}

impl GaussianMargin {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        let inner =
            Normal::new(mean, sd).map_err(|e| Error::parameter(format!("gaussian margin: {e}")))?;
        Ok(GaussianMargin { inner })
    }
}

impl Quantile for GaussianMargin {
    fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        Ok(self.inner.inverse_cdf(p))
    }
}

/// Empirical margin: right-continuous inverse of the sample ECDF.
pub struct EmpiricalMargin {
    sorted: Vec<f64>,
}

impl EmpiricalMargin {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("empirical margin needs at least one value"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("empirical margin values must be finite"));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(EmpiricalMargin { sorted: values })
    }
}

impl Quantile for EmpiricalMargin {
    fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        Ok(empirical_quantile_sorted(&self.sorted, p))
    }
}

/// Arbitrary closure margin; handy for analytic test cases.
pub struct FnMargin<F: Fn(f64) -> f64 + Send + Sync>(pub F);

impl<F: Fn(f64) -> f64 + Send + Sync> Quantile for FnMargin<F> {
    fn quantile(&self, p: f64) -> Result<f64> {
        check_prob(p)?;
        Ok((self.0)(p))
    }
}

/// Weights on the closed simplex plus a quantile provider per asset. The
/// single-asset corner (one weight equal to one) is admitted for marginal
/// studies.
pub struct PortfolioSpec {
    weights: Vec<f64>,
    quantiles: Vec<Box<dyn Quantile>>,
}

impl PortfolioSpec {
    pub fn new(weights: Vec<f64>, quantiles: Vec<Box<dyn Quantile>>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::dimension("portfolio needs at least one asset"));
        }
        if weights.len() != quantiles.len() {
            return Err(Error::dimension(format!(
                "{} weights but {} quantile providers",
                weights.len(),
                quantiles.len()
            )));
        }
        let mut total = CompensatedSum::new();
        for &w in &weights {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::parameter(format!(
                    "portfolio weight {w} outside [0, 1]"
                )));
            }
            total.add(w);
        }
        if (total.total() - 1.0).abs() > 1e-9 {
            return Err(Error::parameter(format!(
                "portfolio weights sum to {}, expected 1",
                total.total()
            )));
        }
        Ok(PortfolioSpec { weights, quantiles })
    }

    /// Equal weights with standard uniform margins in every coordinate.
    pub fn uniform(dim: usize) -> Result<Self> {
        let w = 1.0 / dim as f64;
        PortfolioSpec::new(
            vec![w; dim],
            (0..dim)
                .map(|_| Box::new(UniformMargin) as Box<dyn Quantile>)
                .collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn quantile(&self, asset: usize, p: f64) -> Result<f64> {
        self.quantiles[asset].quantile(p)
    }

    /// Sum of weighted marginal quantiles at a common level t. Zero-weight
    /// assets are skipped so their providers never see extreme levels.
    pub fn combined_quantile(&self, t: f64) -> Result<f64> {
        let mut acc = CompensatedSum::new();
        for (w, q) in self.weights.iter().zip(&self.quantiles) {
            if *w > 0.0 {
                acc.add(w * q.quantile(t)?);
            }
        }
        Ok(acc.total())
    }

    /// Weighted quantile sum at per-asset levels u, i.e. the portfolio loss
    /// attached to one copula observation.
    pub fn weighted_row(&self, u: &[f64]) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(Error::dimension(format!(
                "point has {} coordinates, portfolio has {}",
                u.len(),
                self.dim()
            )));
        }
        let mut acc = CompensatedSum::new();
        for ((w, q), &p) in self.weights.iter().zip(&self.quantiles).zip(u) {
            if *w > 0.0 {
                acc.add(w * q.quantile(p)?);
            }
        }
        Ok(acc.total())
    }
}
