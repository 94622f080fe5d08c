//! Capital, risk loading and premiums.
//!
//! With `L` the portfolio loss (`severity * S`) and `rho` a risk measure:
//!
//! * risk-adjusted capital `K = rho(L) - E[L]`,
//! * risk loading per policy `R = eta * (rho(L) / N - E[L1])`,
//! * premium per policy `P = (1 + a) E[L1] + eta K / N`,
//! * netted premium `P^ = (1 + a - eta) / (1 + eta) E[L1] + eta / (1 + eta) rho(L1)`,
//!   obtained when premiums are allowed to offset capital.

use serde::Serialize;

use crate::distribution::DiscreteLossDistribution;
use crate::error::{Result, RiskError};
use crate::models::{
    closed_form_mean_per_policy, loss_count_distribution_with, BuildOptions, ModelSpec,
    PortfolioParams,
};
use crate::monte_carlo::{
    bootstrap_standard_error, empirical_distribution, simulate, SimulationConfig,
    DEFAULT_BOOTSTRAP_REPLICATES,
};
use crate::risk_measures::{normal_quantile, RiskMeasureSpec};

/// Where the loss-count distribution comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSource {
    Exact(BuildOptions),
    MonteCarlo {
        config: SimulationConfig,
        /// 0 skips the standard-error estimate.
        bootstrap_replicates: usize,
    },
}

impl LossSource {
    pub fn exact() -> Self {
        LossSource::Exact(BuildOptions::default())
    }

    pub fn monte_carlo(config: SimulationConfig) -> Self {
        LossSource::MonteCarlo {
            config,
            bootstrap_replicates: DEFAULT_BOOTSTRAP_REPLICATES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoadingEstimate {
    pub loading: f64,
    /// Bootstrap standard error, for simulated distributions only.
    pub standard_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PricingResult {
    pub expected_loss_per_policy: f64,
    /// Risk-adjusted capital of the whole portfolio. Negative when the
    /// measure sits below the mean (e.g. a VaR at a low confidence level).
    pub capital: f64,
    pub risk_loading_per_policy: f64,
    pub premium: f64,
    pub premium_netted: f64,
    pub relative_risk: f64,
    pub standard_error: Option<f64>,
}

/// `severity * (rho(S) - E[S])` on a count distribution.
pub fn risk_adjusted_capital(
    d: &DiscreteLossDistribution,
    measure: &RiskMeasureSpec,
    severity: f64,
) -> Result<f64> {
    Ok(severity * (measure.evaluate(d)? - d.moments().mean))
}

/// `eta * (l rho(S) / N - E[L1])` with the closed-form expected loss.
pub fn loading_from_distribution(
    d: &DiscreteLossDistribution,
    model: &ModelSpec,
    params: &PortfolioParams,
    measure: &RiskMeasureSpec,
) -> Result<f64> {
    let rho = params.severity * measure.evaluate(d)?;
    Ok(params.cost_of_capital
        * (rho / params.policies as f64 - closed_form_mean_per_policy(model, params)))
}

pub fn risk_loading_per_policy(
    model: &ModelSpec,
    params: &PortfolioParams,
    measure: &RiskMeasureSpec,
    source: &LossSource,
) -> Result<LoadingEstimate> {
    params.validate()?;
    let (d, standard_error) = source_distribution(model, params, measure, source)?;
    Ok(LoadingEstimate {
        loading: loading_from_distribution(&d, model, params, measure)?,
        standard_error,
    })
}

/// The loss-count distribution for `source`, plus the bootstrap standard
/// error of the loading when it was simulated.
fn source_distribution(
    model: &ModelSpec,
    params: &PortfolioParams,
    measure: &RiskMeasureSpec,
    source: &LossSource,
) -> Result<(DiscreteLossDistribution, Option<f64>)> {
    match source {
        LossSource::Exact(opts) => Ok((
            loss_count_distribution_with(model, params.policies, params.exposures, opts)?,
            None,
        )),
        LossSource::MonteCarlo {
            config,
            bootstrap_replicates,
        } => {
            let h = simulate(model, params.policies, params.exposures, config)?;
            let standard_error = if *bootstrap_replicates > 0 {
                Some(bootstrap_standard_error(
                    &h,
                    *bootstrap_replicates,
                    config.seed ^ 0x9e37_79b9_7f4a_7c15,
                    |b| loading_from_distribution(b, model, params, measure),
                )?)
            } else {
                None
            };
            Ok((empirical_distribution(&h)?, standard_error))
        }
    }
}

/// `(1 + a) E[L1] + eta * capital`, where `capital` is per policy.
pub fn premium(params: &PortfolioParams, expected_loss: f64, capital: f64) -> f64 {
    (1.0 + params.expense_ratio) * expected_loss + params.cost_of_capital * capital
}

/// Premium when premiums may be used to pay losses:
/// `(1 + a - eta) / (1 + eta) E[L] + eta / (1 + eta) rho`.
pub fn premium_netted(params: &PortfolioParams, expected_loss: f64, rho_value: f64) -> Result<f64> {
    let eta = params.cost_of_capital;
    if eta <= -1.0 {
        return Err(RiskError::InvalidParameter(format!(
            "cost of capital {eta} <= -1"
        )));
    }
    Ok(
        (1.0 + params.expense_ratio - eta) / (1.0 + eta) * expected_loss
            + eta / (1.0 + eta) * rho_value,
    )
}

/// Loading as a fraction of the expected loss per policy.
pub fn relative_risk(loading: f64, expected_loss_per_policy: f64) -> Result<f64> {
    if expected_loss_per_policy == 0.0 {
        return Err(RiskError::ZeroExpectedLoss);
    }
    Ok(loading / expected_loss_per_policy)
}

/// VaR loading per policy under the normal approximation of the IID model,
/// `eta * l * sqrt(n p (1 - p) / N) * q_alpha`.
pub fn gaussian_risk_loading(params: &PortfolioParams, p: f64) -> Result<f64> {
    params.validate()?;
    crate::error::check_probability("p", p)?;
    let n = params.exposures as f64;
    let spread = (n * p * (1.0 - p) / params.policies as f64).sqrt();
    Ok(params.cost_of_capital * params.severity * spread * normal_quantile(params.alpha)?)
}

/// Full pricing of one policy in a portfolio of `params.policies`.
pub fn price(
    model: &ModelSpec,
    params: &PortfolioParams,
    measure: &RiskMeasureSpec,
    source: &LossSource,
) -> Result<PricingResult> {
    params.validate()?;
    let (dist, standard_error) = source_distribution(model, params, measure, source)?;
    let n = params.policies as f64;
    let expected = closed_form_mean_per_policy(model, params);
    let rho = params.severity * measure.evaluate(&dist)?;
    let capital = rho - expected * n;
    let loading = params.cost_of_capital * capital / n;
    Ok(PricingResult {
        expected_loss_per_policy: expected,
        capital,
        risk_loading_per_policy: loading,
        premium: premium(params, expected, capital / n),
        premium_netted: premium_netted(params, expected, rho / n)?,
        relative_risk: relative_risk(loading, expected)?,
        standard_error,
    })
}
