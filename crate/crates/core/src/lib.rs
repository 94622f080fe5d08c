//! Pricing insurance portfolios whose policies share a systemic risk.
//!
//! The crate builds exact loss-count distributions for three portfolio
//! models (independent exposures, a common shock, and per-exposure crisis
//! rounds), evaluates VaR and TVaR on them, and turns the result into a
//! cost-of-capital risk loading per policy. A seeded Monte Carlo engine
//! produces the same distributions empirically, and [`tables`] regenerates
//! the reference loading tables shipped under `fixtures/`.

pub mod distribution;
pub mod error;
pub mod models;
pub mod monte_carlo;
pub mod pricing;
pub mod reference;
pub mod risk_measures;
pub mod tables;

pub use distribution::{convolve, mix, mixture, DiscreteLossDistribution, Moments};
pub use error::{Result, RiskError};
pub use models::{
    closed_form_mean_per_policy, closed_form_variance_per_policy, loss_count_distribution,
    loss_count_distribution_with, nondiversifiable_floor, BuildOptions, ModelSpec, PortfolioParams,
};
pub use monte_carlo::{
    bootstrap_standard_error, convergence_study, empirical_distribution, simulate,
    simulate_with_workers, LossHistogram, SimulationConfig,
};
pub use pricing::{
    premium, premium_netted, price, relative_risk, risk_adjusted_capital, risk_loading_per_policy,
    LoadingEstimate, LossSource, PricingResult,
};
pub use risk_measures::{
    gaussian_var_approx, normal_quantile, tail_value_at_risk, value_at_risk, MeasureKind,
    RiskMeasureSpec, TvarConvention,
};
