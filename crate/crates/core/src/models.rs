//! The three portfolio loss models and their closed-form moments.
//!
//! All three describe the number of losses `S` among `N * n` unit exposures
//! (`N` policies, each exposed `n` times):
//!
//! * [`ModelSpec::Iid`]: independent Bernoulli(`p`) exposures.
//! * [`ModelSpec::CommonShock`]: one crisis indicator `U ~ Bernoulli(p_tilde)`
//!   switches every exposure to probability `q`; `S` is a two-point mixture of
//!   binomials.
//! * [`ModelSpec::PerExposureShock`]: each of the `n` exposure rounds draws
//!   its own crisis indicator, applied to the whole portfolio for that round.
//!   Conditioning on the number `j` of crisis rounds,
//!   `S = B(N j, q) + B(N (n - j), p)` with `j ~ B(n, p_tilde)`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::{convolve, mix, mixture, DiscreteLossDistribution};
use crate::error::{check_probability, Result, RiskError};

/// Default cap on `N * n` for exact construction.
pub const DEFAULT_MAX_SUPPORT: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Iid { p: f64 },
    CommonShock { p: f64, q: f64, p_tilde: f64 },
    PerExposureShock { p: f64, q: f64, p_tilde: f64 },
}

/// Non-fatal remarks about parameters outside the intended regime.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelWarning {
    CrisisNotWorse { p: f64, q: f64 },
    FrequentCrisis { p_tilde: f64 },
}

impl fmt::Display for ModelWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelWarning::CrisisNotWorse { p, q } => {
                write!(f, "crisis loss probability q={q} does not exceed p={p}")
            }
            ModelWarning::FrequentCrisis { p_tilde } => {
                write!(f, "crisis probability p_tilde={p_tilde} exceeds 0.5")
            }
        }
    }
}

impl ModelSpec {
    pub fn iid(p: f64) -> Result<Self> {
        let m = ModelSpec::Iid { p };
        m.validate()?;
        Ok(m)
    }

    pub fn common_shock(p: f64, q: f64, p_tilde: f64) -> Result<Self> {
        let m = ModelSpec::CommonShock { p, q, p_tilde };
        m.validate()?;
        Ok(m)
    }

    pub fn per_exposure_shock(p: f64, q: f64, p_tilde: f64) -> Result<Self> {
        let m = ModelSpec::PerExposureShock { p, q, p_tilde };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ModelSpec::Iid { p } => check_probability("p", p).map(|_| ()),
            ModelSpec::CommonShock { p, q, p_tilde }
            | ModelSpec::PerExposureShock { p, q, p_tilde } => {
                check_probability("p", p)?;
                check_probability("q", q)?;
                check_probability("p_tilde", p_tilde)?;
                Ok(())
            }
        }
    }

    pub fn warnings(&self) -> Vec<ModelWarning> {
        let mut out = Vec::new();
        if let ModelSpec::CommonShock { p, q, p_tilde }
        | ModelSpec::PerExposureShock { p, q, p_tilde } = *self
        {
            if q <= p {
                out.push(ModelWarning::CrisisNotWorse { p, q });
            }
            if p_tilde > 0.5 {
                out.push(ModelWarning::FrequentCrisis { p_tilde });
            }
        }
        out
    }

    /// Normal-state loss probability.
    pub fn p(&self) -> f64 {
        match *self {
            ModelSpec::Iid { p }
            | ModelSpec::CommonShock { p, .. }
            | ModelSpec::PerExposureShock { p, .. } => p,
        }
    }

    /// `(q, p_tilde)` for the shock variants; IID behaves as `(p, 0)`.
    fn shock(&self) -> (f64, f64) {
        match *self {
            ModelSpec::Iid { p } => (p, 0.0),
            ModelSpec::CommonShock { q, p_tilde, .. }
            | ModelSpec::PerExposureShock { q, p_tilde, .. } => (q, p_tilde),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Iid { .. } => "iid",
            ModelSpec::CommonShock { .. } => "common-shock",
            ModelSpec::PerExposureShock { .. } => "per-exposure-shock",
        }
    }

    /// Same variant with a different crisis probability (no-op for IID).
    pub fn with_p_tilde(self, value: f64) -> Self {
        match self {
            ModelSpec::Iid { .. } => self,
            ModelSpec::CommonShock { p, q, .. } => ModelSpec::CommonShock {
                p,
                q,
                p_tilde: value,
            },
            ModelSpec::PerExposureShock { p, q, .. } => ModelSpec::PerExposureShock {
                p,
                q,
                p_tilde: value,
            },
        }
    }
}

/// Portfolio shape and economics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PortfolioParams {
    /// Number of policies `N`.
    pub policies: u64,
    /// Exposures per policy `n`.
    pub exposures: u64,
    /// Unit severity `l`.
    pub severity: f64,
    /// Cost-of-capital rate `eta`.
    pub cost_of_capital: f64,
    /// Expense ratio `a`.
    pub expense_ratio: f64,
    /// Risk-measure confidence level.
    pub alpha: f64,
}

impl Default for PortfolioParams {
    /// One policy with six exposures, severity 10, 15% cost of capital, no
    /// expenses and a 99% confidence level.
    fn default() -> Self {
        Self {
            policies: 1,
            exposures: 6,
            severity: 10.0,
            cost_of_capital: 0.15,
            expense_ratio: 0.0,
            alpha: 0.99,
        }
    }
}

impl PortfolioParams {
    pub fn validate(&self) -> Result<()> {
        if self.policies == 0 || self.exposures == 0 {
            return Err(RiskError::InvalidParameter(
                "policies and exposures must be at least 1".into(),
            ));
        }
        if !(self.severity > 0.0 && self.severity.is_finite()) {
            return Err(RiskError::InvalidParameter(format!(
                "severity must be positive, got {}",
                self.severity
            )));
        }
        if !(self.cost_of_capital.is_finite() && self.cost_of_capital >= 0.0)
            || !(self.expense_ratio.is_finite() && self.expense_ratio >= 0.0)
        {
            return Err(RiskError::InvalidParameter(
                "cost of capital and expense ratio must be non-negative".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(RiskError::InvalidConfidence(self.alpha));
        }
        Ok(())
    }

    pub fn with_policies(mut self, policies: u64) -> Self {
        self.policies = policies;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub max_support: u64,
    pub tail_tolerance: f64,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self {
            max_support: DEFAULT_MAX_SUPPORT,
            tail_tolerance: crate::distribution::DEFAULT_TAIL_TOLERANCE,
        }
    }
}

/// Exact distribution of the loss count `S` for `policies * exposures`
/// exposures under `model`.
pub fn loss_count_distribution(
    model: &ModelSpec,
    policies: u64,
    exposures: u64,
) -> Result<DiscreteLossDistribution> {
    loss_count_distribution_with(model, policies, exposures, &BuildOptions::default())
}

pub fn loss_count_distribution_with(
    model: &ModelSpec,
    policies: u64,
    exposures: u64,
    opts: &BuildOptions,
) -> Result<DiscreteLossDistribution> {
    model.validate()?;
    let trials = policies
        .checked_mul(exposures)
        .ok_or(RiskError::SupportLimit {
            trials: u64::MAX,
            limit: opts.max_support,
        })?;
    if trials > opts.max_support {
        return Err(RiskError::SupportLimit {
            trials,
            limit: opts.max_support,
        });
    }
    let bin = |n: u64, p: f64| {
        DiscreteLossDistribution::binomial_with_tolerance(n, p, opts.tail_tolerance)
    };

    match *model {
        ModelSpec::Iid { p } => bin(trials, p),
        ModelSpec::CommonShock { p, q, p_tilde } => {
            if p_tilde == 0.0 {
                return bin(trials, p);
            }
            if p_tilde == 1.0 {
                return bin(trials, q);
            }
            mix(&bin(trials, q)?, &bin(trials, p)?, p_tilde)
        }
        ModelSpec::PerExposureShock { p, q, p_tilde } => {
            let weights = crisis_round_weights(exposures, p_tilde);
            // The terms are independent; collect preserves index order so the
            // mixture is summed identically however the work is scheduled.
            let terms: Vec<(f64, DiscreteLossDistribution)> = weights
                .into_par_iter()
                .enumerate()
                .filter(|(_, w)| *w > 0.0)
                .map(|(crisis_rounds, w)| {
                    let j = crisis_rounds as u64;
                    let crisis = bin(policies * j, q)?;
                    let normal = bin(policies * (exposures - j), p)?;
                    Ok((w, convolve_with(&crisis, &normal, opts.tail_tolerance)))
                })
                .collect::<Result<_>>()?;
            mixture(&terms)
        }
    }
}

fn convolve_with(
    a: &DiscreteLossDistribution,
    b: &DiscreteLossDistribution,
    tol: f64,
) -> DiscreteLossDistribution {
    if tol == crate::distribution::DEFAULT_TAIL_TOLERANCE {
        convolve(a, b)
    } else {
        crate::distribution::convolve_with_tolerance(a, b, tol)
    }
}

/// `P(j of n rounds are in crisis) = C(n, j) p_tilde^j (1 - p_tilde)^(n - j)`.
///
/// Exact zeros are kept for `p_tilde` in {0, 1} so that the degenerate
/// models reduce exactly.
pub fn crisis_round_weights(exposures: u64, p_tilde: f64) -> Vec<f64> {
    let n = exposures as usize;
    if p_tilde == 0.0 {
        let mut w = vec![0.0; n + 1];
        w[0] = 1.0;
        return w;
    }
    if p_tilde == 1.0 {
        let mut w = vec![0.0; n + 1];
        w[n] = 1.0;
        return w;
    }
    let mut out = Vec::with_capacity(n + 1);
    let mut binom = 1.0f64;
    for j in 0..=n {
        out.push(binom * p_tilde.powi(j as i32) * (1.0 - p_tilde).powi((n - j) as i32));
        binom = binom * (n - j) as f64 / (j + 1) as f64;
    }
    out
}

/// Expected loss per policy, `l n (p_tilde q + (1 - p_tilde) p)`.
pub fn closed_form_mean_per_policy(model: &ModelSpec, params: &PortfolioParams) -> f64 {
    let (q, p_tilde) = model.shock();
    let p = model.p();
    params.severity * params.exposures as f64 * (p_tilde * q + (1.0 - p_tilde) * p)
}

/// Variance of the loss per policy, `var(L) / N^2`, for `params.policies`.
pub fn closed_form_variance_per_policy(model: &ModelSpec, params: &PortfolioParams) -> f64 {
    let (q, p_tilde) = model.shock();
    let p = model.p();
    let l2n = params.severity * params.severity * params.exposures as f64;
    let diversifiable =
        l2n / params.policies as f64 * (q * (1.0 - q) * p_tilde + p * (1.0 - p) * (1.0 - p_tilde));
    diversifiable + nondiversifiable_floor(model, params)
}

/// The part of the per-policy variance that does not shrink with `N`:
/// `l^2 n^2 (q-p)^2 p_tilde (1-p_tilde)` for the common shock,
/// `l^2 n (q-p)^2 p_tilde (1-p_tilde)` per exposure round, 0 for IID.
pub fn nondiversifiable_floor(model: &ModelSpec, params: &PortfolioParams) -> f64 {
    let n = params.exposures as f64;
    let l2 = params.severity * params.severity;
    match *model {
        ModelSpec::Iid { .. } => 0.0,
        ModelSpec::CommonShock { p, q, p_tilde } => {
            l2 * n * n * (q - p).powi(2) * p_tilde * (1.0 - p_tilde)
        }
        ModelSpec::PerExposureShock { p, q, p_tilde } => {
            l2 * n * (q - p).powi(2) * p_tilde * (1.0 - p_tilde)
        }
    }
}
