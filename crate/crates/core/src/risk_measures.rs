//! Quantile-based risk measures on count distributions.

use serde::{Deserialize, Serialize};

use crate::distribution::{accurate_sum, DiscreteLossDistribution};
use crate::error::{Result, RiskError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MeasureKind {
    #[serde(rename = "VaR")]
    Var,
    #[serde(rename = "TVaR")]
    Tvar,
}

impl MeasureKind {
    pub fn label(self) -> &'static str {
        match self {
            MeasureKind::Var => "VaR",
            MeasureKind::Tvar => "TVaR",
        }
    }
}

/// How the tail average is taken on a discrete distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TvarConvention {
    /// `E[X | X >= VaR]`: every loss at or above the VaR, weighted by its
    /// full probability.
    #[default]
    ConditionalTail,
    /// `(1 - alpha)^-1 * integral_alpha^1 VaR_u du`: the average of the
    /// upper quantiles, counting only the part of the VaR atom above `alpha`.
    QuantileAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskMeasureSpec {
    pub kind: MeasureKind,
    pub alpha: f64,
    #[serde(default)]
    pub convention: TvarConvention,
}

impl RiskMeasureSpec {
    pub fn new(kind: MeasureKind, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self {
            kind,
            alpha,
            convention: TvarConvention::default(),
        })
    }

    pub fn var(alpha: f64) -> Result<Self> {
        Self::new(MeasureKind::Var, alpha)
    }

    pub fn tvar(alpha: f64) -> Result<Self> {
        Self::new(MeasureKind::Tvar, alpha)
    }

    pub fn with_convention(mut self, convention: TvarConvention) -> Self {
        self.convention = convention;
        self
    }

    /// Evaluates the measure on `d`, in counts.
    pub fn evaluate(&self, d: &DiscreteLossDistribution) -> Result<f64> {
        match self.kind {
            MeasureKind::Var => value_at_risk(d, self.alpha).map(|v| v as f64),
            MeasureKind::Tvar => tail_value_at_risk(d, self.alpha, self.convention),
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(RiskError::InvalidConfidence(alpha))
    }
}

/// Smallest count `k` with `P[X <= k] >= alpha`.
pub fn value_at_risk(d: &DiscreteLossDistribution, alpha: f64) -> Result<u64> {
    check_alpha(alpha)?;
    var_index(d, alpha).map(|(i, _)| d.min_count() + i as u64)
}

/// Index into the mass vector of the VaR, and the cdf there.
fn var_index(d: &DiscreteLossDistribution, alpha: f64) -> Result<(usize, f64)> {
    let mut cdf = 0.0;
    for (i, &m) in d.masses().iter().enumerate() {
        cdf += m;
        if cdf >= alpha {
            return Ok((i, cdf));
        }
    }
    Err(RiskError::QuantileUnresolved {
        alpha,
        resolved_mass: cdf,
    })
}

/// Tail Value-at-Risk in counts under the given convention.
pub fn tail_value_at_risk(
    d: &DiscreteLossDistribution,
    alpha: f64,
    convention: TvarConvention,
) -> Result<f64> {
    check_alpha(alpha)?;
    let (v, cdf_at_var) = var_index(d, alpha)?;
    let base = d.min_count() as f64;
    let tail = &d.masses()[v..];
    match convention {
        TvarConvention::ConditionalTail => {
            let mass = accurate_sum(tail.iter().copied());
            if mass <= 0.0 {
                return Err(RiskError::Internal("empty tail above VaR".into()));
            }
            // offsets relative to the VaR keep the sum well conditioned
            let excess = accurate_sum(tail.iter().enumerate().map(|(i, &m)| i as f64 * m));
            Ok(base + v as f64 + excess / mass)
        }
        TvarConvention::QuantileAverage => {
            let var = base + v as f64;
            let atom = cdf_at_var - alpha;
            let above = accurate_sum(
                tail.iter()
                    .enumerate()
                    .skip(1)
                    .map(|(i, &m)| (var + i as f64) * m),
            );
            Ok((var * atom + above) / (1.0 - alpha))
        }
    }
}

/// Standard normal quantile, rational approximation with relative error
/// below 1.2e-9 over (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    check_alpha(p)?;
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    Ok(x)
}

/// Normal approximation to the VaR of `B(N n, p)`, in counts:
/// `sqrt(N n p (1-p)) q_alpha + N n p`.
///
/// The approximation is only meaningful for `N n >= 30` with `p` away from
/// 0 and 1; for `p` in {0, 1} the distribution is degenerate and `N n p` is
/// returned.
pub fn gaussian_var_approx(policies: u64, exposures: u64, p: f64, alpha: f64) -> Result<f64> {
    crate::error::check_probability("p", p)?;
    let trials = (policies * exposures) as f64;
    let mean = trials * p;
    if p == 0.0 || p == 1.0 {
        return Ok(mean);
    }
    Ok((trials * p * (1.0 - p)).sqrt() * normal_quantile(alpha)? + mean)
}
