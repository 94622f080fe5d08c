//! Integer-support loss-count distributions.
//!
//! A [`DiscreteLossDistribution`] stores probability masses for the counts
//! `min_count, min_count + 1, ...` together with the total mass that was
//! dropped when far tails were truncated. Counts are unscaled numbers of
//! losses; a unit severity is applied only when pricing.

use crate::error::{check_probability, Result, RiskError};

/// Per-tail mass below which binomial tails are dropped.
pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-15;

/// Upper bound on the mass any distribution built here may have dropped.
pub const DEFAULT_TRUNCATION_BUDGET: f64 = 1e-12;

/// Relative weight (to the mode) at which the binomial recurrence stops.
const RECURRENCE_FLOOR: f64 = 1e-25;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLossDistribution {
    min_count: u64,
    masses: Vec<f64>,
    truncated_mass: f64,
}

/// First two moments of a count distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl DiscreteLossDistribution {
    /// Builds a distribution from raw parts, validating the invariants.
    pub fn from_parts(min_count: u64, masses: Vec<f64>, truncated_mass: f64) -> Result<Self> {
        if masses.is_empty() {
            return Err(RiskError::InvalidParameter("empty mass vector".into()));
        }
        if let Some(bad) = masses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(RiskError::InvalidParameter(format!("invalid mass {bad}")));
        }
        if !(0.0..=DEFAULT_TRUNCATION_BUDGET).contains(&truncated_mass) {
            return Err(RiskError::InvalidParameter(format!(
                "truncated mass {truncated_mass} outside [0, {DEFAULT_TRUNCATION_BUDGET}]"
            )));
        }
        let total = accurate_sum(masses.iter().copied()) + truncated_mass;
        if (total - 1.0).abs() > 1e-12 {
            return Err(RiskError::InvalidParameter(format!(
                "masses sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            min_count,
            masses,
            truncated_mass,
        })
    }

    pub fn point_mass(count: u64) -> Self {
        Self {
            min_count: count,
            masses: vec![1.0],
            truncated_mass: 0.0,
        }
    }

    /// Binomial `B(trials, prob)` with the default tail tolerance.
    pub fn binomial(trials: u64, prob: f64) -> Result<Self> {
        Self::binomial_with_tolerance(trials, prob, DEFAULT_TAIL_TOLERANCE)
    }

    /// Binomial `B(trials, prob)`, dropping each tail whose cumulative mass
    /// stays below `tail_tolerance`.
    ///
    /// Masses are generated by the ratio recurrence outward from the mode,
    /// relative to the modal weight, so nothing overflows for large `trials`;
    /// the weights are then normalised in one pass.
    pub fn binomial_with_tolerance(trials: u64, prob: f64, tail_tolerance: f64) -> Result<Self> {
        check_probability("prob", prob)?;
        if !(0.0..=DEFAULT_TRUNCATION_BUDGET / 2.0).contains(&tail_tolerance) {
            return Err(RiskError::InvalidParameter(format!(
                "tail tolerance {tail_tolerance} exceeds half the truncation budget"
            )));
        }
        if trials == 0 || prob == 0.0 {
            return Ok(Self::point_mass(0));
        }
        if prob == 1.0 {
            return Ok(Self::point_mass(trials));
        }

        let m = trials as f64;
        let odds = prob / (1.0 - prob);
        let mode = (((trials + 1) as f64 * prob).floor() as u64).min(trials);

        let mut below = Vec::new();
        let mut w = 1.0;
        let mut k = mode;
        while k > 0 {
            w *= k as f64 / ((m - k as f64 + 1.0) * odds);
            if w < RECURRENCE_FLOOR {
                break;
            }
            below.push(w);
            k -= 1;
        }
        let mut above = Vec::new();
        let mut w = 1.0;
        let mut k = mode;
        while k < trials {
            w *= (m - k as f64) / (k as f64 + 1.0) * odds;
            if w < RECURRENCE_FLOOR {
                break;
            }
            above.push(w);
            k += 1;
        }

        let min_count = mode - below.len() as u64;
        let mut masses = Vec::with_capacity(below.len() + above.len() + 1);
        masses.extend(below.iter().rev());
        masses.push(1.0);
        masses.extend(above);
        let total = accurate_sum(masses.iter().copied());
        masses.iter_mut().for_each(|x| *x /= total);

        Ok(Self {
            min_count,
            masses,
            truncated_mass: 0.0,
        }
        .truncate_tails(tail_tolerance))
    }

    /// Drops the longest prefix and suffix whose masses each sum below `tol`.
    pub fn truncate_tails(mut self, tol: f64) -> Self {
        if tol <= 0.0 || self.masses.len() == 1 {
            return self;
        }
        let mut low = 0.0;
        let mut start = 0;
        while start + 1 < self.masses.len() && low + self.masses[start] < tol {
            low += self.masses[start];
            start += 1;
        }
        let mut high = 0.0;
        let mut end = self.masses.len();
        while end > start + 1 && high + self.masses[end - 1] < tol {
            high += self.masses[end - 1];
            end -= 1;
        }
        if start == 0 && end == self.masses.len() {
            return self;
        }
        self.masses.truncate(end);
        self.masses.drain(..start);
        self.min_count += start as u64;
        self.truncated_mass += low + high;
        self
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn max_count(&self) -> u64 {
        self.min_count + self.masses.len() as u64 - 1
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn truncated_mass(&self) -> f64 {
        self.truncated_mass
    }

    /// Sum of the stored masses (`1 - truncated_mass` up to rounding).
    pub fn retained_mass(&self) -> f64 {
        accurate_sum(self.masses.iter().copied())
    }

    /// `(count, mass)` pairs in increasing count order.
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .map(move |(i, &m)| (self.min_count + i as u64, m))
    }

    pub fn pmf_at(&self, count: u64) -> f64 {
        count
            .checked_sub(self.min_count)
            .and_then(|i| self.masses.get(i as usize))
            .copied()
            .unwrap_or(0.0)
    }

    /// `P[count <= k]` over the stored masses.
    pub fn cdf_at(&self, k: i64) -> f64 {
        if k < self.min_count as i64 {
            return 0.0;
        }
        let upto = ((k as u64 - self.min_count) as usize).min(self.masses.len() - 1);
        accurate_sum(self.masses[..=upto].iter().copied())
    }

    /// Mean and variance of the stored pmf, normalised by the retained mass.
    pub fn moments(&self) -> Moments {
        let total = self.retained_mass();
        let offset_mean =
            accurate_sum(self.masses.iter().enumerate().map(|(i, &m)| i as f64 * m)) / total;
        let variance = accurate_sum(self.masses.iter().enumerate().map(|(i, &m)| {
            let d = i as f64 - offset_mean;
            d * d * m
        })) / total;
        Moments {
            mean: self.min_count as f64 + offset_mean,
            variance,
        }
    }

    /// The same distribution moved by `shift` counts.
    pub fn shifted(&self, shift: u64) -> Self {
        Self {
            min_count: self.min_count + shift,
            ..self.clone()
        }
    }

    fn is_point_mass(&self) -> bool {
        self.masses.len() == 1 && self.truncated_mass == 0.0
    }
}

/// Pointwise mixture `weight * d1 + (1 - weight) * d2`.
///
/// A weight of exactly 0 or 1 returns the selected operand unchanged.
pub fn mix(
    d1: &DiscreteLossDistribution,
    d2: &DiscreteLossDistribution,
    weight: f64,
) -> Result<DiscreteLossDistribution> {
    check_probability("weight", weight)?;
    if weight == 0.0 {
        return Ok(d2.clone());
    }
    if weight == 1.0 {
        return Ok(d1.clone());
    }
    Ok(mix_unchecked(&[(weight, d1), (1.0 - weight, d2)]))
}

/// Finite mixture of distributions. Weights must be probabilities summing to
/// one; zero-weight components are skipped. Components are accumulated in the
/// order given, so the result does not depend on how they were produced.
pub fn mixture(components: &[(f64, DiscreteLossDistribution)]) -> Result<DiscreteLossDistribution> {
    for (w, _) in components {
        check_probability("mixture weight", *w)?;
    }
    let total: f64 = accurate_sum(components.iter().map(|(w, _)| *w));
    if (total - 1.0).abs() > 1e-12 {
        return Err(RiskError::InvalidParameter(format!(
            "mixture weights sum to {total}"
        )));
    }
    let live: Vec<(f64, &DiscreteLossDistribution)> = components
        .iter()
        .filter(|(w, _)| *w > 0.0)
        .map(|(w, d)| (*w, d))
        .collect();
    match live.as_slice() {
        [] => Err(RiskError::InvalidParameter(
            "mixture has no components".into(),
        )),
        [(_, d)] => Ok((*d).clone()),
        _ => Ok(mix_unchecked(&live)),
    }
}

fn mix_unchecked(components: &[(f64, &DiscreteLossDistribution)]) -> DiscreteLossDistribution {
    let lo = components.iter().map(|(_, d)| d.min_count).min().unwrap();
    let hi = components.iter().map(|(_, d)| d.max_count()).max().unwrap();
    let mut masses = vec![0.0; (hi - lo + 1) as usize];
    let mut truncated_mass = 0.0;
    for (w, d) in components {
        let off = (d.min_count - lo) as usize;
        for (slot, &m) in masses[off..off + d.masses.len()].iter_mut().zip(&d.masses) {
            *slot += w * m;
        }
        truncated_mass += w * d.truncated_mass;
    }
    DiscreteLossDistribution {
        min_count: lo,
        masses,
        truncated_mass,
    }
}

/// Distribution of the sum of independent draws from `d1` and `d2`, with
/// the default tail tolerance applied to the result.
pub fn convolve(
    d1: &DiscreteLossDistribution,
    d2: &DiscreteLossDistribution,
) -> DiscreteLossDistribution {
    convolve_with_tolerance(d1, d2, DEFAULT_TAIL_TOLERANCE)
}

pub fn convolve_with_tolerance(
    d1: &DiscreteLossDistribution,
    d2: &DiscreteLossDistribution,
    tail_tolerance: f64,
) -> DiscreteLossDistribution {
    if d1.is_point_mass() {
        return d2.shifted(d1.min_count);
    }
    if d2.is_point_mass() {
        return d1.shifted(d2.min_count);
    }
    let (outer, inner) = if d1.masses.len() <= d2.masses.len() {
        (d1, d2)
    } else {
        (d2, d1)
    };
    let n = inner.masses.len();
    let mut masses = vec![0.0; outer.masses.len() + n - 1];
    for (i, &a) in outer.masses.iter().enumerate() {
        if a == 0.0 {
            continue;
        }
        for (slot, &b) in masses[i..i + n].iter_mut().zip(&inner.masses) {
            *slot += a * b;
        }
    }
    // Mass lost by either operand is lost for the sum: 1 - (1 - t1)(1 - t2).
    let truncated_mass =
        d1.truncated_mass + d2.truncated_mass - d1.truncated_mass * d2.truncated_mass;
    DiscreteLossDistribution {
        min_count: d1.min_count + d2.min_count,
        masses,
        truncated_mass,
    }
    .truncate_tails(tail_tolerance)
}

/// Neumaier-compensated summation.
pub(crate) fn accurate_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
