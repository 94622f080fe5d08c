//! Seeded, reproducibly parallel simulation of the loss count.
//!
//! Simulations are split into fixed-size blocks. Block `b` draws from a
//! ChaCha8 stream seeded with `seed` and stream id `b`, so its output depends
//! only on `(seed, block_size, b)`. Block tallies are merged by integer
//! addition, which makes the histogram independent of the number of worker
//! threads.
//!
//! Each simulated portfolio draws aggregate binomial counts instead of
//! individual Bernoulli exposures: conditional on the crisis indicators, the
//! losses in crisis rounds and normal rounds are `B(N j, q)` and
//! `B(N (n - j), p)`.

use std::collections::BTreeMap;

use rand::distr::{Bernoulli, Distribution};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::DiscreteLossDistribution;
use crate::error::{Result, RiskError};
use crate::models::{ModelSpec, PortfolioParams};
use crate::pricing::loading_from_distribution;
use crate::risk_measures::RiskMeasureSpec;

pub const DEFAULT_BLOCK_SIZE: u64 = 100_000;
pub const DEFAULT_BOOTSTRAP_REPLICATES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub num_sims: u64,
    pub seed: u64,
    pub block_size: u64,
}

impl SimulationConfig {
    pub fn new(num_sims: u64, seed: u64) -> Self {
        Self {
            num_sims,
            seed,
            block_size: DEFAULT_BLOCK_SIZE,
        }
    }

    pub fn with_block_size(mut self, block_size: u64) -> Self {
        self.block_size = block_size;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.num_sims == 0 || self.block_size == 0 {
            return Err(RiskError::InvalidParameter(
                "num_sims and block_size must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn num_blocks(&self) -> u64 {
        self.num_sims.div_ceil(self.block_size)
    }
}

/// Tally of simulated loss counts.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LossHistogram {
    pub counts: BTreeMap<u64, u64>,
    pub num_sims: u64,
}

impl LossHistogram {
    pub fn from_counts(counts: BTreeMap<u64, u64>) -> Self {
        let num_sims = counts.values().sum();
        Self { counts, num_sims }
    }

    pub fn merge(&mut self, other: &LossHistogram) {
        for (&k, &c) in &other.counts {
            *self.counts.entry(k).or_default() += c;
        }
        self.num_sims += other.num_sims;
    }

    pub fn mean(&self) -> f64 {
        let s: f64 = self.counts.iter().map(|(&k, &c)| k as f64 * c as f64).sum();
        s / self.num_sims as f64
    }

    /// Renders `count,tally` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("count,tally\n");
        for (k, c) in &self.counts {
            out.push_str(&format!("{k},{c}\n"));
        }
        out
    }
}

/// Samplers for one `(model, N, n)` combination.
struct Sampler {
    kind: SamplerKind,
}

enum SamplerKind {
    Iid(Binomial),
    CommonShock {
        crisis: Bernoulli,
        shocked: Binomial,
        normal: Binomial,
    },
    PerExposure {
        crisis: Bernoulli,
        exposures: u64,
        /// indexed by number of crisis rounds
        shocked: Vec<Binomial>,
        normal: Vec<Binomial>,
    },
}

fn binomial(n: u64, p: f64) -> Result<Binomial> {
    Binomial::new(n, p).map_err(|e| RiskError::InvalidParameter(format!("binomial({n}, {p}): {e}")))
}

fn bernoulli(p: f64) -> Result<Bernoulli> {
    Bernoulli::new(p).map_err(|e| RiskError::InvalidParameter(format!("bernoulli({p}): {e}")))
}

impl Sampler {
    fn new(model: &ModelSpec, policies: u64, exposures: u64) -> Result<Self> {
        model.validate()?;
        let trials = policies * exposures;
        let kind = match *model {
            ModelSpec::Iid { p } => SamplerKind::Iid(binomial(trials, p)?),
            ModelSpec::CommonShock { p, q, p_tilde } => SamplerKind::CommonShock {
                crisis: bernoulli(p_tilde)?,
                shocked: binomial(trials, q)?,
                normal: binomial(trials, p)?,
            },
            ModelSpec::PerExposureShock { p, q, p_tilde } => SamplerKind::PerExposure {
                crisis: bernoulli(p_tilde)?,
                exposures,
                shocked: (0..=exposures)
                    .map(|j| binomial(policies * j, q))
                    .collect::<Result<_>>()?,
                normal: (0..=exposures)
                    .map(|j| binomial(policies * (exposures - j), p))
                    .collect::<Result<_>>()?,
            },
        };
        Ok(Self { kind })
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng) -> u64 {
        match &self.kind {
            SamplerKind::Iid(b) => b.sample(rng),
            SamplerKind::CommonShock {
                crisis,
                shocked,
                normal,
            } => {
                if crisis.sample(rng) {
                    shocked.sample(rng)
                } else {
                    normal.sample(rng)
                }
            }
            SamplerKind::PerExposure {
                crisis,
                exposures,
                shocked,
                normal,
            } => {
                let j = (0..*exposures).filter(|_| crisis.sample(rng)).count();
                shocked[j].sample(rng) + normal[j].sample(rng)
            }
        }
    }
}

fn block_rng(seed: u64, block: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Simulates `config.num_sims` portfolios on the global rayon pool.
pub fn simulate(
    model: &ModelSpec,
    policies: u64,
    exposures: u64,
    config: &SimulationConfig,
) -> Result<LossHistogram> {
    config.validate()?;
    let sampler = Sampler::new(model, policies, exposures)?;
    let max_count = policies * exposures;

    let blocks: Vec<Vec<(u64, u64)>> = (0..config.num_blocks())
        .into_par_iter()
        .map(|b| {
            let start = b * config.block_size;
            let len = config.block_size.min(config.num_sims - start);
            run_block(&sampler, block_rng(config.seed, b), len, max_count)
        })
        .collect();

    let mut counts = BTreeMap::new();
    for block in blocks {
        for (k, c) in block {
            *counts.entry(k).or_insert(0) += c;
        }
    }
    Ok(LossHistogram {
        counts,
        num_sims: config.num_sims,
    })
}

/// Like [`simulate`], on a dedicated pool of `workers` threads.
pub fn simulate_with_workers(
    model: &ModelSpec,
    policies: u64,
    exposures: u64,
    config: &SimulationConfig,
    workers: usize,
) -> Result<LossHistogram> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| RiskError::Internal(format!("thread pool: {e}")))?;
    pool.install(|| simulate(model, policies, exposures, config))
}

fn run_block(sampler: &Sampler, mut rng: ChaCha8Rng, len: u64, max_count: u64) -> Vec<(u64, u64)> {
    // dense tally for moderate supports, sparse otherwise
    if max_count <= 1 << 20 {
        let mut tally = vec![0u64; max_count as usize + 1];
        let (mut lo, mut hi) = (u64::MAX, 0);
        for _ in 0..len {
            let s = sampler.draw(&mut rng);
            tally[s as usize] += 1;
            lo = lo.min(s);
            hi = hi.max(s);
        }
        if len == 0 {
            return Vec::new();
        }
        (lo..=hi)
            .filter(|&k| tally[k as usize] > 0)
            .map(|k| (k, tally[k as usize]))
            .collect()
    } else {
        let mut tally = BTreeMap::new();
        for _ in 0..len {
            *tally.entry(sampler.draw(&mut rng)).or_insert(0u64) += 1;
        }
        tally.into_iter().collect()
    }
}

/// Empirical pmf of a histogram, with no truncated mass.
pub fn empirical_distribution(h: &LossHistogram) -> Result<DiscreteLossDistribution> {
    let (Some((&lo, _)), Some((&hi, _))) = (h.counts.first_key_value(), h.counts.last_key_value())
    else {
        return Err(RiskError::EmptyHistogram);
    };
    if h.num_sims == 0 {
        return Err(RiskError::EmptyHistogram);
    }
    let total = h.num_sims as f64;
    let mut masses = vec![0.0; (hi - lo + 1) as usize];
    for (&k, &c) in &h.counts {
        masses[(k - lo) as usize] = c as f64 / total;
    }
    DiscreteLossDistribution::from_parts(lo, masses, 0.0)
}

/// Bootstrap standard error of `statistic` evaluated on the empirical
/// distribution of `h`.
///
/// Each replicate redraws `num_sims` outcomes from the empirical pmf, which is
/// a multinomial draw over the histogram bins; it is generated bin by bin with
/// conditional binomials.
pub fn bootstrap_standard_error<F>(
    h: &LossHistogram,
    replicates: usize,
    seed: u64,
    statistic: F,
) -> Result<f64>
where
    F: Fn(&DiscreteLossDistribution) -> Result<f64> + Sync,
{
    if replicates < 2 {
        return Err(RiskError::InvalidParameter(
            "need at least 2 bootstrap replicates".into(),
        ));
    }
    let bins: Vec<(u64, u64)> = h.counts.iter().map(|(&k, &c)| (k, c)).collect();
    if bins.is_empty() {
        return Err(RiskError::EmptyHistogram);
    }
    let values: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = block_rng(seed, r);
            let mut remaining = h.num_sims;
            let mut remaining_tally = h.num_sims;
            let mut counts = BTreeMap::new();
            for &(k, c) in &bins {
                if remaining == 0 {
                    break;
                }
                let p = (c as f64 / remaining_tally as f64).min(1.0);
                let x = binomial(remaining, p)?.sample(&mut rng);
                if x > 0 {
                    counts.insert(k, x);
                }
                remaining -= x;
                remaining_tally -= c;
            }
            statistic(&empirical_distribution(&LossHistogram::from_counts(
                counts,
            ))?)
        })
        .collect::<Result<_>>()?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(var.sqrt())
}

/// Loadings for one simulation budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub sims: u64,
    /// One loading per requested measure, in request order.
    pub loadings: Vec<f64>,
}

/// Risk loadings as a function of the simulation budget. Every budget is
/// simulated with the same base seed and block size, so smaller budgets are
/// prefixes of larger ones.
pub fn convergence_study(
    model: &ModelSpec,
    params: &PortfolioParams,
    sims_list: &[u64],
    measures: &[RiskMeasureSpec],
    seed: u64,
    block_size: u64,
) -> Result<Vec<ConvergenceRow>> {
    if sims_list.is_empty() {
        return Err(RiskError::InvalidParameter(
            "empty simulation budget list".into(),
        ));
    }
    sims_list
        .iter()
        .map(|&sims| {
            let cfg = SimulationConfig::new(sims, seed).with_block_size(block_size);
            let hist = simulate(model, params.policies, params.exposures, &cfg)?;
            let dist = empirical_distribution(&hist)?;
            let loadings = measures
                .iter()
                .map(|m| loading_from_distribution(&dist, model, params, m))
                .collect::<Result<_>>()?;
            Ok(ConvergenceRow { sims, loadings })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{closed_form_mean_per_policy, closed_form_variance_per_policy};

    #[test]
    fn no_crisis_mean_matches_binomial() {
        let model = ModelSpec::PerExposureShock {
            p: 0.2,
            q: 0.9,
            p_tilde: 0.0,
        };
        for seed in [1, 2, 3] {
            let h = simulate(&model, 50, 6, &SimulationConfig::new(20_000, seed)).unwrap();
            let mean = 300.0 * 0.2;
            let se = (300.0 * 0.2 * 0.8 / 20_000.0f64).sqrt();
            assert!(
                (h.mean() - mean).abs() < 4.0 * se,
                "seed {seed}: {}",
                h.mean()
            );
            assert_eq!(h.num_sims, 20_000);
            assert_eq!(h.counts.values().sum::<u64>(), 20_000);
        }
    }

    #[test]
    fn histogram_keys_in_range() {
        let model = ModelSpec::CommonShock {
            p: 0.1,
            q: 0.95,
            p_tilde: 0.3,
        };
        let h = simulate(&model, 3, 4, &SimulationConfig::new(5_000, 9)).unwrap();
        assert!(h.counts.keys().all(|&k| k <= 12));
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let model = ModelSpec::PerExposureShock {
            p: 1.0 / 6.0,
            q: 0.5,
            p_tilde: 0.01,
        };
        let cfg = SimulationConfig::new(50_003, 42).with_block_size(4_096);
        let one = simulate_with_workers(&model, 100, 6, &cfg, 1).unwrap();
        for w in [2, 4, 8] {
            assert_eq!(simulate_with_workers(&model, 100, 6, &cfg, w).unwrap(), one);
        }
        let other_seed = SimulationConfig { seed: 43, ..cfg };
        assert_ne!(simulate(&model, 100, 6, &other_seed).unwrap(), one);
    }

    #[test]
    fn prefix_property_of_budgets() {
        let model = ModelSpec::Iid { p: 0.3 };
        let small = simulate(
            &model,
            5,
            6,
            &SimulationConfig::new(1_000, 7).with_block_size(100),
        )
        .unwrap();
        let large = simulate(
            &model,
            5,
            6,
            &SimulationConfig::new(1_050, 7).with_block_size(100),
        )
        .unwrap();
        assert!(small.counts.iter().all(|(k, c)| large.counts[k] >= *c));
    }

    #[test]
    fn empirical_point_mass() {
        let h = LossHistogram::from_counts(BTreeMap::from([(0, 1)]));
        assert_eq!(
            empirical_distribution(&h).unwrap(),
            DiscreteLossDistribution::point_mass(0)
        );
        assert_eq!(
            empirical_distribution(&LossHistogram::default()),
            Err(RiskError::EmptyHistogram)
        );
    }

    #[test]
    fn empirical_matches_exact_pmf() {
        let model = ModelSpec::Iid { p: 1.0 / 6.0 };
        let sims = 1_000_000u64;
        let h = simulate(&model, 1, 6, &SimulationConfig::new(sims, 11)).unwrap();
        let d = empirical_distribution(&h).unwrap();
        let exact = DiscreteLossDistribution::binomial(6, 1.0 / 6.0).unwrap();
        for (k, m) in exact.iter() {
            let bound = 5.0 * (m * (1.0 - m) / sims as f64).sqrt();
            assert!((d.pmf_at(k) - m).abs() <= bound.max(1e-12), "k={k}");
        }
    }

    #[test]
    fn unbiased_means_for_all_models() {
        let params = PortfolioParams::default().with_policies(20);
        let sims = 200_000u64;
        for model in [
            ModelSpec::Iid { p: 0.25 },
            ModelSpec::CommonShock {
                p: 1.0 / 6.0,
                q: 0.5,
                p_tilde: 0.05,
            },
            ModelSpec::PerExposureShock {
                p: 1.0 / 6.0,
                q: 0.5,
                p_tilde: 0.05,
            },
        ] {
            let h = simulate(&model, 20, 6, &SimulationConfig::new(sims, 5)).unwrap();
            let mean = params.severity * h.mean() / 20.0;
            let se = (closed_form_variance_per_policy(&model, &params) / sims as f64).sqrt();
            let want = closed_form_mean_per_policy(&model, &params);
            assert!(
                (mean - want).abs() < 4.0 * se,
                "{model:?}: {mean} vs {want}"
            );
        }
    }

    #[test]
    fn bootstrap_se_scales_like_sampling_error() {
        let model = ModelSpec::Iid { p: 0.5 };
        let h = simulate(&model, 10, 6, &SimulationConfig::new(40_000, 3)).unwrap();
        let se = bootstrap_standard_error(&h, 200, 17, |d| Ok(d.moments().mean)).unwrap();
        let expected = (60.0 * 0.25 / 40_000.0f64).sqrt();
        assert!((se / expected - 1.0).abs() < 0.25, "{se} vs {expected}");
        assert!(bootstrap_standard_error(&h, 1, 0, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let model = ModelSpec::Iid { p: 0.5 };
        assert!(simulate(&model, 1, 6, &SimulationConfig::new(0, 1)).is_err());
        assert!(simulate(
            &model,
            1,
            6,
            &SimulationConfig::new(10, 1).with_block_size(0)
        )
        .is_err());
        assert!(convergence_study(&model, &PortfolioParams::default(), &[], &[], 1, 10).is_err());
    }
}
