//! Two-condition Bayes factors.
//!
//! `M0` is fitted to the pooled samples of both conditions, `M1` and `M2` to
//! each condition on its own. Marginal likelihoods are estimated per gene from
//! the posterior draws, and genes are ranked by
//! `log BF = log p(D1 | M1) + log p(D2 | M2) - log p(D | M0)` (equal prior odds).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{GmnbError, Result};
use crate::gibbs::{run_gibbs, GibbsConfig};
use crate::model::{CountTensor, GmnbHyper, PosteriorSamples};
use crate::rng::derive_seed;

/// Natural log of 10: the conventional `BF > 10` call.
pub const LN_10: f64 = std::f64::consts::LN_10;

/// Monte Carlo estimator of the marginal likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// `-log mean_s exp(-loglik_s)`.
    #[default]
    HarmonicMean,
    /// `log mean_s exp(loglik_s)`.
    PosteriorMeanLikelihood,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::HarmonicMean => "harmonic-mean",
            Estimator::PosteriorMeanLikelihood => "posterior-mean-likelihood",
        }
    }

    pub fn other(&self) -> Estimator {
        match self {
            Estimator::HarmonicMean => Estimator::PosteriorMeanLikelihood,
            Estimator::PosteriorMeanLikelihood => Estimator::HarmonicMean,
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimator {
    type Err = GmnbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "harmonic-mean" | "hm" => Ok(Estimator::HarmonicMean),
            "posterior-mean-likelihood" | "pml" => Ok(Estimator::PosteriorMeanLikelihood),
            _ => Err(GmnbError::Validation(format!("unknown estimator '{s}'"))),
        }
    }
}

/// `log sum_i exp(x_i)`, shifted by the maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// Marginal-likelihood estimate from a sequence of posterior log-likelihoods.
pub fn log_marginal_likelihood(logliks: &[f64], method: Estimator) -> Result<f64> {
    if logliks.is_empty() {
        return Err(GmnbError::Structural("no posterior draws to integrate over".into()));
    }
    let ln_s = (logliks.len() as f64).ln();
    Ok(match method {
        Estimator::PosteriorMeanLikelihood => log_sum_exp(logliks) - ln_s,
        Estimator::HarmonicMean => {
            let neg: Vec<f64> = logliks.iter().map(|&x| -x).collect();
            -(log_sum_exp(&neg) - ln_s)
        }
    })
}

/// Marginal-likelihood estimate of the whole dataset.
pub fn samples_log_marginal_likelihood(samples: &PosteriorSamples, method: Estimator) -> Result<f64> {
    log_marginal_likelihood(&samples.loglik_per_draw, method)
}

/// Per-gene marginal-likelihood estimates.
pub fn gene_log_marginal_likelihoods(samples: &PosteriorSamples, method: Estimator) -> Result<Vec<f64>> {
    samples
        .gene_loglik
        .iter()
        .map(|lls| log_marginal_likelihood(lls, method))
        .collect()
}

/// Posterior samples of the pooled model and the two per-condition models.
#[derive(Debug, Clone)]
pub struct ModelFits {
    pub m0: PosteriorSamples,
    pub m1: PosteriorSamples,
    pub m2: PosteriorSamples,
}

/// Content hash of the counts and time grid (sample labels excluded), used
/// to key each fit's seed to its data rather than to its condition label.
fn content_key(data: &CountTensor) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01B3;
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(PRIME);
        }
    };
    eat(data.n_genes() as u64);
    for t in 0..data.n_times() {
        eat(data.time_labels()[t].to_bits());
        eat(data.samples_at(t).len() as u64);
    }
    for k in 0..data.n_genes() {
        for &n in data.gene_counts(k) {
            eat(n);
        }
    }
    h
}

/// Pools two conditions in an order that does not depend on which one is
/// called condition 1. This is the data the pooled model is fitted to.
pub fn canonical_pool(data1: &CountTensor, data2: &CountTensor) -> Result<CountTensor> {
    if content_key(data1) <= content_key(data2) {
        data1.pool(data2)
    } else {
        data2.pool(data1)
    }
}

/// Fits `M0` on the pooled samples and `M1`, `M2` on each condition.
///
/// Each fit is seeded from `cfg.seed` and the content of its data, so
/// swapping the condition labels reproduces the same three fits.
pub fn fit_three_models(
    data1: &CountTensor,
    data2: &CountTensor,
    hyper: &GmnbHyper,
    cfg: &GibbsConfig,
) -> Result<ModelFits> {
    if data1.n_genes() == 0 || data2.n_genes() == 0 {
        return Err(GmnbError::Structural("both conditions need at least one gene".into()));
    }
    data1.check_compatible(data2)?;
    let pooled = canonical_pool(data1, data2)?;
    let seeded = |d: &CountTensor| GibbsConfig {
        seed: derive_seed(cfg.seed, content_key(d)),
        ..*cfg
    };
    let fit = |d: &CountTensor| run_gibbs(d, hyper, &seeded(d));

    #[cfg(feature = "parallel")]
    let (m0, (m1, m2)) = if cfg.parallel_genes {
        rayon::join(|| fit(&pooled), || rayon::join(|| fit(data1), || fit(data2)))
    } else {
        (fit(&pooled), (fit(data1), fit(data2)))
    };
    #[cfg(not(feature = "parallel"))]
    let (m0, (m1, m2)) = (fit(&pooled), (fit(data1), fit(data2)));

    Ok(ModelFits {
        m0: m0?,
        m1: m1?,
        m2: m2?,
    })
}

/// One gene's entry in a [`BfReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneBf {
    pub gene_id: String,
    pub rank: usize,
    pub log_bf: f64,
    pub log_ml_m0: f64,
    pub log_ml_m1: f64,
    pub log_ml_m2: f64,
    /// `log BF` under the estimator that was not selected.
    pub alt_log_bf: f64,
    /// Gene has zero counts in every sample of both conditions.
    pub all_zero: bool,
}

impl GeneBf {
    /// Unranked entry; `log_bf` is the sum of the marginal likelihoods.
    pub fn new(gene_id: impl Into<String>, log_ml_m0: f64, log_ml_m1: f64, log_ml_m2: f64) -> Self {
        Self {
            gene_id: gene_id.into(),
            rank: 0,
            log_bf: log_ml_m1 + log_ml_m2 - log_ml_m0,
            log_ml_m0,
            log_ml_m1,
            log_ml_m2,
            alt_log_bf: f64::NAN,
            all_zero: false,
        }
    }

    /// The `BF > 10` differential-expression call.
    pub fn is_called(&self, log_threshold: f64) -> bool {
        self.log_bf > log_threshold
    }
}

/// Genes sorted by decreasing `log_bf`, rank 1 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfReport {
    pub estimator: Estimator,
    pub genes: Vec<GeneBf>,
}

impl BfReport {
    /// Scores in the original gene order given by `gene_ids`.
    pub fn scores_in_order(&self, gene_ids: &[String]) -> Result<Vec<f64>> {
        let by_id: std::collections::HashMap<&str, f64> =
            self.genes.iter().map(|g| (g.gene_id.as_str(), g.log_bf)).collect();
        gene_ids
            .iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| GmnbError::Structural(format!("gene '{id}' missing from report")))
            })
            .collect()
    }

    /// Genes passing `log_bf > log_threshold`, in rank order.
    pub fn called(&self, log_threshold: f64) -> impl Iterator<Item = &GeneBf> {
        self.genes.iter().filter(move |g| g.is_called(log_threshold))
    }
}

/// Sorts by `log_bf` descending (ties by gene id) and assigns ranks.
pub fn rank_genes(mut genes: Vec<GeneBf>, estimator: Estimator) -> BfReport {
    genes.sort_by(|a, b| {
        b.log_bf
            .total_cmp(&a.log_bf)
            .then_with(|| a.gene_id.cmp(&b.gene_id))
    });
    for (i, g) in genes.iter_mut().enumerate() {
        g.rank = i + 1;
    }
    BfReport { estimator, genes }
}

/// Builds the ranked report from three fits.
pub fn bayes_factors(
    fits: &ModelFits,
    data1: &CountTensor,
    data2: &CountTensor,
    estimator: Estimator,
) -> Result<BfReport> {
    let k = data1.n_genes();
    for (name, m) in [("M0", &fits.m0), ("M1", &fits.m1), ("M2", &fits.m2)] {
        if m.gene_loglik.len() != k {
            return Err(GmnbError::Structural(format!("{name} was fitted to a different gene set")));
        }
    }
    let ml = |m: &PosteriorSamples, e: Estimator| gene_log_marginal_likelihoods(m, e);
    let (m0, m1, m2) = (ml(&fits.m0, estimator)?, ml(&fits.m1, estimator)?, ml(&fits.m2, estimator)?);
    let other = estimator.other();
    let (a0, a1, a2) = (ml(&fits.m0, other)?, ml(&fits.m1, other)?, ml(&fits.m2, other)?);
    let genes = (0..k)
        .map(|i| {
            let mut g = GeneBf::new(data1.gene_ids()[i].clone(), m0[i], m1[i], m2[i]);
            g.alt_log_bf = a1[i] + a2[i] - a0[i];
            g.all_zero = data1.is_all_zero(i) && data2.is_all_zero(i);
            g
        })
        .collect();
    Ok(rank_genes(genes, estimator))
}

/// Fits the three models and ranks the genes.
pub fn differential_expression(
    data1: &CountTensor,
    data2: &CountTensor,
    hyper: &GmnbHyper,
    cfg: &GibbsConfig,
    estimator: Estimator,
) -> Result<(BfReport, ModelFits)> {
    let fits = fit_three_models(data1, data2, hyper, cfg)?;
    let report = bayes_factors(&fits, data1, data2, estimator)?;
    Ok((report, fits))
}
