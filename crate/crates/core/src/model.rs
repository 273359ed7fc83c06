//! Data model: count tensors, hyperparameters, chain state and posterior
//! storage, plus the negative binomial log-likelihood.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{GmnbError, Result};

/// Which condition a sample belongs to, plus its replicate id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub name: String,
    pub condition: u8,
    pub replicate: u32,
}

/// Read counts indexed `[gene][time][sample]`.
///
/// The number of samples may differ between time points. Counts are stored
/// gene-major; inside a gene the cells are laid out time point by time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountTensor {
    gene_ids: Vec<String>,
    time_labels: Vec<f64>,
    samples: Vec<Vec<SampleMeta>>,
    offsets: Vec<usize>,
    counts: Vec<u64>,
}

impl CountTensor {
    /// Builds a tensor from gene-major counts. `counts` must hold
    /// `gene_ids.len() * total_samples` values, each gene's block ordered by
    /// time point and then by sample within the time point.
    pub fn new(
        gene_ids: Vec<String>,
        time_labels: Vec<f64>,
        samples: Vec<Vec<SampleMeta>>,
        counts: Vec<u64>,
    ) -> Result<Self> {
        if time_labels.is_empty() {
            return Err(GmnbError::Structural("at least one time point is required".into()));
        }
        if samples.len() != time_labels.len() {
            return Err(GmnbError::Structural(format!(
                "{} time labels but sample metadata for {} time points",
                time_labels.len(),
                samples.len()
            )));
        }
        if let Some(w) = time_labels.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(GmnbError::Validation(format!(
                "time labels must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(t) = samples.iter().position(|s| s.is_empty()) {
            return Err(GmnbError::Validation(format!("time point {t} has no samples")));
        }
        let mut offsets = Vec::with_capacity(samples.len() + 1);
        offsets.push(0);
        for s in &samples {
            offsets.push(offsets.last().unwrap() + s.len());
        }
        let n_cells = *offsets.last().unwrap();
        if counts.len() != gene_ids.len() * n_cells {
            return Err(GmnbError::Structural(format!(
                "expected {} counts ({} genes x {} samples), got {}",
                gene_ids.len() * n_cells,
                gene_ids.len(),
                n_cells,
                counts.len()
            )));
        }
        Ok(Self {
            gene_ids,
            time_labels,
            samples,
            offsets,
            counts,
        })
    }

    /// Builds a tensor from `counts[gene][time][sample]`.
    pub fn from_nested(
        gene_ids: Vec<String>,
        time_labels: Vec<f64>,
        samples: Vec<Vec<SampleMeta>>,
        counts: &[Vec<Vec<u64>>],
    ) -> Result<Self> {
        if counts.len() != gene_ids.len() {
            return Err(GmnbError::Structural(format!(
                "{} gene ids but counts for {} genes",
                gene_ids.len(),
                counts.len()
            )));
        }
        let mut flat = Vec::new();
        for (k, gene) in counts.iter().enumerate() {
            if gene.len() != samples.len() {
                return Err(GmnbError::Structural(format!("gene {k}: wrong number of time points")));
            }
            for (t, cells) in gene.iter().enumerate() {
                if cells.len() != samples[t].len() {
                    return Err(GmnbError::Structural(format!(
                        "gene {k}, time {t}: {} counts for {} samples",
                        cells.len(),
                        samples[t].len()
                    )));
                }
                flat.extend_from_slice(cells);
            }
        }
        Self::new(gene_ids, time_labels, samples, flat)
    }

    pub fn n_genes(&self) -> usize {
        self.gene_ids.len()
    }

    /// Number of time points (`T + 1`).
    pub fn n_times(&self) -> usize {
        self.time_labels.len()
    }

    /// Total samples across all time points.
    pub fn n_cells(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn gene_ids(&self) -> &[String] {
        &self.gene_ids
    }

    pub fn time_labels(&self) -> &[f64] {
        &self.time_labels
    }

    pub fn samples(&self) -> &[Vec<SampleMeta>] {
        &self.samples
    }

    pub fn samples_at(&self, t: usize) -> &[SampleMeta] {
        &self.samples[t]
    }

    /// Cell range of time point `t` inside one gene's block.
    pub fn time_range(&self, t: usize) -> Range<usize> {
        self.offsets[t]..self.offsets[t + 1]
    }

    pub fn gene_counts(&self, k: usize) -> &[u64] {
        let n = self.n_cells();
        &self.counts[k * n..(k + 1) * n]
    }

    pub fn counts_at(&self, k: usize, t: usize) -> &[u64] {
        &self.gene_counts(k)[self.time_range(t)]
    }

    pub fn count(&self, k: usize, t: usize, j: usize) -> u64 {
        self.counts_at(k, t)[j]
    }

    /// Sum over genes of every cell, in cell order.
    pub fn cell_totals(&self) -> Vec<u64> {
        let mut totals = vec![0u64; self.n_cells()];
        for k in 0..self.n_genes() {
            for (acc, &n) in totals.iter_mut().zip(self.gene_counts(k)) {
                *acc += n;
            }
        }
        totals
    }

    /// Sample-wise union with `other` at every time point (self's samples first).
    pub fn pool(&self, other: &CountTensor) -> Result<CountTensor> {
        self.check_compatible(other)?;
        let samples: Vec<Vec<SampleMeta>> = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a.iter().chain(b).cloned().collect())
            .collect();
        let mut counts = Vec::with_capacity(self.counts.len() + other.counts.len());
        for k in 0..self.n_genes() {
            for t in 0..self.n_times() {
                counts.extend_from_slice(self.counts_at(k, t));
                counts.extend_from_slice(other.counts_at(k, t));
            }
        }
        CountTensor::new(self.gene_ids.clone(), self.time_labels.clone(), samples, counts)
    }

    /// Checks that two tensors share the gene list and the time grid.
    pub fn check_compatible(&self, other: &CountTensor) -> Result<()> {
        if self.gene_ids != other.gene_ids {
            return Err(GmnbError::Structural("gene sets differ between conditions".into()));
        }
        if self.time_labels != other.time_labels {
            return Err(GmnbError::Structural("time grids differ between conditions".into()));
        }
        Ok(())
    }

    /// Restriction to a subset of genes, in the given order.
    pub fn select_genes(&self, genes: &[usize]) -> Result<CountTensor> {
        let mut counts = Vec::with_capacity(genes.len() * self.n_cells());
        let mut ids = Vec::with_capacity(genes.len());
        for &k in genes {
            if k >= self.n_genes() {
                return Err(GmnbError::Structural(format!("gene index {k} out of range")));
            }
            ids.push(self.gene_ids[k].clone());
            counts.extend_from_slice(self.gene_counts(k));
        }
        CountTensor::new(ids, self.time_labels.clone(), self.samples.clone(), counts)
    }

    /// True when every count of gene `k` is zero.
    pub fn is_all_zero(&self, k: usize) -> bool {
        self.gene_counts(k).iter().all(|&n| n == 0)
    }
}

/// Fixed hyperparameters of the priors.
///
/// `p ~ Beta(a0, b0)`, `r^(0) ~ Gamma(e_init, 1/f_init)`, `c ~ Gamma(c0, 1/d0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmnbHyper {
    pub a0: f64,
    pub b0: f64,
    pub e_init: f64,
    pub f_init: f64,
    pub c0: f64,
    pub d0: f64,
}

impl Default for GmnbHyper {
    fn default() -> Self {
        Self {
            a0: 1.0,
            b0: 1.0,
            e_init: 1.0,
            f_init: 1.0,
            c0: 1.0,
            d0: 1.0,
        }
    }
}

impl GmnbHyper {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("a0", self.a0),
            ("b0", self.b0),
            ("e_init", self.e_init),
            ("f_init", self.f_init),
            ("c0", self.c0),
            ("d0", self.d0),
        ];
        for (name, v) in fields {
            if !(v > 0.0 && v.is_finite()) {
                return Err(GmnbError::Validation(format!(
                    "hyperparameter {name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-gene part of a Gibbs state.
///
/// `u[t]` holds the tables passed from time `t` back to time `t - 1`
/// (`u^{(t-1)(t)}`); `u[0]` is unused and `u[T + 1]` is always zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneState {
    pub r: Vec<f64>,
    pub c: f64,
    pub l: Vec<u64>,
    pub l_dot: Vec<u64>,
    pub u: Vec<u64>,
    pub q: Vec<f64>,
}

impl GeneState {
    pub fn new(n_times: usize, n_cells: usize, r_init: f64, c_init: f64) -> Self {
        Self {
            r: vec![r_init; n_times],
            c: c_init,
            l: vec![0; n_cells],
            l_dot: vec![0; n_times],
            u: vec![0; n_times + 1],
            q: vec![0.0; n_times],
        }
    }
}

/// One full Gibbs state: gene-level quantities and the shared `p[t][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub genes: Vec<GeneState>,
    pub p: Vec<Vec<f64>>,
}

impl ChainState {
    /// Default starting point: `r = max(gene mean count, 1)` everywhere,
    /// `c = 1`, `p = 0.5`.
    pub fn initial(data: &CountTensor) -> Self {
        let n_cells = data.n_cells();
        let genes = (0..data.n_genes())
            .map(|k| {
                let counts = data.gene_counts(k);
                let mean = counts.iter().map(|&n| n as f64).sum::<f64>() / n_cells as f64;
                GeneState::new(data.n_times(), n_cells, mean.max(1.0), 1.0)
            })
            .collect();
        let p = data.samples().iter().map(|s| vec![0.5; s.len()]).collect();
        Self { genes, p }
    }

    /// Checks that the state's shape matches `data`.
    pub fn check_dims(&self, data: &CountTensor) -> Result<()> {
        if self.genes.len() != data.n_genes() {
            return Err(GmnbError::Structural(format!(
                "state has {} genes, data has {}",
                self.genes.len(),
                data.n_genes()
            )));
        }
        if self.p.len() != data.n_times()
            || self.p.iter().zip(data.samples()).any(|(p, s)| p.len() != s.len())
        {
            return Err(GmnbError::Structural("p does not match the sample layout".into()));
        }
        let t1 = data.n_times();
        let bad = self.genes.iter().position(|g| {
            g.r.len() != t1 || g.q.len() != t1 || g.l_dot.len() != t1 || g.u.len() != t1 + 1 || g.l.len() != data.n_cells()
        });
        if let Some(k) = bad {
            return Err(GmnbError::Structural(format!("gene {k} state has the wrong time dimension")));
        }
        Ok(())
    }
}

/// A retained posterior draw (`r`, `c`, `p` only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub r: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub p: Vec<Vec<f64>>,
}

/// Post-burn-in output of a Gibbs run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub burn_in: usize,
    pub thin: usize,
    pub total_iters: usize,
    /// Snapshots, empty when the run was configured not to keep them.
    pub draws: Vec<Draw>,
    /// Total data log-likelihood of each retained draw.
    pub loglik_per_draw: Vec<f64>,
    /// `gene_loglik[k][s]`: log-likelihood of gene `k`'s cells under draw `s`.
    pub gene_loglik: Vec<Vec<f64>>,
}

impl PosteriorSamples {
    pub fn n_draws(&self) -> usize {
        self.loglik_per_draw.len()
    }
}

/// Log pmf of NB(r, p) at `n`, given `ln(n!)`.
#[inline]
pub fn nb_ln_pmf(n: u64, r: f64, ln_p: f64, ln_1mp: f64, ln_fact_n: f64) -> f64 {
    if n == 0 {
        return r * ln_1mp;
    }
    let nf = n as f64;
    ln_gamma(nf + r) - ln_gamma(r) - ln_fact_n + nf * ln_p + r * ln_1mp
}

/// Log-likelihood of gene `k` under dispersions `r[t]` and shared `p[t][j]`.
pub fn gene_log_likelihood(data: &CountTensor, k: usize, r: &[f64], p: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (t, p_t) in p.iter().enumerate() {
        for (&n, &pj) in data.counts_at(k, t).iter().zip(p_t) {
            let ln_fact = ln_gamma(n as f64 + 1.0);
            total += nb_ln_pmf(n, r[t], pj.ln(), (-pj).ln_1p(), ln_fact);
        }
    }
    total
}

/// Negative binomial log-likelihood of all counts under `state`.
pub fn log_likelihood(data: &CountTensor, state: &ChainState) -> Result<f64> {
    state.check_dims(data)?;
    Ok((0..data.n_genes())
        .map(|k| gene_log_likelihood(data, k, &state.genes[k].r, &state.p))
        .sum())
}

/// Expected count `r p / (1 - p)` of an NB(r, p) cell.
pub fn expected_count(r: f64, p: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(GmnbError::domain("expected_count", format!("r must be positive, got {r}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(GmnbError::domain("expected_count", format!("p must lie in (0, 1), got {p}")));
    }
    Ok(r * p / (1.0 - p))
}
