//! Closed-form Gibbs sampler for the gamma Markov negative binomial model.
//!
//! One sweep runs, per gene and given the current `p`:
//!
//! 1. backward pass: CRT auxiliary counts `l^(t)` for every cell and the
//!    tables `u^{(t-1)(t)}` carried from each time point to the one before;
//! 2. the `q^(t)` recursion that folds the future into each time point;
//! 3. forward pass: `r^(0), ..., r^(T)` from their gamma conditionals;
//! 4. the conjugate gamma update of `c`;
//!
//! followed by the conjugate beta update of every `p_j^(t)`, which needs sums
//! over all genes and therefore acts as a barrier between sweeps.
//!
//! Every gene owns a random stream keyed by `(seed, gene index)`, and `p` owns
//! its own stream, so results do not depend on how genes are scheduled.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::distributions::{beta_unchecked, crt_unchecked, gamma_unchecked, CRT_EXACT_THRESHOLD};
use crate::error::{GmnbError, Result};
use crate::model::{nb_ln_pmf, ChainState, CountTensor, Draw, GeneState, GmnbHyper, PosteriorSamples};
use crate::rng::RngStream;

/// Stream id reserved for the `p` updates.
pub const P_STREAM: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GibbsConfig {
    pub total_iters: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Spread gene updates over the rayon pool (no effect on the draws).
    pub parallel_genes: bool,
    /// Customer count above which CRT draws switch to the normal approximation.
    pub crt_threshold: u64,
    /// Keep `r`, `c`, `p` snapshots of every retained iteration.
    pub store_draws: bool,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            total_iters: 2000,
            burn_in: 1000,
            thin: 1,
            seed: 0,
            parallel_genes: true,
            crt_threshold: CRT_EXACT_THRESHOLD,
            store_draws: true,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.total_iters == 0 {
            return Err(GmnbError::Validation("total_iters must be positive".into()));
        }
        if self.burn_in >= self.total_iters {
            return Err(GmnbError::Validation(format!(
                "burn_in ({}) must be smaller than total_iters ({})",
                self.burn_in, self.total_iters
            )));
        }
        if self.thin == 0 {
            return Err(GmnbError::Validation("thin must be positive".into()));
        }
        Ok(())
    }

    /// Number of draws a run keeps.
    pub fn n_retained(&self) -> usize {
        (self.total_iters - self.burn_in).div_ceil(self.thin)
    }
}

/// A failed invariant inside one gene's update: `(time index, detail)`.
type GeneFault = (usize, String);

/// `-sum_j ln(1 - p_j^(t))` for every time point.
pub fn p_log_mass(p: &[Vec<f64>]) -> Vec<f64> {
    p.iter().map(|pt| pt.iter().map(|&pj| -(-pj).ln_1p()).sum()).collect()
}

fn gene_backward<R: Rng + ?Sized>(
    counts: &[u64],
    ranges: &[Range<usize>],
    gene: &mut GeneState,
    crt_threshold: u64,
    rng: &mut R,
) {
    let last = ranges.len() - 1;
    gene.u[last + 1] = 0;
    for t in (0..=last).rev() {
        let r_t = gene.r[t];
        let mut l_dot = 0u64;
        for cell in ranges[t].clone() {
            let l = crt_unchecked(counts[cell], r_t, crt_threshold, rng);
            gene.l[cell] = l;
            l_dot += l;
        }
        gene.l_dot[t] = l_dot;
        if t > 0 {
            gene.u[t] = crt_unchecked(gene.u[t + 1] + l_dot, gene.r[t - 1], crt_threshold, rng);
        }
    }
    gene.u[0] = 0;
}

/// Fills `q` and returns `-ln(1 - q^(t))` for each time point.
///
/// The log terms are carried directly (`-ln(1 - q) = ln(1 + A / c)`) so that
/// `q` close to one does not lose precision.
fn gene_q(gene: &mut GeneState, p_mass: &[f64], q_tail: &mut Vec<f64>) -> std::result::Result<(), GeneFault> {
    let last = p_mass.len() - 1;
    q_tail.clear();
    q_tail.resize(last + 1, 0.0);
    gene.q[last] = 0.0;
    for t in (0..last).rev() {
        let a = p_mass[t + 1] + q_tail[t + 1];
        if !a.is_finite() {
            return Err((t, format!("q recursion produced non-finite mass {a}")));
        }
        gene.q[t] = a / (gene.c + a);
        q_tail[t] = (a / gene.c).ln_1p();
    }
    Ok(())
}

fn gene_forward<R: Rng + ?Sized>(
    gene: &mut GeneState,
    p_mass: &[f64],
    q_tail: &[f64],
    hyper: &GmnbHyper,
    rng: &mut R,
) -> std::result::Result<(), GeneFault> {
    for t in 0..p_mass.len() {
        let (prior_shape, prior_rate) = if t == 0 {
            (hyper.e_init, hyper.f_init)
        } else {
            (gene.r[t - 1], gene.c)
        };
        let shape = prior_shape + (gene.u[t + 1] + gene.l_dot[t]) as f64;
        let theta = prior_rate + p_mass[t] + q_tail[t];
        if !(theta > 0.0 && theta.is_finite()) {
            return Err((t, format!("theta = {theta} is not positive")));
        }
        gene.r[t] = gamma_unchecked(shape, 1.0 / theta, rng);
    }
    Ok(())
}

fn gene_update_c<R: Rng + ?Sized>(gene: &mut GeneState, hyper: &GmnbHyper, rng: &mut R) {
    let last = gene.r.len() - 1;
    let shape = hyper.c0 + gene.r[..last].iter().sum::<f64>();
    let rate = hyper.d0 + gene.r[1..].iter().sum::<f64>();
    gene.c = gamma_unchecked(shape, 1.0 / rate, rng);
}

#[allow(clippy::too_many_arguments)]
fn gene_sweep<R: Rng + ?Sized>(
    counts: &[u64],
    ranges: &[Range<usize>],
    gene: &mut GeneState,
    p_mass: &[f64],
    hyper: &GmnbHyper,
    crt_threshold: u64,
    rng: &mut R,
) -> std::result::Result<(), GeneFault> {
    let mut q_tail = Vec::with_capacity(p_mass.len());
    gene_backward(counts, ranges, gene, crt_threshold, rng);
    gene_q(gene, p_mass, &mut q_tail)?;
    gene_forward(gene, p_mass, &q_tail, hyper, rng)?;
    gene_update_c(gene, hyper, rng);
    Ok(())
}

fn time_ranges(data: &CountTensor) -> Vec<Range<usize>> {
    (0..data.n_times()).map(|t| data.time_range(t)).collect()
}

fn numeric(iteration: usize, gene: usize, fault: GeneFault) -> GmnbError {
    GmnbError::Numeric {
        iteration,
        gene,
        time: fault.0,
        detail: fault.1,
    }
}

/// Backward pass over all genes: draws `l`, `l_dot` and `u`.
pub fn backward_pass<R: Rng + ?Sized>(data: &CountTensor, state: &mut ChainState, rng: &mut R) -> Result<()> {
    state.check_dims(data)?;
    let ranges = time_ranges(data);
    for (k, gene) in state.genes.iter_mut().enumerate() {
        gene_backward(data.gene_counts(k), &ranges, gene, CRT_EXACT_THRESHOLD, rng);
    }
    Ok(())
}

/// Recomputes `q` for every gene from the current `c` and `p`.
pub fn compute_q(state: &mut ChainState) -> Result<()> {
    let p_mass = p_log_mass(&state.p);
    let mut scratch = Vec::new();
    for (k, gene) in state.genes.iter_mut().enumerate() {
        gene_q(gene, &p_mass, &mut scratch).map_err(|f| numeric(0, k, f))?;
    }
    Ok(())
}

/// Forward pass over all genes: draws `r^(0..=T)` given `l_dot`, `u`, `c`, `p`.
///
/// `q` is recomputed from `c` and `p` on the way, so it always matches them.
pub fn forward_pass<R: Rng + ?Sized>(state: &mut ChainState, hyper: &GmnbHyper, rng: &mut R) -> Result<()> {
    let p_mass = p_log_mass(&state.p);
    let mut q_tail = Vec::new();
    for (k, gene) in state.genes.iter_mut().enumerate() {
        gene_q(gene, &p_mass, &mut q_tail).map_err(|f| numeric(0, k, f))?;
        gene_forward(gene, &p_mass, &q_tail, hyper, rng).map_err(|f| numeric(0, k, f))?;
    }
    Ok(())
}

/// Conjugate update of every `c_k`.
pub fn update_c<R: Rng + ?Sized>(state: &mut ChainState, hyper: &GmnbHyper, rng: &mut R) {
    for gene in &mut state.genes {
        gene_update_c(gene, hyper, rng);
    }
}

/// Conjugate update of every `p_j^(t)`:
/// `Beta(a0 + sum_k n_kj^(t), b0 + sum_k r_k^(t))`.
pub fn update_p<R: Rng + ?Sized>(
    data: &CountTensor,
    state: &mut ChainState,
    hyper: &GmnbHyper,
    rng: &mut R,
) -> Result<()> {
    state.check_dims(data)?;
    update_p_with_totals(data, &data.cell_totals(), state, hyper, rng);
    Ok(())
}

fn update_p_with_totals<R: Rng + ?Sized>(
    data: &CountTensor,
    cell_totals: &[u64],
    state: &mut ChainState,
    hyper: &GmnbHyper,
    rng: &mut R,
) {
    for t in 0..data.n_times() {
        // Summed in gene order so the result is schedule independent.
        let r_sum: f64 = state.genes.iter().map(|g| g.r[t]).sum();
        let b = hyper.b0 + r_sum;
        for (pj, &n_sum) in state.p[t].iter_mut().zip(&cell_totals[data.time_range(t)]) {
            *pj = beta_unchecked(hyper.a0 + n_sum as f64, b, rng);
        }
    }
}

/// Gibbs transition kernel with its own random streams.
///
/// Holds no data, so the same kernel can be applied to changing datasets
/// (as in joint-distribution tests that resimulate the data every sweep).
#[derive(Debug, Clone)]
pub struct GibbsKernel {
    hyper: GmnbHyper,
    crt_threshold: u64,
    parallel: bool,
    gene_rngs: Vec<RngStream>,
    p_rng: RngStream,
    iteration: usize,
}

impl GibbsKernel {
    pub fn new(n_genes: usize, hyper: GmnbHyper, cfg: &GibbsConfig) -> Self {
        Self {
            hyper,
            crt_threshold: cfg.crt_threshold,
            parallel: cfg.parallel_genes,
            gene_rngs: (0..n_genes as u64).map(|k| RngStream::new(cfg.seed, k)).collect(),
            p_rng: RngStream::new(cfg.seed, P_STREAM),
            iteration: 0,
        }
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// One full sweep: per-gene backward / q / forward / c, then `p`.
    pub fn sweep(&mut self, data: &CountTensor, state: &mut ChainState) -> Result<()> {
        self.sweep_with_totals(data, &data.cell_totals(), state)
    }

    fn sweep_with_totals(&mut self, data: &CountTensor, cell_totals: &[u64], state: &mut ChainState) -> Result<()> {
        let ranges = time_ranges(data);
        let p_mass = p_log_mass(&state.p);
        let hyper = self.hyper;
        let threshold = self.crt_threshold;
        let outcomes = for_each_gene(&mut state.genes, &mut self.gene_rngs, self.parallel, |k, gene, rng| {
            gene_sweep(data.gene_counts(k), &ranges, gene, &p_mass, &hyper, threshold, rng)
        });
        if let Some((k, fault)) = outcomes {
            return Err(numeric(self.iteration, k, fault));
        }
        update_p_with_totals(data, cell_totals, state, &hyper, &mut self.p_rng);
        self.iteration += 1;
        Ok(())
    }
}

/// Applies `f` to every gene with its stream, returning the first fault by
/// gene index.
fn for_each_gene<F>(
    genes: &mut [GeneState],
    rngs: &mut [RngStream],
    parallel: bool,
    f: F,
) -> Option<(usize, GeneFault)>
where
    F: Fn(usize, &mut GeneState, &mut RngStream) -> std::result::Result<(), GeneFault> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if parallel {
        let faults: Vec<(usize, GeneFault)> = genes
            .par_iter_mut()
            .zip(rngs.par_iter_mut())
            .enumerate()
            .filter_map(|(k, (g, rng))| f(k, g, rng).err().map(|e| (k, e)))
            .collect();
        return faults.into_iter().min_by_key(|(k, _)| *k);
    }
    let _ = parallel;
    genes
        .iter_mut()
        .zip(rngs.iter_mut())
        .enumerate()
        .find_map(|(k, (g, rng))| f(k, g, rng).err().map(|e| (k, e)))
}

fn gene_logliks(data: &CountTensor, ln_fact: &[f64], state: &ChainState, parallel: bool) -> Vec<f64> {
    let ln_p: Vec<Vec<(f64, f64)>> = state
        .p
        .iter()
        .map(|pt| pt.iter().map(|&p| (p.ln(), (-p).ln_1p())).collect())
        .collect();
    let n_cells = data.n_cells();
    let eval = |k: usize| -> f64 {
        let r = &state.genes[k].r;
        let facts = &ln_fact[k * n_cells..(k + 1) * n_cells];
        let mut total = 0.0;
        for (t, lp_t) in ln_p.iter().enumerate() {
            let range = data.time_range(t);
            let counts = &data.gene_counts(k)[range.clone()];
            for ((&n, &(lp, l1mp)), &lf) in counts.iter().zip(lp_t).zip(&facts[range]) {
                total += nb_ln_pmf(n, r[t], lp, l1mp, lf);
            }
        }
        total
    };
    #[cfg(feature = "parallel")]
    if parallel {
        return (0..data.n_genes()).into_par_iter().map(eval).collect();
    }
    let _ = parallel;
    (0..data.n_genes()).map(eval).collect()
}

/// Runs the sampler from the default starting state.
pub fn run_gibbs(data: &CountTensor, hyper: &GmnbHyper, cfg: &GibbsConfig) -> Result<PosteriorSamples> {
    run_gibbs_from(data, hyper, cfg, ChainState::initial(data))
}

/// Runs `cfg.total_iters` sweeps from `state`, keeping every `thin`-th draw
/// after burn-in together with its per-gene log-likelihood.
pub fn run_gibbs_from(
    data: &CountTensor,
    hyper: &GmnbHyper,
    cfg: &GibbsConfig,
    mut state: ChainState,
) -> Result<PosteriorSamples> {
    hyper.validate()?;
    cfg.validate()?;
    if data.n_genes() == 0 {
        return Err(GmnbError::Structural("count tensor has no genes".into()));
    }
    state.check_dims(data)?;

    let cell_totals = data.cell_totals();
    let ln_fact: Vec<f64> = (0..data.n_genes())
        .flat_map(|k| data.gene_counts(k).iter().map(|&n| ln_gamma(n as f64 + 1.0)))
        .collect();
    let mut kernel = GibbsKernel::new(data.n_genes(), *hyper, cfg);

    let n_keep = cfg.n_retained();
    let mut out = PosteriorSamples {
        burn_in: cfg.burn_in,
        thin: cfg.thin,
        total_iters: cfg.total_iters,
        draws: Vec::with_capacity(if cfg.store_draws { n_keep } else { 0 }),
        loglik_per_draw: Vec::with_capacity(n_keep),
        gene_loglik: vec![Vec::with_capacity(n_keep); data.n_genes()],
    };

    for iter in 0..cfg.total_iters {
        kernel.sweep_with_totals(data, &cell_totals, &mut state)?;
        if iter < cfg.burn_in || (iter - cfg.burn_in) % cfg.thin != 0 {
            continue;
        }
        let lls = gene_logliks(data, &ln_fact, &state, cfg.parallel_genes);
        out.loglik_per_draw.push(lls.iter().sum());
        for (dst, ll) in out.gene_loglik.iter_mut().zip(lls) {
            dst.push(ll);
        }
        if cfg.store_draws {
            out.draws.push(Draw {
                r: state.genes.iter().map(|g| g.r.clone()).collect(),
                c: state.genes.iter().map(|g| g.c).collect(),
                p: state.p.clone(),
            });
        }
    }
    Ok(out)
}
