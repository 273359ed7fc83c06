//! Synthetic two-condition time-course benchmarks with known DE labels.
//!
//! Three generators are available:
//!
//! - `gmnb`: gamma Markov chains of NB dispersions (the model's own
//!   generative process), DE genes get a shifted chain rate in condition 2;
//! - `gp`: Gaussian-process mean trajectories with an exponential kernel,
//!   DE genes get scaled mean and variance and a shifted length scale;
//! - `nbar1`: log-means following an AR(1) process, DE genes get a scaled
//!   autoregressive coefficient.
//!
//! For every generator a null gene shares its latent trajectory between
//! conditions, so only sequencing depth and count noise differ. A DE gene's
//! condition-2 trajectory is drawn afresh from the perturbed parameters.
//! Sequencing depth enters through per-sample size factors `s`, mapped to
//! `p = s / (1 + s)` so that the expected count is multiplied by exactly `s`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{gamma_unchecked, nb_unchecked};
use crate::error::{GmnbError, Result};
use crate::model::{CountTensor, SampleMeta};
use crate::rng::RngStream;

const SIZE_FACTOR_STREAM: u64 = 1 << 62;
const LABEL_STREAM: u64 = (1 << 62) + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Gmnb,
    Gp,
    Nbar1,
}

impl Generator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Generator::Gmnb => "gmnb",
            Generator::Gp => "gp",
            Generator::Nbar1 => "nbar1",
        }
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Generator {
    type Err = GmnbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gmnb" => Ok(Generator::Gmnb),
            "gp" | "dynb" => Ok(Generator::Gp),
            "nbar1" | "ar" => Ok(Generator::Nbar1),
            _ => Err(GmnbError::Validation(format!("unknown generator '{s}'"))),
        }
    }
}

/// Closed interval `[lo, hi]` for uniform draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi {
            Ok(())
        } else {
            Err(GmnbError::Validation(format!("{name}: invalid interval [{}, {}]", self.lo, self.hi)))
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.lo + (self.hi - self.lo) * rng.random::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmnbSimParams {
    pub c_range: Interval,
    /// `|b|`: condition-2 rate is `c + b`, `b > 0` iff `c < 1`.
    pub c_shift: f64,
    /// Shape of the initial dispersion is drawn from this interval.
    pub e_range: Interval,
    /// Scale of the initial dispersion: `r^(0) ~ Gamma(e, scale)`.
    pub r0_scale: f64,
}

impl Default for GmnbSimParams {
    fn default() -> Self {
        Self {
            c_range: Interval::new(0.8, 2.0),
            c_shift: 0.02,
            e_range: Interval::new(30.0, 50.0),
            r0_scale: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpSimParams {
    pub mean_range: Interval,
    pub variance_range: Interval,
    pub length_range: Interval,
    pub mean_factor: f64,
    pub variance_factor: f64,
    pub length_shift: f64,
    /// Time-axis divisor for kernel distances; `None` uses the grid span.
    pub time_scale: Option<f64>,
    /// Lower clamp on the GP trajectory before counts are drawn.
    pub mean_floor: f64,
    /// NB dispersion of the counts around the trajectory.
    pub dispersion: f64,
}

impl Default for GpSimParams {
    fn default() -> Self {
        Self {
            mean_range: Interval::new(1000.0, 2000.0),
            variance_range: Interval::new(100.0, 10_000.0),
            length_range: Interval::new(0.5, 1.0),
            mean_factor: 1.5,
            variance_factor: 10.0,
            length_shift: 0.25,
            time_scale: None,
            mean_floor: 1.0,
            dispersion: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArSimParams {
    pub beta_range: Interval,
    pub phi_range: Interval,
    /// NB dispersion of the counts around `exp(omega + beta)`.
    pub dispersion: f64,
}

impl Default for ArSimParams {
    fn default() -> Self {
        Self {
            beta_range: Interval::new(4.5, 5.5),
            phi_range: Interval::new(0.1, 0.9),
            dispersion: 50.0,
        }
    }
}

/// Everything that determines a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub generator: Generator,
    pub n_genes: usize,
    pub de_fraction: f64,
    pub n_replicates: usize,
    pub time_grid: Vec<f64>,
    pub size_factor_range: Interval,
    pub seed: u64,
    pub gmnb: GmnbSimParams,
    pub gp: GpSimParams,
    pub nbar1: ArSimParams,
}

impl SimSpec {
    pub fn new(generator: Generator) -> Self {
        Self {
            generator,
            n_genes: 1000,
            de_fraction: 0.10,
            n_replicates: 4,
            time_grid: vec![0.0, 12.0, 24.0, 48.0, 72.0],
            size_factor_range: Interval::new(0.8, 1.2),
            seed: 0,
            gmnb: GmnbSimParams::default(),
            gp: GpSimParams::default(),
            nbar1: ArSimParams::default(),
        }
    }

    /// Number of DE genes, `round(de_fraction * n_genes)`.
    pub fn n_de(&self) -> usize {
        (self.de_fraction * self.n_genes as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_genes == 0 {
            return Err(GmnbError::Validation("n_genes must be positive".into()));
        }
        if !(self.de_fraction > 0.0 && self.de_fraction < 1.0) {
            return Err(GmnbError::Validation(format!(
                "de_fraction must lie in (0, 1), got {}",
                self.de_fraction
            )));
        }
        if self.n_de() < 1 {
            return Err(GmnbError::Validation(format!(
                "de_fraction {} of {} genes rounds to zero DE genes",
                self.de_fraction, self.n_genes
            )));
        }
        if self.n_replicates == 0 {
            return Err(GmnbError::Validation("n_replicates must be positive".into()));
        }
        if self.time_grid.is_empty() || self.time_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(GmnbError::Validation("time grid must be non-empty and strictly increasing".into()));
        }
        self.size_factor_range.validate("size_factor_range")?;
        if !(self.size_factor_range.lo > 0.0) {
            return Err(GmnbError::Validation("size factors must be positive".into()));
        }
        let g = &self.gmnb;
        g.c_range.validate("gmnb.c_range")?;
        g.e_range.validate("gmnb.e_range")?;
        if !(g.c_range.lo - g.c_shift > 0.0 && g.e_range.lo > 0.0 && g.r0_scale > 0.0) {
            return Err(GmnbError::Validation("gmnb parameters must stay positive".into()));
        }
        let gp = &self.gp;
        gp.mean_range.validate("gp.mean_range")?;
        gp.variance_range.validate("gp.variance_range")?;
        gp.length_range.validate("gp.length_range")?;
        if !(gp.variance_range.lo > 0.0
            && gp.length_range.lo - gp.length_shift > 0.0
            && gp.dispersion > 0.0
            && gp.mean_floor > 0.0
            && gp.time_scale.is_none_or(|s| s > 0.0))
        {
            return Err(GmnbError::Validation("gp parameters must stay positive".into()));
        }
        let ar = &self.nbar1;
        ar.beta_range.validate("nbar1.beta_range")?;
        ar.phi_range.validate("nbar1.phi_range")?;
        if !(ar.dispersion > 0.0 && ar.phi_range.lo > -1.0 && ar.phi_range.hi < 1.0) {
            return Err(GmnbError::Validation("nbar1 needs |phi| < 1 and a positive dispersion".into()));
        }
        Ok(())
    }
}

/// Per-gene latent truth of one generator, for both conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "lowercase")]
pub enum GeneParams {
    Gmnb {
        c1: f64,
        c2: f64,
        e: f64,
        r1: Vec<f64>,
        r2: Vec<f64>,
    },
    Gp {
        m1: f64,
        variance1: f64,
        length1: f64,
        m2: f64,
        variance2: f64,
        length2: f64,
        mu1: Vec<f64>,
        mu2: Vec<f64>,
    },
    Nbar1 {
        beta: f64,
        phi1: f64,
        phi2: f64,
        omega1: Vec<f64>,
        omega2: Vec<f64>,
    },
}

impl GeneParams {
    /// Scalar generator parameters of condition 1 and condition 2.
    pub fn condition_params(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            GeneParams::Gmnb { c1, c2, e, .. } => (vec![*c1, *e], vec![*c2, *e]),
            GeneParams::Gp {
                m1,
                variance1,
                length1,
                m2,
                variance2,
                length2,
                ..
            } => (vec![*m1, *variance1, *length1], vec![*m2, *variance2, *length2]),
            GeneParams::Nbar1 { beta, phi1, phi2, .. } => (vec![*beta, *phi1], vec![*beta, *phi2]),
        }
    }

    /// Mean count of condition `cond` at time `t` before size-factor scaling.
    pub fn latent_mean(&self, cond: u8, t: usize) -> f64 {
        match self {
            GeneParams::Gmnb { r1, r2, .. } => {
                if cond == 1 {
                    r1[t]
                } else {
                    r2[t]
                }
            }
            GeneParams::Gp { mu1, mu2, .. } => {
                if cond == 1 {
                    mu1[t]
                } else {
                    mu2[t]
                }
            }
            GeneParams::Nbar1 {
                beta, omega1, omega2, ..
            } => {
                let w = if cond == 1 { omega1[t] } else { omega2[t] };
                (w + beta).exp()
            }
        }
    }
}

/// Two simulated conditions plus the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDataset {
    pub spec: SimSpec,
    pub data_cond1: CountTensor,
    pub data_cond2: CountTensor,
    pub truth: Vec<bool>,
    pub params: Vec<GeneParams>,
    /// `size_factors[condition - 1][t][replicate]`.
    pub size_factors: [Vec<Vec<f64>>; 2],
}

impl LabeledDataset {
    pub fn n_de(&self) -> usize {
        self.truth.iter().filter(|&&b| b).count()
    }
}

/// Simulates with the generator named in `spec`.
pub fn simulate(spec: &SimSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    generate(spec, true)
}

pub fn simulate_gmnb(spec: &SimSpec) -> Result<LabeledDataset> {
    expect_generator(spec, Generator::Gmnb)?;
    simulate(spec)
}

pub fn simulate_gp(spec: &SimSpec) -> Result<LabeledDataset> {
    expect_generator(spec, Generator::Gp)?;
    simulate(spec)
}

pub fn simulate_nbar1(spec: &SimSpec) -> Result<LabeledDataset> {
    expect_generator(spec, Generator::Nbar1)?;
    simulate(spec)
}

/// Null dataset: both conditions share every gene's latent truth, so
/// condition 2 is an independent resimulation of the counts of condition 1.
/// All labels are false.
pub fn simulate_null(spec: &SimSpec) -> Result<LabeledDataset> {
    spec.validate()?;
    generate(spec, false)
}

fn expect_generator(spec: &SimSpec, g: Generator) -> Result<()> {
    if spec.generator == g {
        Ok(())
    } else {
        Err(GmnbError::Validation(format!(
            "spec names generator {}, expected {}",
            spec.generator, g
        )))
    }
}

fn sample_layout(spec: &SimSpec, condition: u8) -> Vec<Vec<SampleMeta>> {
    (0..spec.time_grid.len())
        .map(|t| {
            (0..spec.n_replicates)
                .map(|j| SampleMeta {
                    name: format!("t{t}_r{}", j + 1),
                    condition,
                    replicate: j as u32 + 1,
                })
                .collect()
        })
        .collect()
}

fn generate(spec: &SimSpec, perturb: bool) -> Result<LabeledDataset> {
    let n_times = spec.time_grid.len();
    let k = spec.n_genes;

    let mut sf_rng = RngStream::new(spec.seed, SIZE_FACTOR_STREAM);
    let mut size_factors: [Vec<Vec<f64>>; 2] = Default::default();
    for sf in size_factors.iter_mut() {
        *sf = (0..n_times)
            .map(|_| (0..spec.n_replicates).map(|_| spec.size_factor_range.draw(&mut sf_rng)).collect())
            .collect();
    }

    let mut truth = vec![false; k];
    if perturb {
        let mut label_rng = RngStream::new(spec.seed, LABEL_STREAM);
        for i in sample_indices(&mut label_rng, k, spec.n_de()) {
            truth[i] = true;
        }
    }

    let gp_factor = match spec.generator {
        Generator::Gp => Some(gp_time_axis(spec)),
        _ => None,
    };

    let mut params = Vec::with_capacity(k);
    let mut counts1 = Vec::with_capacity(k * n_times * spec.n_replicates);
    let mut counts2 = Vec::with_capacity(k * n_times * spec.n_replicates);
    for (gene, &is_de) in truth.iter().enumerate() {
        let mut rng = RngStream::new(spec.seed, gene as u64);
        let gp = match spec.generator {
            Generator::Gmnb => gmnb_gene(spec, is_de, &mut rng),
            Generator::Gp => gp_gene(spec, gp_factor.as_deref().unwrap(), is_de, &mut rng)?,
            Generator::Nbar1 => ar_gene(spec, is_de, &mut rng),
        };
        for (cond, out) in [(1u8, &mut counts1), (2u8, &mut counts2)] {
            let sf = &size_factors[cond as usize - 1];
            for (t, sf_t) in sf.iter().enumerate() {
                let mean = gp.latent_mean(cond, t);
                for &s in sf_t {
                    out.push(draw_count(spec.generator, spec, mean, s, &mut rng));
                }
            }
        }
        params.push(gp);
    }

    let ids: Vec<String> = (0..k).map(|i| format!("gene{:05}", i + 1)).collect();
    let data_cond1 = CountTensor::new(ids.clone(), spec.time_grid.clone(), sample_layout(spec, 1), counts1)?;
    let data_cond2 = CountTensor::new(ids, spec.time_grid.clone(), sample_layout(spec, 2), counts2)?;
    Ok(LabeledDataset {
        spec: spec.clone(),
        data_cond1,
        data_cond2,
        truth,
        params,
        size_factors,
    })
}

fn draw_count<R: Rng + ?Sized>(generator: Generator, spec: &SimSpec, mean: f64, s: f64, rng: &mut R) -> u64 {
    match generator {
        // NB(r, p) with p / (1 - p) = s: mean r * s.
        Generator::Gmnb => nb_unchecked(mean, s, rng),
        Generator::Gp => nb_unchecked(spec.gp.dispersion, mean * s / spec.gp.dispersion, rng),
        Generator::Nbar1 => nb_unchecked(spec.nbar1.dispersion, mean * s / spec.nbar1.dispersion, rng),
    }
}

/// `b = +shift` when `c < 1`, `-shift` otherwise.
pub fn gmnb_rate_shift(c: f64, shift: f64) -> f64 {
    if c < 1.0 {
        shift
    } else {
        -shift
    }
}

fn gamma_chain<R: Rng + ?Sized>(r0: f64, c: f64, n_times: usize, rng: &mut R) -> Vec<f64> {
    let mut r = Vec::with_capacity(n_times);
    r.push(r0);
    for t in 1..n_times {
        let prev = r[t - 1];
        r.push(gamma_unchecked(prev, 1.0 / c, rng));
    }
    r
}

fn gmnb_gene<R: Rng + ?Sized>(spec: &SimSpec, is_de: bool, rng: &mut R) -> GeneParams {
    let p = &spec.gmnb;
    let n_times = spec.time_grid.len();
    let c1 = p.c_range.draw(rng);
    let e = p.e_range.draw(rng);
    let r0 = gamma_unchecked(e, p.r0_scale, rng);
    let r1 = gamma_chain(r0, c1, n_times, rng);
    let (c2, r2) = if is_de {
        let c2 = c1 + gmnb_rate_shift(c1, p.c_shift);
        (c2, gamma_chain(r0, c2, n_times, rng))
    } else {
        (c1, r1.clone())
    };
    GeneParams::Gmnb { c1, c2, e, r1, r2 }
}

/// Kernel time axis: the grid divided by its span (or the configured scale).
fn gp_time_axis(spec: &SimSpec) -> Vec<f64> {
    let grid = &spec.time_grid;
    let span = grid[grid.len() - 1] - grid[0];
    let scale = spec.gp.time_scale.unwrap_or(if span > 0.0 { span } else { 1.0 });
    grid.iter().map(|t| t / scale).collect()
}

/// `Cov(t_i, t_j) = variance * exp(-|t_i - t_j| / (2 * length))`.
pub fn gp_covariance(times: &[f64], variance: f64, length: f64) -> DMatrix<f64> {
    let n = times.len();
    DMatrix::from_fn(n, n, |i, j| variance * (-(times[i] - times[j]).abs() / (2.0 * length)).exp())
}

/// `+shift` if `length <= midpoint of the range`, else `-shift`.
pub fn gp_length_shift(length: f64, range: Interval, shift: f64) -> f64 {
    if length <= 0.5 * (range.lo + range.hi) {
        shift
    } else {
        -shift
    }
}

fn gp_draw<R: Rng + ?Sized>(times: &[f64], mean: f64, variance: f64, length: f64, floor: f64, rng: &mut R) -> Result<Vec<f64>> {
    let mut cov = gp_covariance(times, variance, length);
    let n = times.len();
    let mut chol = None;
    let mut jitter = 1e-10 * variance;
    for _ in 0..6 {
        if let Some(c) = cov.clone().cholesky() {
            chol = Some(c);
            break;
        }
        for i in 0..n {
            cov[(i, i)] += jitter;
        }
        jitter *= 100.0;
    }
    let chol = chol.ok_or_else(|| GmnbError::Numeric {
        iteration: 0,
        gene: 0,
        time: 0,
        detail: "GP covariance is not positive definite after jitter".into(),
    })?;
    let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let path = chol.l() * z;
    Ok(path.iter().map(|x| (mean + x).max(floor)).collect())
}

fn gp_gene<R: Rng + ?Sized>(spec: &SimSpec, times: &[f64], is_de: bool, rng: &mut R) -> Result<GeneParams> {
    let p = &spec.gp;
    let m1 = p.mean_range.draw(rng);
    let variance1 = p.variance_range.draw(rng);
    let length1 = p.length_range.draw(rng);
    let mu1 = gp_draw(times, m1, variance1, length1, p.mean_floor, rng)?;
    let (m2, variance2, length2, mu2) = if is_de {
        let m2 = p.mean_factor * m1;
        let v2 = p.variance_factor * variance1;
        let l2 = length1 + gp_length_shift(length1, p.length_range, p.length_shift);
        let mu2 = gp_draw(times, m2, v2, l2, p.mean_floor, rng)?;
        (m2, v2, l2, mu2)
    } else {
        (m1, variance1, length1, mu1.clone())
    };
    Ok(GeneParams::Gp {
        m1,
        variance1,
        length1,
        m2,
        variance2,
        length2,
        mu1,
        mu2,
    })
}

/// `3/2` when `phi <= 0.5`, `2/3` otherwise.
pub fn ar_phi_factor(phi: f64) -> f64 {
    if phi <= 0.5 {
        1.5
    } else {
        2.0 / 3.0
    }
}

/// AR(1) path driven by the standard normals `z`: `z[0]` scaled to the
/// stationary spread, then one innovation per step.
fn ar_path(phi: f64, z: &[f64]) -> Vec<f64> {
    let sd0 = (1.0 / (1.0 - phi * phi)).sqrt();
    let mut w = Vec::with_capacity(z.len());
    w.push(sd0 * z[0]);
    for t in 1..z.len() {
        w.push(phi * w[t - 1] + z[t]);
    }
    w
}

/// Both conditions share the innovations, so a DE gene differs only through
/// its autoregressive coefficient.
fn ar_gene<R: Rng + ?Sized>(spec: &SimSpec, is_de: bool, rng: &mut R) -> GeneParams {
    let p = &spec.nbar1;
    let n_times = spec.time_grid.len();
    let beta = p.beta_range.draw(rng);
    let phi1 = p.phi_range.draw(rng);
    let z: Vec<f64> = (0..n_times).map(|_| rng.sample(StandardNormal)).collect();
    let omega1 = ar_path(phi1, &z);
    let (phi2, omega2) = if is_de {
        let phi2 = ar_phi_factor(phi1) * phi1;
        (phi2, ar_path(phi2, &z))
    } else {
        (phi1, omega1.clone())
    };
    GeneParams::Nbar1 {
        beta,
        phi1,
        phi2,
        omega1,
        omega2,
    }
}
