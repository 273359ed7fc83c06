//! Joint-distribution ("getting it right") test of the Gibbs kernel.
//!
//! Prior draws of `(r, c, p)` are compared with the states visited by a chain
//! that alternates one Gibbs sweep with a fresh draw of the data given the
//! current parameters. Both sample the prior if the kernel leaves the
//! posterior invariant.

use gmnb::distributions::{sample_beta, sample_gamma, sample_nb};
use gmnb::gibbs::{GibbsConfig, GibbsKernel};
use gmnb::model::{ChainState, CountTensor, GeneState, GmnbHyper, SampleMeta};
use gmnb::RngStream;

use super::{ensure, Outcome};

pub const GENES: usize = 3;
pub const TIMES: usize = 3;
pub const SAMPLES: usize = 2;

/// Light-tailed priors: `c` concentrated near 1 keeps the moments of the
/// dispersion chain finite, and `p` near 0.3 keeps counts small.
pub fn hyper() -> GmnbHyper {
    GmnbHyper {
        a0: 2.0,
        b0: 5.0,
        e_init: 2.0,
        f_init: 1.0,
        c0: 10.0,
        d0: 10.0,
    }
}

fn prior_draw(h: &GmnbHyper, rng: &mut RngStream) -> ChainState {
    let genes = (0..GENES)
        .map(|_| {
            let mut g = GeneState::new(TIMES, TIMES * SAMPLES, 1.0, 1.0);
            g.c = sample_gamma(h.c0, 1.0 / h.d0, rng).unwrap();
            g.r[0] = sample_gamma(h.e_init, 1.0 / h.f_init, rng).unwrap();
            for t in 1..TIMES {
                g.r[t] = sample_gamma(g.r[t - 1], 1.0 / g.c, rng).unwrap();
            }
            g
        })
        .collect();
    let p = (0..TIMES)
        .map(|_| (0..SAMPLES).map(|_| sample_beta(h.a0, h.b0, rng).unwrap()).collect())
        .collect();
    ChainState { genes, p }
}

fn layout() -> Vec<Vec<SampleMeta>> {
    (0..TIMES)
        .map(|t| {
            (0..SAMPLES)
                .map(|j| SampleMeta {
                    name: format!("t{t}_r{}", j + 1),
                    condition: 1,
                    replicate: j as u32 + 1,
                })
                .collect()
        })
        .collect()
}

fn simulate_data(state: &ChainState, samples: &[Vec<SampleMeta>], rng: &mut RngStream) -> CountTensor {
    let mut counts = Vec::with_capacity(GENES * TIMES * SAMPLES);
    for g in &state.genes {
        for t in 0..TIMES {
            for &p in &state.p[t] {
                counts.push(sample_nb(g.r[t], p, rng).unwrap());
            }
        }
    }
    CountTensor::new(
        (0..GENES).map(|k| format!("g{k}")).collect(),
        (0..TIMES).map(|t| t as f64).collect(),
        samples.to_vec(),
        counts,
    )
    .unwrap()
}

pub const STAT_NAMES: [&str; 5] = ["r(0)", "r(1)", "r(2)", "c", "p"];

/// Exchangeable averages: `r^(t)` over genes, `c` over genes, `p` over cells.
fn stats(s: &ChainState) -> [f64; 10] {
    let k = GENES as f64;
    let mut out = [0.0; 10];
    for g in &s.genes {
        for t in 0..TIMES {
            out[t] += g.r[t] / k;
            out[5 + t] += g.r[t] * g.r[t] / k;
        }
        out[3] += g.c / k;
        out[8] += g.c * g.c / k;
    }
    let m = (TIMES * SAMPLES) as f64;
    for pt in &s.p {
        for &p in pt {
            out[4] += p / m;
            out[9] += p * p / m;
        }
    }
    out
}

/// Mean and standard error from batch means.
fn batch_mean_se(xs: &[f64], batches: usize) -> (f64, f64) {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let (m, v) = super::mean_var(&means);
    (m, (v / means.len() as f64).sqrt())
}

pub struct GewekeResult {
    /// `(name, moment, prior mean, chain mean, z)`.
    pub rows: Vec<(&'static str, u8, f64, f64, f64)>,
}

impl GewekeResult {
    pub fn max_abs_z(&self) -> f64 {
        self.rows.iter().map(|r| r.4.abs()).fold(0.0, f64::max)
    }
}

pub fn run(sweeps: usize, seed: u64) -> GewekeResult {
    let h = hyper();
    let samples = layout();
    let mut prior_rng = RngStream::new(seed, 1);
    let mut data_rng = RngStream::new(seed, 2);

    let prior: Vec<[f64; 10]> = (0..sweeps).map(|_| stats(&prior_draw(&h, &mut prior_rng))).collect();

    let cfg = GibbsConfig {
        seed: seed ^ 0x5eed,
        parallel_genes: false,
        ..GibbsConfig::default()
    };
    let mut kernel = GibbsKernel::new(GENES, h, &cfg);
    let mut state = prior_draw(&h, &mut prior_rng);
    let mut data = simulate_data(&state, &samples, &mut data_rng);
    let burn = sweeps / 100;
    let mut chain = Vec::with_capacity(sweeps);
    for i in 0..burn + sweeps {
        kernel.sweep(&data, &mut state).unwrap();
        data = simulate_data(&state, &samples, &mut data_rng);
        if i >= burn {
            chain.push(stats(&state));
        }
    }

    let mut rows = Vec::new();
    for j in 0..10 {
        let a: Vec<f64> = prior.iter().map(|s| s[j]).collect();
        let b: Vec<f64> = chain.iter().map(|s| s[j]).collect();
        let (ma, va) = super::mean_var(&a);
        let se_a = (va / a.len() as f64).sqrt();
        let (mb, se_b) = batch_mean_se(&b, 50);
        let z = (ma - mb) / (se_a * se_a + se_b * se_b).sqrt();
        rows.push((STAT_NAMES[j % 5], if j < 5 { 1 } else { 2 }, ma, mb, z));
    }
    GewekeResult { rows }
}

/// All first and second moments agree within 3 combined standard errors.
pub fn check(sweeps: usize, seed: u64) -> Outcome {
    let res = run(sweeps, seed);
    let detail: Vec<String> = res
        .rows
        .iter()
        .map(|(n, m, a, b, z)| format!("E[{n}^{m}] {a:.4}/{b:.4} z={z:+.2}"))
        .collect();
    ensure(
        res.max_abs_z() < 3.0,
        format!("{} sweeps, max |z| {:.2}: {}", sweeps, res.max_abs_z(), detail.join("; ")),
    )
}
