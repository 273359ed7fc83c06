//! Random-variate primitives used by the sampler and the simulators.
//!
//! All samplers are pure functions of their parameters and the generator
//! passed in. Parameter checks return [`GmnbError::Domain`].

use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use statrs::function::gamma::digamma;

use crate::error::{GmnbError, Result};

/// Smallest value a gamma draw is allowed to take.
///
/// Gamma draws feed back into the chain as shape parameters, and a shape of
/// exactly zero is absorbing.
pub const GAMMA_FLOOR: f64 = 1e-300;

/// Above this many customers the CRT draw uses a moment-matched normal
/// approximation instead of the exact Bernoulli sum.
pub const CRT_EXACT_THRESHOLD: u64 = 10_000;

/// Beta draws are kept inside `[BETA_CLAMP, 1 - BETA_CLAMP]`.
pub const BETA_CLAMP: f64 = f64::EPSILON;

#[inline]
fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Open01)
}

fn check_positive(what: &'static str, name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(GmnbError::domain(what, format!("{name} must be positive and finite, got {v}")))
    }
}

fn check_probability(what: &'static str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(GmnbError::domain(what, format!("p must lie in (0, 1), got {p}")))
    }
}

/// Marsaglia–Tsang squeeze for shape >= 1, unit scale.
fn gamma_mt<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let x: f64 = rng.sample(StandardNormal);
        let v = 1.0 + c * x;
        if v <= 0.0 {
            continue;
        }
        let v = v * v * v;
        let u = open01(rng);
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 || u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Natural log of a Gamma(shape, 1) draw.
///
/// Small shapes use the boost `G(a) = G(a + 1) * U^(1/a)` carried out in the
/// log domain, so shapes far below one never collapse to an exact zero.
pub fn sample_ln_gamma<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> Result<f64> {
    check_positive("gamma", "shape", shape)?;
    Ok(ln_gamma_unchecked(shape, rng))
}

#[inline]
pub(crate) fn ln_gamma_unchecked<R: Rng + ?Sized>(shape: f64, rng: &mut R) -> f64 {
    if shape >= 1.0 {
        gamma_mt(shape, rng).ln()
    } else {
        let boosted = gamma_mt(shape + 1.0, rng).ln();
        boosted + open01(rng).ln() / shape
    }
}

/// Gamma(shape, scale) draw with mean `shape * scale`, floored at [`GAMMA_FLOOR`].
pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    check_positive("gamma", "shape", shape)?;
    check_positive("gamma", "scale", scale)?;
    Ok(gamma_unchecked(shape, scale, rng))
}

#[inline]
pub(crate) fn gamma_unchecked<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let x = if shape >= 1.0 {
        gamma_mt(shape, rng) * scale
    } else {
        (ln_gamma_unchecked(shape, rng) + scale.ln()).exp()
    };
    x.max(GAMMA_FLOOR)
}

/// Beta(a, b) draw, clamped strictly inside (0, 1).
pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    check_positive("beta", "a", a)?;
    check_positive("beta", "b", b)?;
    Ok(beta_unchecked(a, b, rng))
}

#[inline]
pub(crate) fn beta_unchecked<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let ln_x = ln_gamma_unchecked(a, rng);
    let ln_y = ln_gamma_unchecked(b, rng);
    // x / (x + y) without forming x or y.
    let p = 1.0 / (1.0 + (ln_y - ln_x).exp());
    p.clamp(BETA_CLAMP, 1.0 - BETA_CLAMP)
}

/// Poisson draw. A zero rate returns zero.
pub fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<u64> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(GmnbError::domain("poisson", format!("rate must be finite and >= 0, got {rate}")));
    }
    Ok(poisson_unchecked(rate, rng))
}

#[inline]
pub(crate) fn poisson_unchecked<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if rate <= 0.0 {
        return 0;
    }
    match Poisson::new(rate) {
        Ok(d) => d.sample(rng) as u64,
        // Rates beyond the sampler's range: the normal limit is exact to
        // far below the resolution of an f64 count.
        Err(_) => {
            let z: f64 = rng.sample(StandardNormal);
            (rate + rate.sqrt() * z).round().max(0.0) as u64
        }
    }
}

/// Logarithmic-series draw with pmf `-p^u / (u ln(1 - p))`, `u >= 1`.
///
/// Kemp's LK algorithm.
pub fn sample_logarithmic<R: Rng + ?Sized>(p: f64, rng: &mut R) -> Result<u64> {
    check_probability("logarithmic", p)?;
    let v = open01(rng);
    if v >= p {
        return Ok(1);
    }
    let c = (-p).ln_1p();
    let u = open01(rng);
    let q = -(c * u).exp_m1();
    if v <= q * q {
        let k = 1.0 + v.ln() / q.ln();
        Ok(if k.is_finite() && k < u64::MAX as f64 { k as u64 } else { u64::MAX })
    } else if v <= q {
        Ok(2)
    } else {
        Ok(1)
    }
}

/// NB(r, p) draw through its compound-Poisson representation:
/// `l ~ Pois(-r ln(1 - p))` logarithmic summands.
pub fn sample_nb_compound<R: Rng + ?Sized>(r: f64, p: f64, rng: &mut R) -> Result<u64> {
    check_positive("negative binomial", "r", r)?;
    check_probability("negative binomial", p)?;
    let tables = poisson_unchecked(-r * (-p).ln_1p(), rng);
    let mut n = 0u64;
    for _ in 0..tables {
        n = n.saturating_add(sample_logarithmic(p, rng)?);
    }
    Ok(n)
}

/// NB(r, p) draw as a gamma–Poisson mixture, `Pois(Gamma(r, p / (1 - p)))`.
pub fn sample_nb<R: Rng + ?Sized>(r: f64, p: f64, rng: &mut R) -> Result<u64> {
    check_positive("negative binomial", "r", r)?;
    check_probability("negative binomial", p)?;
    Ok(nb_unchecked(r, p / (1.0 - p), rng))
}

/// NB draw parameterized by dispersion and odds `p / (1 - p)`.
#[inline]
pub(crate) fn nb_unchecked<R: Rng + ?Sized>(r: f64, odds: f64, rng: &mut R) -> u64 {
    let rate = gamma_unchecked(r, odds, rng);
    poisson_unchecked(rate, rng)
}

/// CRT(n, r) draw: number of occupied tables after `n` customers with
/// concentration `r`, i.e. `sum_{t=1}^{n} Bernoulli(r / (r + t - 1))`.
///
/// Uses the exact sum up to [`CRT_EXACT_THRESHOLD`] customers.
pub fn sample_crt<R: Rng + ?Sized>(n: u64, r: f64, rng: &mut R) -> Result<u64> {
    sample_crt_with_threshold(n, r, CRT_EXACT_THRESHOLD, rng)
}

/// [`sample_crt`] with an explicit exact/approximate switch point.
pub fn sample_crt_with_threshold<R: Rng + ?Sized>(
    n: u64,
    r: f64,
    exact_threshold: u64,
    rng: &mut R,
) -> Result<u64> {
    check_positive("crt", "r", r)?;
    Ok(crt_unchecked(n, r, exact_threshold, rng))
}

#[inline]
pub(crate) fn crt_unchecked<R: Rng + ?Sized>(n: u64, r: f64, exact_threshold: u64, rng: &mut R) -> u64 {
    match n {
        0 => 0,
        1 => 1,
        _ if n > exact_threshold => crt_normal(n, r, rng),
        _ => crt_exact(n, r, rng),
    }
}

/// Below this table-opening probability the exact sampler stops visiting
/// every customer and jumps between candidate successes instead.
const CRT_SKIP_BELOW: f64 = 0.125;

#[inline]
fn unit53<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Exact CRT draw.
///
/// Customer `t` (0-based) opens a table with probability `r / (r + t)`.
/// While that is large every customer gets its own uniform. Once it drops
/// under [`CRT_SKIP_BELOW`] the remaining customers are split into blocks
/// over which the probability at most halves; inside a block, candidates
/// are generated with geometric gaps at the block's largest probability and
/// each is kept with the ratio of its own probability to that bound.
fn crt_exact<R: Rng + ?Sized>(n: u64, r: f64, rng: &mut R) -> u64 {
    // The first customer always opens a table.
    let mut tables = 1u64;
    let dense_end = ((r * (1.0 / CRT_SKIP_BELOW - 1.0)).ceil() as u64).saturating_add(1).min(n);
    for t in 1..dense_end {
        // u < r / (r + t) without a division.
        tables += (unit53(rng) * (r + t as f64) < r) as u64;
    }

    let mut start = dense_end.max(1);
    while start < n {
        let d_start = r + start as f64;
        let end = start.saturating_add(d_start as u64).min(n);
        let ln_miss = (-r / d_start).ln_1p();
        let mut t = start;
        loop {
            // Failures before the next candidate: floor(ln U / ln(1 - p)), U in (0, 1].
            let u = 1.0 - unit53(rng);
            let gap = (u.ln() / ln_miss).floor();
            if gap >= (end - t) as f64 {
                break;
            }
            t += gap as u64;
            tables += (unit53(rng) * (r + t as f64) < d_start) as u64;
            t += 1;
            if t >= end {
                break;
            }
        }
        start = end;
    }
    tables
}

/// Reference CRT draw: one uniform per customer, no skipping.
#[cfg(test)]
fn crt_dense<R: Rng + ?Sized>(n: u64, r: f64, rng: &mut R) -> u64 {
    if n == 0 {
        return 0;
    }
    let mut tables = 1u64;
    for t in 1..n {
        tables += (unit53(rng) * (r + t as f64) < r) as u64;
    }
    tables
}

fn crt_normal<R: Rng + ?Sized>(n: u64, r: f64, rng: &mut R) -> u64 {
    let mean = crt_mean(n, r);
    let sd = crt_variance(n, r).max(0.0).sqrt();
    let z: f64 = rng.sample(StandardNormal);
    let draw = (mean + sd * z).round();
    draw.clamp(1.0, n as f64) as u64
}

/// `E[CRT(n, r)] = sum_{t=1}^{n} r / (r + t - 1)`.
pub fn crt_mean(n: u64, r: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    // Peel off the certain first table so tiny r stays well conditioned.
    1.0 + r * (digamma(r + n as f64) - digamma(r + 1.0))
}

/// `Var[CRT(n, r)] = sum_{t=1}^{n} p_t (1 - p_t)` with `p_t = r / (r + t - 1)`.
pub fn crt_variance(n: u64, r: f64) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let nf = n as f64;
    let mean_tail = r * (digamma(r + nf) - digamma(r + 1.0));
    let sq_tail = r * r * (trigamma(r + 1.0) - trigamma(r + nf));
    mean_tail - sq_tail
}

/// Trigamma function, `d^2/dx^2 ln Gamma(x)`, for `x > 0`.
pub fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0)))
}
