//! Statistical checks shared by the integration tests and the acceptance
//! runner. Each check returns a one-line summary, `Err` on failure.

#![allow(dead_code)]

pub mod geweke;

use gmnb::distributions::{
    sample_beta, sample_crt, sample_gamma, sample_ln_gamma, sample_logarithmic, sample_nb_compound,
};
use gmnb::RngStream;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::gamma::ln_gamma;
use std::collections::BTreeMap;

pub type Outcome = Result<String, String>;

pub fn ensure(ok: bool, msg: String) -> Outcome {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// p-value of a two-sample chi-square homogeneity test on integer draws.
/// Outcomes are merged left to right until each bin holds 20 pooled draws.
pub fn two_sample_chi2(a: &[u64], b: &[u64]) -> f64 {
    let mut counts: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    for &x in a {
        counts.entry(x).or_default().0 += 1.0;
    }
    for &x in b {
        counts.entry(x).or_default().1 += 1.0;
    }
    let mut bins: Vec<(f64, f64)> = Vec::new();
    let mut acc = (0.0, 0.0);
    for (_, (ca, cb)) in counts {
        acc.0 += ca;
        acc.1 += cb;
        if acc.0 + acc.1 >= 20.0 {
            bins.push(acc);
            acc = (0.0, 0.0);
        }
    }
    match bins.last_mut() {
        Some(last) => {
            last.0 += acc.0;
            last.1 += acc.1;
        }
        None => return 1.0,
    }
    if bins.len() < 2 {
        return 1.0;
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let stat: f64 = bins
        .iter()
        .map(|&(ca, cb)| {
            let tot = ca + cb;
            let (ea, eb) = (tot * na / (na + nb), tot * nb / (na + nb));
            (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb
        })
        .sum();
    1.0 - ChiSquared::new((bins.len() - 1) as f64).unwrap().cdf(stat)
}

pub fn gamma_moments() -> Outcome {
    let mut rng = RngStream::new(101, 0);
    let a: Vec<f64> = (0..1_000_000).map(|_| sample_gamma(2.0, 0.5, &mut rng).unwrap()).collect();
    let b: Vec<f64> = (0..1_000_000).map(|_| sample_gamma(3.0, 2.0, &mut rng).unwrap()).collect();
    let (m, _) = mean_var(&a);
    let (_, v) = mean_var(&b);
    ensure(
        (m - 1.0).abs() < 0.01 && (v - 12.0).abs() < 0.2,
        format!("Gamma(2, 0.5) mean {m:.4} (1 ± 0.01), Gamma(3, 2) variance {v:.3} (12 ± 0.2)"),
    )
}

/// For shape `a` the CDF near zero is `x^a / Gamma(a + 1)` up to a factor
/// `1 - O(a x)`, so `ln x_q = (ln q + ln Gamma(a + 1)) / a`. With `a = 1e-8`
/// both quantiles sit far below the smallest double and are compared on the
/// log scale.
pub fn gamma_small_shape() -> Outcome {
    let shape = 1e-8;
    let n = 100_000;
    let mut rng = RngStream::new(102, 0);
    for _ in 0..1000 {
        let x = sample_gamma(shape, 1.0, &mut rng).unwrap();
        if !(x.is_finite() && x >= 0.0) {
            return Err(format!("Gamma(1e-8, 1) returned {x}"));
        }
    }
    let logs: Vec<f64> = (0..n).map(|_| sample_ln_gamma(shape, &mut rng).unwrap()).collect();
    let mut detail = Vec::new();
    let mut ok = true;
    for q in [0.5, 0.9] {
        let ln_xq = (f64::ln(q) + ln_gamma(1.0 + shape)) / shape;
        let frac = logs.iter().filter(|&&l| l <= ln_xq).count() as f64 / n as f64;
        let se = (q * (1.0 - q) / n as f64).sqrt();
        ok &= (frac - q).abs() < 4.0 * se;
        detail.push(format!("F(x_{q}) = {frac:.4}"));
    }
    ensure(ok, format!("shape 1e-8 log-domain quantiles: {}", detail.join(", ")))
}

/// Mean and variance of `sum_t Bernoulli(r / (r + t - 1))` by direct summation.
pub fn crt_direct_moments(n: u64, r: f64) -> (f64, f64) {
    (1..=n).fold((0.0, 0.0), |(m, v), t| {
        let p = r / (r + (t - 1) as f64);
        (m + p, v + p * (1.0 - p))
    })
}

pub fn crt_support_and_expectation() -> Outcome {
    let draws = 100_000;
    let mut worst = 0.0f64;
    for (i, &n) in [1u64, 5, 50, 500].iter().enumerate() {
        for (j, &r) in [0.1, 1.0, 10.0].iter().enumerate() {
            let mut rng = RngStream::new(103, (i * 3 + j) as u64);
            let mut sum = 0u64;
            for _ in 0..draws {
                let l = sample_crt(n, r, &mut rng).unwrap();
                if !(1..=n).contains(&l) {
                    return Err(format!("CRT({n}, {r}) drew {l}"));
                }
                sum += l;
            }
            if sample_crt(0, r, &mut rng).unwrap() != 0 {
                return Err(format!("CRT(0, {r}) was not 0"));
            }
            let (m, v) = crt_direct_moments(n, r);
            let se = (v / draws as f64).sqrt();
            let mean = sum as f64 / draws as f64;
            let z = if se > 0.0 { (mean - m) / se } else if mean == m { 0.0 } else { f64::INFINITY };
            if z.abs() > 3.0 {
                return Err(format!("CRT({n}, {r}) mean {mean:.4} vs {m:.4} ({z:.2} SE)"));
            }
            worst = worst.max(z.abs());
        }
    }
    let mut rng = RngStream::new(103, 99);
    let m: f64 = (0..1_000_000).map(|_| sample_crt(50, 2.0, &mut rng).unwrap() as f64).sum::<f64>() / 1e6;
    let (exact, _) = crt_direct_moments(50, 2.0);
    ensure(
        (m - exact).abs() < 0.01,
        format!("CRT grid within {worst:.2} SE; CRT(50, 2) mean {m:.4} vs {exact:.4}"),
    )
}

pub fn nb_compound_matches_gamma_poisson() -> Outcome {
    let draws = 100_000;
    let mut pvals = Vec::new();
    for (i, &r) in [0.5, 5.0].iter().enumerate() {
        for (j, &p) in [0.2, 0.8].iter().enumerate() {
            let mut rng = RngStream::new(104, (2 * i + j) as u64);
            let a: Vec<u64> = (0..draws).map(|_| sample_nb_compound(r, p, &mut rng).unwrap()).collect();
            // Independent reference: Poisson(Gamma(r, p / (1 - p))).
            let mix = Gamma::new(r, p / (1.0 - p)).unwrap();
            let b: Vec<u64> = (0..draws)
                .map(|_| {
                    let lam: f64 = mix.sample(&mut rng);
                    if lam <= 0.0 {
                        0
                    } else {
                        Poisson::new(lam).unwrap().sample(&mut rng) as u64
                    }
                })
                .collect();
            let pv = two_sample_chi2(&a, &b);
            if pv < 0.01 {
                return Err(format!("compound vs gamma-Poisson NB({r}, {p}): p = {pv:.4}"));
            }
            pvals.push(format!("{pv:.3}"));
        }
    }
    let mut rng = RngStream::new(104, 10);
    let m = (0..1_000_000).map(|_| sample_nb_compound(10.0, 0.5, &mut rng).unwrap() as f64).sum::<f64>() / 1e6;
    if (m - 10.0).abs() >= 0.1 {
        return Err(format!("NB(10, 0.5) mean {m:.4}"));
    }

    // Exact pmf by the ratio recursion f(n+1) = f(n) p (n + r) / (n + 1).
    let (r, p) = (2.0, 0.3);
    let mut pmf = vec![(1.0f64 - p).powf(r)];
    for n in 0..20 {
        let last = pmf[n];
        pmf.push(last * p * (n as f64 + r) / (n as f64 + 1.0));
    }
    let mut hist = vec![0u64; 21];
    let mut rng = RngStream::new(104, 11);
    for _ in 0..1_000_000 {
        let x = sample_nb_compound(r, p, &mut rng).unwrap() as usize;
        if x <= 20 {
            hist[x] += 1;
        }
    }
    let tv = 0.5 * hist.iter().zip(&pmf).map(|(&h, &f)| (h as f64 / 1e6 - f).abs()).sum::<f64>();

    let mut rng = RngStream::new(104, 12);
    let nonzero = (0..1_000_000).filter(|_| sample_nb_compound(5.0, 1e-9, &mut rng).unwrap() != 0).count();
    ensure(
        tv < 0.005 && nonzero <= 1,
        format!(
            "chi-square p-values [{}]; NB(10, .5) mean {m:.3}; TV on 0..20 {tv:.5}; p=1e-9 nonzero {nonzero}/1e6",
            pvals.join(", ")
        ),
    )
}

pub fn logarithmic_pmf() -> Outcome {
    let p: f64 = 0.5;
    let n = 1_000_000;
    let mut rng = RngStream::new(105, 0);
    let draws: Vec<u64> = (0..n).map(|_| sample_logarithmic(p, &mut rng).unwrap()).collect();
    let p1 = draws.iter().filter(|&&u| u == 1).count() as f64 / n as f64;
    let mean = draws.iter().sum::<u64>() as f64 / n as f64;
    let exact_p1 = -p / (1.0 - p).ln();
    let exact_mean = -p / ((1.0 - p) * (1.0 - p).ln());
    // Goodness of fit on 1..=12 plus the tail.
    let mut stat = 0.0;
    let mut tail = 1.0;
    for u in 1..=12u64 {
        let f = -p.powi(u as i32) / (u as f64 * (1.0 - p).ln());
        tail -= f;
        let obs = draws.iter().filter(|&&x| x == u).count() as f64;
        stat += (obs - n as f64 * f).powi(2) / (n as f64 * f);
    }
    let obs_tail = draws.iter().filter(|&&x| x > 12).count() as f64;
    stat += (obs_tail - n as f64 * tail).powi(2) / (n as f64 * tail);
    let pv = 1.0 - ChiSquared::new(12.0).unwrap().cdf(stat);

    let mut rng = RngStream::new(105, 1);
    let not_one = (0..1_000_000).filter(|_| sample_logarithmic(1e-9, &mut rng).unwrap() != 1).count();
    ensure(
        (p1 - exact_p1).abs() < 0.002 && (mean - exact_mean).abs() < 0.01 && pv > 0.01 && not_one <= 1,
        format!(
            "P(1) {p1:.4} vs {exact_p1:.4}; mean {mean:.4} vs {exact_mean:.4}; pmf chi-square p {pv:.3}; p=1e-9 non-one {not_one}"
        ),
    )
}

pub fn beta_checks() -> Outcome {
    let mut rng = RngStream::new(106, 0);
    let m = (0..1_000_000).map(|_| sample_beta(2.0, 3.0, &mut rng).unwrap()).sum::<f64>() / 1e6;
    let n = 100_000;
    let mut u: Vec<f64> = (0..n).map(|_| sample_beta(1.0, 1.0, &mut rng).unwrap()).collect();
    u.sort_by(f64::total_cmp);
    let d = u
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
        .fold(0.0, f64::max);
    // Asymptotic KS critical value at level 0.01.
    let crit = 1.628 / (n as f64).sqrt();
    let edge = (0..100_000)
        .map(|_| sample_beta(0.1, 0.1, &mut rng).unwrap())
        .filter(|&x| !(x > 0.0 && x < 1.0))
        .count();
    ensure(
        (m - 0.4).abs() < 0.005 && d < crit && edge == 0,
        format!("Beta(2, 3) mean {m:.4}; Beta(1, 1) KS D {d:.5} < {crit:.5}; Beta(.1, .1) endpoints {edge}"),
    )
}

pub fn streams_are_deterministic_and_independent() -> Outcome {
    let run = |seed, id| {
        let mut rng = RngStream::new(seed, id);
        let mut out = Vec::new();
        out.push(sample_gamma(0.3, 2.0, &mut rng).unwrap().to_bits());
        out.push(sample_beta(2.0, 5.0, &mut rng).unwrap().to_bits());
        out.push(sample_crt(300, 4.0, &mut rng).unwrap());
        out.push(sample_nb_compound(3.0, 0.4, &mut rng).unwrap());
        out.push(sample_logarithmic(0.7, &mut rng).unwrap());
        out
    };
    if run(7, 3) != run(7, 3) {
        return Err("same stream produced different draws".into());
    }
    let n = 100_000;
    let mut worst = 0.0f64;
    for (a, b) in [(0u64, 1u64), (1, 2), (5, 1 << 40)] {
        let mut ra = RngStream::new(9, a);
        let mut rb = RngStream::new(9, b);
        let xa: Vec<f64> = (0..n).map(|_| ra.random::<f64>()).collect();
        let xb: Vec<f64> = (0..n).map(|_| rb.random::<f64>()).collect();
        let (ma, va) = mean_var(&xa);
        let (mb, vb) = mean_var(&xb);
        let cov = xa.iter().zip(&xb).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n as f64 - 1.0);
        worst = worst.max((cov / (va * vb).sqrt()).abs());
    }
    ensure(worst < 0.01, format!("replay identical; max |cross-correlation| {worst:.4}"))
}

/// The whole distribution suite, in report order.
pub fn distribution_suite() -> Vec<(&'static str, Outcome)> {
    vec![
        ("gamma moments", gamma_moments()),
        ("gamma small shape", gamma_small_shape()),
        ("CRT support and expectation", crt_support_and_expectation()),
        ("compound Poisson = NB", nb_compound_matches_gamma_poisson()),
        ("logarithmic pmf", logarithmic_pmf()),
        ("beta", beta_checks()),
        ("rng streams", streams_are_deterministic_and_independent()),
    ]
}

/// Identical-condition data: fraction of genes whose `log BF` stays below
/// `ln 10`, per seed. Passes when every seed reaches 95%.
pub fn null_calibration(genes: usize, seeds: &[u64]) -> Outcome {
    use gmnb::bayes_factor::{differential_expression, Estimator, LN_10};
    use gmnb::synthetic::{simulate_null, Generator, SimSpec};
    use gmnb::{GibbsConfig, GmnbHyper};

    let mut fractions = Vec::new();
    for &seed in seeds {
        let mut spec = SimSpec::new(Generator::Gmnb);
        spec.n_genes = genes;
        spec.seed = seed;
        let ds = simulate_null(&spec).map_err(|e| e.to_string())?;
        let cfg = GibbsConfig {
            seed,
            store_draws: false,
            ..GibbsConfig::default()
        };
        let (report, _) = differential_expression(
            &ds.data_cond1,
            &ds.data_cond2,
            &GmnbHyper::default(),
            &cfg,
            Estimator::HarmonicMean,
        )
        .map_err(|e| e.to_string())?;
        let below = report.genes.iter().filter(|g| g.log_bf < LN_10).count();
        fractions.push(below as f64 / genes as f64);
    }
    let worst = fractions.iter().cloned().fold(1.0, f64::min);
    ensure(
        worst >= 0.95,
        format!("{genes} genes x {} seeds, fraction below ln 10: {fractions:.3?}", seeds.len()),
    )
}
