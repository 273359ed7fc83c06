//! End-to-end commands behind the `gmnb` binary: simulate, fit, de, eval and
//! bench. Each one validates its whole configuration before touching data,
//! writes its outputs through [`crate::io`] and returns what it wrote.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::bayes_factor::{canonical_pool, differential_expression, Estimator};
use crate::error::{GmnbError, Result};
use crate::evaluation::{mean_sd, pr_curve, roc_curve, CurveResult};
use crate::gibbs::{run_gibbs, GibbsConfig};
use crate::io::{self, AucSummary, Provenance};
use crate::model::GmnbHyper;
use crate::rng::derive_seed;
use crate::synthetic::{simulate, SimSpec};

/// Runs `f` on a pool of `workers` threads, or on the global pool when
/// `workers` is `None`. Without the `parallel` feature `f` simply runs.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == Some(0) {
        return Err(GmnbError::Validation("worker count must be positive".into()));
    }
    #[cfg(feature = "parallel")]
    if let Some(n) = workers {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| GmnbError::Validation(format!("cannot start {n} workers: {e}")))?;
        return pool.install(f);
    }
    f()
}

/// Sampler settings as recorded in file headers. Scheduling knobs are left
/// out so that outputs do not depend on how the work was spread.
fn gibbs_record(cfg: &GibbsConfig) -> Value {
    json!({
        "total_iters": cfg.total_iters,
        "burn_in": cfg.burn_in,
        "thin": cfg.thin,
        "seed": cfg.seed,
        "crt_threshold": cfg.crt_threshold,
    })
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("configuration types serialize to JSON")
}

#[derive(Debug, Clone)]
pub struct SimulateOutputs {
    pub cond1: PathBuf,
    pub cond2: PathBuf,
    pub truth: PathBuf,
    pub params: PathBuf,
    pub n_genes: usize,
    pub n_de: usize,
}

/// Writes `cond1.tsv`, `cond2.tsv` (with sidecars), `truth.tsv` and
/// `params.json` into `out_dir`.
pub fn cmd_simulate(spec: &SimSpec, out_dir: &Path) -> Result<SimulateOutputs> {
    spec.validate()?;
    let ds = simulate(spec)?;
    let prov = Provenance::new("simulate", spec.seed, json!({ "spec": to_value(spec) }));
    let out = SimulateOutputs {
        cond1: out_dir.join("cond1.tsv"),
        cond2: out_dir.join("cond2.tsv"),
        truth: out_dir.join("truth.tsv"),
        params: out_dir.join("params.json"),
        n_genes: ds.truth.len(),
        n_de: ds.n_de(),
    };
    io::write_counts(&out.cond1, &ds.data_cond1, &prov)?;
    io::write_counts(&out.cond2, &ds.data_cond2, &prov)?;
    io::write_truth(&out.truth, &ds, &prov)?;
    io::write_params(&out.params, &ds, &prov)?;
    Ok(out)
}

/// Fits one count file and writes its posterior summary.
pub fn cmd_fit(input: &Path, output: &Path, hyper: &GmnbHyper, gibbs: &GibbsConfig) -> Result<PathBuf> {
    hyper.validate()?;
    gibbs.validate()?;
    let data = io::read_counts(input)?;
    let cfg = GibbsConfig {
        store_draws: true,
        ..*gibbs
    };
    let samples = run_gibbs(&data, hyper, &cfg)?;
    let prov = Provenance::new(
        "fit",
        gibbs.seed,
        json!({ "hyper": to_value(hyper), "gibbs": gibbs_record(gibbs) }),
    );
    io::write_posterior_summary(output, &data, &samples, &prov)?;
    Ok(output.to_path_buf())
}

#[derive(Debug, Clone)]
pub struct DeOutputs {
    pub report: PathBuf,
    pub posterior: [PathBuf; 3],
    pub n_genes: usize,
    pub n_called: usize,
}

/// Fits the pooled and per-condition models, writes the ranked Bayes-factor
/// report (`report.tsv`) and one posterior summary per model.
pub fn cmd_de(
    cond1: &Path,
    cond2: &Path,
    out_dir: &Path,
    hyper: &GmnbHyper,
    gibbs: &GibbsConfig,
    estimator: Estimator,
) -> Result<DeOutputs> {
    hyper.validate()?;
    gibbs.validate()?;
    let d1 = io::read_counts(cond1)?;
    let d2 = io::read_counts(cond2)?;
    d1.check_compatible(&d2)?;
    let cfg = GibbsConfig {
        store_draws: true,
        ..*gibbs
    };
    let (report, fits) = differential_expression(&d1, &d2, hyper, &cfg, estimator)?;
    let prov = Provenance::new(
        "de",
        gibbs.seed,
        json!({
            "hyper": to_value(hyper),
            "gibbs": gibbs_record(gibbs),
            "estimator": estimator.as_str(),
        }),
    );
    let out = DeOutputs {
        report: out_dir.join("report.tsv"),
        posterior: [
            out_dir.join("posterior_m0.tsv"),
            out_dir.join("posterior_m1.tsv"),
            out_dir.join("posterior_m2.tsv"),
        ],
        n_genes: report.genes.len(),
        n_called: report.called(crate::bayes_factor::LN_10).count(),
    };
    io::write_report(&out.report, &report, &prov)?;
    let pooled = canonical_pool(&d1, &d2)?;
    io::write_posterior_summary(&out.posterior[0], &pooled, &fits.m0, &prov)?;
    io::write_posterior_summary(&out.posterior[1], &d1, &fits.m1, &prov)?;
    io::write_posterior_summary(&out.posterior[2], &d2, &fits.m2, &prov)?;
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct EvalOutputs {
    pub roc: CurveResult,
    pub pr: CurveResult,
    pub roc_path: PathBuf,
    pub pr_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Scores a report against a truth sidecar.
pub fn cmd_eval(report: &Path, truth: &Path, out_dir: &Path) -> Result<EvalOutputs> {
    let rep = io::read_report(report)?;
    let (ids, labels) = io::read_truth(truth)?;
    let scores = rep.scores_in_order(&ids)?;
    if rep.genes.len() != ids.len() {
        return Err(GmnbError::Structural(format!(
            "report has {} genes, truth has {}",
            rep.genes.len(),
            ids.len()
        )));
    }
    let roc = roc_curve(&scores, &labels)?;
    let pr = pr_curve(&scores, &labels)?;
    let prov = Provenance::new(
        "eval",
        0,
        json!({ "report": report.display().to_string(), "truth": truth.display().to_string() }),
    );
    let out = EvalOutputs {
        roc_path: out_dir.join("roc.tsv"),
        pr_path: out_dir.join("pr.tsv"),
        summary_path: out_dir.join("auc.tsv"),
        roc,
        pr,
    };
    io::write_curve(&out.roc_path, &out.roc, &prov)?;
    io::write_curve(&out.pr_path, &out.pr, &prov)?;
    let row = |metric: &str, auc: f64| AucSummary {
        method: "gmnb".into(),
        generator: "external".into(),
        metric: metric.into(),
        mean: auc,
        sd: f64::NAN,
        n_runs: 1,
    };
    io::write_auc_summary(
        &out.summary_path,
        &[row("roc", out.roc.auc), row("pr", out.pr.auc)],
        &prov,
    )?;
    Ok(out)
}

/// Per-run AUCs of a benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRun {
    pub run: usize,
    pub seed: u64,
    pub roc_auc: f64,
    pub pr_auc: f64,
}

#[derive(Debug, Clone)]
pub struct BenchOutcome {
    pub runs: Vec<BenchRun>,
    pub roc: (f64, f64),
    pub pr: (f64, f64),
    pub summary_path: PathBuf,
    pub runs_path: PathBuf,
    /// Gene x time point x iteration updates per second over all fits.
    /// Reported, never written to files.
    pub throughput: f64,
}

/// Seed of benchmark run `i`.
pub fn bench_run_seed(base: u64, run: usize) -> u64 {
    derive_seed(base, run as u64)
}

/// Repeats simulate -> de -> eval over `n_runs` seeds derived from
/// `template.seed` and writes `auc_summary.tsv` and `runs.tsv`.
pub fn cmd_bench(
    template: &SimSpec,
    n_runs: usize,
    out_dir: &Path,
    hyper: &GmnbHyper,
    gibbs: &GibbsConfig,
    estimator: Estimator,
) -> Result<BenchOutcome> {
    if n_runs < 2 {
        return Err(GmnbError::Validation(format!("bench needs at least 2 runs, got {n_runs}")));
    }
    template.validate()?;
    hyper.validate()?;
    gibbs.validate()?;
    let mut runs = Vec::with_capacity(n_runs);
    let mut updates = 0.0;
    let mut seconds = 0.0;
    for i in 0..n_runs {
        let seed = bench_run_seed(template.seed, i);
        let spec = SimSpec { seed, ..template.clone() };
        let ds = simulate(&spec)?;
        let cfg = GibbsConfig {
            seed: derive_seed(seed, 0x6962),
            store_draws: false,
            ..*gibbs
        };
        let start = Instant::now();
        let (report, _) = differential_expression(&ds.data_cond1, &ds.data_cond2, hyper, &cfg, estimator)?;
        seconds += start.elapsed().as_secs_f64();
        // M0 sees the pooled samples but the same genes and time points.
        updates += 3.0 * (spec.n_genes * spec.time_grid.len() * cfg.total_iters) as f64;

        let scores = report.scores_in_order(ds.data_cond1.gene_ids())?;
        runs.push(BenchRun {
            run: i,
            seed,
            roc_auc: roc_curve(&scores, &ds.truth)?.auc,
            pr_auc: pr_curve(&scores, &ds.truth)?.auc,
        });
    }
    let roc = mean_sd(&runs.iter().map(|r| r.roc_auc).collect::<Vec<_>>())?;
    let pr = mean_sd(&runs.iter().map(|r| r.pr_auc).collect::<Vec<_>>())?;

    let prov = Provenance::new(
        "bench",
        template.seed,
        json!({
            "spec": to_value(template),
            "n_runs": n_runs,
            "hyper": to_value(hyper),
            "gibbs": gibbs_record(gibbs),
            "estimator": estimator.as_str(),
        }),
    );
    let generator = template.generator.as_str();
    let row = |metric: &str, (mean, sd): (f64, f64)| AucSummary {
        method: "gmnb".into(),
        generator: generator.into(),
        metric: metric.into(),
        mean,
        sd,
        n_runs,
    };
    let summary_path = out_dir.join("auc_summary.tsv");
    io::write_auc_summary(&summary_path, &[row("roc", roc), row("pr", pr)], &prov)?;

    let runs_path = out_dir.join("runs.tsv");
    let mut text = prov.header();
    text.push_str("run\tseed\troc_auc\tpr_auc\n");
    for r in &runs {
        text.push_str(&format!("{}\t{}\t{}\t{}\n", r.run, r.seed, r.roc_auc, r.pr_auc));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| GmnbError::io(out_dir, e))?;
    std::fs::write(&runs_path, text).map_err(|e| GmnbError::io(&runs_path, e))?;

    Ok(BenchOutcome {
        runs,
        roc,
        pr,
        summary_path,
        runs_path,
        throughput: if seconds > 0.0 { updates / seconds } else { f64::INFINITY },
    })
}
