//! Acceptance runner: one PASS/FAIL line per criterion and a closing summary.
//!
//! A failed criterion is reported but does not fail `cargo test` (which would
//! stop the remaining test targets); set `GMNB_ACCEPTANCE_STRICT=1` to exit
//! nonzero instead.
//!
//! `GMNB_ACCEPTANCE_SCALE=full` runs the AUC benchmarks at 1000 genes and 20
//! seeds instead of the reduced 300 genes and 10 seeds.
//! `GMNB_ACCEPTANCE_ONLY=4,5` restricts the run to the listed criteria.

mod common;

use std::fs;
use std::path::Path;
use std::time::Instant;

use common::{ensure, Outcome};
use gmnb::bayes_factor::Estimator;
use gmnb::pipeline::{cmd_bench, cmd_de, cmd_simulate, with_workers};
use gmnb::synthetic::{Generator, SimSpec};
use gmnb::{GibbsConfig, GmnbHyper};

struct Scale {
    genes: usize,
    runs: usize,
}

fn scale() -> Scale {
    match std::env::var("GMNB_ACCEPTANCE_SCALE").as_deref() {
        Ok("full") => Scale { genes: 1000, runs: 20 },
        _ => Scale { genes: 300, runs: 10 },
    }
}

fn selected(id: u32) -> bool {
    match std::env::var("GMNB_ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').any(|s| s.trim().parse() == Ok(id)),
        Err(_) => true,
    }
}

struct Target {
    roc: (f64, f64),
    pr: (f64, f64),
}

fn auc_benchmark(generator: Generator, target: Target, throughput: &mut Option<f64>) -> Outcome {
    let Scale { genes, runs } = scale();
    let mut spec = SimSpec::new(generator);
    spec.n_genes = genes;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = cmd_bench(
        &spec,
        runs,
        dir.path(),
        &GmnbHyper::default(),
        &GibbsConfig::default(),
        Estimator::HarmonicMean,
    )
    .map_err(|e| e.to_string())?;
    throughput.get_or_insert(out.throughput);
    let within = |(mean, _): (f64, f64), (centre, tol): (f64, f64)| (mean - centre).abs() <= tol;
    ensure(
        within(out.roc, target.roc) && within(out.pr, target.pr),
        format!(
            "{genes} genes x {runs} seeds: AUC-ROC {:.3} ± {:.3} (target {} ± {}), AUC-PR {:.3} ± {:.3} (target {} ± {})",
            out.roc.0, out.roc.1, target.roc.0, target.roc.1, out.pr.0, out.pr.1, target.pr.0, target.pr.1
        ),
    )
}

fn timed(f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let res = f();
    let secs = start.elapsed().as_secs_f64();
    match res {
        Ok(m) => Ok(format!("{m} [{secs:.0} s]")),
        Err(m) => Err(format!("{m} [{secs:.0} s]")),
    }
}

fn geweke() -> Outcome {
    let start = Instant::now();
    let res = common::geweke::check(1_000_000, 2024)?;
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 600.0, format!("{res}; runtime {secs:.0} s (limit 600 s)"))
}

fn distributions() -> Outcome {
    let start = Instant::now();
    let results = common::distribution_suite();
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|m| format!("{name}: {m}")))
        .collect();
    if !failed.is_empty() {
        return Err(failed.join("; "));
    }
    ensure(
        secs < 300.0,
        format!("{} checks passed; runtime {secs:.0} s (limit 300 s)", results.len()),
    )
}

fn read_all(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let path = e.map_err(|e| e.to_string())?.path();
            let bytes = fs::read(&path).map_err(|e| e.to_string())?;
            Ok((path.file_name().unwrap().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism() -> Outcome {
    let err = |e: gmnb::GmnbError| e.to_string();
    let mut spec = SimSpec::new(Generator::Gmnb);
    spec.n_genes = 25;
    spec.seed = 17;
    let sims: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &sims {
        cmd_simulate(&spec, d.path()).map_err(err)?;
    }
    let sim_files = read_all(sims[0].path())?;
    if sim_files != read_all(sims[1].path())? {
        return Err("simulate reruns differ".into());
    }

    let c1 = sims[0].path().join("cond1.tsv");
    let c2 = sims[0].path().join("cond2.tsv");
    let cfg = GibbsConfig {
        total_iters: 400,
        burn_in: 200,
        seed: 5,
        ..GibbsConfig::default()
    };
    let mut runs = Vec::new();
    for workers in [1, 4, 1, 2] {
        let d = tempfile::tempdir().unwrap();
        with_workers(Some(workers), || {
            cmd_de(&c1, &c2, d.path(), &GmnbHyper::default(), &cfg, Estimator::HarmonicMean)
        })
        .map_err(err)?;
        runs.push(read_all(d.path())?);
    }
    let identical = runs.iter().all(|r| *r == runs[0]);
    ensure(
        identical,
        format!(
            "simulate x2 and de under 1/4/1/2 workers: {} + {} files byte-identical",
            sim_files.len(),
            runs[0].len()
        ),
    )
}

fn main() {
    let mut failures = 0;
    let mut throughput = None;
    let mut report = |id: u32, name: &str, run: &mut dyn FnMut() -> Outcome| {
        if !selected(id) {
            println!("[SKIP] {id}. {name}");
            return;
        }
        match run() {
            Ok(m) => println!("[PASS] {id}. {name}: {m}"),
            Err(m) => {
                failures += 1;
                println!("[FAIL] {id}. {name}: {m}");
            }
        }
    };

    report(1, "AUC on GMNB-generated data", &mut || {
        timed(|| auc_benchmark(Generator::Gmnb, Target { roc: (0.84, 0.05), pr: (0.61, 0.08) }, &mut throughput))
    });
    report(2, "AUC on GP-generated data", &mut || {
        timed(|| auc_benchmark(Generator::Gp, Target { roc: (0.94, 0.05), pr: (0.79, 0.10) }, &mut throughput))
    });
    report(3, "AUC on NB-AR(1)-generated data", &mut || {
        timed(|| auc_benchmark(Generator::Nbar1, Target { roc: (0.81, 0.06), pr: (0.51, 0.10) }, &mut throughput))
    });
    report(4, "Sampler joint-distribution test", &mut geweke);
    report(5, "Distribution suite", &mut distributions);
    report(6, "Null calibration", &mut || timed(|| common::null_calibration(200, &[0, 1, 2])));
    report(7, "Determinism across reruns and worker counts", &mut || timed(determinism));
    report(8, "Excluded claims", &mut || {
        Ok(format!(
            "case-study findings and the wall-clock comparison are out of scope; sampler throughput {}",
            match throughput {
                Some(t) => format!("{t:.3e} gene*timepoint*iterations/s (GMNB benchmark)"),
                None => "not measured (benchmarks skipped)".into(),
            }
        ))
    });

    if failures == 0 {
        println!("acceptance: all selected criteria passed");
        return;
    }
    println!("acceptance: {failures} criterion(s) FAILED");
    if std::env::var("GMNB_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
        std::process::exit(1);
    }
}
