use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gmnb::bayes_factor::Estimator;
use gmnb::pipeline::{self, with_workers};
use gmnb::synthetic::{Generator, Interval, SimSpec};
use gmnb::{GibbsConfig, GmnbError, GmnbHyper};

/// Temporal differential expression with the gamma Markov negative binomial model.
#[derive(Parser, Debug)]
#[command(name = "gmnb", version, about)]
struct Cli {
    /// Not supported: counts are modelled raw and sequencing depth is absorbed
    /// by the per-sample NB probabilities, so inputs must not be normalized.
    #[arg(long, global = true, hide = true)]
    normalize: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a two-condition benchmark with known DE labels.
    Simulate {
        #[command(flatten)]
        sim: SimArgs,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Fit one count file and write posterior summaries of the dispersions.
    Fit {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
        #[command(flatten)]
        gibbs: GibbsArgs,
    },
    /// Rank genes by the Bayes factor between per-condition and pooled fits.
    De {
        #[arg(long)]
        cond1: PathBuf,
        #[arg(long)]
        cond2: PathBuf,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
        #[command(flatten)]
        gibbs: GibbsArgs,
        /// Marginal likelihood estimator.
        #[arg(long, default_value = "harmonic-mean")]
        estimator: Estimator,
    },
    /// Score a report against a truth file (ROC and PR curves).
    Eval {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Repeat simulate, de and eval over seeds and summarize the AUCs.
    Bench {
        #[command(flatten)]
        sim: SimArgs,
        /// Number of simulated datasets.
        #[arg(long, default_value_t = 20)]
        runs: usize,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        #[command(flatten)]
        hyper: HyperArgs,
        #[command(flatten)]
        gibbs: GibbsArgs,
        #[arg(long, default_value = "harmonic-mean")]
        estimator: Estimator,
    },
}

#[derive(Args, Debug)]
struct SimArgs {
    #[arg(long, default_value = "gmnb")]
    generator: Generator,
    #[arg(long, default_value_t = 1000)]
    genes: usize,
    #[arg(long, default_value_t = 0.1)]
    de_frac: f64,
    /// Replicates per condition and time point.
    #[arg(long, default_value_t = 4)]
    reps: usize,
    /// Comma-separated time points.
    #[arg(long, value_delimiter = ',', default_value = "0,12,24,48,72")]
    times: Vec<f64>,
    /// Size factors are drawn uniformly from `lo,hi`.
    #[arg(long, value_delimiter = ',', num_args = 2, default_value = "0.8,1.2")]
    size_factors: Vec<f64>,
    /// NB dispersion of the gp and nbar1 count noise.
    #[arg(long)]
    noise_dispersion: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SimArgs {
    fn spec(&self) -> SimSpec {
        let mut spec = SimSpec::new(self.generator);
        spec.n_genes = self.genes;
        spec.de_fraction = self.de_frac;
        spec.n_replicates = self.reps;
        spec.time_grid = self.times.clone();
        spec.size_factor_range = Interval::new(self.size_factors[0], self.size_factors[1]);
        if let Some(d) = self.noise_dispersion {
            spec.gp.dispersion = d;
            spec.nbar1.dispersion = d;
        }
        spec.seed = self.seed;
        spec
    }
}

#[derive(Args, Debug)]
struct HyperArgs {
    #[arg(long, default_value_t = 1.0)]
    a0: f64,
    #[arg(long, default_value_t = 1.0)]
    b0: f64,
    /// Shape of the prior on the first dispersion.
    #[arg(long, default_value_t = 1.0)]
    e_init: f64,
    /// Rate of the prior on the first dispersion.
    #[arg(long, default_value_t = 1.0)]
    f_init: f64,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    #[arg(long, default_value_t = 1.0)]
    d0: f64,
}

impl HyperArgs {
    fn hyper(&self) -> GmnbHyper {
        GmnbHyper {
            a0: self.a0,
            b0: self.b0,
            e_init: self.e_init,
            f_init: self.f_init,
            c0: self.c0,
            d0: self.d0,
        }
    }
}

#[derive(Args, Debug)]
struct GibbsArgs {
    /// Total sweeps, burn-in included.
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    #[arg(long, default_value_t = 1)]
    thin: usize,
    /// Sampler seed.
    #[arg(long, default_value_t = 0)]
    gibbs_seed: u64,
    /// Customer count above which CRT draws use the normal approximation.
    #[arg(long, default_value_t = gmnb::distributions::CRT_EXACT_THRESHOLD)]
    crt_threshold: u64,
    /// Worker threads for gene-level updates (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

impl GibbsArgs {
    fn config(&self) -> GibbsConfig {
        GibbsConfig {
            total_iters: self.iters,
            burn_in: self.burn_in,
            thin: self.thin,
            seed: self.gibbs_seed,
            crt_threshold: self.crt_threshold,
            ..GibbsConfig::default()
        }
    }
}

fn run(cli: Cli) -> gmnb::Result<()> {
    if cli.normalize {
        return Err(GmnbError::Validation(
            "--normalize is not supported: raw counts are modelled directly and sequencing depth \
             is absorbed by the per-sample NB probabilities"
                .into(),
        ));
    }
    match cli.command {
        Command::Simulate { sim, out } => {
            let o = pipeline::cmd_simulate(&sim.spec(), &out)?;
            println!(
                "simulated {} genes ({} DE) into {}",
                o.n_genes,
                o.n_de,
                out.display()
            );
        }
        Command::Fit {
            input,
            out,
            hyper,
            gibbs,
        } => {
            let path = with_workers(gibbs.workers, || {
                pipeline::cmd_fit(&input, &out, &hyper.hyper(), &gibbs.config())
            })?;
            println!("wrote {}", path.display());
        }
        Command::De {
            cond1,
            cond2,
            out,
            hyper,
            gibbs,
            estimator,
        } => {
            let o = with_workers(gibbs.workers, || {
                pipeline::cmd_de(&cond1, &cond2, &out, &hyper.hyper(), &gibbs.config(), estimator)
            })?;
            println!(
                "{} genes, {} with BF > 10; report in {}",
                o.n_genes,
                o.n_called,
                o.report.display()
            );
        }
        Command::Eval { report, truth, out } => {
            let o = pipeline::cmd_eval(&report, &truth, &out)?;
            println!("AUC-ROC {:.4}  AUC-PR {:.4}", o.roc.auc, o.pr.auc);
        }
        Command::Bench {
            sim,
            runs,
            out,
            hyper,
            gibbs,
            estimator,
        } => {
            let o = with_workers(gibbs.workers, || {
                pipeline::cmd_bench(&sim.spec(), runs, &out, &hyper.hyper(), &gibbs.config(), estimator)
            })?;
            println!(
                "{} x{}: AUC-ROC {:.3} ± {:.3}  AUC-PR {:.3} ± {:.3}",
                sim.generator, runs, o.roc.0, o.roc.1, o.pr.0, o.pr.1
            );
            eprintln!("throughput: {:.3e} gene*timepoint*iterations/s", o.throughput);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("error[E_USAGE]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
