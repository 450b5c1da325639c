use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use postconc_harness::config::{load_config, ExperimentConfig, ExperimentKind, Format};
use postconc_harness::error::{HarnessError, Result};
use postconc_harness::output::{self, Sink};
use postconc_harness::{experiments, selfcheck};

// println that ignores a closed stdout
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "postconc", version, about = "Posterior concentration experiments for the Gaussian sequence model")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Posterior loss quantiles and rate-exponent fits.
    Rates(Common),
    /// Selection error probabilities of the spike-and-slab posterior.
    Lemma1(Common),
    /// Frequentist coverage of credible balls.
    Coverage(Common),
    /// Exact lattice-sieve posterior and partition checks.
    SieveVerify(Common),
    /// Expected outside mass against the lower-bound envelope.
    Envelope(Common),
    /// Risk of the l-infinity Bayes estimator.
    BayesRisk(Common),
    /// Run every oracle suite.
    Selfcheck(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores); ACL_THREADS takes precedence.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Also write gnuplot `.dat` files.
    #[arg(long)]
    dat: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

fn threads(flag: Option<usize>) -> Result<usize> {
    match std::env::var("ACL_THREADS") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| HarnessError::Config { code: "invalid_value", path: "ACL_THREADS".into(), msg: format!("not a thread count: {v:?}") }),
        Err(_) => Ok(flag.unwrap_or(0)),
    }
}

fn config(kind: ExperimentKind, c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::defaults(kind),
    };
    if cfg.experiment != kind {
        return Err(HarnessError::Config {
            code: "invalid_value",
            path: "experiment".into(),
            msg: format!("config is for `{}`, subcommand runs `{}`", cfg.experiment.name(), kind.name()),
        });
    }
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(d) = &c.out_dir {
        cfg.output.dir = d.clone();
    }
    if let Some(f) = c.format {
        cfg.output.format = match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Jsonl => Format::Jsonl,
        };
    }
    cfg.output.dat |= c.dat;
    cfg.validate()?;
    Ok(cfg)
}

fn sink(cfg: &ExperimentConfig) -> Result<Sink> {
    Sink::new(&cfg.output.dir, cfg.output.format, cfg.output.dat)
}

/// Returns whether every built-in check passed.
fn run(cmd: Cmd) -> Result<bool> {
    let (kind, c) = match &cmd {
        Cmd::Rates(c) => (Some(ExperimentKind::Rates), c),
        Cmd::Lemma1(c) => (Some(ExperimentKind::Lemma1), c),
        Cmd::Coverage(c) => (Some(ExperimentKind::Coverage), c),
        Cmd::SieveVerify(c) => (Some(ExperimentKind::Sieve), c),
        Cmd::Envelope(c) => (Some(ExperimentKind::Envelope), c),
        Cmd::BayesRisk(c) => (Some(ExperimentKind::BayesRisk), c),
        Cmd::Selfcheck(c) => (None, c),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(c.threads)?)
        .build()
        .map_err(|e| HarnessError::runtime("cli", "threads", e.to_string()))?;
    let Some(kind) = kind else {
        let seed = c.seed.unwrap_or(0);
        let mut s = Sink::new(c.out_dir.clone().unwrap_or_else(|| "out".into()), Format::Jsonl, false)?;
        let res = pool.install(|| selfcheck::run_all(seed))?;
        output::write_selfcheck(&mut s, &res)?;
        for r in &res {
            out!("{} {:<18} cases={:<5} worst={:.3e} tol={:.3e}", if r.passed { "PASS" } else { "FAIL" }, r.suite, r.cases, r.worst, r.tolerance);
        }
        return Ok(res.iter().all(|r| r.passed));
    };
    let cfg = config(kind, c)?;
    let mut s = sink(&cfg)?;
    let ok = pool.install(|| -> Result<bool> {
        Ok(match kind {
            ExperimentKind::Rates => {
                let r = experiments::run_rates(&cfg)?;
                output::write_rates(&mut s, &r)?;
                for m in &r.summaries {
                    out!("beta={} slope={:.4} (target {:.4}) r2={:.4}", m.beta, m.fit.slope, m.target_slope, m.fit.r2);
                }
                true
            }
            ExperimentKind::Lemma1 => {
                let r = experiments::run_lemma1(&cfg)?;
                output::write_lemma1(&mut s, &r)?;
                out!("nonincreasing={}", r.nonincreasing);
                true
            }
            ExperimentKind::Coverage => {
                let r = experiments::run_coverage(&cfg)?;
                output::write_coverage(&mut s, &r)?;
                for m in &r.summary {
                    out!("n={} beta={} coverage={:.4} se={:.4}", m.n, m.beta, m.coverage, m.se);
                }
                true
            }
            ExperimentKind::Sieve => {
                let r = experiments::run_sieve(&cfg)?;
                output::write_sieve(&mut s, &r)?;
                out!("structural_ok={} cond2_decreasing={}", r.structural_ok, r.cond2_decreasing);
                r.structural_ok
            }
            ExperimentKind::Envelope => {
                let r = experiments::run_envelope(&cfg)?;
                output::write_envelope(&mut s, &r)?;
                for c in &r.comparisons {
                    match &c.fit {
                        Some(f) => out!("beta={} preferred={:?}", c.beta, f.preferred),
                        None => out!("beta={} no comparison", c.beta),
                    }
                }
                true
            }
            ExperimentKind::BayesRisk => {
                let r = experiments::run_bayes_risk(&cfg)?;
                output::write_bayes_risk(&mut s, &r)?;
                for (b, q) in &r.ratios {
                    out!("beta={b} max/min scaled risk={q:.4}");
                }
                true
            }
        })
    })?;
    for p in s.written() {
        out!("wrote {}", p.display());
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("E:cli:usage: {}", e.to_string().trim_end());
            return ExitCode::from(1);
        }
    };
    match run(cli.cmd) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("E:selfcheck:failed: one or more checks failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
