//! Acceptance suite: one PASS/FAIL line per criterion on stderr.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use postconc_harness::config::{load_config, ExperimentConfig};
use postconc_harness::experiments::{
    run_bayes_risk, run_coverage, run_envelope, run_lemma1, run_rates, target_slope, run_sieve,
};
use postconc_harness::fit::{fit_rate_slope, Abscissa, DecayClass};
use postconc_harness::selfcheck;

fn config(name: &str) -> ExperimentConfig {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    load_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn report(id: u32, title: &str, pass: bool, detail: &str, t0: Instant) {
    let line = format!(
        "\n{} criterion {id:>2} {title}: {detail} [{:.1}s]\n",
        if pass { "PASS" } else { "FAIL" },
        t0.elapsed().as_secs_f64()
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "criterion {id} failed: {detail}");
}

#[test]
fn c01_slab_marginal_oracle() {
    let t0 = Instant::now();
    let r = selfcheck::slab_marginal(1, 1000).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = r.cases == 1000 && r.worst <= 1e-8 && secs < 10.0;
    report(1, "slab marginal vs quadrature", pass, &format!("cases={} worst={:.2e} tol=1e-8", r.cases, r.worst), t0);
}

#[test]
fn c02_coordinate_posterior_oracle() {
    let t0 = Instant::now();
    let r = selfcheck::p_nonzero(1, 100).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let pass = r.cases == 100 && r.worst <= 1e-6 && secs < 30.0;
    report(2, "p_nonzero vs grid enumeration", pass, &format!("cases={} worst={:.2e} tol=1e-6", r.cases, r.worst), t0);
}

#[test]
fn c03_spike_slab_sup_norm_exponent() {
    let t0 = Instant::now();
    let cfg = config("rates_linf.toml");
    assert_eq!(cfg.beta_grid, [0.5, 1.0, 2.0]);
    let res = run_rates(&cfg).unwrap();
    let mut pass = true;
    let mut parts = Vec::new();
    for s in &res.summaries {
        assert_eq!(s.fit.abscissa, Abscissa::LogNOverLogN);
        let ok = (s.fit.slope - s.target_slope).abs() <= 0.1 && s.fit.r2 >= 0.98;
        pass &= ok;
        parts.push(format!("beta={} slope={:.3} target={:.3} r2={:.4}", s.beta, s.fit.slope, s.target_slope, s.fit.r2));
    }
    pass &= res.summaries.len() == 3;
    report(3, "spike-slab sup-norm rate", pass, &parts.join("; "), t0);
}

#[test]
fn c04_block_l2_exponent_and_log_gap() {
    let t0 = Instant::now();
    let block = run_rates(&config("rates_block_l2.toml")).unwrap();
    let b = &block.summaries[0];
    assert_eq!(b.fit.abscissa, Abscissa::LogN);
    let block_ok = (b.fit.slope - target_slope(b.beta)).abs() <= 0.1 && b.fit.r2 >= 0.98;

    let cfg = config("rates_spikeslab_l2.toml");
    let ss = run_rates(&cfg).unwrap();
    let s = &ss.summaries[0];
    let plain = fit_rate_slope(&cfg.n_grid, &s.median_loss, Abscissa::LogN).unwrap();
    let corrected = fit_rate_slope(&cfg.n_grid, &s.median_loss, Abscissa::LogNOverLogN).unwrap();
    let gap_ok = corrected.r2 > plain.r2;
    report(
        4,
        "block l2 rate and spike-slab l2 log gap",
        block_ok && gap_ok,
        &format!(
            "block slope={:.3} target={:.3} r2={:.4}; spike-slab l2 r2 log(n/log n)={:.5} vs log n={:.5}",
            b.fit.slope,
            target_slope(b.beta),
            b.fit.r2,
            corrected.r2,
            plain.r2
        ),
        t0,
    );
}

#[test]
fn c05_selection_error_trend() {
    let t0 = Instant::now();
    let cfg = config("lemma1.toml");
    assert_eq!((cfg.lemma1.gamma_lo, cfg.lemma1.gamma_hi), (0.05, 8.0));
    let res = run_lemma1(&cfg).unwrap();
    let miss: Vec<String> = res.summary.iter().map(|s| format!("{:.1e}", s.p_miss_mean)).collect();
    let spur: Vec<String> = res.summary.iter().map(|s| format!("{:.1e}", s.p_spurious_mean)).collect();
    report(
        5,
        "miss and spurious probabilities nonincreasing",
        res.nonincreasing,
        &format!("p_miss=[{}] p_spurious=[{}]", miss.join(","), spur.join(",")),
        t0,
    );
}

#[test]
fn c06_envelope_decay_class() {
    let t0 = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (file, want) in [("envelope_spikeslab.toml", DecayClass::Polynomial), ("envelope_block.toml", DecayClass::StretchedExponential)] {
        let cfg = config(file);
        let res = run_envelope(&cfg).unwrap();
        assert!(res.summary.iter().all(|s| (0.0..=1.0).contains(&s.mean_outside_mass)));
        for c in &res.comparisons {
            match &c.fit {
                Some(f) => {
                    pass &= f.preferred == want && cfg.n_grid.len() >= 5;
                    parts.push(format!(
                        "{file}: preferred={:?} aic poly={:.2} stretched={:.2}",
                        f.preferred, f.polynomial.aic, f.stretched.aic
                    ));
                }
                None => {
                    pass = false;
                    parts.push(format!("{file}: no comparison"));
                }
            }
        }
    }
    report(6, "outside-mass decay class", pass, &parts.join("; "), t0);
}

#[test]
fn c07_sieve_verification() {
    let t0 = Instant::now();
    let cfg = config("sieve.toml");
    assert_eq!(cfg.replicates, 500);
    let res = run_sieve(&cfg).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let chain: usize = res.reports.iter().map(|r| r.chain_violations).sum();
    let omega_ok = res.reports.iter().all(|r| r.omega_fail_freq <= r.omega_fail_bound + 3.0 * r.omega_fail_se);
    let pass = res.structural_ok && res.cond2_decreasing && chain == 0 && omega_ok && secs < 300.0;
    report(
        7,
        "sieve structure, counting, chain inequality",
        pass,
        &format!(
            "structural={} cond2_decreasing={} chain_violations={chain} omega_within_bound={omega_ok}",
            res.structural_ok, res.cond2_decreasing
        ),
        t0,
    );
}

#[test]
fn c08_credible_ball_coverage() {
    let t0 = Instant::now();
    let cfg = config("coverage.toml");
    assert_eq!((cfg.n_grid.as_slice(), cfg.replicates, cfg.coverage.alpha), (&[4096u64][..], 200, 0.1));
    let cov = run_coverage(&cfg).unwrap();
    let s = &cov.summary[0];
    let cov_ok = s.coverage >= 0.9 - 3.0 * s.se;

    let radius = run_coverage(&config("coverage_radius.toml")).unwrap();
    let (beta, fit) = &radius.radius_fits[0];
    let slope_ok = (fit.slope - target_slope(*beta)).abs() <= 0.15;
    report(
        8,
        "prior-draw coverage and credible radius",
        cov_ok && slope_ok,
        &format!("coverage={:.3} se={:.3}; radius slope={:.3} target={:.3}", s.coverage, s.se, fit.slope, target_slope(*beta)),
        t0,
    );
}

#[test]
fn c09_bayes_risk_bounded() {
    let t0 = Instant::now();
    let res = run_bayes_risk(&config("bayes_risk.toml")).unwrap();
    let pass = !res.ratios.is_empty() && res.ratios.iter().all(|&(_, q)| q <= 3.0);
    let parts: Vec<String> = res.ratios.iter().map(|(b, q)| format!("beta={b} max/min={q:.3}")).collect();
    report(9, "scaled Bayes risk ratio", pass, &parts.join("; "), t0);
}

fn selfcheck_run(dir: &Path, threads: &str) -> (Vec<u8>, Vec<u8>) {
    let o = Command::new(env!("CARGO_BIN_EXE_postconc"))
        .args(["selfcheck", "--seed", "7", "--threads", threads, "--out-dir"])
        .arg(dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    (o.stdout, std::fs::read(dir.join("selfcheck.jsonl")).unwrap())
}

#[test]
fn c10_determinism_across_threads() {
    let t0 = Instant::now();
    let base = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance_determinism");
    let runs: Vec<(Vec<u8>, Vec<u8>)> = ["1", "1", "8", "8"]
        .iter()
        .enumerate()
        .map(|(i, t)| selfcheck_run(&base.join(format!("run{i}")), t))
        .collect();
    let pass = runs.iter().all(|r| *r == runs[0]);
    report(10, "selfcheck --seed 7 byte-identical at 1 and 8 threads", pass, &format!("runs={} bytes={}", runs.len(), runs[0].1.len()), t0);
}
