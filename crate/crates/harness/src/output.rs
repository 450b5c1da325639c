//! Result files: CSV tables with fixed headers, JSONL records, pretty JSON
//! summaries and optional whitespace-separated `.dat` files for gnuplot.
//!
//! Every record goes through `serde_json::Value` first; a non-finite float
//! serializes as `null` there, and any `null` aborts the write.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;

use crate::config::Format;
use crate::error::{HarnessError, Result};
use crate::experiments::{BayesRiskResult, CoverageResult, EnvelopeResult, Lemma1Result, RatesResult, SieveResult};
use crate::selfcheck::CheckResult;

pub struct Sink {
    dir: PathBuf,
    format: Format,
    dat: bool,
    written: Vec<PathBuf>,
}

fn io(path: &Path, source: std::io::Error) -> HarnessError {
    HarnessError::Io { code: "write", path: path.to_path_buf(), source }
}

fn find_null(v: &Value, at: &mut String) -> bool {
    match v {
        Value::Null => true,
        Value::Array(xs) => xs.iter().enumerate().any(|(i, x)| {
            let n = at.len();
            at.push_str(&format!("[{i}]"));
            let hit = find_null(x, at);
            if !hit {
                at.truncate(n);
            }
            hit
        }),
        Value::Object(m) => m.iter().any(|(k, x)| {
            let n = at.len();
            at.push('.');
            at.push_str(k);
            let hit = find_null(x, at);
            if !hit {
                at.truncate(n);
            }
            hit
        }),
        _ => false,
    }
}

/// Serializes `x`, failing on any non-finite number.
pub fn checked_value<T: Serialize>(what: &str, x: &T) -> Result<Value> {
    let v = serde_json::to_value(x).map_err(|e| HarnessError::runtime("output", "serialize", e.to_string()))?;
    let mut at = String::new();
    if find_null(&v, &mut at) {
        return Err(HarnessError::runtime("output", "non_finite", format!("{what}{at} is not finite")));
    }
    Ok(v)
}

impl Sink {
    pub fn new(dir: impl Into<PathBuf>, format: Format, dat: bool) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| HarnessError::Io { code: "mkdir", path: dir.clone(), source: e })?;
        Ok(Sink { dir, format, dat, written: Vec::new() })
    }

    /// Paths written so far, in order.
    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn create(&mut self, file: &str) -> Result<(PathBuf, BufWriter<File>)> {
        let path = self.dir.join(file);
        let f = File::create(&path).map_err(|e| io(&path, e))?;
        self.written.push(path.clone());
        Ok((path, BufWriter::new(f)))
    }

    pub fn csv<T: Serialize>(&mut self, stem: &str, rows: &[T]) -> Result<()> {
        for (i, r) in rows.iter().enumerate() {
            checked_value(&format!("{stem}[{i}]"), r)?;
        }
        let (path, w) = self.create(&format!("{stem}.csv"))?;
        let mut out = csv::Writer::from_writer(w);
        for r in rows {
            out.serialize(r).map_err(|e| HarnessError::runtime("output", "csv", format!("{}: {e}", path.display())))?;
        }
        out.flush().map_err(|e| io(&path, e))
    }

    pub fn jsonl<T: Serialize>(&mut self, stem: &str, rows: &[T]) -> Result<()> {
        let vals = rows.iter().enumerate().map(|(i, r)| checked_value(&format!("{stem}[{i}]"), r)).collect::<Result<Vec<_>>>()?;
        let (path, mut w) = self.create(&format!("{stem}.jsonl"))?;
        for v in vals {
            writeln!(w, "{v}").map_err(|e| io(&path, e))?;
        }
        w.flush().map_err(|e| io(&path, e))
    }

    /// Row table in the configured format.
    pub fn table<T: Serialize>(&mut self, stem: &str, rows: &[T]) -> Result<()> {
        match self.format {
            Format::Csv => self.csv(stem, rows),
            Format::Jsonl => self.jsonl(stem, rows),
        }
    }

    pub fn json<T: Serialize>(&mut self, stem: &str, x: &T) -> Result<()> {
        let v = checked_value(stem, x)?;
        let (path, mut w) = self.create(&format!("{stem}.json"))?;
        serde_json::to_writer_pretty(&mut w, &v).map_err(|e| HarnessError::runtime("output", "serialize", e.to_string()))?;
        writeln!(w).and_then(|_| w.flush()).map_err(|e| io(&path, e))
    }

    /// Whitespace-separated columns with a `#` header; skipped unless enabled.
    pub fn dat(&mut self, stem: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        if !self.dat {
            return Ok(());
        }
        if let Some(x) = rows.iter().flatten().find(|x| !x.is_finite()) {
            return Err(HarnessError::runtime("output", "non_finite", format!("{stem}.dat holds {x}")));
        }
        let (path, mut w) = self.create(&format!("{stem}.dat"))?;
        let mut body = format!("# {}\n", header.join(" "));
        for r in rows {
            let cells: Vec<String> = r.iter().map(|x| format!("{x:.10e}")).collect();
            body.push_str(&cells.join(" "));
            body.push('\n');
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| io(&path, e))
    }
}

fn beta_tag(beta: f64) -> String {
    format!("{beta}").replace('.', "p")
}

pub fn write_rates(s: &mut Sink, r: &RatesResult) -> Result<()> {
    s.table("rates", &r.rows)?;
    s.json("rates_fit", &r.summaries)?;
    for m in &r.summaries {
        let rows: Vec<Vec<f64>> = m.n.iter().zip(&m.median_loss).map(|(&n, &v)| vec![n as f64, v]).collect();
        s.dat(&format!("rates_beta{}", beta_tag(m.beta)), &["n", "median_loss"], &rows)?;
    }
    Ok(())
}

pub fn write_lemma1(s: &mut Sink, r: &Lemma1Result) -> Result<()> {
    #[derive(Serialize)]
    struct Trend {
        nonincreasing: bool,
    }
    s.table("lemma1", &r.rows)?;
    s.csv("lemma1_summary", &r.summary)?;
    s.json("lemma1_trend", &Trend { nonincreasing: r.nonincreasing })?;
    let rows: Vec<Vec<f64>> = r.summary.iter().map(|x| vec![x.n as f64, x.beta, x.p_miss_mean, x.p_miss_se, x.p_spurious_mean, x.p_spurious_se]).collect();
    s.dat("lemma1", &["n", "beta", "p_miss", "p_miss_se", "p_spurious", "p_spurious_se"], &rows)
}

pub fn write_coverage(s: &mut Sink, r: &CoverageResult) -> Result<()> {
    #[derive(Serialize)]
    struct Line<'a> {
        n: u64,
        beta: f64,
        loss: &'a str,
        alpha: f64,
        coverage: f64,
        radius_median: f64,
        radius_p90: f64,
    }
    s.jsonl("coverage", &r.rows)?;
    let lines: Vec<Line> = r
        .summary
        .iter()
        .map(|x| Line {
            n: x.n,
            beta: x.beta,
            loss: x.loss.name(),
            alpha: x.alpha,
            coverage: x.coverage,
            radius_median: x.radius_median,
            radius_p90: x.radius_p90,
        })
        .collect();
    s.csv("coverage_summary", &lines)?;
    s.json("coverage_fit", &(&r.summary, &r.radius_fits))?;
    let rows: Vec<Vec<f64>> = r.summary.iter().map(|x| vec![x.n as f64, x.beta, x.coverage, x.radius_median]).collect();
    s.dat("coverage", &["n", "beta", "coverage", "radius_median"], &rows)
}

pub fn write_envelope(s: &mut Sink, r: &EnvelopeResult) -> Result<()> {
    s.table("envelope", &r.rows)?;
    s.json("envelope_summary", &r.summary)?;
    s.csv("envelope_bounds", &r.bounds)?;
    s.json("envelope_fit", &r.comparisons)?;
    let rows: Vec<Vec<f64>> = r.summary.iter().map(|x| vec![x.n as f64, x.beta, x.mean_outside_mass, x.se]).collect();
    s.dat("envelope", &["n", "beta", "mean_outside_mass", "se"], &rows)
}

pub fn write_bayes_risk(s: &mut Sink, r: &BayesRiskResult) -> Result<()> {
    s.table("bayes_risk", &r.rows)?;
    s.csv("bayes_risk_summary", &r.summary)?;
    s.json("bayes_risk_ratio", &r.ratios)?;
    let rows: Vec<Vec<f64>> = r.summary.iter().map(|x| vec![x.n as f64, x.beta, x.scaled_risk, x.exceed_freq]).collect();
    s.dat("bayes_risk", &["n", "beta", "scaled_risk", "exceed_freq"], &rows)
}

pub fn write_sieve(s: &mut Sink, r: &SieveResult) -> Result<()> {
    s.json("sieve", r)?;
    let rows: Vec<Vec<f64>> = r.reports.iter().map(|x| vec![x.n as f64, x.sum_cond2, x.omega_fail_freq, x.mass_outside.iter().sum::<f64>() / x.mass_outside.len().max(1) as f64]).collect();
    s.dat("sieve", &["n", "sum_cond2", "omega_fail_freq", "mean_mass_outside"], &rows)
}

pub fn write_selfcheck(s: &mut Sink, r: &[CheckResult]) -> Result<()> {
    s.jsonl("selfcheck", r)
}
