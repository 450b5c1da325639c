//! Least-squares rate fits and decay-model comparison.

use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Horizontal axis of a rate fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Abscissa {
    /// `ln n`.
    LogN,
    /// `ln(n / ln n)`.
    LogNOverLogN,
}

impl Abscissa {
    pub fn x(self, n: u64) -> f64 {
        let nf = n as f64;
        match self {
            Abscissa::LogN => nf.ln(),
            Abscissa::LogNOverLogN => (nf / nf.ln()).ln(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope.
    pub stderr: f64,
    pub r2: f64,
    pub rss: f64,
    pub points: usize,
}

/// Ordinary least squares `y = intercept + slope x`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let m = x.len();
    if m != y.len() {
        return Err(HarnessError::validation("fit", "length_mismatch", "x and y differ in length"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(HarnessError::runtime("fit", "non_finite", "non-finite value in regression data"));
    }
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 3 {
        return Err(HarnessError::validation("fit", "degenerate", "need at least 3 distinct abscissae"));
    }
    let mf = m as f64;
    let mx = x.iter().sum::<f64>() / mf;
    let my = y.iter().sum::<f64>() / mf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(HarnessError::validation("fit", "degenerate", "singular design matrix"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if syy > 0.0 { 1.0 - rss / syy } else { 1.0 };
    let stderr = if m > 2 { (rss / (mf - 2.0) / sxx).sqrt() } else { f64::NAN };
    Ok(LineFit { slope, intercept, stderr, r2, rss, points: m })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
    pub abscissa: Abscissa,
}

/// Regresses `ln value` on the chosen abscissa.
pub fn fit_rate_slope(ns: &[u64], values: &[f64], abscissa: Abscissa) -> Result<RateFit> {
    if values.iter().any(|v| !(*v > 0.0)) {
        return Err(HarnessError::runtime("fit", "non_positive", "rate fit needs positive values"));
    }
    let x: Vec<f64> = ns.iter().map(|&n| abscissa.x(n)).collect();
    let y: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let f = ols(&x, &y)?;
    Ok(RateFit { slope: f.slope, intercept: f.intercept, stderr: f.stderr, r2: f.r2, abscissa })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayModel {
    /// `ln mass = a + b * regressor`.
    pub a: f64,
    pub b: f64,
    pub rss: f64,
    pub aic: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecayClass {
    Polynomial,
    StretchedExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayComparison {
    /// Regressor `ln n`.
    pub polynomial: DecayModel,
    /// Regressor `n^{stretch}`.
    pub stretched: DecayModel,
    pub stretch: f64,
    pub preferred: DecayClass,
}

fn aic(rss: f64, m: usize, k: usize) -> f64 {
    let mf = m as f64;
    mf * (rss.max(1e-300) / mf).ln() + 2.0 * k as f64
}

/// Compares `ln mass = a + b ln n` with `ln mass = a - B n^{stretch}` by AIC
/// (Gaussian residuals, three parameters each).
pub fn compare_decay(ns: &[u64], log_mass: &[f64], stretch: f64) -> Result<DecayComparison> {
    if ns.len() < 5 {
        return Err(HarnessError::validation("fit", "degenerate", "decay comparison needs at least 5 points"));
    }
    if log_mass.windows(2).all(|w| w[0] == w[1]) {
        return Err(HarnessError::validation("fit", "degenerate", "decay comparison needs varying masses"));
    }
    let xp: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).powf(stretch)).collect();
    let p = ols(&xp, log_mass)?;
    let s = ols(&xs, log_mass)?;
    let m = ns.len();
    let polynomial = DecayModel { a: p.intercept, b: p.slope, rss: p.rss, aic: aic(p.rss, m, 3) };
    let stretched = DecayModel { a: s.intercept, b: s.slope, rss: s.rss, aic: aic(s.rss, m, 3) };
    let preferred = if polynomial.aic <= stretched.aic { DecayClass::Polynomial } else { DecayClass::StretchedExponential };
    Ok(DecayComparison { polynomial, stretched, stretch, preferred })
}
