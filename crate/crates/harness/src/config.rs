//! Experiment configuration (TOML or JSON).
//!
//! Only `experiment` and `n_grid` are required; everything else has a default.
//! Unknown fields are rejected and every error names the offending field path.

use std::path::{Path, PathBuf};

use postconc_core::blockslab::BlockPrior;
use postconc_core::inference::ModelPrior;
use postconc_core::rng::{open01, task_rng};
use postconc_core::seqmodel::{make_holder_extremal, HoelderBall, SequenceParam, SignPattern};
use postconc_core::spikeslab::{SpikeSlabPrior, Variant};
use postconc_core::{Loss, SlabDensity};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, HarnessError, Result};
use crate::fit::Abscissa;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Rates,
    Lemma1,
    Coverage,
    Sieve,
    Envelope,
    BayesRisk,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Rates => "rates",
            ExperimentKind::Lemma1 => "lemma1",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::Sieve => "sieve",
            ExperimentKind::Envelope => "envelope",
            ExperimentKind::BayesRisk => "bayes-risk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    #[default]
    SpikeSlab,
    Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum VariantSpec {
    #[default]
    Standard,
    Prop4,
}

/// `{"kind": "uniform", "L0": 2.0}` and friends. A missing `L0` means `L + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SlabSpec {
    Uniform {
        #[serde(rename = "L0", default)]
        l0: Option<f64>,
    },
    Gaussian {
        sigma: f64,
        #[serde(rename = "L0", default)]
        l0: Option<f64>,
    },
    Laplace {
        scale: f64,
        #[serde(rename = "L0", default)]
        l0: Option<f64>,
    },
}

impl Default for SlabSpec {
    fn default() -> Self {
        SlabSpec::Uniform { l0: None }
    }
}

impl SlabSpec {
    pub fn build(&self, signal_l: f64) -> Result<SlabDensity> {
        let r = match *self {
            SlabSpec::Uniform { l0 } => SlabDensity::uniform(l0.unwrap_or(signal_l + 1.0)),
            SlabSpec::Gaussian { sigma, l0 } => SlabDensity::gaussian(sigma, l0.unwrap_or(signal_l + 1.0)),
            SlabSpec::Laplace { scale, l0 } => SlabDensity::laplace(scale, l0.unwrap_or(signal_l + 1.0)),
        };
        r.map_err(|e| invalid("config", e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub slab: SlabSpec,
    pub tau: f64,
    pub variant: VariantSpec,
    pub c: Option<f64>,
    #[serde(rename = "G")]
    pub g: Option<f64>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { kind: PriorKind::SpikeSlab, slab: SlabSpec::default(), tau: 1.0, variant: VariantSpec::Standard, c: None, g: None }
    }
}

impl PriorSpec {
    pub fn build(&self, signal_l: f64) -> Result<ModelPrior> {
        let slab = self.slab.build(signal_l)?;
        Ok(match self.kind {
            PriorKind::SpikeSlab => {
                let v = match self.variant {
                    VariantSpec::Standard => Variant::Standard,
                    VariantSpec::Prop4 => Variant::Prop4,
                };
                ModelPrior::SpikeSlab(SpikeSlabPrior::new(self.tau, slab, v).map_err(|e| invalid("config", e))?)
            }
            PriorKind::Block => ModelPrior::Block(BlockPrior::new(slab, self.c, self.g).map_err(|e| invalid("config", e))?),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SignalKind {
    /// Every coefficient at the ball's bound.
    #[default]
    Extremal,
    /// Uniform draws inside the per-level bounds.
    Random,
    /// One coefficient per level at the bound.
    Sparse,
    Zero,
    Custom,
}

const TAG_SIGNAL: u64 = 0x7369_676e_616c;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SignSpec {
    Plus,
    #[default]
    Alternating,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SignalSpec {
    pub kind: SignalKind,
    /// Hölder radius `L`.
    #[serde(rename = "L")]
    pub l: f64,
    pub signs: SignSpec,
    /// Highest level of the signal; defaults to `J_n` of the largest `n`.
    pub levels: Option<u32>,
    pub custom: Option<SequenceParam>,
}

impl Default for SignalSpec {
    fn default() -> Self {
        SignalSpec { kind: SignalKind::Extremal, l: 1.0, signs: SignSpec::Alternating, levels: None, custom: None }
    }
}

impl SignalSpec {
    pub fn build(&self, beta: f64, j_max: u32, seed: u64) -> Result<SequenceParam> {
        let ball = HoelderBall::new(beta, self.l).map_err(|e| invalid("config", e))?;
        let j_max = self.levels.unwrap_or(j_max);
        let signs = match self.signs {
            SignSpec::Plus => SignPattern::AllPlus,
            SignSpec::Alternating => SignPattern::Alternating,
            SignSpec::Random => SignPattern::Random(seed),
        };
        Ok(match self.kind {
            SignalKind::Extremal => make_holder_extremal(&ball, j_max, signs),
            SignalKind::Random => {
                let mut rng = task_rng(seed, TAG_SIGNAL, 0, 0);
                let mut t = SequenceParam::zeros(j_max);
                for j in 0..=j_max {
                    let b = ball.bound(j);
                    for v in t.level_mut(j) {
                        *v = b * (2.0 * open01(&mut rng) - 1.0);
                    }
                }
                t
            }
            SignalKind::Sparse => {
                let full = make_holder_extremal(&ball, j_max, signs);
                let mut t = SequenceParam::zeros(j_max);
                for j in 0..=j_max {
                    t.set(j, 0, full.get(j, 0));
                }
                t
            }
            SignalKind::Zero => SequenceParam::zeros(j_max),
            SignalKind::Custom => self
                .custom
                .clone()
                .ok_or_else(|| HarnessError::Config { code: "missing_field", path: "signal.custom".into(), msg: "required for kind = custom".into() })?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CoverageModeSpec {
    #[default]
    PriorDraw,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSpec {
    pub alpha: f64,
    pub mode: CoverageModeSpec,
}

impl Default for CoverageSpec {
    fn default() -> Self {
        CoverageSpec { alpha: 0.1, mode: CoverageModeSpec::PriorDraw }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Lemma1Spec {
    pub gamma_lo: f64,
    pub gamma_hi: f64,
}

impl Default for Lemma1Spec {
    fn default() -> Self {
        Lemma1Spec { gamma_lo: 0.05, gamma_hi: 8.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RadiusSpec {
    Default,
    #[default]
    Tight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SieveSpec {
    pub phi0: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
    pub levels: u32,
    #[serde(rename = "L")]
    pub l: f64,
    /// Partition used for the replicate checks; both are always reported.
    pub radius: RadiusSpec,
}

impl Default for SieveSpec {
    fn default() -> Self {
        SieveSpec { phi0: 33.0, k0: 1.0 / 16.0, levels: 2, l: 1.0, radius: RadiusSpec::Tight }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvelopeSpec {
    /// Grid of `K` for `exp(-3 K n Omega^2)`.
    pub k_grid: Vec<f64>,
}

impl Default for EnvelopeSpec {
    fn default() -> Self {
        EnvelopeSpec { k_grid: vec![0.25, 0.5, 1.0, 2.0] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Jsonl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub format: Format,
    /// Also write gnuplot-ready `.dat` summaries.
    pub dat: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: PathBuf::from("out"), format: Format::Csv, dat: false }
    }
}

fn d_betas() -> Vec<f64> {
    vec![1.0]
}
fn d_loss() -> Loss {
    Loss::Linf
}
fn d_draws() -> usize {
    2000
}
fn d_reps() -> u64 {
    50
}
fn d_m() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub n_grid: Vec<u64>,
    #[serde(default = "d_betas")]
    pub beta_grid: Vec<f64>,
    #[serde(default)]
    pub prior: PriorSpec,
    #[serde(default)]
    pub signal: SignalSpec,
    #[serde(default = "d_loss")]
    pub loss: Loss,
    /// Defaults to `log-n-over-log-n` for the spike-and-slab prior and `log-n` otherwise.
    #[serde(default)]
    pub abscissa: Option<Abscissa>,
    /// Rate multiplier `M`.
    #[serde(default = "d_m", rename = "M")]
    pub m: f64,
    #[serde(default = "d_draws")]
    pub draws: usize,
    #[serde(default = "d_reps")]
    pub replicates: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub coverage: CoverageSpec,
    #[serde(default)]
    pub lemma1: Lemma1Spec,
    #[serde(default)]
    pub sieve: SieveSpec,
    #[serde(default)]
    pub envelope: EnvelopeSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    /// Defaults for `kind` on the standard grid `2^10..=2^16`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let n_grid = match kind {
            ExperimentKind::Sieve => (6..=10).map(|e| 1u64 << e).collect(),
            _ => (10..=16).map(|e| 1u64 << e).collect(),
        };
        let mut cfg = ExperimentConfig {
            experiment: kind,
            n_grid,
            beta_grid: d_betas(),
            prior: PriorSpec::default(),
            signal: SignalSpec::default(),
            loss: d_loss(),
            abscissa: None,
            m: d_m(),
            draws: d_draws(),
            replicates: d_reps(),
            seed: 0,
            coverage: CoverageSpec::default(),
            lemma1: Lemma1Spec::default(),
            sieve: SieveSpec::default(),
            envelope: EnvelopeSpec::default(),
            output: OutputSpec::default(),
        };
        match kind {
            ExperimentKind::Sieve => cfg.replicates = 500,
            ExperimentKind::Coverage => {
                cfg.n_grid = vec![1 << 12];
                cfg.replicates = 200;
            }
            ExperimentKind::BayesRisk => cfg.prior.variant = VariantSpec::Prop4,
            _ => {}
        }
        cfg
    }

    pub fn abscissa(&self) -> Abscissa {
        self.abscissa.unwrap_or(match self.prior.kind {
            PriorKind::SpikeSlab => Abscissa::LogNOverLogN,
            PriorKind::Block => Abscissa::LogN,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |path: &str, msg: &str| Err(HarnessError::Config { code: "invalid_value", path: path.into(), msg: msg.into() });
        if self.n_grid.is_empty() {
            return bad("n_grid", "must be nonempty");
        }
        if self.n_grid.iter().any(|&n| n < 8) {
            return bad("n_grid", "every n must be at least 8");
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("n_grid", "must be strictly increasing");
        }
        if self.beta_grid.is_empty() || self.beta_grid.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return bad("beta_grid", "must be nonempty with positive entries");
        }
        if self.replicates < 1 {
            return bad("replicates", "must be at least 1");
        }
        if self.draws < 1 {
            return bad("draws", "must be at least 1");
        }
        if !(self.m > 0.0 && self.m.is_finite()) {
            return bad("M", "must be positive");
        }
        if !(self.signal.l > 0.0 && self.signal.l.is_finite()) {
            return bad("signal.L", "must be positive");
        }
        if !(self.coverage.alpha > 0.0 && self.coverage.alpha < 1.0) {
            return bad("coverage.alpha", "must lie in (0, 1)");
        }
        if !(self.lemma1.gamma_lo > 0.0 && self.lemma1.gamma_lo < self.lemma1.gamma_hi) {
            return bad("lemma1", "need 0 < gamma_lo < gamma_hi");
        }
        if self.envelope.k_grid.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
            return bad("envelope.k_grid", "entries must be positive");
        }
        if self.experiment == ExperimentKind::Lemma1 && self.prior.kind != PriorKind::SpikeSlab {
            return bad("prior.kind", "lemma1 needs the spike-slab prior");
        }
        self.prior.build(self.signal.l).map(|_| ())
    }
}

/// Parses TOML (`.toml`) or JSON (anything else) with field-path diagnostics.
pub fn parse_config(text: &str, toml_syntax: bool) -> Result<ExperimentConfig> {
    let cfg: ExperimentConfig = if toml_syntax {
        let de = toml::Deserializer::new(text);
        serde_path_to_error::deserialize(de).map_err(|e| path_error(e.path().to_string(), e.inner().message().to_string()))?
    } else {
        let mut de = serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(&mut de).map_err(|e| path_error(e.path().to_string(), e.inner().to_string()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn path_error(path: String, msg: String) -> HarnessError {
    let code = if msg.contains("missing field") {
        "missing_field"
    } else if msg.contains("unknown field") {
        "unknown_field"
    } else {
        "parse"
    };
    HarnessError::Config { code, path: if path.is_empty() { ".".into() } else { path }, msg }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io { code: "read", path: path.to_path_buf(), source })?;
    parse_config(&text, path.extension().is_some_and(|e| e == "toml"))
}
