use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::Args;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use tvnet::rates::RateInputs;
use tvnet::KernelFamily;

/// A numeric setting that can also be left to a data-driven rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Auto {
    Auto,
    Value(f64),
}

impl FromStr for Auto {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("auto") {
            return Ok(Auto::Auto);
        }
        s.parse::<f64>()
            .map(Auto::Value)
            .map_err(|_| format!("expected a number or \"auto\", got {s:?}"))
    }
}

impl fmt::Display for Auto {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Auto::Auto => f.write_str("auto"),
            Auto::Value(v) => write!(f, "{v}"),
        }
    }
}

/// Penalty level, or `"stability"` to pick it per time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Lambda {
    Stability,
    Value(f64),
}

impl FromStr for Lambda {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("stability") {
            return Ok(Lambda::Stability);
        }
        s.parse::<f64>()
            .map(Lambda::Value)
            .map_err(|_| format!("expected a number or \"stability\", got {s:?}"))
    }
}

impl fmt::Display for Lambda {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lambda::Stability => f.write_str("stability"),
            Lambda::Value(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrWord {
    Num(f64),
    Word(String),
}

macro_rules! num_or_word_serde {
    ($ty:ty) => {
        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                match self {
                    Self::Value(v) => NumOrWord::Num(*v),
                    other => NumOrWord::Word(other.to_string()),
                }
                .serialize(s)
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                match NumOrWord::deserialize(d)? {
                    NumOrWord::Num(v) => Ok(Self::Value(v)),
                    NumOrWord::Word(w) => w.parse().map_err(serde::de::Error::custom),
                }
            }
        }
    };
}

num_or_word_serde!(Auto);
num_or_word_serde!(Lambda);

/// Settings for an inline simulated panel; the seed comes from the config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSettings {
    pub n: usize,
    pub p: usize,
    pub delta0: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        Self {
            n: 1000,
            p: 50,
            delta0: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Input {
    Csv(PathBuf),
    Simulated(SimSettings),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: Input,
    /// Change-point bandwidth; `auto` is `n^{-1/5}`.
    pub h: Auto,
    /// Detection threshold; `auto` is the ratio rule.
    pub nu: Auto,
    pub exclusion_factor: f64,
    /// Smoothing bandwidth.
    pub b: f64,
    pub kernel: KernelFamily,
    pub lambda: Lambda,
    /// Candidates for `lambda = "stability"`.
    pub lambda_grid: Vec<f64>,
    pub instability_cap: f64,
    pub n_subsamples: usize,
    pub subsample_fraction: f64,
    /// Support threshold for the exported graphs.
    pub u: f64,
    pub grid: Vec<f64>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Existing change-point report for `estimate`; detection runs inline otherwise.
    pub report: Option<PathBuf>,
    pub replications: usize,
    pub u_grid: Vec<f64>,
    pub include_diagonal: bool,
    pub plots: bool,
    pub rates: RateInputs,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            input: Input::Simulated(SimSettings::default()),
            h: Auto::Auto,
            nu: Auto::Auto,
            exclusion_factor: 2.0,
            b: 0.2,
            kernel: KernelFamily::Uniform,
            lambda: Lambda::Value(0.06),
            lambda_grid: vec![0.01, 0.02, 0.04, 0.06, 0.08, 0.1, 0.15, 0.2],
            instability_cap: 0.05,
            n_subsamples: 20,
            subsample_fraction: 0.8,
            u: 0.01,
            grid: vec![0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            seed: 0,
            output_dir: PathBuf::from("tvnet-out"),
            report: None,
            replications: 100,
            u_grid: (0..=100).map(|k| k as f64 / 200.0).collect(),
            include_diagonal: true,
            plots: true,
            rates: RateInputs::default(),
        }
    }
}

/// Command-line overrides; each flag replaces the matching config field.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config file; flags below take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Panel CSV (rows are observations, no header).
    #[arg(long, conflicts_with_all = ["n", "p", "delta0"])]
    pub input: Option<PathBuf>,
    /// Simulate a panel inline with this many observations.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub delta0: Option<f64>,
    /// Change-point bandwidth, or "auto".
    #[arg(long)]
    pub h: Option<Auto>,
    /// Detection threshold, or "auto".
    #[arg(long)]
    pub nu: Option<Auto>,
    #[arg(long)]
    pub exclusion_factor: Option<f64>,
    /// Smoothing bandwidth.
    #[arg(long)]
    pub b: Option<f64>,
    /// uniform, triangular or epanechnikov.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Penalty, or "stability".
    #[arg(long)]
    pub lambda: Option<Lambda>,
    /// Comma-separated candidates for stability selection.
    #[arg(long, value_delimiter = ',')]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub u: Option<f64>,
    /// Comma-separated evaluation times.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for all outputs.
    #[arg(long, short = 'o')]
    pub output_dir: Option<PathBuf>,
    /// Change-point report JSON to use instead of running detection.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Comma-separated support thresholds for ROC sweeps.
    #[arg(long, value_delimiter = ',')]
    pub u_grid: Option<Vec<f64>>,
    /// Score only off-diagonal pairs in sensitivity and specificity.
    #[arg(long)]
    pub off_diagonal: bool,
    /// Skip SVG output.
    #[arg(long)]
    pub no_plots: bool,
}

impl Overrides {
    pub fn resolve(&self) -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(p) = &self.input {
            cfg.input = Input::Csv(p.clone());
        }
        if self.n.is_some() || self.p.is_some() || self.delta0.is_some() {
            let mut sim = match cfg.input {
                Input::Simulated(s) => s,
                Input::Csv(_) => SimSettings::default(),
            };
            sim.n = self.n.unwrap_or(sim.n);
            sim.p = self.p.unwrap_or(sim.p);
            sim.delta0 = self.delta0.unwrap_or(sim.delta0);
            cfg.input = Input::Simulated(sim);
        }
        macro_rules! take {
            ($($f:ident),*) => { $( if let Some(v) = &self.$f { cfg.$f = v.clone(); } )* };
        }
        take!(
            h,
            nu,
            exclusion_factor,
            b,
            lambda,
            lambda_grid,
            u,
            grid,
            seed,
            output_dir,
            replications,
            u_grid
        );
        if let Some(k) = &self.kernel {
            cfg.kernel = k.parse()?;
        }
        if let Some(r) = &self.report {
            cfg.report = Some(r.clone());
        }
        if self.off_diagonal {
            cfg.include_diagonal = false;
        }
        if self.no_plots {
            cfg.plots = false;
        }
        Ok(cfg)
    }
}

pub fn load_config(path: &Path) -> anyhow::Result<PipelineConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

impl PipelineConfig {
    /// `h` for a panel of length `n`.
    pub fn resolved_h(&self, n: usize) -> f64 {
        match self.h {
            Auto::Auto => (n as f64).powf(-0.2),
            Auto::Value(h) => h,
        }
    }

    /// Checks that depend on the panel length.
    pub fn validate(&self, n: usize) -> anyhow::Result<()> {
        let lo = 1.0 / n as f64;
        let h = self.resolved_h(n);
        for (name, v) in [("h", h), ("b", self.b)] {
            if !(v > lo && v < 0.5) {
                bail!("{name} = {v} must lie in (1/n, 1/2) = ({lo}, 0.5)");
            }
        }
        if let Some(t) = self
            .grid
            .iter()
            .find(|&&t| t < self.b - 1e-12 || t > 1.0 - self.b + 1e-12)
        {
            bail!(
                "grid point {t} outside [b, 1 - b] = [{}, {}]",
                self.b,
                1.0 - self.b
            );
        }
        if let Lambda::Value(l) = self.lambda {
            if !(l >= 0.0) {
                bail!("lambda must be nonnegative, got {l}");
            }
        }
        if !(self.u >= 0.0) {
            bail!("u must be nonnegative, got {}", self.u);
        }
        if self.exclusion_factor <= 0.0 {
            bail!("exclusion_factor must be positive");
        }
        Ok(())
    }
}
