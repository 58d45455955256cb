//! Run configuration: command-line flags over an optional flat
//! `key = value` file.

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use mpforge::analog_map::Budget;
use mpforge::mp_kernel::{MpConfig, Regime};
use mpforge::Mode;

/// Flags shared by every subcommand. Values stay as text until
/// [`RunConfig::resolve`] so that file and flag values go through one parser.
#[derive(Args, Debug, Clone, Default)]
pub struct Opts {
    /// Flat key=value file; flags take precedence over its entries
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Input file (.bn, .alist or .weights)
    #[arg(long = "in", value_name = "FILE")]
    pub input: Option<String>,
    /// Last stage to run: factor, compute, map, netlist, sim or all
    #[arg(long)]
    pub stage: Option<String>,
    /// exact or mp
    #[arg(long)]
    pub mode: Option<String>,
    /// Normalization current in uA
    #[arg(long)]
    pub gamma: Option<String>,
    /// Force one spline variant (4, 8 or 16)
    #[arg(long)]
    pub splines: Option<String>,
    /// weak or strong
    #[arg(long)]
    pub regime: Option<String>,
    /// Area budget in cell area units
    #[arg(long)]
    pub budget_area: Option<String>,
    /// Largest tolerated grid error per cell
    #[arg(long)]
    pub target_error: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Artifact directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
    /// Comma-separated Eb/N0 points in dB
    #[arg(long, allow_hyphen_values = true)]
    pub snr: Option<String>,
    /// Frames per SNR point
    #[arg(long)]
    pub frames: Option<String>,
    /// Protograph lifting factor
    #[arg(long)]
    pub lift: Option<String>,
    /// Query variable
    #[arg(long)]
    pub query: Option<String>,
    /// Comma-separated evidence, e.g. V=1,W=0
    #[arg(long)]
    pub evidence: Option<String>,
    /// Labeled CSV for ann (last column is the class)
    #[arg(long, value_name = "FILE")]
    pub data: Option<String>,
}

impl Opts {
    fn slot(&mut self, key: &str) -> Option<&mut Option<String>> {
        Some(match key {
            "in" => &mut self.input,
            "stage" => &mut self.stage,
            "mode" => &mut self.mode,
            "gamma" => &mut self.gamma,
            "splines" => &mut self.splines,
            "regime" => &mut self.regime,
            "budget-area" => &mut self.budget_area,
            "target-error" => &mut self.target_error,
            "seed" => &mut self.seed,
            "out" => &mut self.out,
            "snr" => &mut self.snr,
            "frames" => &mut self.frames,
            "lift" => &mut self.lift,
            "query" => &mut self.query,
            "evidence" => &mut self.evidence,
            "data" => &mut self.data,
            _ => return None,
        })
    }

    /// Fills unset flags from `text`. Blank lines and `#` comments are
    /// skipped; unknown or repeated keys are errors.
    pub fn merge_file(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let at = || format!("{origin}:{}", i + 1);
            let (key, value) = line.split_once('=').ok_or_else(|| anyhow!("{}: expected key = value", at()))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                bail!("{}: duplicate key `{key}`", at());
            }
            let slot = self.slot(key).ok_or_else(|| anyhow!("{}: unknown key `{key}`", at()))?;
            if slot.is_none() {
                *slot = Some(value.trim().to_string());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Factor,
    Compute,
    Map,
    Netlist,
    Sim,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Factor, Stage::Compute, Stage::Map, Stage::Netlist, Stage::Sim];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Factor => "factor",
            Stage::Compute => "compute",
            Stage::Map => "map",
            Stage::Netlist => "netlist",
            Stage::Sim => "sim",
        }
    }
}

impl FromStr for Stage {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Stage::Sim),
            _ => Stage::ALL
                .into_iter()
                .find(|st| st.name() == s)
                .ok_or_else(|| anyhow!("unknown stage `{s}` (factor, compute, map, netlist, sim, all)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub stage: Stage,
    pub mode: Mode,
    pub mp: MpConfig,
    pub budget: Budget,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub snr: Vec<f64>,
    pub frames: usize,
    pub lift: usize,
    pub query: Option<String>,
    pub evidence: Vec<(String, u8)>,
    pub data: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            stage: Stage::Sim,
            mode: Mode::Exact,
            mp: MpConfig::default(),
            budget: Budget::default(),
            seed: 1,
            out: None,
            snr: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            frames: 1000,
            lift: 1,
            query: None,
            evidence: Vec::new(),
            data: None,
        }
    }
}

fn parse<T: FromStr>(flag: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse().map_err(|e| anyhow!("invalid --{flag} `{v}`: {e}"))
}

fn parse_evidence(v: &str) -> Result<Vec<(String, u8)>> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|item| {
            let (name, val) = item.split_once('=').ok_or_else(|| anyhow!("invalid --evidence `{item}`: expected NAME=0|1"))?;
            match val.trim() {
                "0" => Ok((name.trim().to_string(), 0)),
                "1" => Ok((name.trim().to_string(), 1)),
                other => bail!("invalid --evidence `{item}`: value `{other}` is not 0 or 1"),
            }
        })
        .collect()
}

impl RunConfig {
    /// Reads the config file named by `--config`, then parses every value.
    pub fn resolve(mut opts: Opts) -> Result<Self> {
        if let Some(path) = opts.config.clone() {
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            opts.merge_file(&text, &path.display().to_string())?;
        }
        let mut c = RunConfig::default();
        c.input = opts.input.map(PathBuf::from);
        if let Some(v) = &opts.stage {
            c.stage = v.parse()?;
        }
        if let Some(v) = &opts.mode {
            c.mode = parse("mode", v)?;
        }
        if let Some(v) = &opts.gamma {
            c.mp.gamma = parse("gamma", v)?;
        }
        if let Some(v) = &opts.splines {
            let s: u32 = parse("splines", v)?;
            c.mp.spline_count = s;
            c.budget.splines = Some(s);
        }
        if let Some(v) = &opts.regime {
            let r: Regime = parse("regime", v)?;
            c.mp.regime = r;
            c.budget.regime = r;
        }
        if let Some(v) = &opts.budget_area {
            c.budget.max_area_units = parse("budget-area", v)?;
        }
        if let Some(v) = &opts.target_error {
            c.budget.target_error = parse("target-error", v)?;
        }
        if let Some(v) = &opts.seed {
            c.seed = parse("seed", v)?;
        }
        c.out = opts.out.map(PathBuf::from);
        if let Some(v) = &opts.snr {
            c.snr = v.split(',').map(|s| parse("snr", s.trim())).collect::<Result<_>>()?;
        }
        if let Some(v) = &opts.frames {
            c.frames = parse("frames", v)?;
        }
        if let Some(v) = &opts.lift {
            c.lift = parse("lift", v)?;
            if c.lift == 0 {
                bail!("invalid --lift `0`: must be >= 1");
            }
        }
        c.query = opts.query;
        if let Some(v) = &opts.evidence {
            c.evidence = parse_evidence(v)?;
        }
        c.data = opts.data.map(PathBuf::from);
        c.mp.validate()?;
        c.budget.validate()?;
        Ok(c)
    }
}
