use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use crate::mp_kernel::{self, LogMap, MpConfig, ProbabilityCurrent, Regime};
use crate::{Error, Mode, Result};

/// Environment variable naming a library file to load instead of the
/// built-in one.
pub const CELL_LIB_ENV: &str = "MPFORGE_CELL_LIB";

const BUILTIN: &str = include_str!("../../data/cells.lib");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellKind {
    SoftAnd,
    SoftOr,
    Inv,
    KclSum,
    MpNorm,
    MpMac,
    ReluCell,
    CurrentSrc,
}

impl CellKind {
    pub const ALL: [CellKind; 8] = [
        CellKind::SoftAnd,
        CellKind::SoftOr,
        CellKind::Inv,
        CellKind::KclSum,
        CellKind::MpNorm,
        CellKind::MpMac,
        CellKind::ReluCell,
        CellKind::CurrentSrc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CellKind::SoftAnd => "SOFT_AND",
            CellKind::SoftOr => "SOFT_OR",
            CellKind::Inv => "INV",
            CellKind::KclSum => "KCL_SUM",
            CellKind::MpNorm => "MP_NORM",
            CellKind::MpMac => "MP_MAC",
            CellKind::ReluCell => "RELU_CELL",
            CellKind::CurrentSrc => "CURRENT_SRC",
        }
    }

    /// Input count, or `None` for variable-arity cells.
    pub fn fixed_arity(self) -> Option<usize> {
        match self {
            CellKind::SoftAnd | CellKind::SoftOr | CellKind::MpNorm | CellKind::CurrentSrc => Some(2),
            CellKind::Inv | CellKind::ReluCell => Some(1),
            CellKind::KclSum | CellKind::MpMac => None,
        }
    }

    /// Whether ports carry dual-rail probability currents (as opposed to raw
    /// signed currents).
    pub fn dual_rail(self) -> bool {
        !matches!(self, CellKind::MpMac | CellKind::ReluCell | CellKind::KclSum)
    }
}

impl fmt::Display for CellKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CellKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Library(format!("unknown cell `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PortDir {
    In,
    Out,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Port {
    pub name: String,
    pub dir: PortDir,
    pub dual_rail: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub area_units: f64,
    /// Indexed by regime: weak, strong.
    pub power_nw: [f64; 2],
    pub delay_us: [f64; 2],
}

fn regime_slot(r: Regime) -> usize {
    match r {
        Regime::WeakInversion => 0,
        Regime::StrongInversion => 1,
    }
}

impl Metrics {
    pub fn power(&self, r: Regime) -> f64 {
        self.power_nw[regime_slot(r)]
    }

    pub fn delay(&self, r: Regime) -> f64 {
        self.delay_us[regime_slot(r)]
    }
}

/// One library variant of a cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub kind: CellKind,
    /// Log-map resolution; 0 for cells without one.
    pub splines: u32,
    /// Declared ports; `$IN` stands for the inputs of variable-arity cells.
    pub ports: Vec<Port>,
    pub metrics: Metrics,
    pub template: String,
}

impl CellSpec {
    /// Worst deviation of the MP behavior from the exact one over the
    /// variant's reference grid.
    pub fn grid_error(&self) -> f64 {
        variant_error(self.kind, self.splines)
    }
}

fn grid() -> impl Iterator<Item = f64> + Clone {
    (1..=19).map(|k| k as f64 * 0.05)
}

fn compute_error(kind: CellKind, splines: u32) -> f64 {
    let cfg = MpConfig::default().with_splines(splines);
    let lm = LogMap::new(splines);
    match kind {
        CellKind::SoftAnd => mp_kernel::soft_and_grid_error(&cfg).expect("valid grid"),
        CellKind::SoftOr => {
            let mut worst: f64 = 0.0;
            for a in grid() {
                for b in grid() {
                    let pa = ProbabilityCurrent::from_probability(a, 1.0).expect("grid");
                    let pb = ProbabilityCurrent::from_probability(b, 1.0).expect("grid");
                    let mp = mp_kernel::soft_or(pa, pb, &cfg, Mode::Mp).expect("grid").i1;
                    worst = worst.max((mp - (1.0 - (1.0 - a) * (1.0 - b))).abs());
                }
            }
            worst
        }
        CellKind::MpNorm => {
            let mut worst: f64 = 0.0;
            for a in grid() {
                for b in grid().filter(|&b| b >= a) {
                    let mp = mp_kernel::mp_ratio(a, b, &cfg, Mode::Mp).expect("grid");
                    worst = worst.max((mp - a / b).abs());
                }
            }
            worst
        }
        CellKind::MpMac => {
            let mut worst: f64 = 0.0;
            for a in grid() {
                for b in grid() {
                    let mp = lm.exp_any(lm.log_any(a) + lm.log_any(b));
                    worst = worst.max((mp - a * b).abs());
                }
            }
            worst
        }
        _ => 0.0,
    }
}

/// Cached [`CellSpec::grid_error`] by kind and spline count.
pub fn variant_error(kind: CellKind, splines: u32) -> f64 {
    static CACHE: OnceLock<std::sync::Mutex<BTreeMap<(CellKind, u32), f64>>> = OnceLock::new();
    if splines == 0 {
        return 0.0;
    }
    let cache = CACHE.get_or_init(Default::default);
    if let Some(&e) = cache.lock().expect("cache").get(&(kind, splines)) {
        return e;
    }
    let e = compute_error(kind, splines);
    cache.lock().expect("cache").insert((kind, splines), e);
    e
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellLibrary {
    pub version: String,
    /// Variants sorted by spline count.
    pub cells: BTreeMap<CellKind, Vec<CellSpec>>,
}

impl CellLibrary {
    /// The library compiled into the crate.
    pub fn builtin() -> Self {
        parse_cell_library(BUILTIN).expect("built-in library parses")
    }

    /// `$MPFORGE_CELL_LIB` if set, else the built-in library.
    pub fn load() -> Result<Self> {
        match std::env::var_os(CELL_LIB_ENV) {
            Some(path) => {
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| Error::Library(format!("{}: {e}", path.to_string_lossy())))?;
                parse_cell_library(&text)
            }
            None => Ok(Self::builtin()),
        }
    }

    pub fn variants(&self, kind: CellKind) -> &[CellSpec] {
        self.cells.get(&kind).map_or(&[], Vec::as_slice)
    }

    pub fn variant(&self, kind: CellKind, splines: u32) -> Option<&CellSpec> {
        self.variants(kind).iter().find(|c| c.splines == splines)
    }
}

/// Selection constraints for the mapper.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_area_units: f64,
    pub regime: Regime,
    /// Largest tolerated grid error per cell.
    pub target_error: f64,
    /// Forces one spline variant for every cell that has one.
    pub splines: Option<u32>,
}

/// Default target error; the 16-spline variants are the cheapest that meet
/// it.
pub const DEFAULT_TARGET_ERROR: f64 = 0.04;

impl Default for Budget {
    fn default() -> Self {
        Budget {
            max_area_units: f64::INFINITY,
            regime: Regime::WeakInversion,
            target_error: DEFAULT_TARGET_ERROR,
            splines: None,
        }
    }
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_area_units > 0.0) {
            return Err(Error::Invalid(format!("area budget must be > 0, got {}", self.max_area_units)));
        }
        if !(self.target_error > 0.0) || !self.target_error.is_finite() {
            return Err(Error::Invalid(format!("target error must be > 0, got {}", self.target_error)));
        }
        Ok(())
    }
}

/// Cheapest variant of `kind` whose grid error is within the budget.
pub fn select_cell<'a>(kind: CellKind, budget: &Budget, lib: &'a CellLibrary) -> Result<&'a CellSpec> {
    let variants = lib.variants(kind);
    if variants.is_empty() {
        return Err(Error::Library(format!("no variant of {kind}")));
    }
    if let Some(k) = budget.splines {
        if variants.iter().any(|c| c.splines != 0) {
            return lib
                .variant(kind, k)
                .ok_or_else(|| Error::Library(format!("{kind} has no {k}-spline variant")));
        }
    }
    let chosen = variants
        .iter()
        .filter(|c| c.grid_error() <= budget.target_error)
        .min_by(|a, b| {
            a.metrics
                .area_units
                .total_cmp(&b.metrics.area_units)
                .then(a.splines.cmp(&b.splines))
        });
    chosen.ok_or_else(|| {
        let best = variants
            .iter()
            .min_by(|a, b| a.grid_error().total_cmp(&b.grid_error()))
            .expect("non-empty");
        Error::Infeasible {
            kind: kind.to_string(),
            target: budget.target_error,
            best_error: best.grid_error(),
            best_splines: best.splines,
        }
    })
}

fn lerr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        what: "cell library",
        line,
        col: 1,
        msg: msg.into(),
    }
}

fn parse_header(line: usize, toks: &[&str]) -> Result<(CellKind, u32, Metrics)> {
    let shape = [
        "cell", "", "splines", "", "area", "", "power", "weak", "", "strong", "", "delay", "weak", "", "strong", "",
    ];
    if toks.len() != shape.len() || shape.iter().zip(toks).any(|(s, t)| !s.is_empty() && s != t) {
        return Err(lerr(
            line,
            "expected `cell <name> splines <k> area <a> power weak <p> strong <p> delay weak <d> strong <d>`",
        ));
    }
    let num = |i: usize| -> Result<f64> {
        let v: f64 = toks[i].parse().map_err(|_| lerr(line, format!("bad number `{}`", toks[i])))?;
        if !(v >= 0.0 && v.is_finite()) {
            return Err(lerr(line, format!("metric `{}` must be non-negative", toks[i])));
        }
        Ok(v)
    };
    let kind: CellKind = toks[1].parse().map_err(|e: Error| lerr(line, e.to_string()))?;
    let splines: u32 = toks[3].parse().map_err(|_| lerr(line, format!("bad spline count `{}`", toks[3])))?;
    Ok((
        kind,
        splines,
        Metrics {
            area_units: num(5)?,
            power_nw: [num(8)?, num(10)?],
            delay_us: [num(13)?, num(15)?],
        },
    ))
}

fn template_ports(kind: CellKind, line: usize, subckt: &str) -> Result<Vec<Port>> {
    let toks: Vec<&str> = subckt.split_whitespace().collect();
    if toks.len() < 3 || !toks[0].eq_ignore_ascii_case(".subckt") || toks[1] != "$NAME" {
        return Err(lerr(line, "template must start with `.SUBCKT $NAME <ports>`"));
    }
    let names: Vec<&str> = toks[2..].iter().copied().filter(|t| *t != "$PARAMS").collect();
    let mut seen = names.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != names.len() {
        return Err(lerr(line, format!("{kind}: repeated port")));
    }
    let n_in = names.len() - 1;
    match kind.fixed_arity() {
        Some(a) if a != n_in || names.contains(&"$IN") => {
            return Err(lerr(line, format!("{kind} needs {a} inputs, template declares {n_in}")));
        }
        None if names[..n_in] != ["$IN"] => {
            return Err(lerr(line, format!("{kind} template must declare `$IN y`")));
        }
        _ => {}
    }
    Ok(names
        .iter()
        .enumerate()
        .map(|(i, n)| Port {
            name: n.to_string(),
            dir: if i == n_in { PortDir::Out } else { PortDir::In },
            dual_rail: kind.dual_rail(),
        })
        .collect())
}

/// Parses the library text format: a `version` line, then per variant a
/// `cell` header followed by a `.SUBCKT` ... `.ENDS` template.
pub fn parse_cell_library(text: &str) -> Result<CellLibrary> {
    let mut version = None;
    let mut cells: BTreeMap<CellKind, Vec<CellSpec>> = BTreeMap::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    while let Some((ln, raw)) = lines.next() {
        let toks: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
        match toks.first().copied() {
            None => continue,
            Some("version") if toks.len() == 2 => version = Some(toks[1].to_string()),
            Some("cell") => {
                let (kind, splines, metrics) = parse_header(ln, &toks)?;
                let (sub_ln, subckt) = lines
                    .by_ref()
                    .find(|(_, l)| !l.trim().is_empty())
                    .ok_or_else(|| lerr(ln, format!("{kind}: missing template")))?;
                let ports = template_ports(kind, sub_ln, subckt)?;
                let mut template = format!("{}\n", subckt.trim());
                let mut closed = false;
                for (_, l) in lines.by_ref() {
                    template.push_str(l.trim_end());
                    template.push('\n');
                    if l.trim().eq_ignore_ascii_case(".ends") {
                        closed = true;
                        break;
                    }
                }
                if !closed {
                    return Err(lerr(sub_ln, format!("{kind}: template lacks .ENDS")));
                }
                let list = cells.entry(kind).or_default();
                if list.iter().any(|c| c.splines == splines) {
                    return Err(lerr(ln, format!("duplicate {kind} variant with {splines} splines")));
                }
                list.push(CellSpec {
                    kind,
                    splines,
                    ports,
                    metrics,
                    template,
                });
                list.sort_by_key(|c| c.splines);
            }
            Some(other) => return Err(lerr(ln, format!("unexpected `{other}`"))),
        }
    }
    let version = version.ok_or_else(|| lerr(1, "missing version line"))?;
    if let Some(k) = CellKind::ALL.iter().find(|k| !cells.contains_key(k)) {
        return Err(Error::Library(format!("library has no {k} cell")));
    }
    Ok(CellLibrary { version, cells })
}
