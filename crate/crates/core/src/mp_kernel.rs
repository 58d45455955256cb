//! Margin-propagation numerical core.
//!
//! The MP primitive finds the threshold `z` with `sum_i [L_i - z]_+ = gamma`
//! (reverse water-filling). On top of it sit the spline-quantized log map
//! used by the soft gates, the soft gates themselves, Kirchhoff summation,
//! the MP check-node rule and the MAC/ratio helpers used by the analog
//! cells.
//!
//! Probabilities travel as dual-rail currents: `i1 = p * gamma` and
//! `i0 = (1 - p) * gamma`.

use crate::{Error, Mode, Result};

/// Lower end of the spline-quantized log map.
pub const P_MIN: f64 = 1e-3;

/// Nats of log-likelihood represented by one unit of `gamma` in the MP
/// check-node rule. At this scale the MP pairwise log-sum-exp is exact at
/// equal inputs.
pub const BOXPLUS_NATS_PER_GAMMA: f64 = 2.0 * std::f64::consts::LN_2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Regime {
    /// Power-saver mode.
    #[default]
    WeakInversion,
    /// High-performance mode.
    StrongInversion,
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "weak" | "weak_inversion" => Ok(Regime::WeakInversion),
            "strong" | "strong_inversion" => Ok(Regime::StrongInversion),
            other => Err(Error::Invalid(format!("unknown regime `{other}`"))),
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::WeakInversion => "weak",
            Regime::StrongInversion => "strong",
        })
    }
}

/// MP operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpConfig {
    /// Normalization current in µA.
    pub gamma: f64,
    /// µA per unit probability.
    pub unit_current: f64,
    pub spline_count: u32,
    /// Only affects projected power and delay.
    pub regime: Regime,
}

impl Default for MpConfig {
    fn default() -> Self {
        MpConfig {
            gamma: 1.0,
            unit_current: 1.0,
            spline_count: 16,
            regime: Regime::WeakInversion,
        }
    }
}

impl MpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::MpInput(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.unit_current > 0.0 && self.unit_current.is_finite()) {
            return Err(Error::MpInput(format!("unit current must be > 0, got {}", self.unit_current)));
        }
        if self.spline_count < 1 {
            return Err(Error::MpInput("spline count must be >= 1".into()));
        }
        Ok(())
    }

    pub fn with_splines(mut self, spline_count: u32) -> Self {
        self.spline_count = spline_count;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }
}

/// Log-domain scores fed to an MP stage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        check_scores(&scores)?;
        Ok(ScoreVector(scores))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::MpInput("empty score vector".into()));
    }
    if let Some(x) = scores.iter().find(|x| !x.is_finite()) {
        return Err(Error::MpInput(format!("non-finite score {x}")));
    }
    Ok(())
}

/// Solves `sum_i max(L_i - z, 0) = gamma` exactly by sorting and growing
/// the active set. The result satisfies `max(L) - gamma <= z < max(L)`.
pub fn mp_root(scores: &[f64], gamma: f64) -> Result<f64> {
    check_scores(scores)?;
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::MpInput(format!("gamma must be > 0, got {gamma}")));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    for k in 0..sorted.len() {
        prefix += sorted[k];
        let z = (prefix - gamma) / (k + 1) as f64;
        let next = sorted.get(k + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if z >= next {
            return Ok(z);
        }
    }
    unreachable!("the last active set always satisfies the stopping rule")
}

/// MP normalization: `out_i = max(L_i - z, 0)`, summing to `gamma`.
pub fn mp_normalize(scores: &[f64], cfg: &MpConfig) -> Result<Vec<f64>> {
    let z = mp_root(scores, cfg.gamma)?;
    Ok(scores.iter().map(|l| (l - z).max(0.0)).collect())
}

/// Kirchhoff summation of non-negative branch currents (compensated).
pub fn current_add(terms: &[f64]) -> Result<f64> {
    if let Some(t) = terms.iter().find(|t| !(**t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidCurrent(format!("negative or non-finite branch current {t}")));
    }
    Ok(neumaier_sum(terms.iter().copied()))
}

pub(crate) fn neumaier_sum(terms: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

/// Dual-rail probability current.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityCurrent {
    pub i1: f64,
    pub i0: f64,
}

impl ProbabilityCurrent {
    pub fn from_probability(p: f64, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidCurrent(format!("probability {p} outside [0,1]")));
        }
        Ok(ProbabilityCurrent {
            i1: p * gamma,
            i0: (1.0 - p) * gamma,
        })
    }

    pub fn validate(&self, gamma: f64) -> Result<()> {
        if !(self.i1 >= 0.0 && self.i0 >= 0.0) {
            return Err(Error::InvalidCurrent(format!("negative rail ({}, {})", self.i1, self.i0)));
        }
        if ((self.i1 + self.i0) - gamma).abs() > 1e-9 * gamma {
            return Err(Error::InvalidCurrent(format!(
                "rails sum to {} instead of gamma = {gamma}",
                self.i1 + self.i0
            )));
        }
        Ok(())
    }

    pub fn probability(&self, gamma: f64) -> f64 {
        self.i1 / gamma
    }

    /// Rail swap (the INV cell).
    pub fn complement(self) -> Self {
        ProbabilityCurrent { i1: self.i0, i0: self.i1 }
    }
}

/// Piecewise-linear log map with `splines` segments whose knots are
/// geometrically spaced over `[P_MIN, 1]`. Below `P_MIN` the map follows
/// the tangent of the first knot, so zero maps to `ln(P_MIN) - 1`.
/// [`LogMap::exp`] is its exact inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogMap {
    splines: u32,
    step: f64,
}

impl LogMap {
    pub fn new(splines: u32) -> Self {
        let splines = splines.max(1);
        LogMap {
            splines,
            step: -P_MIN.ln() / splines as f64,
        }
    }

    pub fn splines(&self) -> u32 {
        self.splines
    }

    fn knot(&self, k: u32) -> (f64, f64) {
        let y = P_MIN.ln() + k as f64 * self.step;
        (y.exp(), y)
    }

    fn segment(&self, k: u32) -> ((f64, f64), (f64, f64)) {
        (self.knot(k), self.knot(k + 1))
    }

    /// Quantized `ln p` for `p >= 0`.
    pub fn log(&self, p: f64) -> f64 {
        let y_min = P_MIN.ln();
        if p < P_MIN {
            return y_min + (p / P_MIN - 1.0);
        }
        let k = (((p.ln() - y_min) / self.step).floor().max(0.0) as u32).min(self.splines - 1);
        let ((x0, y0), (x1, y1)) = self.segment(k);
        y0 + (p - x0) / (x1 - x0) * (y1 - y0)
    }

    /// Inverse of [`LogMap::log`]; clamps at zero.
    pub fn exp(&self, y: f64) -> f64 {
        let y_min = P_MIN.ln();
        if y < y_min {
            return (P_MIN * (1.0 + (y - y_min))).max(0.0);
        }
        let k = (((y - y_min) / self.step).floor() as u32).min(self.splines - 1);
        let ((x0, y0), (x1, y1)) = self.segment(k);
        x0 + (y - y0) / (y1 - y0) * (x1 - x0)
    }

    /// Log of any non-negative magnitude: a binary range shift followed by
    /// the quantized map of the mantissa in `(0.5, 1]`.
    pub fn log_any(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let e = v.log2().ceil();
        let m = v / e.exp2();
        e * std::f64::consts::LN_2 + self.log(m)
    }

    pub fn exp_any(&self, y: f64) -> f64 {
        if y == f64::NEG_INFINITY {
            return 0.0;
        }
        let k = (y / std::f64::consts::LN_2).ceil();
        k.exp2() * self.exp(y - k * std::f64::consts::LN_2)
    }
}

/// MP renormalization of two linear-domain rails.
fn renormalize(t1: f64, t0: f64, cfg: &MpConfig) -> Result<ProbabilityCurrent> {
    let out = mp_normalize(&[cfg.gamma * t1, cfg.gamma * t0], cfg)?;
    Ok(ProbabilityCurrent { i1: out[0], i0: out[1] })
}

/// Soft-AND: `p = p_a * p_b`.
///
/// In MP mode the four product terms are formed as sums of quantized logs,
/// converted back through the inverse map, the three non-AND terms merged
/// by KCL into the complement rail, and both rails renormalized by MP.
pub fn soft_and(a: ProbabilityCurrent, b: ProbabilityCurrent, cfg: &MpConfig, mode: Mode) -> Result<ProbabilityCurrent> {
    cfg.validate()?;
    a.validate(cfg.gamma)?;
    b.validate(cfg.gamma)?;
    let (pa, pb) = (a.probability(cfg.gamma), b.probability(cfg.gamma));
    match mode {
        Mode::Exact => {
            let p = pa * pb;
            Ok(ProbabilityCurrent {
                i1: p * cfg.gamma,
                i0: cfg.gamma - p * cfg.gamma,
            })
        }
        Mode::Mp => {
            let lm = LogMap::new(cfg.spline_count);
            let (la1, la0) = (lm.log(pa), lm.log(a.i0 / cfg.gamma));
            let (lb1, lb0) = (lm.log(pb), lm.log(b.i0 / cfg.gamma));
            let t11 = lm.exp(la1 + lb1);
            let rest = neumaier_sum([la1 + lb0, la0 + lb1, la0 + lb0].into_iter().map(|s| lm.exp(s)));
            renormalize(t11, rest, cfg)
        }
    }
}

/// Soft-OR by De Morgan: `1 - (1 - p_a)(1 - p_b)`.
pub fn soft_or(a: ProbabilityCurrent, b: ProbabilityCurrent, cfg: &MpConfig, mode: Mode) -> Result<ProbabilityCurrent> {
    Ok(soft_and(a.complement(), b.complement(), cfg, mode)?.complement())
}

/// Exact check-node rule `2 atanh(tanh(l1/2) tanh(l2/2))` in a form that
/// stays finite for large magnitudes.
pub fn boxplus_exact(l1: f64, l2: f64) -> f64 {
    let s = l1.signum() * l2.signum();
    let m = l1.abs().min(l2.abs());
    if l1 == 0.0 || l2 == 0.0 {
        return 0.0;
    }
    s * m + softplus_neg(l1 + l2) - softplus_neg(l1 - l2)
}

/// `ln(1 + exp(-|x|))`.
fn softplus_neg(x: f64) -> f64 {
    (-x.abs()).exp().ln_1p()
}

/// MP check-node rule: `boxplus(l1, l2) = LSE(0, l1 + l2) - LSE(l1, l2)`
/// with each log-sum-exp replaced by an MP root. Tends to min-sum as
/// `gamma -> 0`.
pub fn mp_boxplus(l1: f64, l2: f64, cfg: &MpConfig) -> Result<f64> {
    if !l1.is_finite() || !l2.is_finite() {
        return Err(Error::MpInput(format!("non-finite LLR ({l1}, {l2})")));
    }
    let g = BOXPLUS_NATS_PER_GAMMA * cfg.gamma / cfg.unit_current;
    Ok(mp_root(&[0.0, l1 + l2], g)? - mp_root(&[l1, l2], g)?)
}

/// Ratio `num / den` of two non-negative currents; MP mode subtracts
/// quantized logs.
pub fn mp_ratio(num: f64, den: f64, cfg: &MpConfig, mode: Mode) -> Result<f64> {
    if !(num >= 0.0 && den > 0.0) || !num.is_finite() || !den.is_finite() {
        return Err(Error::InvalidCurrent(format!("ratio of {num} over {den}")));
    }
    Ok(match mode {
        Mode::Exact => num / den,
        Mode::Mp => {
            let lm = LogMap::new(cfg.spline_count);
            lm.exp_any(lm.log_any(num) - lm.log_any(den))
        }
    })
}

/// Multiply-accumulate `bias + sum_i w_i x_i`. MP mode forms each product
/// magnitude in the quantized log domain; signs steer the product onto the
/// positive or negative summing rail.
pub fn mp_mac(inputs: &[f64], weights: &[f64], bias: f64, cfg: &MpConfig, mode: Mode) -> Result<f64> {
    if inputs.len() != weights.len() {
        return Err(Error::MpInput(format!(
            "MAC with {} inputs and {} weights",
            inputs.len(),
            weights.len()
        )));
    }
    match mode {
        Mode::Exact => Ok(inputs.iter().zip(weights).fold(bias, |acc, (x, w)| acc + w * x)),
        Mode::Mp => {
            let lm = LogMap::new(cfg.spline_count);
            let mut pos = Vec::with_capacity(inputs.len() + 1);
            let mut neg = Vec::with_capacity(inputs.len() + 1);
            for (x, w) in inputs.iter().zip(weights) {
                let mag = lm.exp_any(lm.log_any(x.abs()) + lm.log_any(w.abs()));
                if (x.signum() * w.signum()) < 0.0 {
                    neg.push(mag);
                } else {
                    pos.push(mag);
                }
            }
            if bias < 0.0 {
                neg.push(-bias);
            } else {
                pos.push(bias);
            }
            Ok(current_add(&pos)? - current_add(&neg)?)
        }
    }
}

/// Rectifier; exact in both modes.
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Maximum `|MP - EXACT|` of the Soft-AND over the grid
/// `{0.05, 0.10, ..., 0.95}^2`.
pub fn soft_and_grid_error(cfg: &MpConfig) -> Result<f64> {
    let grid: Vec<f64> = (1..=19).map(|k| k as f64 * 0.05).collect();
    let mut worst: f64 = 0.0;
    for &pa in &grid {
        for &pb in &grid {
            let a = ProbabilityCurrent::from_probability(pa, cfg.gamma)?;
            let b = ProbabilityCurrent::from_probability(pb, cfg.gamma)?;
            let mp = soft_and(a, b, cfg, Mode::Mp)?.probability(cfg.gamma);
            worst = worst.max((mp - pa * pb).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Bisection on `sum [L_i - z]_+ - gamma`, independent of the sort-based
    /// solver.
    fn bisect_root(scores: &[f64], gamma: f64) -> f64 {
        let f = |z: f64| scores.iter().map(|l| (l - z).max(0.0)).sum::<f64>() - gamma;
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut lo, mut hi) = (max - gamma - 1.0, max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn pc(p: f64) -> ProbabilityCurrent {
        ProbabilityCurrent::from_probability(p, 1.0).unwrap()
    }

    #[test]
    fn root_closed_forms() {
        for &a in &[-3.0, 0.0, 2.5] {
            for &g in &[0.1, 1.0, 4.0] {
                assert!((mp_root(&[a, a], g).unwrap() - (a - g / 2.0)).abs() < 1e-12);
            }
        }
        assert!((mp_root(&[0.0, 0.0, 0.0], 3.0).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn root_rejects_bad_input() {
        assert!(mp_root(&[], 1.0).is_err());
        assert!(mp_root(&[f64::NAN], 1.0).is_err());
        assert!(mp_root(&[1.0], 0.0).is_err());
    }

    #[test]
    fn root_matches_bisection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for case in 0..1000 {
            let n = rng.random_range(2..=16);
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let g = [0.1, 1.0, 4.0][case % 3];
            let z = mp_root(&s, g).unwrap();
            assert!((z - bisect_root(&s, g)).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_examples() {
        let cfg = MpConfig::default();
        assert_eq!(mp_normalize(&[0.3, 0.3], &cfg).unwrap(), vec![0.5, 0.5]);
        assert_eq!(mp_normalize(&[10.0, -10.0], &cfg).unwrap(), vec![1.0, 0.0]);
    }

    proptest! {
        #[test]
        fn normalize_sums_to_gamma(s in prop::collection::vec(-10.0f64..10.0, 1..16), g in 0.05f64..5.0) {
            let cfg = MpConfig::default().with_gamma(g);
            let out = mp_normalize(&s, &cfg).unwrap();
            prop_assert!(out.iter().all(|&o| o >= 0.0));
            prop_assert!((out.iter().sum::<f64>() - g).abs() < 1e-9);
        }

        #[test]
        fn root_bounds_and_shift(s in prop::collection::vec(-10.0f64..10.0, 1..16), g in 0.05f64..5.0, c in -5.0f64..5.0) {
            let z = mp_root(&s, g).unwrap();
            let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(max - g <= z + 1e-12 && z < max);
            let shifted: Vec<f64> = s.iter().map(|x| x + c).collect();
            prop_assert!((mp_root(&shifted, g).unwrap() - (z + c)).abs() < 1e-9);
        }
    }

    #[test]
    fn log_map_inverse_and_bounds() {
        for s in [1, 4, 8, 16] {
            let lm = LogMap::new(s);
            assert_eq!(lm.log(1.0), 0.0);
            for k in 0..=1000 {
                let p = k as f64 / 1000.0;
                let y = lm.log(p);
                assert!(y <= p.ln() + 1e-12 || p < P_MIN);
                assert!((lm.exp(y) - p).abs() < 1e-12, "s={s} p={p}");
            }
        }
    }

    #[test]
    fn gate_identities_both_modes() {
        let cfg = MpConfig::default();
        for mode in [Mode::Exact, Mode::Mp] {
            assert!((soft_and(pc(1.0), pc(1.0), &cfg, mode).unwrap().i1 - 1.0).abs() < 1e-12);
            for b in [0.0, 0.3, 1.0] {
                assert!(soft_and(pc(0.0), pc(b), &cfg, mode).unwrap().i1.abs() < 1e-12);
                assert!((soft_or(pc(1.0), pc(b), &cfg, mode).unwrap().i1 - 1.0).abs() < 1e-12);
            }
            assert!(soft_or(pc(0.0), pc(0.0), &cfg, mode).unwrap().i1.abs() < 1e-12);
        }
    }

    #[test]
    fn gate_outputs_are_valid_currents() {
        let cfg = MpConfig::default().with_splines(4).with_gamma(2.0);
        for i in 0..=20 {
            for j in 0..=20 {
                let a = ProbabilityCurrent::from_probability(i as f64 / 20.0, 2.0).unwrap();
                let b = ProbabilityCurrent::from_probability(j as f64 / 20.0, 2.0).unwrap();
                soft_and(a, b, &cfg, Mode::Mp).unwrap().validate(2.0).unwrap();
            }
        }
    }

    #[test]
    fn gate_rejects_invalid_rails() {
        let cfg = MpConfig::default();
        let bad = ProbabilityCurrent { i1: 0.7, i0: 0.7 };
        assert!(soft_and(bad, pc(0.5), &cfg, Mode::Exact).is_err());
        let neg = ProbabilityCurrent { i1: -0.1, i0: 1.1 };
        assert!(soft_or(pc(0.5), neg, &cfg, Mode::Mp).is_err());
    }

    #[test]
    fn gate_error_shrinks_with_splines() {
        let errs: Vec<f64> = [4, 8, 16]
            .iter()
            .map(|&s| soft_and_grid_error(&MpConfig::default().with_splines(s)).unwrap())
            .collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn or_mirrors_and() {
        let cfg = MpConfig::default().with_splines(8);
        for i in 1..=19 {
            for j in 1..=19 {
                let (pa, pb) = (i as f64 * 0.05, j as f64 * 0.05);
                let or = soft_or(pc(pa), pc(pb), &cfg, Mode::Mp).unwrap().i1;
                let and = soft_and(pc(1.0 - pa), pc(1.0 - pb), &cfg, Mode::Mp).unwrap().i1;
                assert!((or - (1.0 - and)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn kcl_sum() {
        assert_eq!(current_add(&[]).unwrap(), 0.0);
        assert!((current_add(&[0.3, 0.7]).unwrap() - 1.0).abs() < 1e-15);
        assert!(current_add(&[0.1, -0.2]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let terms: Vec<f64> = (0..rng.random_range(1..200)).map(|_| rng.random_range(0.0..1e3)).collect();
            // Reference: exact rational accumulation via i128 on a 2^-40 grid.
            let scaled: Vec<f64> = terms.iter().map(|t| (t * 2f64.powi(40)).round() / 2f64.powi(40)).collect();
            let exact: i128 = scaled.iter().map(|t| (t * 2f64.powi(40)) as i128).sum();
            let reference = exact as f64 / 2f64.powi(40);
            assert!((current_add(&scaled).unwrap() - reference).abs() <= 1e-12 * reference.max(1.0));
        }
    }

    #[test]
    fn boxplus_examples() {
        let cfg = MpConfig::default();
        for l1 in [-5.0, -0.3, 0.0, 2.0, 7.5] {
            assert!((mp_boxplus(l1, 30.0, &cfg).unwrap() - l1).abs() < 1e-3);
            assert!((mp_boxplus(l1, -30.0, &cfg).unwrap() + l1).abs() < 1e-3);
        }
        assert_eq!(mp_boxplus(0.0, 4.2, &cfg).unwrap(), 0.0);
        assert_eq!(boxplus_exact(0.0, 4.2), 0.0);
        assert!(mp_boxplus(f64::INFINITY, 1.0, &cfg).is_err());
    }

    #[test]
    fn boxplus_error_bound() {
        let cfg = MpConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let (a, b) = (rng.random_range(-8.0..8.0), rng.random_range(-8.0..8.0));
            let oracle = 2.0 * ((a / 2.0f64).tanh() * (b / 2.0f64).tanh()).atanh();
            assert!((boxplus_exact(a, b) - oracle).abs() < 1e-9);
            let err = (mp_boxplus(a, b, &cfg).unwrap() - oracle).abs();
            assert!(err <= 0.35f64.max(0.1 * oracle.abs()), "{a} {b} {err}");
        }
    }

    #[test]
    fn boxplus_tends_to_min_sum() {
        let cfg = MpConfig::default().with_gamma(1e-9);
        for (a, b) in [(1.5f64, -2.0f64), (-3.0, -0.7), (4.0, 4.0)] {
            let ms = a.signum() * b.signum() * f64::min(a.abs(), b.abs());
            assert!((mp_boxplus(a, b, &cfg).unwrap() - ms).abs() < 1e-6);
        }
    }

    #[test]
    fn mac_and_ratio() {
        let cfg = MpConfig::default();
        let x = [0.5, 1.5, 3.0];
        let w = [0.2, -1.1, 0.7];
        let exact = mp_mac(&x, &w, 0.1, &cfg, Mode::Exact).unwrap();
        assert!((exact - (0.1 + 0.1 - 1.65 + 2.1)).abs() < 1e-12);
        let mp = mp_mac(&x, &w, 0.1, &cfg, Mode::Mp).unwrap();
        assert!((mp - exact).abs() < 0.1 * 3.95);
        assert!(mp_mac(&x, &w[..2], 0.0, &cfg, Mode::Exact).is_err());
        assert_eq!(mp_ratio(0.3, 0.6, &cfg, Mode::Exact).unwrap(), 0.5);
        assert!((mp_ratio(0.3, 0.6, &cfg, Mode::Mp).unwrap() - 0.5).abs() < 0.03);
        assert!(mp_ratio(0.3, 0.0, &cfg, Mode::Exact).is_err());
        assert_eq!(relu(-2.0), 0.0);
    }
}
