//! Feed-forward ReLU networks built from MP multiply-accumulate cells, the
//! weights file format, a reference trainer and the IRIS harness.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::analog_map::{map_compute_graph, Budget, CellLibrary};
use crate::compute_graph::{ComputeGraph, NodeId, Op};
use crate::mp_kernel::MpConfig;
use crate::netlist::{build_netlist, parse_spice, Stimulus};
use crate::sim::{dc_solve, SolveConfig};
use crate::{Error, Mode, Result};

pub const IRIS_CSV: &str = include_str!("../../data/iris.csv");
pub const IRIS_WEIGHTS: &str = include_str!("../../data/iris_4_8_3.weights");
/// Seed, epochs and learning rate that produced [`IRIS_WEIGHTS`].
pub const IRIS_TRAIN: (u64, usize, f64) = (7, 4000, 0.5);

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.weights.len()
    }
}

/// ReLU on hidden layers, raw scores out, argmax read-out. Inputs are
/// min-max scaled to `[0, 1]` by `scale` before entering the network.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnSpec {
    pub inputs: usize,
    pub scale: Vec<(f64, f64)>,
    pub layers: Vec<Layer>,
}

impl AnnSpec {
    pub fn new(inputs: usize, scale: Vec<(f64, f64)>, layers: Vec<Layer>) -> Result<Self> {
        let spec = AnnSpec { inputs, scale, layers };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() || self.inputs == 0 {
            return Err(Error::Invalid("network needs inputs and at least one layer".into()));
        }
        if !self.scale.is_empty() && self.scale.len() != self.inputs {
            return Err(Error::Invalid(format!("{} scale entries for {} inputs", self.scale.len(), self.inputs)));
        }
        if self.scale.iter().any(|&(lo, hi)| !(hi > lo)) {
            return Err(Error::Invalid("scale needs lo < hi".into()));
        }
        let mut width = self.inputs;
        for (k, l) in self.layers.iter().enumerate() {
            if l.outputs() == 0 || l.bias.len() != l.outputs() || l.weights.iter().any(|r| r.len() != width) {
                return Err(Error::Invalid(format!("layer {} does not chain from width {width}", k + 1)));
            }
            width = l.outputs();
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.inputs).chain(self.layers.iter().map(Layer::outputs)).collect()
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, Layer::outputs)
    }

    /// Scaled and clamped network inputs.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        if self.scale.is_empty() {
            return x.to_vec();
        }
        x.iter()
            .zip(&self.scale)
            .map(|(&v, &(lo, hi))| ((v - lo) / (hi - lo)).clamp(0.0, 1.0))
            .collect()
    }

    /// Plain matrix forward pass on normalized inputs.
    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (k, l) in self.layers.iter().enumerate() {
            let hidden = k + 1 < self.layers.len();
            a = l
                .weights
                .iter()
                .zip(&l.bias)
                .map(|(row, b)| {
                    let z = row.iter().zip(&a).fold(*b, |acc, (w, v)| acc + w * v);
                    if hidden {
                        z.max(0.0)
                    } else {
                        z
                    }
                })
                .collect();
        }
        a
    }

    /// Weights file text; see [`parse_weights`].
    pub fn to_weights_text(&self) -> String {
        let sizes: Vec<String> = self.sizes().iter().map(usize::to_string).collect();
        let mut s = format!("# {} ReLU network\ninput {}\n", sizes.join("-"), self.inputs);
        for &(lo, hi) in &self.scale {
            let _ = writeln!(s, "scale {lo} {hi}");
        }
        for l in &self.layers {
            let _ = writeln!(s, "layer {}", l.outputs());
            for (row, b) in l.weights.iter().zip(&l.bias) {
                let cells: Vec<String> = row.iter().chain([b]).map(|v| format!("{v}")).collect();
                s.push_str(&cells.join(" "));
                s.push('\n');
            }
        }
        s
    }
}

fn werr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        what: "weights",
        line,
        col: 1,
        msg: msg.into(),
    }
}

/// Parses the weights format:
///
/// ```text
/// input <n>
/// scale <lo> <hi>          (optional, one line per input)
/// layer <m>
/// <w_1 .. w_n> <bias>      (m lines)
/// ...
/// ```
pub fn parse_weights(text: &str) -> Result<AnnSpec> {
    let mut inputs = None;
    let mut scale = Vec::new();
    let mut layers: Vec<(usize, Layer)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ln = i + 1;
        let toks: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
        let nums = |ts: &[&str]| -> Result<Vec<f64>> {
            ts.iter()
                .map(|t| t.parse::<f64>().map_err(|_| werr(ln, format!("bad number `{t}`"))))
                .collect()
        };
        let count = |t: &str| t.parse::<usize>().map_err(|_| werr(ln, format!("bad count `{t}`")));
        match toks.as_slice() {
            [] => {}
            ["input", n] => inputs = Some(count(n)?),
            ["scale", lo, hi] => {
                let v = nums(&[lo, hi])?;
                scale.push((v[0], v[1]));
            }
            ["layer", m] => layers.push((
                count(m)?,
                Layer {
                    weights: Vec::new(),
                    bias: Vec::new(),
                },
            )),
            row => {
                let (m, layer) = layers.last_mut().ok_or_else(|| werr(ln, "weights before any `layer` line"))?;
                if layer.weights.len() == *m {
                    return Err(werr(ln, format!("layer has more than {m} rows")));
                }
                let mut v = nums(row)?;
                let b = v.pop().expect("non-empty");
                layer.weights.push(v);
                layer.bias.push(b);
            }
        }
    }
    let inputs = inputs.ok_or_else(|| werr(1, "missing `input` line"))?;
    for (k, (m, l)) in layers.iter().enumerate() {
        if l.outputs() != *m {
            return Err(werr(0, format!("layer {} declares {m} rows, has {}", k + 1, l.outputs())));
        }
    }
    AnnSpec::new(inputs, scale, layers.into_iter().map(|(_, l)| l).collect())
}

/// Compute graph of the network: per unit an ADD of `MUL(CONST w, x)`
/// terms and a bias constant (lowered to MP_MAC), then RELU on hidden
/// layers. Inputs `x0..`, outputs `y0..`.
pub fn build_ann_graph(spec: &AnnSpec) -> Result<ComputeGraph> {
    spec.validate()?;
    let mut cg = ComputeGraph::new();
    let mut prev: Vec<NodeId> = (0..spec.inputs).map(|i| cg.input(&format!("x{i}"), None)).collect();
    for (k, l) in spec.layers.iter().enumerate() {
        let hidden = k + 1 < spec.layers.len();
        let mut next = Vec::with_capacity(l.outputs());
        for (u, (row, &b)) in l.weights.iter().zip(&l.bias).enumerate() {
            let tag = format!("L{} u{u}", k + 1);
            let mut terms: Vec<NodeId> = row
                .iter()
                .zip(&prev)
                .enumerate()
                .map(|(i, (&w, &x))| {
                    let c = cg.constant(w, format!("w {tag} {i}"));
                    cg.mul(c, x, format!("{tag} * {i}"))
                })
                .collect();
            terms.push(cg.constant(b, format!("b {tag}")));
            let z = cg.add(terms, format!("mac {tag}"));
            next.push(if hidden { cg.op(Op::Relu, vec![z], format!("relu {tag}")) } else { z });
        }
        prev = next;
    }
    for (k, &y) in prev.iter().enumerate() {
        cg.set_output(&format!("y{k}"), y);
    }
    cg.validate()?;
    Ok(cg)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledData {
    pub columns: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, keep: impl Fn(usize) -> bool) -> LabeledData {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i)).collect();
        LabeledData {
            columns: self.columns.clone(),
            features: idx.iter().map(|&i| self.features[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Every `k`-th sample (1-based) goes to the test half.
    pub fn split_every(&self, k: usize) -> (LabeledData, LabeledData) {
        (self.subset(|i| (i + 1) % k != 0), self.subset(|i| (i + 1) % k == 0))
    }
}

/// CSV with a header; the last column is an integer class label.
pub fn parse_labeled_csv(text: &str) -> Result<LabeledData> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let perr = |line: usize, msg: String| Error::Parse {
        what: "csv",
        line,
        col: 1,
        msg,
    };
    let columns: Vec<String> = rdr
        .headers()
        .map_err(|e| perr(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if columns.len() < 2 {
        return Err(perr(1, "need at least one feature and a label column".into()));
    }
    let mut data = LabeledData {
        columns,
        features: Vec::new(),
        labels: Vec::new(),
    };
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| perr(line, e.to_string()))?;
        let (label, feats) = rec.iter().collect::<Vec<_>>().split_last().map(|(l, f)| (*l, f.to_vec())).expect("width checked");
        data.features.push(
            feats
                .iter()
                .map(|v| v.parse::<f64>().map_err(|_| perr(line, format!("bad feature `{v}`"))))
                .collect::<Result<_>>()?,
        );
        data.labels.push(label.parse().map_err(|_| perr(line, format!("bad label `{label}`")))?);
    }
    Ok(data)
}

pub fn iris() -> LabeledData {
    parse_labeled_csv(IRIS_CSV).expect("shipped csv parses")
}

pub fn iris_weights() -> AnnSpec {
    parse_weights(IRIS_WEIGHTS).expect("shipped weights parse")
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Reference trainer: full-batch gradient descent on softmax cross-entropy
/// with He-normal initialization. Scaling comes from the training data.
pub fn train(sizes: &[usize], data: &LabeledData, seed: u64, epochs: usize, lr: f64) -> Result<AnnSpec> {
    if sizes.len() < 2 || data.is_empty() {
        return Err(Error::Invalid("need at least two layer sizes and some data".into()));
    }
    let n_in = sizes[0];
    let classes = *sizes.last().expect("len checked");
    if data.features.iter().any(|f| f.len() != n_in) || data.labels.iter().any(|&l| l >= classes) {
        return Err(Error::Invalid("data does not match the layer sizes".into()));
    }
    let scale: Vec<(f64, f64)> = (0..n_in)
        .map(|j| {
            let col = data.features.iter().map(|f| f[j]);
            let lo = col.clone().fold(f64::INFINITY, f64::min);
            let hi = col.fold(f64::NEG_INFINITY, f64::max);
            (lo, if hi > lo { hi } else { lo + 1.0 })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers: Vec<Layer> = sizes
        .windows(2)
        .map(|w| {
            let dist = Normal::new(0.0, (2.0 / w[0] as f64).sqrt()).expect("positive sd");
            Layer {
                weights: (0..w[1]).map(|_| (0..w[0]).map(|_| dist.sample(&mut rng)).collect()).collect(),
                bias: vec![0.0; w[1]],
            }
        })
        .collect();
    let mut spec = AnnSpec::new(n_in, scale, layers.clone())?;
    let xs: Vec<Vec<f64>> = data.features.iter().map(|f| spec.normalize(f)).collect();
    let inv_n = 1.0 / data.len() as f64;
    for _ in 0..epochs {
        let mut gw: Vec<Vec<Vec<f64>>> = layers.iter().map(|l| vec![vec![0.0; l.inputs()]; l.outputs()]).collect();
        let mut gb: Vec<Vec<f64>> = layers.iter().map(|l| vec![0.0; l.outputs()]).collect();
        for (x, &y) in xs.iter().zip(&data.labels) {
            let mut acts = vec![x.clone()];
            for (k, l) in layers.iter().enumerate() {
                let a = &acts[k];
                let z: Vec<f64> = l
                    .weights
                    .iter()
                    .zip(&l.bias)
                    .map(|(r, b)| r.iter().zip(a).fold(*b, |s, (w, v)| s + w * v))
                    .collect();
                acts.push(if k + 1 < layers.len() { z.iter().map(|v| v.max(0.0)).collect() } else { z });
            }
            let out = acts.last().expect("layers");
            let m = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = out.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            let mut delta: Vec<f64> = e.iter().enumerate().map(|(c, v)| v / s - f64::from(c == y)).collect();
            for k in (0..layers.len()).rev() {
                let a = &acts[k];
                for (u, d) in delta.iter().enumerate() {
                    gb[k][u] += d;
                    for (i, v) in a.iter().enumerate() {
                        gw[k][u][i] += d * v;
                    }
                }
                if k > 0 {
                    delta = (0..layers[k].inputs())
                        .map(|i| {
                            let back: f64 = delta.iter().enumerate().map(|(u, d)| d * layers[k].weights[u][i]).sum();
                            if acts[k][i] > 0.0 {
                                back
                            } else {
                                0.0
                            }
                        })
                        .collect();
                }
            }
        }
        for (k, l) in layers.iter_mut().enumerate() {
            for (u, row) in l.weights.iter_mut().enumerate() {
                for (i, w) in row.iter_mut().enumerate() {
                    *w -= lr * inv_n * gw[k][u][i];
                }
                l.bias[u] -= lr * inv_n * gb[k][u];
            }
        }
    }
    spec.layers = layers;
    Ok(spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnEval {
    pub accuracy: f64,
    pub predictions: Vec<usize>,
    /// Cells in the mapped network.
    pub cells: usize,
}

/// Accuracy of the synthesized network: graph, cell map, netlist text,
/// parsed back and solved per sample in `mode`.
pub fn ann_eval(
    spec: &AnnSpec,
    data: &LabeledData,
    mode: Mode,
    mp: &MpConfig,
    lib: &CellLibrary,
    budget: &Budget,
) -> Result<AnnEval> {
    if let Some(&l) = data.labels.iter().find(|&&l| l >= spec.outputs()) {
        return Err(Error::Invalid(format!("label {l} but the network has {} outputs", spec.outputs())));
    }
    if data.features.iter().any(|f| f.len() != spec.inputs) {
        return Err(Error::Invalid(format!("samples must have {} features", spec.inputs)));
    }
    let cg = build_ann_graph(spec)?;
    let am = map_compute_graph(&cg, lib, budget)?;
    let text = build_netlist(&am, lib, mp, "ann")?.to_text();
    let am = parse_spice(&text)?.to_analog_map()?;
    let cfg = SolveConfig::default().with_mode(mode);
    let mut predictions = Vec::with_capacity(data.len());
    for f in &data.features {
        let x = spec.normalize(f);
        let stim: BTreeMap<String, f64> = x.iter().enumerate().map(|(i, &v)| (format!("x{i}"), v)).collect();
        let rep = dc_solve(&am, &Stimulus::new(stim)?, mp, &cfg)?;
        let scores: Vec<f64> = (0..spec.outputs()).map(|k| rep.probabilities[&format!("y{k}")]).collect();
        predictions.push(argmax(&scores));
    }
    let correct = predictions.iter().zip(&data.labels).filter(|(p, l)| p == l).count();
    Ok(AnnEval {
        accuracy: correct as f64 / data.len().max(1) as f64,
        predictions,
        cells: am.instances().len(),
    })
}

/// Accuracy of the plain forward pass.
pub fn reference_accuracy(spec: &AnnSpec, data: &LabeledData) -> f64 {
    let ok = data
        .features
        .iter()
        .zip(&data.labels)
        .filter(|(f, &l)| argmax(&spec.forward(&spec.normalize(f))) == l)
        .count();
    ok as f64 / data.len().max(1) as f64
}
