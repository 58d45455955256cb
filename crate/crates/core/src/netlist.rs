//! SPICE-dialect netlists: emission from cell maps, DC testbenches and a
//! parser for the emitted subset.
//!
//! Emitted text is laid out as
//!
//! ```text
//! * mpforge <title>
//! * gamma <g> uA
//! .SUBCKT <variant> <ports> [params]
//! ...
//! .ENDS
//! * STIMULUS <net> <true|complement> <input name>
//! X<id> <nets> <variant> [k=v ...]
//! I<net> 0 <net> DC <value>u
//! * OUTPUT <name> <net>
//! .OP                       (testbench only)
//! * MEASURE <net>           (testbench only)
//! .END
//! ```
//!
//! Variant names are the cell name, an arity for variable-arity cells and
//! `_S<k>` for log-map cells, e.g. `SOFT_AND_S16`, `KCL_SUM3`,
//! `MP_MAC4_S8`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use crate::analog_map::{AnalogMap, CellKind, CellLibrary, Driver, Instance, Net, NetId};
use crate::mp_kernel::MpConfig;
use crate::{Error, Result};

/// Input probabilities, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Stimulus(BTreeMap<String, f64>);

impl Stimulus {
    pub fn new(probs: BTreeMap<String, f64>) -> Result<Self> {
        for (k, &p) in &probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Stimulus(format!("`{k}` = {p} is not a probability")));
            }
        }
        Ok(Stimulus(probs))
    }

    pub fn get(&self, input: &str) -> Option<f64> {
        self.0.get(input).copied()
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subckt {
    pub name: String,
    pub ports: Vec<String>,
    /// `name=default` tokens after the ports.
    pub params: Vec<(String, f64)>,
    /// Lines between the header and `.ENDS`.
    pub body: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct XLine {
    pub name: String,
    pub nets: Vec<String>,
    pub subckt: String,
    pub params: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ISource {
    pub name: String,
    pub node: String,
    pub value_ua: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusMarker {
    pub net: String,
    pub complement: bool,
    pub input: String,
}

/// Structural model of an emitted netlist.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Netlist {
    pub title: String,
    pub gamma_ua: Option<f64>,
    pub subckts: Vec<Subckt>,
    pub stimuli: Vec<StimulusMarker>,
    pub instances: Vec<XLine>,
    pub sources: Vec<ISource>,
    /// `(output name, net)`.
    pub outputs: Vec<(String, String)>,
    pub directives: Vec<String>,
    pub measures: Vec<String>,
}

fn fmt_params(out: &mut String, params: &[(String, f64)]) {
    for (k, v) in params {
        let _ = write!(out, " {k}={v}");
    }
}

impl Netlist {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&self.title);
        s.push('\n');
        if let Some(g) = self.gamma_ua {
            let _ = writeln!(s, "* gamma {g} uA");
        }
        for sc in &self.subckts {
            let _ = write!(s, ".SUBCKT {} {}", sc.name, sc.ports.join(" "));
            fmt_params(&mut s, &sc.params);
            s.push('\n');
            for l in &sc.body {
                s.push_str(l);
                s.push('\n');
            }
            s.push_str(".ENDS\n");
        }
        for m in &self.stimuli {
            let rail = if m.complement { "complement" } else { "true" };
            let _ = writeln!(s, "* STIMULUS {} {rail} {}", m.net, m.input);
        }
        for x in &self.instances {
            let _ = write!(s, "{} {} {}", x.name, x.nets.join(" "), x.subckt);
            fmt_params(&mut s, &x.params);
            s.push('\n');
        }
        for i in &self.sources {
            let _ = writeln!(s, "{} 0 {} DC {}u", i.name, i.node, i.value_ua);
        }
        for (name, net) in &self.outputs {
            let _ = writeln!(s, "* OUTPUT {name} {net}");
        }
        for d in &self.directives {
            s.push_str(d);
            s.push('\n');
        }
        for m in &self.measures {
            let _ = writeln!(s, "* MEASURE {m}");
        }
        s.push_str(".END\n");
        s
    }

    fn gamma(&self) -> f64 {
        self.gamma_ua.unwrap_or(1.0)
    }

    /// Rebuilds the cell map. Instance ids follow X-line order.
    pub fn to_analog_map(&self) -> Result<AnalogMap> {
        let kinds: HashMap<&str, (CellKind, u32)> = self
            .subckts
            .iter()
            .map(|sc| parse_variant(&sc.name).map(|v| (sc.name.as_str(), v)))
            .collect::<Result<_>>()?;
        let mut nets: Vec<Net> = Vec::new();
        let mut ids: HashMap<String, NetId> = HashMap::new();
        let mut net_id = |nets: &mut Vec<Net>, name: &str| -> NetId {
            *ids.entry(name.to_string()).or_insert_with(|| {
                nets.push(Net {
                    id: nets.len(),
                    name: name.to_string(),
                    driver: None,
                });
                nets.len() - 1
            })
        };
        let set_driver = |nets: &mut Vec<Net>, id: NetId, d: Driver| -> Result<()> {
            if nets[id].driver.is_some() {
                return Err(Error::Netlist(format!("net {} has two drivers", nets[id].name)));
            }
            nets[id].driver = Some(d);
            Ok(())
        };
        let mut inputs = Vec::new();
        let mut stim_nets = BTreeSet::new();
        for m in &self.stimuli {
            let id = net_id(&mut nets, &m.net);
            set_driver(
                &mut nets,
                id,
                Driver::Stimulus {
                    input: m.input.clone(),
                    complement: m.complement,
                },
            )?;
            stim_nets.insert(m.net.as_str());
            if !m.complement && !inputs.contains(&m.input) {
                inputs.push(m.input.clone());
            }
        }
        let mut instances = Vec::new();
        for (k, x) in self.instances.iter().enumerate() {
            let &(kind, splines) = kinds
                .get(x.subckt.as_str())
                .ok_or_else(|| Error::Netlist(format!("{} uses undefined subcircuit {}", x.name, x.subckt)))?;
            let ids: Vec<NetId> = x.nets.iter().map(|n| net_id(&mut nets, n)).collect();
            let (output, ins) = ids.split_last().expect("arity checked on parse");
            set_driver(&mut nets, *output, Driver::Instance(k))?;
            instances.push(Instance {
                id: k,
                kind,
                splines,
                inputs: ins.to_vec(),
                output: *output,
                params: x.params.clone(),
            });
        }
        for i in self.sources.iter().filter(|i| !stim_nets.contains(i.node.as_str())) {
            let id = net_id(&mut nets, &i.node);
            set_driver(&mut nets, id, Driver::Fixed(i.value_ua / self.gamma()))?;
        }
        let mut outputs = Vec::new();
        for (name, net) in &self.outputs {
            let id = *ids_lookup(&nets, net)?;
            outputs.push((name.clone(), id));
        }
        AnalogMap::from_parts(nets, instances, inputs, outputs)
    }

    /// Probabilities carried by the true-rail stimulus sources.
    pub fn stimulus(&self) -> Result<Stimulus> {
        let mut probs = BTreeMap::new();
        for m in self.stimuli.iter().filter(|m| !m.complement) {
            if let Some(src) = self.sources.iter().find(|s| s.node == m.net) {
                probs.insert(m.input.clone(), src.value_ua / self.gamma());
            }
        }
        Stimulus::new(probs)
    }
}

fn ids_lookup<'a>(nets: &'a [Net], name: &str) -> Result<&'a NetId> {
    nets.iter()
        .find(|n| n.name == name)
        .map(|n| &n.id)
        .ok_or_else(|| Error::Netlist(format!("output net {name} is not connected")))
}

/// Subcircuit name of an instance's variant.
pub fn variant_name(inst: &Instance) -> String {
    let arity = match inst.kind.fixed_arity() {
        Some(_) => String::new(),
        None => inst.inputs.len().to_string(),
    };
    let s = if inst.splines > 0 {
        format!("_S{}", inst.splines)
    } else {
        String::new()
    };
    format!("{}{arity}{s}", inst.kind.name())
}

/// Inverse of [`variant_name`]: `(kind, splines)`.
pub fn parse_variant(name: &str) -> Result<(CellKind, u32)> {
    let bad = || Error::Netlist(format!("`{name}` is not a library variant name"));
    let (head, splines) = match name.rfind("_S") {
        Some(i) if name[i + 2..].chars().all(|c| c.is_ascii_digit()) && i + 2 < name.len() => {
            (&name[..i], name[i + 2..].parse::<u32>().map_err(|_| bad())?)
        }
        _ => (name, 0),
    };
    let kind_name = head.trim_end_matches(|c: char| c.is_ascii_digit());
    let kind: CellKind = kind_name.parse().map_err(|_| bad())?;
    let has_arity = kind_name.len() != head.len();
    if has_arity == kind.fixed_arity().is_some() {
        return Err(bad());
    }
    Ok((kind, splines))
}

fn instance_template(inst: &Instance, lib: &CellLibrary, gamma: f64) -> Result<Subckt> {
    let spec = lib.variant(inst.kind, inst.splines).ok_or_else(|| {
        Error::Netlist(format!(
            "X{}: library has no {} variant with {} splines",
            inst.id, inst.kind, inst.splines
        ))
    })?;
    let n_in = inst.inputs.len();
    if let Some(a) = inst.kind.fixed_arity() {
        if a != n_in {
            return Err(Error::Netlist(format!("X{}: {} takes {a} inputs, got {n_in}", inst.id, inst.kind)));
        }
    }
    let ins: Vec<String> = (1..=n_in).map(|k| format!("x{k}")).collect();
    let sum = ins.iter().map(|p| format!("v({p})")).collect::<Vec<_>>().join("+");
    let mac = ins
        .iter()
        .enumerate()
        .map(|(k, p)| format!("{{w{}}}*v({p})", k + 1))
        .chain(std::iter::once("{b}*$GAMMA".to_string()))
        .collect::<Vec<_>>()
        .join("+");
    let defaults: String = (1..=n_in)
        .map(|k| format!("w{k}=0"))
        .chain(std::iter::once("b=0".to_string()))
        .collect::<Vec<_>>()
        .join(" ");
    let name = variant_name(inst);
    let text = spec
        .template
        .replace("$MAC", &mac)
        .replace("$SUM", &sum)
        .replace("$IN", &ins.join(" "))
        .replace("$PARAMS", &defaults)
        .replace("$NAME", &name)
        .replace("$SPLINES", &inst.splines.to_string())
        .replace("$GAMMA", &gamma.to_string());
    let lines: Vec<&str> = text.lines().collect();
    let (header, rest) = lines.split_first().ok_or_else(|| Error::Netlist(format!("{name}: empty template")))?;
    let sc = parse_subckt_header(header, 0)?;
    let ports = sc.ports.len();
    if ports != n_in + 1 {
        return Err(Error::Netlist(format!(
            "{name}: template has {ports} ports, instance X{} needs {}",
            inst.id,
            n_in + 1
        )));
    }
    Ok(Subckt {
        body: rest[..rest.len().saturating_sub(1)].iter().map(|l| l.to_string()).collect(),
        ..sc
    })
}

/// Structural netlist of a validated map.
pub fn build_netlist(am: &AnalogMap, lib: &CellLibrary, cfg: &MpConfig, title: &str) -> Result<Netlist> {
    am.validate()?;
    cfg.validate()?;
    let mut subckts: BTreeMap<String, Subckt> = BTreeMap::new();
    let mut instances = Vec::new();
    for inst in am.instances() {
        let name = variant_name(inst);
        if !subckts.contains_key(&name) {
            subckts.insert(name.clone(), instance_template(inst, lib, cfg.gamma)?);
        }
        let mut nets: Vec<String> = inst.inputs.iter().map(|&n| am.net(n).name.clone()).collect();
        nets.push(am.net(inst.output).name.clone());
        instances.push(XLine {
            name: format!("X{}", inst.id),
            nets,
            subckt: name,
            params: inst.params.clone(),
        });
    }
    let mut stimuli = Vec::new();
    let mut sources = Vec::new();
    for net in am.nets() {
        match &net.driver {
            Some(Driver::Stimulus { input, complement }) => stimuli.push(StimulusMarker {
                net: net.name.clone(),
                complement: *complement,
                input: input.clone(),
            }),
            Some(Driver::Fixed(v)) => sources.push(ISource {
                name: format!("I{}", net.name),
                node: net.name.clone(),
                value_ua: v * cfg.gamma,
            }),
            _ => {}
        }
    }
    Ok(Netlist {
        title: format!("* mpforge {title}"),
        gamma_ua: (!am.nets().is_empty()).then_some(cfg.gamma),
        subckts: subckts.into_values().collect(),
        stimuli,
        instances,
        sources,
        outputs: am.outputs().iter().map(|(n, id)| (n.clone(), am.net(*id).name.clone())).collect(),
        directives: Vec::new(),
        measures: Vec::new(),
    })
}

/// Deterministic netlist text of a validated map.
pub fn emit_spice(am: &AnalogMap, lib: &CellLibrary, cfg: &MpConfig, title: &str) -> Result<String> {
    Ok(build_netlist(am, lib, cfg, title)?.to_text())
}

/// Adds stimulus current sources (true and complement rail), a `.OP`
/// directive and `* MEASURE` markers on the outputs.
pub fn emit_testbench(nl: &Netlist, stim: &Stimulus) -> Result<Netlist> {
    let mut tb = nl.clone();
    let g = nl.gamma();
    for m in &nl.stimuli {
        let p = stim
            .get(&m.input)
            .ok_or_else(|| Error::Stimulus(format!("no value for input `{}`", m.input)))?;
        tb.sources.push(ISource {
            name: format!("I{}", m.net),
            node: m.net.clone(),
            value_ua: if m.complement { (1.0 - p) * g } else { p * g },
        });
    }
    if !tb.directives.iter().any(|d| d.eq_ignore_ascii_case(".op")) {
        tb.directives.push(".OP".into());
    }
    tb.measures = nl.outputs.iter().map(|(_, net)| net.clone()).collect();
    Ok(tb)
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::SpiceParse { line, msg: msg.into() }
}

fn split_params(toks: &[&str], line: usize) -> Result<(Vec<String>, Vec<(String, f64)>)> {
    let first = toks.iter().position(|t| t.contains('=')).unwrap_or(toks.len());
    let mut params = Vec::new();
    for t in &toks[first..] {
        let (k, v) = t.split_once('=').ok_or_else(|| perr(line, format!("`{t}` after parameters")))?;
        let v: f64 = v.parse().map_err(|_| perr(line, format!("bad parameter value `{t}`")))?;
        params.push((k.to_string(), v));
    }
    Ok((toks[..first].iter().map(|s| s.to_string()).collect(), params))
}

fn parse_subckt_header(line_text: &str, line: usize) -> Result<Subckt> {
    let toks: Vec<&str> = line_text.split_whitespace().collect();
    if toks.len() < 3 {
        return Err(perr(line, "expected `.SUBCKT <name> <ports>`"));
    }
    let (ports, params) = split_params(&toks[2..], line)?;
    if ports.len() < 2 {
        return Err(perr(line, format!("subcircuit {} needs at least one input and one output", toks[1])));
    }
    Ok(Subckt {
        name: toks[1].to_string(),
        ports,
        params,
        body: Vec::new(),
    })
}

fn parse_current(tok: &str, line: usize) -> Result<f64> {
    let t = tok.strip_suffix(['u', 'U']).ok_or_else(|| perr(line, format!("current `{tok}` must be in uA")))?;
    t.parse().map_err(|_| perr(line, format!("bad current `{tok}`")))
}

/// Parses the emitted subset back into the structural model.
pub fn parse_spice(text: &str) -> Result<Netlist> {
    // Join `+` continuations, keeping the first line number.
    let mut lines: Vec<(usize, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let l = raw.trim_end();
        if let Some(rest) = l.strip_prefix('+') {
            match lines.last_mut() {
                Some((_, prev)) if i > 0 => {
                    prev.push(' ');
                    prev.push_str(rest.trim());
                }
                _ => return Err(perr(i + 1, "continuation without a preceding line")),
            }
        } else {
            lines.push((i + 1, l.to_string()));
        }
    }
    let mut it = lines.into_iter();
    let (_, title) = it.next().ok_or_else(|| perr(1, "empty netlist"))?;
    let mut nl = Netlist {
        title,
        ..Netlist::default()
    };
    let mut ended = false;
    let mut names = BTreeSet::new();
    let mut open: Option<Subckt> = None;
    for (ln, l) in it {
        let t = l.trim();
        if t.is_empty() {
            continue;
        }
        let toks: Vec<&str> = t.split_whitespace().collect();
        let kw = toks[0].to_ascii_uppercase();
        if let Some(sc) = open.as_mut() {
            if kw == ".ENDS" {
                nl.subckts.push(open.take().expect("open"));
            } else {
                sc.body.push(t.to_string());
            }
            continue;
        }
        if t.starts_with('*') {
            let c: Vec<&str> = t[1..].split_whitespace().collect();
            match c.as_slice() {
                ["gamma", g, "uA"] => {
                    nl.gamma_ua = Some(g.parse().map_err(|_| perr(ln, format!("bad gamma `{g}`")))?)
                }
                ["STIMULUS", net, rail, ..] if matches!(*rail, "true" | "complement") && c.len() >= 4 => {
                    let prefix = t.find(rail).expect("present") + rail.len();
                    nl.stimuli.push(StimulusMarker {
                        net: net.to_string(),
                        complement: *rail == "complement",
                        input: t[prefix..].trim().to_string(),
                    })
                }
                ["OUTPUT", name, net] => nl.outputs.push((name.to_string(), net.to_string())),
                ["MEASURE", net] => nl.measures.push(net.to_string()),
                _ => {}
            }
            continue;
        }
        match kw.as_str() {
            ".SUBCKT" => {
                let sc = parse_subckt_header(t, ln)?;
                if nl.subckts.iter().any(|s| s.name.eq_ignore_ascii_case(&sc.name)) {
                    return Err(perr(ln, format!("subcircuit {} defined twice", sc.name)));
                }
                open = Some(sc);
            }
            ".OP" => nl.directives.push(t.to_string()),
            ".END" => {
                ended = true;
                break;
            }
            _ if kw.starts_with('X') => {
                let (pos, params) = split_params(&toks[1..], ln)?;
                let Some((subckt, nets)) = pos.split_last() else {
                    return Err(perr(ln, "instance without subcircuit"));
                };
                let def = nl
                    .subckts
                    .iter()
                    .find(|s| s.name.eq_ignore_ascii_case(subckt))
                    .ok_or_else(|| perr(ln, format!("undefined subcircuit {subckt}")))?;
                if def.ports.len() != nets.len() {
                    return Err(perr(
                        ln,
                        format!(
                            "{} connects {} nets to {subckt} with {} ports",
                            toks[0],
                            nets.len(),
                            def.ports.len()
                        ),
                    ));
                }
                if !names.insert(toks[0].to_ascii_uppercase()) {
                    return Err(perr(ln, format!("duplicate instance {}", toks[0])));
                }
                nl.instances.push(XLine {
                    name: toks[0].to_string(),
                    nets: nets.to_vec(),
                    subckt: subckt.clone(),
                    params,
                });
            }
            _ if kw.starts_with('I') => {
                if toks.len() != 5 || toks[1] != "0" || !toks[3].eq_ignore_ascii_case("dc") {
                    return Err(perr(ln, "expected `I<name> 0 <net> DC <value>u`"));
                }
                if !names.insert(toks[0].to_ascii_uppercase()) {
                    return Err(perr(ln, format!("duplicate source {}", toks[0])));
                }
                nl.sources.push(ISource {
                    name: toks[0].to_string(),
                    node: toks[2].to_string(),
                    value_ua: parse_current(toks[4], ln)?,
                });
            }
            _ => return Err(perr(ln, format!("unsupported line `{t}`"))),
        }
    }
    if let Some(sc) = open {
        return Err(perr(0, format!("subcircuit {} lacks .ENDS", sc.name)));
    }
    if !ended {
        return Err(perr(0, "missing .END"));
    }
    Ok(nl)
}

/// Structural equality of two maps up to net renaming.
pub fn same_structure(a: &AnalogMap, b: &AnalogMap) -> bool {
    if a.instances().len() != b.instances().len()
        || a.inputs() != b.inputs()
        || a.outputs().len() != b.outputs().len()
        || a.nets().len() != b.nets().len()
    {
        return false;
    }
    let mut fwd: HashMap<NetId, NetId> = HashMap::new();
    let mut bwd: HashMap<NetId, NetId> = HashMap::new();
    let mut pair = |x: NetId, y: NetId| -> bool {
        *fwd.entry(x).or_insert(y) == y && *bwd.entry(y).or_insert(x) == x
    };
    for (i, j) in a.instances().iter().zip(b.instances()) {
        if i.kind != j.kind
            || i.splines != j.splines
            || i.inputs.len() != j.inputs.len()
            || i.params.len() != j.params.len()
            || i.params.iter().zip(&j.params).any(|(p, q)| p.0 != q.0 || (p.1 - q.1).abs() > 1e-12)
        {
            return false;
        }
        for (&x, &y) in i.inputs.iter().zip(&j.inputs).chain([(&i.output, &j.output)]) {
            if !pair(x, y) {
                return false;
            }
        }
    }
    for ((na, x), (nb, y)) in a.outputs().iter().zip(b.outputs()) {
        if na != nb || !pair(*x, *y) {
            return false;
        }
    }
    fwd.iter().all(|(&x, &y)| match (&a.net(x).driver, &b.net(y).driver) {
        (Some(Driver::Fixed(u)), Some(Driver::Fixed(v))) => (u - v).abs() < 1e-12,
        (da, db) => da == db || matches!((da, db), (Some(Driver::Instance(_)), Some(Driver::Instance(_)))),
    })
}
