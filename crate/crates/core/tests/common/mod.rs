#![allow(dead_code)]

use std::path::PathBuf;

use mpforge::analog_map::{AnalogMap, CellKind, NetId};
use rand::Rng;

/// Random valid map: stimulus and fixed sources, then 0..12 random cells
/// over earlier nets. Every unloaded net becomes an output.
pub fn random_map<R: Rng>(rng: &mut R) -> AnalogMap {
    let mut am = AnalogMap::new();
    let mut pool: Vec<NetId> = Vec::new();
    for i in 0..rng.random_range(0..4) {
        let (t, c) = am.stimulus(&format!("p(x{i}=1 | e)"));
        pool.push(am.instance(CellKind::CurrentSrc, 0, vec![t, c], vec![]));
    }
    if pool.is_empty() || rng.random_bool(0.5) {
        let (t, c) = am.fixed(rng.random_range(0.0..1.0));
        pool.push(am.instance(CellKind::CurrentSrc, 0, vec![t, c], vec![]));
    }
    let kinds: Vec<CellKind> = CellKind::ALL.into_iter().filter(|k| *k != CellKind::CurrentSrc).collect();
    for _ in 0..rng.random_range(0..12) {
        let kind = kinds[rng.random_range(0..kinds.len())];
        let arity = kind.fixed_arity().unwrap_or_else(|| rng.random_range(1..4));
        let inputs: Vec<NetId> = (0..arity).map(|_| pool[rng.random_range(0..pool.len())]).collect();
        let splines = match kind {
            CellKind::SoftAnd | CellKind::SoftOr | CellKind::MpNorm | CellKind::MpMac => [4, 8, 16][rng.random_range(0..3)],
            _ => 0,
        };
        let mut params = Vec::new();
        if kind == CellKind::MpMac {
            for k in 1..=arity {
                params.push((format!("w{k}"), rng.random_range(-2.0..2.0)));
            }
            params.push(("b".to_string(), rng.random_range(-1.0..1.0)));
        }
        pool.push(am.instance(kind, splines, inputs, params));
    }
    let mut loaded = vec![false; am.nets().len()];
    for inst in am.instances() {
        for &n in &inst.inputs {
            loaded[n] = true;
        }
    }
    let mut k = 0;
    for &n in &pool {
        if !loaded[n] || rng.random_bool(0.1) {
            am.set_output(&format!("o{k}"), n);
            k += 1;
        }
    }
    am
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden")
}

/// Compares `text` with a golden file; `MPFORGE_BLESS=1` rewrites it.
pub fn check_golden(name: &str, text: &str) -> Result<(), String> {
    let path = golden_dir().join(name);
    if std::env::var_os("MPFORGE_BLESS").is_some() {
        std::fs::create_dir_all(golden_dir()).map_err(|e| e.to_string())?;
        std::fs::write(&path, text).map_err(|e| e.to_string())?;
    }
    let want = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if want == text {
        Ok(())
    } else {
        Err(format!("{} differs from the emitted text", path.display()))
    }
}
