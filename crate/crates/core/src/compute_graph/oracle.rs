use super::Evidence;
use crate::graph_ir::{FactorGraph, VarId};
use crate::{Error, Result};

/// Enumeration ceiling for [`brute_force_marginal`].
pub const MAX_ENUM_VARS: usize = 24;

/// `P(query = 1 | evidence)` by summing the factor product over every
/// assignment consistent with the evidence.
pub fn brute_force_marginal(fg: &FactorGraph, query: VarId, evidence: &Evidence) -> Result<f64> {
    let n = fg.variables().len();
    if query >= n {
        return Err(Error::Query(format!("unknown query variable {query}")));
    }
    let mut fixed = vec![None; n];
    for &(v, val) in evidence {
        if v >= n || val > 1 {
            return Err(Error::Query(format!("bad evidence ({v}, {val})")));
        }
        fixed[v] = Some(val);
    }
    if fixed[query].is_some() {
        return Err(Error::Query("query variable is also evidence".into()));
    }
    let free: Vec<VarId> = (0..n).filter(|&v| fixed[v].is_none()).collect();
    if free.len() > MAX_ENUM_VARS {
        return Err(Error::TooManyVariables {
            n: free.len(),
            max: MAX_ENUM_VARS,
        });
    }
    let mut assign: Vec<u8> = fixed.iter().map(|f| f.unwrap_or(0)).collect();
    let (mut num, mut den) = (0.0, 0.0);
    for code in 0u64..(1u64 << free.len()) {
        for (k, &v) in free.iter().enumerate() {
            assign[v] = ((code >> k) & 1) as u8;
        }
        let w = fg.unnormalized(&assign);
        den += w;
        if assign[query] == 1 {
            num += w;
        }
    }
    if den == 0.0 {
        return Err(Error::DegenerateEvidence(query));
    }
    Ok(num / den)
}
