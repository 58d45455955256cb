//! Parity-check matrices, the alist interchange format and the LDPC
//! frontend.

use std::fmt::Write as _;

use rand::Rng;

use super::{binary_var, FactorGraph, FactorKind, FactorNode};
use crate::{Error, Result};

/// Sparse binary matrix stored as sorted per-row column lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    rows: usize,
    cols: usize,
    row_lists: Vec<Vec<usize>>,
}

impl ParityCheckMatrix {
    pub fn new(rows: usize, cols: usize, mut row_lists: Vec<Vec<usize>>) -> Result<Self> {
        if row_lists.len() != rows {
            return Err(Error::Invalid(format!("{} row lists for {rows} rows", row_lists.len())));
        }
        for (r, l) in row_lists.iter_mut().enumerate() {
            l.sort_unstable();
            if l.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Invalid(format!("row {r} repeats a column")));
            }
            if let Some(&c) = l.last() {
                if c >= cols {
                    return Err(Error::Invalid(format!("row {r} column {c} out of range")));
                }
            }
        }
        Ok(ParityCheckMatrix { rows, cols, row_lists })
    }

    pub fn from_dense(dense: &[Vec<u8>]) -> Result<Self> {
        let cols = dense.first().map_or(0, Vec::len);
        let lists = dense
            .iter()
            .map(|r| {
                if r.len() != cols {
                    return Err(Error::Invalid("ragged dense matrix".into()));
                }
                Ok(r.iter().enumerate().filter(|(_, &b)| b != 0).map(|(c, _)| c).collect())
            })
            .collect::<Result<_>>()?;
        Self::new(dense.len(), cols, lists)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.row_lists[r]
    }

    pub fn nnz(&self) -> usize {
        self.row_lists.iter().map(Vec::len).sum()
    }

    pub fn col_lists(&self) -> Vec<Vec<usize>> {
        let mut cols = vec![Vec::new(); self.cols];
        for (r, l) in self.row_lists.iter().enumerate() {
            for &c in l {
                cols[c].push(r);
            }
        }
        cols
    }

    pub fn row_weights(&self) -> Vec<usize> {
        self.row_lists.iter().map(Vec::len).collect()
    }

    pub fn col_weights(&self) -> Vec<usize> {
        self.col_lists().iter().map(Vec::len).collect()
    }

    /// Syndrome check `H x = 0`.
    pub fn is_codeword(&self, bits: &[u8]) -> bool {
        self.row_lists
            .iter()
            .all(|l| l.iter().fold(0u8, |acc, &c| acc ^ bits[c]) == 0)
    }

    /// Random matrix with each entry set independently with probability
    /// `density`.
    pub fn random<R: Rng>(rows: usize, cols: usize, density: f64, rng: &mut R) -> Self {
        let lists = (0..rows)
            .map(|_| (0..cols).filter(|_| rng.random_bool(density)).collect())
            .collect();
        ParityCheckMatrix { rows, cols, row_lists: lists }
    }

    pub fn to_alist(&self) -> String {
        let cols = self.col_lists();
        let max_c = cols.iter().map(Vec::len).max().unwrap_or(0);
        let max_r = self.row_lists.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.cols, self.rows);
        let _ = writeln!(out, "{max_c} {max_r}");
        let join = |v: &mut dyn Iterator<Item = usize>| {
            v.map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
        };
        let _ = writeln!(out, "{}", join(&mut cols.iter().map(Vec::len)));
        let _ = writeln!(out, "{}", join(&mut self.row_lists.iter().map(Vec::len)));
        for c in &cols {
            let padded = c.iter().map(|r| r + 1).chain(std::iter::repeat(0)).take(max_c);
            let _ = writeln!(out, "{}", join(&mut padded.into_iter()));
        }
        for r in &self.row_lists {
            let padded = r.iter().map(|c| c + 1).chain(std::iter::repeat(0)).take(max_r);
            let _ = writeln!(out, "{}", join(&mut padded.into_iter()));
        }
        out
    }
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        what: "alist",
        line,
        col,
        msg: msg.into(),
    }
}

/// Parses the alist format. Zero entries in the index lists are padding.
/// The column and row sections must describe the same matrix.
pub fn parse_alist(text: &str) -> Result<ParityCheckMatrix> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, super::bn::tokens(l)))
        .filter(|(_, t)| !t.is_empty());
    let mut next_line = |what: &str| -> Result<(usize, Vec<(usize, usize)>)> {
        let (ln, toks) = lines
            .next()
            .ok_or_else(|| perr(text.lines().count() + 1, 1, format!("unexpected end of input, expected {what}")))?;
        let nums = toks
            .iter()
            .map(|&(col, t)| {
                t.parse::<usize>()
                    .map(|v| (col, v))
                    .map_err(|_| perr(ln, col, format!("expected integer, found `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((ln, nums))
    };
    let expect_len = |ln: usize, v: &[(usize, usize)], n: usize, what: &str| -> Result<()> {
        if v.len() != n {
            return Err(perr(ln, 1, format!("{what}: expected {n} values, found {}", v.len())));
        }
        Ok(())
    };

    let (ln, dims) = next_line("dimensions")?;
    expect_len(ln, &dims, 2, "dimensions")?;
    let (n, m) = (dims[0].1, dims[1].1);
    if n == 0 || m == 0 {
        return Err(perr(ln, 1, "empty matrix"));
    }
    let (ln, maxes) = next_line("max degrees")?;
    expect_len(ln, &maxes, 2, "max degrees")?;
    let (max_c, max_r) = (maxes[0].1, maxes[1].1);
    let (ln, cdeg) = next_line("column degrees")?;
    expect_len(ln, &cdeg, n, "column degrees")?;
    let (ln, rdeg) = next_line("row degrees")?;
    expect_len(ln, &rdeg, m, "row degrees")?;

    let mut read_lists = |count: usize, width: usize, degs: &[(usize, usize)], bound: usize, what: &str| {
        let mut lists = Vec::with_capacity(count);
        for i in 0..count {
            let (ln, v) = next_line(what)?;
            if v.len() < degs[i].1 || v.len() > width.max(degs[i].1) {
                return Err(perr(ln, 1, format!("{what} {}: bad entry count {}", i + 1, v.len())));
            }
            let mut list = Vec::with_capacity(degs[i].1);
            for (k, &(col, x)) in v.iter().enumerate() {
                if k < degs[i].1 {
                    if x == 0 || x > bound {
                        return Err(perr(ln, col, format!("index {x} out of range 1..={bound}")));
                    }
                    list.push(x - 1);
                } else if x != 0 {
                    return Err(perr(ln, col, "nonzero entry beyond declared degree"));
                }
            }
            lists.push(list);
        }
        Ok::<_, Error>(lists)
    };
    let col_lists = read_lists(n, max_c, &cdeg, m, "column")?;
    let row_lists = read_lists(m, max_r, &rdeg, n, "row")?;

    let h = ParityCheckMatrix::new(m, n, row_lists)?;
    let mut from_cols = col_lists;
    for l in from_cols.iter_mut() {
        l.sort_unstable();
    }
    if from_cols != h.col_lists() {
        return Err(perr(1, 1, "column and row index lists disagree"));
    }
    Ok(h)
}

/// Tanner graph of a parity-check matrix: one variable per column, one
/// parity factor per row.
pub fn parity_to_factor_graph(h: &ParityCheckMatrix) -> Result<FactorGraph> {
    if h.rows == 0 || h.cols == 0 || h.nnz() == 0 {
        return Err(Error::InvalidGraph("empty parity-check matrix".into()));
    }
    if let Some(r) = h.row_lists.iter().position(Vec::is_empty) {
        return Err(Error::InvalidGraph(format!("parity-check row {r} is all zero")));
    }
    let variables = (0..h.cols).map(|c| binary_var(c, format!("x{c}"))).collect();
    let factors = h
        .row_lists
        .iter()
        .enumerate()
        .map(|(r, l)| FactorNode {
            id: r,
            kind: FactorKind::Parity,
            scope: l.clone(),
            table: Vec::new(),
            label: format!("chk{r}"),
        })
        .collect();
    FactorGraph::new(variables, factors, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn one_by_one() {
        let h = ParityCheckMatrix::from_dense(&[vec![1]]).unwrap();
        let fg = parity_to_factor_graph(&h).unwrap();
        assert_eq!(fg.variables().len(), 1);
        assert_eq!(fg.factors().len(), 1);
        assert!(h.is_codeword(&[0]));
        assert!(!h.is_codeword(&[1]));
    }

    #[test]
    fn empty_rejected() {
        let h = ParityCheckMatrix::new(2, 3, vec![vec![], vec![]]).unwrap();
        assert!(parity_to_factor_graph(&h).is_err());
        assert!(parse_alist("0 0\n0 0\n\n\n").is_err());
    }

    #[test]
    fn random_sparse_degrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let h = ParityCheckMatrix::random(5, 10, 0.3, &mut rng);
            if (0..5).any(|r| h.row(r).is_empty()) {
                assert!(parity_to_factor_graph(&h).is_err());
                continue;
            }
            let fg = parity_to_factor_graph(&h).unwrap();
            let mut nnz = 0;
            let mut cw = vec![0; 10];
            for r in 0..5 {
                for c in 0..10 {
                    if h.row(r).contains(&c) {
                        nnz += 1;
                        cw[c] += 1;
                    }
                }
            }
            assert_eq!(fg.edge_count(), nnz);
            for (v, w) in cw.iter().enumerate() {
                assert_eq!(fg.factors_of(v).len(), *w);
            }
            for f in fg.factors() {
                assert_eq!(f.scope.len(), h.row(f.id).len());
            }
            assert_eq!(parse_alist(&h.to_alist()).unwrap(), h);
        }
    }

    #[test]
    fn alist_diagnostics() {
        let bad = "3 2\n2 3\n1 1 1\n2 1\n1 0\n1 x\n2 0\n1 2 3\n1 0 0\n";
        match parse_alist(bad) {
            Err(Error::Parse { line, col, .. }) => assert_eq!((line, col), (6, 3)),
            other => panic!("{other:?}"),
        }
        let inconsistent = "2 1\n1 2\n1 1\n2\n1\n1\n1 0\n";
        assert!(parse_alist(inconsistent).is_err());
    }
}
