use super::CostMatrix;
use crate::{Error, Result};

/// A monotonic corner-to-corner path and its first-match map.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentPath {
    path: Vec<(usize, usize)>,
    map: Vec<usize>,
    cost: f64,
}

impl AlignmentPath {
    pub(crate) fn from_path(path: Vec<(usize, usize)>, cost: f64) -> Self {
        let mut map = Vec::new();
        for &(i, j) in &path {
            if i == map.len() {
                map.push(j);
            }
        }
        Self { path, map, cost }
    }

    /// Identity alignment over `n` frames.
    pub fn diagonal(n: usize, cost: f64) -> Self {
        Self::from_path((0..n).map(|i| (i, i)).collect(), cost)
    }

    pub fn path(&self) -> &[(usize, usize)] {
        &self.path
    }

    /// `map()[i]` is the first predicted frame paired with target frame `i`.
    pub fn map(&self) -> &[usize] {
        &self.map
    }

    /// Sum of the costs of every visited cell.
    pub fn cost(&self) -> f64 {
        self.cost
    }
}

/// Minimum-cost path under steps (1,1), (1,0), (0,1), each visited cell counted once.
///
/// Backtrace ties prefer the diagonal, then (1,0), then (0,1).
pub fn dtw(cost: &CostMatrix) -> Result<AlignmentPath> {
    let c = cost.values();
    let (n, m) = c.dim();
    if n == 0 || m == 0 {
        return Err(Error::Input("cannot align an empty cost matrix".into()));
    }
    let mut acc = vec![0.0f64; n * m];
    let at = |i: usize, j: usize| i * m + j;
    for i in 0..n {
        for j in 0..m {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => acc[at(0, j - 1)],
                (_, 0) => acc[at(i - 1, 0)],
                _ => acc[at(i - 1, j - 1)]
                    .min(acc[at(i - 1, j)])
                    .min(acc[at(i, j - 1)]),
            };
            acc[at(i, j)] = c[[i, j]] + best;
        }
    }
    let (mut i, mut j) = (n - 1, m - 1);
    let mut rev = vec![(i, j)];
    while (i, j) != (0, 0) {
        (i, j) = match (i, j) {
            (0, _) => (0, j - 1),
            (_, 0) => (i - 1, 0),
            _ => {
                let diag = acc[at(i - 1, j - 1)];
                let up = acc[at(i - 1, j)];
                let left = acc[at(i, j - 1)];
                if diag <= up && diag <= left {
                    (i - 1, j - 1)
                } else if up <= left {
                    (i - 1, j)
                } else {
                    (i, j - 1)
                }
            }
        };
        rev.push((i, j));
    }
    rev.reverse();
    Ok(AlignmentPath::from_path(rev, acc[at(n - 1, m - 1)]))
}
