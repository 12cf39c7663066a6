//! Frame-level phoneme confusion statistics.

use std::io::Write;

use ndarray::Array2;

use super::PhonemeInventory;
use crate::{Error, Result};

/// `e[p1][p2]`: frames labelled `p1` predicted as `p2`; `f[p]`: frames labelled `p`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionCounts {
    e: Array2<u64>,
    f: Vec<u64>,
}

impl ConfusionCounts {
    pub fn new(n_phonemes: usize) -> Self {
        Self {
            e: Array2::zeros((n_phonemes, n_phonemes)),
            f: vec![0; n_phonemes],
        }
    }

    /// Builds counts from an explicit matrix; `f` is its row sums.
    pub fn from_matrix(e: Array2<u64>) -> Result<Self> {
        if e.nrows() != e.ncols() {
            return Err(Error::Input("confusion matrix must be square".into()));
        }
        let f = e.rows().into_iter().map(|r| r.sum()).collect();
        Ok(Self { e, f })
    }

    /// Counts `(label, predicted)` pairs, skipping frames labelled `skip`.
    pub fn from_pairs(
        pairs: &[(usize, usize)],
        n_phonemes: usize,
        skip: Option<usize>,
    ) -> Result<Self> {
        let mut c = Self::new(n_phonemes);
        for &(l, p) in pairs {
            if Some(l) != skip {
                c.add(l, p)?;
            }
        }
        Ok(c)
    }

    pub fn add(&mut self, label: usize, predicted: usize) -> Result<()> {
        let n = self.f.len();
        if label >= n || predicted >= n {
            return Err(Error::Input(format!("phoneme id outside inventory of {n}")));
        }
        self.e[[label, predicted]] += 1;
        self.f[label] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) {
        self.e += &other.e;
        for (a, b) in self.f.iter_mut().zip(&other.f) {
            *a += b;
        }
    }

    pub fn e(&self) -> &Array2<u64> {
        &self.e
    }

    pub fn f(&self) -> &[u64] {
        &self.f
    }

    pub fn n_phonemes(&self) -> usize {
        self.f.len()
    }
}

fn pair_ratio(c: &ConfusionCounts, p1: usize, p2: usize, num: u64) -> Option<f64> {
    let den = c.f[p1] + c.f[p2];
    (den > 0).then(|| num as f64 / den as f64)
}

/// `(e[p1][p2] + e[p2][p1]) / (f[p1] + f[p2])`; `None` when both phonemes are absent.
pub fn confusion(c: &ConfusionCounts, p1: usize, p2: usize) -> Option<f64> {
    pair_ratio(c, p1, p2, c.e[[p1, p2]] + c.e[[p2, p1]])
}

/// `(e[p1][p1] + e[p2][p2]) / (f[p1] + f[p2])`; `None` when both phonemes are absent.
pub fn pair_accuracy(c: &ConfusionCounts, p1: usize, p2: usize) -> Option<f64> {
    pair_ratio(c, p1, p2, c.e[[p1, p1]] + c.e[[p2, p2]])
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairStat {
    pub p1: usize,
    pub p2: usize,
    pub confusion: f64,
    pub accuracy: f64,
}

/// All unordered pairs with data, silence excluded, sorted by descending confusion
/// (ties by ids).
pub fn pair_report(c: &ConfusionCounts, inventory: &PhonemeInventory) -> Vec<PairStat> {
    let n = c.n_phonemes();
    let mut out = Vec::new();
    for p1 in 0..n {
        for p2 in p1 + 1..n {
            if inventory.is_silence(p1) || inventory.is_silence(p2) {
                continue;
            }
            if let (Some(confusion), Some(accuracy)) =
                (confusion(c, p1, p2), pair_accuracy(c, p1, p2))
            {
                out.push(PairStat {
                    p1,
                    p2,
                    confusion,
                    accuracy,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        b.confusion
            .total_cmp(&a.confusion)
            .then(a.p1.cmp(&b.p1))
            .then(a.p2.cmp(&b.p2))
    });
    out
}

pub const PAIR_REPORT_HEADER: &str = "phoneme1,phoneme2,confusion,accuracy";

pub fn write_pair_report(
    w: &mut impl Write,
    stats: &[PairStat],
    inventory: &PhonemeInventory,
) -> std::io::Result<()> {
    writeln!(w, "{PAIR_REPORT_HEADER}")?;
    for s in stats {
        writeln!(
            w,
            "{},{},{:.6},{:.6}",
            inventory.symbol(s.p1),
            inventory.symbol(s.p2),
            s.confusion,
            s.accuracy
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn formula_arithmetic() {
        let c = ConfusionCounts::from_matrix(array![[16, 3], [1, 19]]).unwrap();
        assert_eq!(c.f(), &[19, 20]);
        let c = ConfusionCounts::from_matrix(array![[17, 3], [1, 19]]).unwrap();
        assert!((confusion(&c, 0, 1).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(confusion(&c, 0, 1), confusion(&c, 1, 0));
        let c = ConfusionCounts::from_matrix(array![[5, 5], [5, 5]]).unwrap();
        assert_eq!(pair_accuracy(&c, 0, 1), Some(0.5));
    }

    #[test]
    fn absent_pair_undefined() {
        let c = ConfusionCounts::new(3);
        assert_eq!(confusion(&c, 0, 1), None);
        assert_eq!(pair_accuracy(&c, 0, 1), None);
    }

    #[test]
    fn silence_skipped() {
        let c = ConfusionCounts::from_pairs(&[(0, 1), (1, 1), (2, 1)], 3, Some(0)).unwrap();
        assert_eq!(c.f(), &[0, 1, 1]);
        assert!(ConfusionCounts::from_pairs(&[(5, 0)], 3, None).is_err());
    }

    #[test]
    fn report_sorted_and_formatted() {
        let inv = PhonemeInventory::synthetic(4).unwrap();
        let c = ConfusionCounts::from_matrix(array![
            [9, 0, 0, 0],
            [0, 8, 2, 0],
            [0, 1, 9, 0],
            [0, 0, 5, 5]
        ])
        .unwrap();
        let r = pair_report(&c, &inv);
        assert!(r.windows(2).all(|w| w[0].confusion >= w[1].confusion));
        assert!(r.iter().all(|s| s.p1 != 0 && s.p2 != 0));
        let mut buf = Vec::new();
        write_pair_report(&mut buf, &r, &inv).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next(), Some(PAIR_REPORT_HEADER));
        assert!(text.lines().nth(1).unwrap().starts_with("b,t,"));
    }
}
