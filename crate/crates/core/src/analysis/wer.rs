//! Word error rate.

use crate::{Error, Result};

/// Minimal substitutions + insertions + deletions turning `hypothesis` into `reference`.
pub fn edit_distance<T: PartialEq>(hypothesis: &[T], reference: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=reference.len()).collect();
    let mut cur = vec![0; reference.len() + 1];
    for (i, h) in hypothesis.iter().enumerate() {
        cur[0] = i + 1;
        for (j, r) in reference.iter().enumerate() {
            let sub = prev[j] + usize::from(h != r);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[reference.len()]
}

/// Edit distance divided by the reference length.
pub fn wer<S: AsRef<str>>(hypothesis: &[S], reference: &[S]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::Input(
            "word error rate needs a non-empty reference".into(),
        ));
    }
    let h: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    Ok(edit_distance(&h, &r) as f64 / r.len() as f64)
}
