use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const SILENCE: &str = "sil";

/// The 39 ARPAbet phonemes, lowercase, without stress marks.
pub const ARPABET: [&str; 39] = [
    "aa", "ae", "ah", "ao", "aw", "ay", "b", "ch", "d", "dh", "eh", "er", "ey", "f", "g", "hh",
    "ih", "iy", "jh", "k", "l", "m", "n", "ng", "ow", "oy", "p", "r", "s", "sh", "t", "th", "uh",
    "uw", "v", "w", "y", "z", "zh",
];

/// Symbol order used by the synthetic generator: silence, then consonants
/// that populate the articulatory confusion sets, then the rest.
const SYNTHETIC_ORDER: [&str; 40] = [
    "sil", "p", "b", "t", "d", "k", "g", "m", "n", "s", "z", "f", "v", "th", "dh", "sh", "zh",
    "ch", "jh", "hh", "ng", "l", "r", "w", "y", "aa", "ae", "ah", "ao", "aw", "ay", "eh", "er",
    "ey", "ih", "iy", "ow", "oy", "uh", "uw",
];

/// Ordered phoneme symbols; a phoneme id is an index into this list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct PhonemeInventory {
    symbols: Vec<String>,
}

impl TryFrom<Vec<String>> for PhonemeInventory {
    type Error = Error;

    fn try_from(symbols: Vec<String>) -> Result<Self> {
        Self::new(symbols)
    }
}

impl From<PhonemeInventory> for Vec<String> {
    fn from(inv: PhonemeInventory) -> Self {
        inv.symbols
    }
}

impl PhonemeInventory {
    pub fn new(symbols: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for s in &symbols {
            if s.is_empty() || s.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid phoneme symbol {s:?}")));
            }
            if !seen.insert(s.as_str()) {
                return Err(Error::Input(format!("duplicate phoneme symbol {s:?}")));
            }
        }
        if symbols.is_empty() {
            return Err(Error::Input("empty phoneme inventory".into()));
        }
        Ok(Self { symbols })
    }

    /// Silence followed by the 39 ARPAbet phonemes.
    pub fn arpabet() -> Self {
        let symbols = std::iter::once(SILENCE)
            .chain(ARPABET)
            .map(String::from)
            .collect();
        Self { symbols }
    }

    /// The first `n` symbols of the generator order (silence first).
    pub fn synthetic(n: usize) -> Result<Self> {
        if n == 0 || n > SYNTHETIC_ORDER.len() {
            return Err(Error::Config(format!(
                "synthetic inventory size must be in 1..={}",
                SYNTHETIC_ORDER.len()
            )));
        }
        Self::new(SYNTHETIC_ORDER[..n].iter().map(|s| s.to_string()).collect())
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn symbol(&self, id: usize) -> &str {
        &self.symbols[id]
    }

    pub fn id(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }

    pub fn silence(&self) -> Option<usize> {
        self.id(SILENCE)
    }

    pub fn is_silence(&self, id: usize) -> bool {
        self.symbols.get(id).is_some_and(|s| s == SILENCE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arpabet_has_forty_symbols_with_silence_first() {
        let inv = PhonemeInventory::arpabet();
        assert_eq!(inv.len(), 40);
        assert_eq!(inv.silence(), Some(0));
        assert_eq!(inv.id("zh"), Some(39));
    }

    #[test]
    fn synthetic_prefix() {
        let inv = PhonemeInventory::synthetic(10).unwrap();
        assert_eq!(inv.symbols().join(" "), "sil p b t d k g m n s");
        assert!(PhonemeInventory::synthetic(0).is_err());
        // every generator symbol is a real phoneme
        let full = PhonemeInventory::arpabet();
        for s in PhonemeInventory::synthetic(40).unwrap().symbols() {
            assert!(full.id(s).is_some(), "{s}");
        }
    }

    #[test]
    fn duplicates_rejected() {
        assert!(PhonemeInventory::new(vec!["a".into(), "a".into()]).is_err());
        let parsed: std::result::Result<PhonemeInventory, _> = serde_json::from_str(r#"["x","x"]"#);
        assert!(parsed.is_err());
    }
}
