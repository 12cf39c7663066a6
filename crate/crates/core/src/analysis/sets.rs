//! Articulatory confusion sets.

use super::PhonemeInventory;
use crate::{Error, Result};

/// Feature name → phoneme sets, in IPA as published.
const TABLE: [(&str, &[&[&str]]); 4] = [
    (
        "Place",
        &[
            &["p", "t", "k"],
            &["b", "d", "g"],
            &["m", "n", "ŋ"],
            &["f", "θ", "s", "ʃ", "h"],
            &["v", "ð", "z", "ʒ"],
        ],
    ),
    (
        "Oral manner",
        &[
            &["t", "s"],
            &["d", "z", "l", "r"],
            &["ʃ", "tʃ"],
            &["ʒ", "dʒ"],
        ],
    ),
    ("Nasality", &[&["b", "m"], &["d", "n"], &["g", "ŋ"]]),
    (
        "Voicing",
        &[
            &["p", "b"],
            &["t", "d"],
            &["k", "g"],
            &["f", "v"],
            &["θ", "ð"],
            &["s", "z"],
            &["ʃ", "ʒ"],
            &["tʃ", "dʒ"],
        ],
    ),
];

/// ARPAbet spelling of an IPA consonant from the table.
pub fn ipa_to_arpabet(ipa: &str) -> Option<&'static str> {
    Some(match ipa {
        "p" => "p",
        "t" => "t",
        "k" => "k",
        "b" => "b",
        "d" => "d",
        "g" => "g",
        "m" => "m",
        "n" => "n",
        "ŋ" => "ng",
        "f" => "f",
        "θ" => "th",
        "s" => "s",
        "ʃ" => "sh",
        "h" => "hh",
        "v" => "v",
        "ð" => "dh",
        "z" => "z",
        "ʒ" => "zh",
        "l" => "l",
        "r" => "r",
        "tʃ" => "ch",
        "dʒ" => "jh",
        _ => return None,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionSetTable {
    features: Vec<(String, Vec<Vec<String>>)>,
}

impl ConfusionSetTable {
    /// The four articulatory features (place, oral manner, nasality, voicing).
    pub fn articulatory() -> Self {
        let features = TABLE
            .iter()
            .map(|(name, sets)| {
                let sets = sets
                    .iter()
                    .map(|s| s.iter().map(|p| p.to_string()).collect())
                    .collect();
                (name.to_string(), sets)
            })
            .collect();
        Self { features }
    }

    pub fn new(features: Vec<(String, Vec<Vec<String>>)>) -> Result<Self> {
        for (name, sets) in &features {
            let mut seen = std::collections::HashSet::new();
            for s in sets {
                if s.len() < 2 {
                    return Err(Error::Input(format!(
                        "{name}: set {s:?} has fewer than two members"
                    )));
                }
                for p in s {
                    if !seen.insert(p.as_str()) {
                        return Err(Error::Input(format!(
                            "{name}: phoneme {p} appears in two sets"
                        )));
                    }
                }
            }
        }
        Ok(Self { features })
    }

    pub fn feature_names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|(n, _)| n.as_str())
    }

    pub fn sets(&self, feature: &str) -> Option<&[Vec<String>]> {
        self.features
            .iter()
            .find(|(n, _)| n == feature)
            .map(|(_, s)| s.as_slice())
    }

    /// One line per feature: `Name: {a,b} {c,d}`.
    pub fn canonical_text(&self) -> String {
        let mut out = String::new();
        for (name, sets) in &self.features {
            out.push_str(name);
            out.push(':');
            for s in sets {
                out.push_str(" {");
                out.push_str(&s.join(","));
                out.push('}');
            }
            out.push('\n');
        }
        out
    }

    /// Sets of one feature as inventory ids. Members missing from the inventory
    /// are dropped, then sets left with fewer than two members are dropped.
    pub fn resolve(&self, feature: &str, inventory: &PhonemeInventory) -> Result<Vec<Vec<usize>>> {
        let sets = self
            .sets(feature)
            .ok_or_else(|| Error::Input(format!("unknown articulatory feature {feature:?}")))?;
        Ok(sets
            .iter()
            .map(|s| {
                s.iter()
                    .filter_map(|p| inventory.id(ipa_to_arpabet(p).unwrap_or(p)))
                    .collect::<Vec<_>>()
            })
            .filter(|s| s.len() >= 2)
            .collect())
    }
}
