//! Recordings, datasets, the on-disk dataset layout and the synthetic generator.

mod io;
mod synth;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use io::{
    load_dataset, load_phoneme_labels, save_dataset, save_phoneme_labels, Manifest, ManifestEntry,
    ManifestFiles, MANIFEST_VERSION,
};
pub use synth::{synth_dataset, SynthConfig};

use crate::alignment::PhonemeSequence;
use crate::analysis::PhonemeInventory;
use crate::dsp::{FeatureSequence, RawSignal, FEATURE_RATE, RAW_RATE};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Silent,
    Vocalized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// One utterance of raw EMG plus whatever targets exist for it.
#[derive(Clone, Debug, PartialEq)]
pub struct EmgRecording {
    pub utterance_id: String,
    pub session: usize,
    pub mode: Mode,
    pub raw: RawSignal,
    pub transcript: Vec<String>,
    /// Vocalized partner of a silent recording.
    pub paired_id: Option<String>,
    pub audio_features: Option<FeatureSequence>,
    pub phoneme_labels: Option<PhonemeSequence>,
}

impl EmgRecording {
    pub fn is_silent(&self) -> bool {
        self.mode == Mode::Silent
    }
}

/// Immutable collection of recordings with split and session tables.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    recordings: Vec<EmgRecording>,
    splits: BTreeMap<String, Split>,
    sessions: Vec<String>,
    inventory: PhonemeInventory,
    index: HashMap<String, usize>,
}

impl Dataset {
    /// Checks ids, targets, pairing, sessions and split consistency.
    pub fn new(
        recordings: Vec<EmgRecording>,
        splits: BTreeMap<String, Split>,
        sessions: Vec<String>,
        inventory: PhonemeInventory,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(recordings.len());
        for (i, r) in recordings.iter().enumerate() {
            if index.insert(r.utterance_id.clone(), i).is_some() {
                return Err(Error::Data(format!(
                    "duplicate utterance id {}",
                    r.utterance_id
                )));
            }
        }
        let ds = Self {
            recordings,
            splits,
            sessions,
            inventory,
            index,
        };
        ds.validate()?;
        Ok(ds)
    }

    fn validate(&self) -> Result<()> {
        for id in self.splits.keys() {
            if !self.index.contains_key(id) {
                return Err(Error::Data(format!(
                    "split assigned to unknown utterance {id}"
                )));
            }
        }
        for r in &self.recordings {
            let id = &r.utterance_id;
            if r.session >= self.sessions.len() {
                return Err(Error::Data(format!(
                    "{id}: session {} not in session table",
                    r.session
                )));
            }
            if r.raw.sample_rate() != RAW_RATE {
                return Err(Error::Data(format!(
                    "{id}: sample rate {} Hz, expected {RAW_RATE}",
                    r.raw.sample_rate()
                )));
            }
            let split = self
                .splits
                .get(id)
                .ok_or_else(|| Error::Data(format!("{id}: no split assigned")))?;
            match r.mode {
                Mode::Vocalized => {
                    let (Some(feat), Some(labels)) = (&r.audio_features, &r.phoneme_labels) else {
                        return Err(Error::Data(format!(
                            "{id}: vocalized recording without features and labels"
                        )));
                    };
                    if feat.n_frames() != labels.len() {
                        return Err(Error::Data(format!(
                            "{id}: {} feature frames but {} labels",
                            feat.n_frames(),
                            labels.len()
                        )));
                    }
                    if let Some(bad) = labels.labels().iter().find(|&&l| l >= self.inventory.len())
                    {
                        return Err(Error::Data(format!(
                            "{id}: phoneme id {bad} outside inventory"
                        )));
                    }
                    if r.paired_id.is_some() {
                        return Err(Error::Data(format!(
                            "{id}: vocalized recording has a paired id"
                        )));
                    }
                }
                Mode::Silent => {
                    let pid = r.paired_id.as_ref().ok_or_else(|| {
                        Error::Data(format!("{id}: silent recording without paired id"))
                    })?;
                    let partner = self.get(pid).ok_or_else(|| {
                        Error::Data(format!("{id}: paired utterance {pid} missing"))
                    })?;
                    if partner.mode != Mode::Vocalized {
                        return Err(Error::Data(format!(
                            "{id}: paired utterance {pid} is not vocalized"
                        )));
                    }
                    if self.splits.get(pid) != Some(split) {
                        return Err(Error::Data(format!(
                            "{id}: paired utterance {pid} is in a different split"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn recordings(&self) -> &[EmgRecording] {
        &self.recordings
    }

    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&EmgRecording> {
        self.index.get(id).map(|&i| &self.recordings[i])
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.splits.get(id).copied()
    }

    pub fn splits(&self) -> &BTreeMap<String, Split> {
        &self.splits
    }

    pub fn sessions(&self) -> &[String] {
        &self.sessions
    }

    pub fn inventory(&self) -> &PhonemeInventory {
        &self.inventory
    }

    /// Recordings in `split`, in dataset order.
    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &EmgRecording> {
        self.recordings
            .iter()
            .filter(move |r| self.splits.get(&r.utterance_id) == Some(&split))
    }

    /// Features and labels that supervise `r`: its own when vocalized, its partner's when silent.
    pub fn targets_for<'a>(
        &'a self,
        r: &'a EmgRecording,
    ) -> Result<(&'a FeatureSequence, &'a PhonemeSequence)> {
        let source = match r.mode {
            Mode::Vocalized => r,
            Mode::Silent => {
                let pid = r.paired_id.as_deref().unwrap_or_default();
                self.get(pid).ok_or_else(|| {
                    Error::Data(format!("{}: paired utterance missing", r.utterance_id))
                })?
            }
        };
        match (&source.audio_features, &source.phoneme_labels) {
            (Some(f), Some(l)) => Ok((f, l)),
            _ => Err(Error::Data(format!("{}: no targets", source.utterance_id))),
        }
    }
}

/// Number of 100 Hz frames covered by `samples` raw samples at 1000 Hz.
pub fn frames_for_raw(samples: usize) -> usize {
    samples / (RAW_RATE / FEATURE_RATE) as usize
}
