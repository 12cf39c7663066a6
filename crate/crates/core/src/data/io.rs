//! Dataset directory layout: `manifest.json`, `emg/<id>.emgr`,
//! `feat/<id>.feat`, `phone/<id>.txt`.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, EmgRecording, Mode, Split};
use crate::alignment::PhonemeSequence;
use crate::analysis::PhonemeInventory;
use crate::dsp::format::{load_features, load_signal, save_features, save_signal};
use crate::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    pub phonemes: PhonemeInventory,
    pub sessions: Vec<String>,
    pub utterances: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub session: String,
    pub mode: Mode,
    pub paired_id: Option<String>,
    pub split: Split,
    #[serde(default)]
    pub transcript: Vec<String>,
    pub files: ManifestFiles,
}

/// Paths relative to the dataset root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFiles {
    pub emg: String,
    pub feat: Option<String>,
    pub phone: Option<String>,
}

fn check_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Data(format!(
            "utterance id {id:?} is not usable as a file name"
        )))
    }
}

/// Writes one symbol per line.
pub fn save_phoneme_labels(
    path: &Path,
    labels: &PhonemeSequence,
    inventory: &PhonemeInventory,
) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for &l in labels.labels() {
        writeln!(w, "{}", inventory.symbol(l)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_phoneme_labels(path: &Path, inventory: &PhonemeInventory) -> Result<PhonemeSequence> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut ids = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let sym = line.trim();
        let id = inventory.id(sym).ok_or_else(|| {
            Error::format(path, format!("line {}: unknown phoneme {sym:?}", n + 1))
        })?;
        ids.push(id);
    }
    PhonemeSequence::new(ids, inventory.len())
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes the dataset under `root`, creating directories as needed.
pub fn save_dataset(dataset: &Dataset, root: &Path) -> Result<()> {
    create_dir(root)?;
    let mut utterances = Vec::with_capacity(dataset.len());
    for r in dataset.recordings() {
        check_id(&r.utterance_id)?;
        let id = &r.utterance_id;
        let emg = format!("emg/{id}.emgr");
        create_dir(&root.join("emg"))?;
        save_signal(&root.join(&emg), &r.raw)?;
        let feat = match &r.audio_features {
            Some(f) => {
                let rel = format!("feat/{id}.feat");
                create_dir(&root.join("feat"))?;
                save_features(&root.join(&rel), f.frames())?;
                Some(rel)
            }
            None => None,
        };
        let phone = match &r.phoneme_labels {
            Some(l) => {
                let rel = format!("phone/{id}.txt");
                create_dir(&root.join("phone"))?;
                save_phoneme_labels(&root.join(&rel), l, dataset.inventory())?;
                Some(rel)
            }
            None => None,
        };
        utterances.push(ManifestEntry {
            id: id.clone(),
            session: dataset.sessions()[r.session].clone(),
            mode: r.mode,
            paired_id: r.paired_id.clone(),
            split: dataset.split_of(id).unwrap_or(Split::Train),
            transcript: r.transcript.clone(),
            files: ManifestFiles { emg, feat, phone },
        });
    }
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        phonemes: dataset.inventory().clone(),
        sessions: dataset.sessions().to_vec(),
        utterances,
    };
    let path = root.join(MANIFEST_FILE);
    let text =
        serde_json::to_string_pretty(&manifest).map_err(|e| Error::Internal(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

fn resolve(root: &Path, rel: &str, manifest: &Path) -> Result<std::path::PathBuf> {
    let p = Path::new(rel);
    if p.is_absolute()
        || p.components()
            .any(|c| matches!(c, std::path::Component::ParentDir))
    {
        return Err(Error::format(
            manifest,
            format!("file path {rel:?} escapes the dataset root"),
        ));
    }
    Ok(root.join(p))
}

/// Reads a dataset written by [`save_dataset`].
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let mpath = root.join(MANIFEST_FILE);
    let text = fs::read_to_string(&mpath).map_err(|e| Error::io(&mpath, e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| Error::format(&mpath, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::format(
            &mpath,
            format!("unsupported manifest version {}", manifest.version),
        ));
    }
    let inventory = manifest.phonemes;
    let session_index: BTreeMap<&str, usize> = manifest
        .sessions
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut recordings = Vec::with_capacity(manifest.utterances.len());
    let mut splits = BTreeMap::new();
    for e in &manifest.utterances {
        check_id(&e.id)?;
        let session = *session_index.get(e.session.as_str()).ok_or_else(|| {
            Error::format(&mpath, format!("{}: unknown session {:?}", e.id, e.session))
        })?;
        let raw = load_signal(&resolve(root, &e.files.emg, &mpath)?)?;
        let audio_features = match &e.files.feat {
            Some(rel) => Some(load_features(&resolve(root, rel, &mpath)?)?),
            None => None,
        };
        let phoneme_labels = match &e.files.phone {
            Some(rel) => {
                let path = resolve(root, rel, &mpath)?;
                let labels = load_phoneme_labels(&path, &inventory)?;
                if let Some(f) = &audio_features {
                    if f.n_frames() != labels.len() {
                        return Err(Error::format(
                            &path,
                            format!(
                                "{} labels but {} feature frames",
                                labels.len(),
                                f.n_frames()
                            ),
                        ));
                    }
                }
                Some(labels)
            }
            None => None,
        };
        splits.insert(e.id.clone(), e.split);
        recordings.push(EmgRecording {
            utterance_id: e.id.clone(),
            session,
            mode: e.mode,
            raw,
            transcript: e.transcript.clone(),
            paired_id: e.paired_id.clone(),
            audio_features,
            phoneme_labels,
        });
    }
    Dataset::new(recordings, splits, manifest.sessions, inventory)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_dataset_writes_manifest_only() {
        let dir = tempfile::tempdir().unwrap();
        let ds =
            Dataset::new(vec![], BTreeMap::new(), vec![], PhonemeInventory::arpabet()).unwrap();
        save_dataset(&ds, dir.path()).unwrap();
        let names: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        assert_eq!(names, vec![MANIFEST_FILE]);
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
    }

    #[test]
    fn bad_ids_rejected() {
        assert!(check_id("../x").is_err());
        assert!(check_id(".hidden").is_err());
        assert!(check_id("u0001_sil").is_ok());
    }

    #[test]
    fn unknown_manifest_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join(MANIFEST_FILE),
            r#"{"version":1,"phonemes":["sil"],"sessions":[],"utterances":[],"extra":1}"#,
        )
        .unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert!(err.to_string().contains("manifest.json"), "{err}");
    }
}
