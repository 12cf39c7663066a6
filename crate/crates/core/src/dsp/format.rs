//! Binary signal and feature files.
//!
//! Signal file (`.emgr`): magic `EMGR`, version `u16`, channels `u16`,
//! sample rate `u32`, length `u64`, then interleaved `f32` samples
//! (sample-major). Feature file (`.feat`): magic `FEAT`, frame count `u64`,
//! dims `u16`, then row-major `f32`. All little-endian.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{FeatureSequence, RawSignal};
use crate::{Error, Result};

pub const SIGNAL_MAGIC: &[u8; 4] = b"EMGR";
pub const FEATURE_MAGIC: &[u8; 4] = b"FEAT";
pub const SIGNAL_VERSION: u16 = 1;

pub(crate) fn read_exact<const N: usize>(r: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_f32s(r: &mut impl Read, n: usize) -> std::io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
        .collect())
}

fn truncated(e: std::io::Error) -> String {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        "file is truncated".into()
    } else {
        e.to_string()
    }
}

pub fn write_signal(w: &mut impl Write, signal: &RawSignal) -> std::io::Result<()> {
    w.write_all(SIGNAL_MAGIC)?;
    w.write_all(&SIGNAL_VERSION.to_le_bytes())?;
    w.write_all(&(signal.n_channels() as u16).to_le_bytes())?;
    w.write_all(&signal.sample_rate().to_le_bytes())?;
    w.write_all(&(signal.len() as u64).to_le_bytes())?;
    let mut bytes = Vec::with_capacity(signal.len() * signal.n_channels() * 4);
    for t in 0..signal.len() {
        for ch in signal.channels() {
            bytes.extend_from_slice(&(ch[t] as f32).to_le_bytes());
        }
    }
    w.write_all(&bytes)
}

/// Reads a signal; errors are plain messages, the path is attached by [`load_signal`].
pub fn read_signal(r: &mut impl Read) -> std::result::Result<RawSignal, String> {
    let magic: [u8; 4] = read_exact(r).map_err(truncated)?;
    if &magic != SIGNAL_MAGIC {
        return Err(format!("bad magic {magic:?}, expected EMGR"));
    }
    let version = u16::from_le_bytes(read_exact(r).map_err(truncated)?);
    if version != SIGNAL_VERSION {
        return Err(format!("unsupported signal file version {version}"));
    }
    let channels = u16::from_le_bytes(read_exact(r).map_err(truncated)?) as usize;
    let rate = u32::from_le_bytes(read_exact(r).map_err(truncated)?);
    let len = u64::from_le_bytes(read_exact(r).map_err(truncated)?) as usize;
    let flat = read_f32s(r, channels * len).map_err(truncated)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| e.to_string())? != 0 {
        return Err("trailing bytes after signal data".into());
    }
    let data = (0..channels)
        .map(|c| (0..len).map(|t| flat[t * channels + c]).collect())
        .collect();
    RawSignal::new(data, rate).map_err(|e| e.to_string())
}

pub fn write_features(w: &mut impl Write, features: &Array2<f64>) -> std::io::Result<()> {
    w.write_all(FEATURE_MAGIC)?;
    w.write_all(&(features.nrows() as u64).to_le_bytes())?;
    w.write_all(&(features.ncols() as u16).to_le_bytes())?;
    let bytes: Vec<u8> = features
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    w.write_all(&bytes)
}

pub fn read_features(r: &mut impl Read) -> std::result::Result<Array2<f64>, String> {
    let magic: [u8; 4] = read_exact(r).map_err(truncated)?;
    if &magic != FEATURE_MAGIC {
        return Err(format!("bad magic {magic:?}, expected FEAT"));
    }
    let n = u64::from_le_bytes(read_exact(r).map_err(truncated)?) as usize;
    let dims = u16::from_le_bytes(read_exact(r).map_err(truncated)?) as usize;
    let flat = read_f32s(r, n * dims).map_err(truncated)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(|e| e.to_string())? != 0 {
        return Err("trailing bytes after feature data".into());
    }
    Array2::from_shape_vec((n, dims), flat).map_err(|e| e.to_string())
}

pub fn save_signal(path: &Path, signal: &RawSignal) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_signal(&mut w, signal)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_signal(path: &Path) -> Result<RawSignal> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_signal(&mut BufReader::new(f)).map_err(|m| Error::format(path, m))
}

pub fn save_features(path: &Path, features: &Array2<f64>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_features(&mut w, features)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_features(path: &Path) -> Result<FeatureSequence> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let frames = read_features(&mut BufReader::new(f)).map_err(|m| Error::format(path, m))?;
    FeatureSequence::new(frames).map_err(|e| Error::format(path, e.to_string()))
}
