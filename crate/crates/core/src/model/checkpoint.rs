//! Checkpoint files.
//!
//! Layout (little-endian): magic `MPRM`; the config block as thirteen fields
//! (`u32` each, except `dropout` as `f64`) in declaration order of
//! [`ModelConfig`]; then tensors until end of file, each as name length
//! `u16`, UTF-8 name, rank `u8`, dims `u64` each, row-major `f32` data.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{ModelConfig, ModelParams};
use crate::dsp::format::read_exact;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MPRM";

fn write_config(w: &mut impl Write, c: &ModelConfig) -> std::io::Result<()> {
    let before = [
        c.in_channels,
        c.conv_blocks,
        c.channels,
        c.transformer_layers,
        c.heads,
        c.model_dim,
        c.ff_dim,
    ];
    for v in before {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    w.write_all(&c.dropout.to_le_bytes())?;
    let after = [
        c.rel_clip,
        c.session_embed_dim,
        c.sessions,
        c.out_dims,
        c.phoneme_count,
    ];
    for v in after {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    Ok(())
}

fn read_config(r: &mut impl Read) -> std::io::Result<ModelConfig> {
    let mut u = || -> std::io::Result<usize> { Ok(u32::from_le_bytes(read_exact(r)?) as usize) };
    let in_channels = u()?;
    let conv_blocks = u()?;
    let channels = u()?;
    let transformer_layers = u()?;
    let heads = u()?;
    let model_dim = u()?;
    let ff_dim = u()?;
    let dropout = f64::from_le_bytes(read_exact(r)?);
    let mut u = || -> std::io::Result<usize> { Ok(u32::from_le_bytes(read_exact(r)?) as usize) };
    Ok(ModelConfig {
        in_channels,
        conv_blocks,
        channels,
        transformer_layers,
        heads,
        model_dim,
        ff_dim,
        dropout,
        rel_clip: u()?,
        session_embed_dim: u()?,
        sessions: u()?,
        out_dims: u()?,
        phoneme_count: u()?,
    })
}

pub fn write_checkpoint(
    w: &mut impl Write,
    cfg: &ModelConfig,
    params: &ModelParams,
) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    write_config(w, cfg)?;
    for (name, t) in params.named_tensors() {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[t.ndim() as u8])?;
        for &d in t.shape() {
            w.write_all(&(d as u64).to_le_bytes())?;
        }
        let bytes: Vec<u8> = t.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
        w.write_all(&bytes)?;
    }
    Ok(())
}

pub fn read_checkpoint(
    r: &mut impl Read,
) -> std::result::Result<(ModelConfig, ModelParams), String> {
    let io = |e: std::io::Error| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            "checkpoint is truncated".to_string()
        } else {
            e.to_string()
        }
    };
    let magic: [u8; 4] = read_exact(r).map_err(io)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(format!("bad magic {magic:?}, expected MPRM"));
    }
    let cfg = read_config(r).map_err(io)?;
    cfg.validate().map_err(|e| e.to_string())?;
    let mut params = ModelParams::zeros(&cfg).map_err(|e| e.to_string())?;
    let mut loaded: HashMap<String, (Vec<usize>, Vec<f64>)> = HashMap::new();
    loop {
        let mut first = [0u8; 1];
        if r.read(&mut first).map_err(io)? == 0 {
            break;
        }
        let second: [u8; 1] = read_exact(r).map_err(io)?;
        let name_len = u16::from_le_bytes([first[0], second[0]]) as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io)?;
        let name = String::from_utf8(name).map_err(|_| "tensor name is not UTF-8".to_string())?;
        let [rank]: [u8; 1] = read_exact(r).map_err(io)?;
        let dims = (0..rank)
            .map(|_| read_exact(r).map(|b| u64::from_le_bytes(b) as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(io)?;
        let n: usize = dims.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes).map_err(io)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]])))
            .collect();
        if loaded.insert(name.clone(), (dims, data)).is_some() {
            return Err(format!("duplicate tensor {name}"));
        }
    }
    for (name, mut t) in params.named_tensors_mut() {
        let (dims, data) = loaded
            .remove(&name)
            .ok_or_else(|| format!("missing tensor {name}"))?;
        if dims != t.shape() {
            return Err(format!(
                "tensor {name} has shape {dims:?}, expected {:?}",
                t.shape()
            ));
        }
        for (dst, src) in t.iter_mut().zip(data) {
            *dst = src;
        }
    }
    if let Some(extra) = loaded.keys().next() {
        return Err(format!("unexpected tensor {extra}"));
    }
    Ok((cfg, params))
}

pub fn save_checkpoint(path: &Path, cfg: &ModelConfig, params: &ModelParams) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_checkpoint(&mut w, cfg, params)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams)> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(&mut BufReader::new(f)).map_err(|m| Error::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_at_f32_precision() {
        let mut cfg = ModelConfig::desk();
        cfg.transformer_layers = 1;
        cfg.dropout = 0.25;
        let p = ModelParams::init(&cfg, 3).unwrap();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &cfg, &p).unwrap();
        assert_eq!(&buf[..4], b"MPRM");
        let (cfg2, p2) = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(cfg, cfg2);
        for ((n1, a), (n2, b)) in p.named_tensors().iter().zip(p2.named_tensors()) {
            assert_eq!(n1, &n2);
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x as f32 as f64, *y);
            }
        }
        // re-saving the loaded params reproduces the file bytes
        let mut again = Vec::new();
        write_checkpoint(&mut again, &cfg2, &p2).unwrap();
        assert_eq!(buf, again);
        assert!(read_checkpoint(&mut &buf[..buf.len() - 3])
            .unwrap_err()
            .contains("truncated"));
    }
}
