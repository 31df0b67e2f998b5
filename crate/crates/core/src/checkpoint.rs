//! Model + optimizer checkpointing.
//!
//! A checkpoint is a flat container: a version header, a string metadata
//! section (model configuration, alphabet, optimizer constants), and one
//! entry per tensor mapping its path to a shape and little-endian 64-bit
//! float payload. Floats round-trip bit-exactly (the constants are stored
//! as raw bit patterns).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ModelConfig, ModelParams};
use crate::tensor_core::Tensor;
use crate::text_codec::Alphabet;
use crate::trainer::AdamState;

const MAGIC: &[u8; 8] = b"QRFCKPT1";

/// Write parameters and optimizer state to `path`.
pub fn save(params: &ModelParams, adam: &AdamState, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);

    w.write_all(MAGIC).map_err(io)?;

    let cfg = &params.config;
    let widths: Vec<String> = cfg.conv_widths.iter().map(|v| v.to_string()).collect();
    let meta: Vec<(String, String)> = vec![
        ("alphabet".into(), cfg.alphabet.symbols().iter().collect()),
        ("emb_dim".into(), cfg.emb_dim.to_string()),
        ("conv_widths".into(), widths.join(",")),
        ("conv_filters".into(), cfg.conv_filters.to_string()),
        ("pool_stride".into(), cfg.pool_stride.to_string()),
        ("enc_hidden".into(), cfg.enc_hidden.to_string()),
        ("dec_hidden".into(), cfg.dec_hidden.to_string()),
        ("att_hidden".into(), cfg.att_hidden.to_string()),
        ("adam.step".into(), adam.step.to_string()),
        ("adam.beta1".into(), format!("{:016x}", adam.beta1.to_bits())),
        ("adam.beta2".into(), format!("{:016x}", adam.beta2.to_bits())),
        (
            "adam.epsilon".into(),
            format!("{:016x}", adam.epsilon.to_bits()),
        ),
    ];
    write_u32(&mut w, meta.len() as u32).map_err(io)?;
    for (k, v) in &meta {
        write_str(&mut w, k).map_err(io)?;
        write_str(&mut w, v).map_err(io)?;
    }

    let n = params.store.len();
    write_u32(&mut w, (3 * n) as u32).map_err(io)?;
    for i in 0..n {
        write_tensor(&mut w, params.store.name(i), params.store.tensor(i)).map_err(io)?;
    }
    for i in 0..n {
        let name = format!("adam.m.{}", params.store.name(i));
        write_tensor(&mut w, &name, &adam.m[i]).map_err(io)?;
    }
    for i in 0..n {
        let name = format!("adam.v.{}", params.store.name(i));
        write_tensor(&mut w, &name, &adam.v[i]).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Read a checkpoint back. The model is rebuilt from the stored
/// configuration; every tensor must match its expected shape and no tensor
/// may be missing or unknown.
pub fn load(path: &Path) -> Result<(ModelParams, AdamState)> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{}: bad magic (not a checkpoint or unsupported version)",
            path.display()
        )));
    }

    let n_meta = read_u32(&mut r).map_err(io)?;
    let mut meta = std::collections::BTreeMap::new();
    for _ in 0..n_meta {
        let k = read_str(&mut r).map_err(io)?;
        let v = read_str(&mut r).map_err(io)?;
        meta.insert(k, v);
    }
    let get = |key: &str| -> Result<&String> {
        meta.get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing metadata key {key}")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad metadata value for {key}")))
    };
    let parse_bits = |key: &str| -> Result<f64> {
        u64::from_str_radix(get(key)?, 16)
            .map(f64::from_bits)
            .map_err(|_| Error::Checkpoint(format!("bad metadata value for {key}")))
    };

    let alphabet = Alphabet::new(get("alphabet")?.chars().collect())?;
    let conv_widths: Vec<usize> = get("conv_widths")?
        .split(',')
        .map(|s| {
            s.parse()
                .map_err(|_| Error::Checkpoint("bad conv_widths".into()))
        })
        .collect::<Result<_>>()?;
    let config = ModelConfig {
        alphabet,
        emb_dim: parse_usize("emb_dim")?,
        conv_widths,
        conv_filters: parse_usize("conv_filters")?,
        pool_stride: parse_usize("pool_stride")?,
        enc_hidden: parse_usize("enc_hidden")?,
        dec_hidden: parse_usize("dec_hidden")?,
        att_hidden: parse_usize("att_hidden")?,
    };
    let mut params = ModelParams::zeros(config)?;
    let mut adam = AdamState::new(&params.store);
    adam.step = get("adam.step")?
        .parse()
        .map_err(|_| Error::Checkpoint("bad adam.step".into()))?;
    adam.beta1 = parse_bits("adam.beta1")?;
    adam.beta2 = parse_bits("adam.beta2")?;
    adam.epsilon = parse_bits("adam.epsilon")?;

    let n_tensors = read_u32(&mut r).map_err(io)? as usize;
    let mut filled = vec![[false; 3]; params.store.len()];
    for _ in 0..n_tensors {
        let (name, tensor) = read_tensor(&mut r).map_err(io)?;
        let (slot, key) = if let Some(rest) = name.strip_prefix("adam.m.") {
            (1, rest.to_string())
        } else if let Some(rest) = name.strip_prefix("adam.v.") {
            (2, rest.to_string())
        } else {
            (0, name.clone())
        };
        let idx = params
            .store
            .find(&key)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {name}")))?;
        let expect = params.store.tensor(idx).shape();
        if tensor.shape() != expect {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: shape {:?} does not match configuration {:?}",
                tensor.shape(),
                expect
            )));
        }
        match slot {
            0 => *params.store.tensor_mut(idx) = tensor,
            1 => adam.m[idx] = tensor,
            _ => adam.v[idx] = tensor,
        }
        filled[idx][slot] = true;
    }
    if let Some(i) = filled.iter().position(|f| f.iter().any(|b| !b)) {
        return Err(Error::Checkpoint(format!(
            "tensor {} incomplete in checkpoint",
            params.store.name(i)
        )));
    }
    Ok((params, adam))
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    write_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn write_tensor<W: Write>(w: &mut W, name: &str, t: &Tensor) -> std::io::Result<()> {
    write_str(w, name)?;
    write_u32(w, t.shape().len() as u32)?;
    for &d in t.shape() {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for &v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn read_tensor<R: Read>(r: &mut R) -> std::io::Result<(String, Tensor)> {
    let name = read_str(r)?;
    let rank = read_u32(r)? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        shape.push(u64::from_le_bytes(b) as usize);
    }
    let len: usize = shape.iter().product();
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        data.push(f64::from_le_bytes(b));
    }
    Ok((name, Tensor::from_vec(&shape, data)))
}
