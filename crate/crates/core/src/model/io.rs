//! Model and embedding files.
//!
//! Model file: optional `# ...` comment lines, one text header line
//! `d_in=.. d_out=.. K=.. fusion=.. users=.. items=.. d_int=.. tower=.. seed=..`,
//! then for each block in [`TwoTowerModel::blocks`] order: `u32` name length,
//! name bytes, `u32` ndim, `u64` per dimension, `u64` element count and the
//! elements as little-endian `f32`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{FusionMode, ModelConfig, TwoTowerModel};
use crate::error::{Error, Result};
use crate::ingest::parse_kv_line;

fn header(c: &ModelConfig) -> String {
    let tower: Vec<String> = c.tower.iter().map(usize::to_string).collect();
    format!(
        "d_in={} d_out={} K={} fusion={} users={} items={} d_int={} tower={} seed={}",
        c.d_in,
        c.d_out(),
        c.num_clusters,
        c.fusion,
        c.num_users,
        c.num_items,
        c.d_int,
        tower.join(","),
        c.seed
    )
}

pub fn save_model(path: &Path, preamble: &[String], model: &TwoTowerModel<f32>) -> Result<()> {
    let ctx = || format!("write {}", path.display());
    let file = File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        for line in preamble {
            writeln!(w, "# {line}")?;
        }
        writeln!(w, "{}", header(&model.config))?;
        for (name, block) in model.blocks() {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(block.ndim() as u32).to_le_bytes())?;
            for &d in block.shape() {
                w.write_all(&(d as u64).to_le_bytes())?;
            }
            w.write_all(&(block.len() as u64).to_le_bytes())?;
            for &v in block.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    };
    body().map_err(|e| Error::io(ctx(), e))
}

fn read_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut impl Read) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn parse_header(line: &str) -> Result<ModelConfig> {
    let kv = parse_kv_line(line);
    let get = |k: &str| {
        kv.get(k)
            .ok_or_else(|| Error::parse(0, format!("model header missing {k}")))
    };
    let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| Error::parse(0, format!("bad {k} in model header"))) };
    let tower = get("tower")?
        .split(',')
        .map(|s| s.parse::<usize>().map_err(|_| Error::parse(0, "bad tower in model header")))
        .collect::<Result<Vec<_>>>()?;
    let config = ModelConfig {
        num_users: num("users")?,
        num_items: num("items")?,
        num_clusters: num("K")?,
        d_in: num("d_in")?,
        d_int: num("d_int")?,
        tower,
        fusion: get("fusion")?.parse::<FusionMode>()?,
        seed: get("seed")?.parse().map_err(|_| Error::parse(0, "bad seed in model header"))?,
    };
    if config.d_out() != num("d_out")? {
        return Err(Error::parse(0, "model header d_out disagrees with the tower"));
    }
    Ok(config)
}

pub fn load_model(path: &Path) -> Result<TwoTowerModel<f32>> {
    let ctx = || format!("read {}", path.display());
    let file = File::open(path).map_err(|e| Error::io(ctx(), e))?;
    let mut r = BufReader::new(file);
    let mut line = String::new();
    let config = loop {
        line.clear();
        if r.read_line(&mut line).map_err(|e| Error::io(ctx(), e))? == 0 {
            return Err(Error::parse(0, format!("{}: missing model header", path.display())));
        }
        if !line.starts_with('#') {
            break parse_header(line.trim_end())?;
        }
    };
    let mut model = TwoTowerModel::<f32>::new(config)?;
    let names: Vec<(String, Vec<usize>)> = model
        .blocks()
        .into_iter()
        .map(|(n, b)| (n, b.shape().to_vec()))
        .collect();
    let corrupt = |msg: String| Error::parse(0, format!("{}: {msg}", path.display()));
    for ((want_name, want_shape), mut block) in names.into_iter().zip(model.blocks_mut()) {
        let len = read_u32(&mut r).map_err(|e| Error::io(ctx(), e))? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(|e| Error::io(ctx(), e))?;
        let name = String::from_utf8(name).map_err(|_| corrupt("block name is not utf-8".into()))?;
        if name != want_name {
            return Err(corrupt(format!("expected block {want_name}, found {name}")));
        }
        let ndim = read_u32(&mut r).map_err(|e| Error::io(ctx(), e))? as usize;
        let shape = (0..ndim)
            .map(|_| read_u64(&mut r).map(|d| d as usize))
            .collect::<std::io::Result<Vec<_>>>()
            .map_err(|e| Error::io(ctx(), e))?;
        let count = read_u64(&mut r).map_err(|e| Error::io(ctx(), e))? as usize;
        if shape != want_shape || count != block.len() {
            return Err(corrupt(format!("block {name} has shape {shape:?}, expected {want_shape:?}")));
        }
        let mut bytes = vec![0u8; 4 * count];
        r.read_exact(&mut bytes).map_err(|e| Error::io(ctx(), e))?;
        for (v, b) in block.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().unwrap());
        }
    }
    Ok(model)
}

/// Binary matrix: `u32` rows, `u32` cols, `u32` 1, then row-major
/// little-endian `f32`.
pub fn export_embeddings(path: &Path, m: &Array2<f32>) -> Result<()> {
    let mut bytes = Vec::with_capacity(12 + 4 * m.len());
    for v in [m.nrows() as u32, m.ncols() as u32, 1] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    for &v in m.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("write {}", path.display()), e))
}

pub fn read_embeddings(path: &Path) -> Result<Array2<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("read {}", path.display()), e))?;
    let word = |i: usize| -> Option<u32> { Some(u32::from_le_bytes(bytes.get(4 * i..4 * i + 4)?.try_into().ok()?)) };
    let bad = || Error::parse(0, format!("{}: malformed embedding file", path.display()));
    let (rows, cols) = (word(0).ok_or_else(bad)? as usize, word(1).ok_or_else(bad)? as usize);
    if word(2) != Some(1) || bytes.len() != 12 + 4 * rows * cols {
        return Err(bad());
    }
    let data: Vec<f32> = bytes[12..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|_| bad())
}
