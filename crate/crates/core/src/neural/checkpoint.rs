//! Binary parameter checkpoint: `SUTRACKP` magic, `u32` version, the config
//! as `key = value` text, then named tensors (`name`, `rows`, `cols`,
//! little-endian `f64` data). Integers are little-endian; strings carry a
//! `u32` byte length.

use std::io::{Read, Write};
use std::path::Path;

use super::config::ModelConfig;
use super::mat::Mat;
use super::model::Model;
use super::NeuralError;

const MAGIC: &[u8; 8] = b"SUTRACKP";
const VERSION: u32 = 1;

fn put_u32(w: &mut impl Write, x: u32) -> std::io::Result<()> {
    w.write_all(&x.to_le_bytes())
}

fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    put_u32(w, s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn get_u32(r: &mut impl Read) -> std::io::Result<u32> {
    let mut b = [0; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_str(r: &mut impl Read) -> Result<String, NeuralError> {
    let n = get_u32(r)? as usize;
    let mut b = vec![0; n];
    r.read_exact(&mut b)?;
    String::from_utf8(b).map_err(|_| NeuralError::Format("string is not utf-8".into()))
}

pub fn write_checkpoint(model: &Model, mut w: impl Write) -> Result<(), NeuralError> {
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION)?;
    put_str(&mut w, &model.config.to_text())?;
    put_u32(&mut w, model.params.len() as u32)?;
    for (name, m) in model.params.iter() {
        put_str(&mut w, name)?;
        put_u32(&mut w, m.rows as u32)?;
        put_u32(&mut w, m.cols as u32)?;
        for x in &m.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint(mut r: impl Read) -> Result<Model, NeuralError> {
    let mut magic = [0; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(NeuralError::Format("not a checkpoint".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(NeuralError::Format(format!("unsupported checkpoint version {version}")));
    }
    let config = ModelConfig::parse(&get_str(&mut r)?)?;
    let mut model = Model::new(config)?;
    let count = get_u32(&mut r)? as usize;
    if count != model.params.len() {
        return Err(NeuralError::Format(format!(
            "{count} tensors, config implies {}",
            model.params.len()
        )));
    }
    for _ in 0..count {
        let name = get_str(&mut r)?;
        let rows = get_u32(&mut r)? as usize;
        let cols = get_u32(&mut r)? as usize;
        let i = model
            .params
            .index(&name)
            .ok_or_else(|| NeuralError::Format(format!("unknown tensor {name}")))?;
        if model.params.get(i).shape() != (rows, cols) {
            return Err(NeuralError::Format(format!("tensor {name} has shape {rows}x{cols}")));
        }
        let mut data = Vec::with_capacity(rows * cols);
        let mut b = [0; 8];
        for _ in 0..rows * cols {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        *model.params.get_mut(i) = Mat::from_vec(rows, cols, data);
    }
    Ok(model)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<(), NeuralError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model, NeuralError> {
    read_checkpoint(std::io::BufReader::new(std::fs::File::open(path)?))
}
