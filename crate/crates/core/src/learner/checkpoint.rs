use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::model::{Architecture, Model};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"NBPCKPT\0";
const VERSION: u32 = 1;

/// Writes the model as a header (architecture, gain scale) followed by named
/// little-endian `f64` tensors, one per parameter block.
pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(model.arch.width as u32)?;
    w.write_u32::<LittleEndian>(model.arch.height as u32)?;
    w.write_u32::<LittleEndian>(model.arch.in_channels as u32)?;
    w.write_f64::<LittleEndian>(model.gain_scale)?;
    let blocks = model.blocks();
    w.write_u32::<LittleEndian>(blocks.len() as u32)?;
    for b in blocks {
        w.write_u16::<LittleEndian>(b.name.len() as u16)?;
        w.write_all(b.name.as_bytes())?;
        w.write_u32::<LittleEndian>(b.len as u32)?;
        for &p in &model.params[b.offset..b.offset + b.len] {
            w.write_f64::<LittleEndian>(p)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r).map_err(|e| match e {
        Error::Io(_) => Error::Format(format!("truncated checkpoint {}", path.display())),
        other => other,
    })
}

fn read_checkpoint(r: &mut impl Read) -> Result<Model> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format("not a model checkpoint".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let width = r.read_u32::<LittleEndian>()? as usize;
    let height = r.read_u32::<LittleEndian>()? as usize;
    let in_channels = r.read_u32::<LittleEndian>()? as usize;
    let mut model = Model::zeros(Architecture::new(width, height, in_channels)?);
    model.gain_scale = r.read_f64::<LittleEndian>()?;
    let blocks = model.blocks();
    if r.read_u32::<LittleEndian>()? as usize != blocks.len() {
        return Err(Error::Format("checkpoint has the wrong number of tensors".into()));
    }
    for b in blocks {
        let n = r.read_u16::<LittleEndian>()? as usize;
        let mut name = vec![0u8; n];
        r.read_exact(&mut name)?;
        if name != b.name.as_bytes() {
            return Err(Error::Format(format!("expected tensor '{}'", b.name)));
        }
        if r.read_u32::<LittleEndian>()? as usize != b.len {
            return Err(Error::Format(format!("tensor '{}' has the wrong size", b.name)));
        }
        r.read_f64_into::<LittleEndian>(&mut model.params[b.offset..b.offset + b.len])?;
    }
    if model.params.iter().any(|p| !p.is_finite()) || !model.gain_scale.is_finite() {
        return Err(Error::NonFinite("checkpoint parameters".into()));
    }
    Ok(model)
}
