//! Versioned binary checkpoint for trained models.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            4 bytes  "GFNM"
//! version          u32      currently 1
//! amplitude        f64
//! chip_count       u64
//! seed             u64
//! encoder widths   u64 count, then count x u64
//! decoder widths   u64 count, then count x u64
//! parameters       u64 count, then count x f64
//! ```
//!
//! The parameter vector is the model's flat layout: encoder layers then
//! decoder layers, each as a row-major weight block followed by its bias.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use super::mlp::MlpSpec;
use super::{Model, ModelError, SpecError};

const MAGIC: &[u8; 4] = b"GFNM";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a model checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("stored parameter count {got} does not match the stored widths ({expected})")]
    ParamCountMismatch { expected: usize, got: usize },
    #[error("stored width list is not a valid network: {0}")]
    Spec(#[from] SpecError),
    #[error("stored networks are inconsistent: {0}")]
    Model(#[from] ModelError),
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(f64::from_le_bytes(buf))
}

fn write_widths<W: Write>(w: &mut W, widths: &[usize]) -> std::io::Result<()> {
    write_u64(w, widths.len() as u64)?;
    for &v in widths {
        write_u64(w, v as u64)?;
    }
    Ok(())
}

fn read_widths<R: Read>(r: &mut R) -> std::io::Result<Vec<usize>> {
    let count = read_u64(r)? as usize;
    (0..count).map(|_| read_u64(r).map(|v| v as usize)).collect()
}

pub fn save_model(path: &Path, model: &Model) -> Result<(), CheckpointError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_f64(&mut w, model.amplitude())?;
    write_u64(&mut w, model.chip_count() as u64)?;
    write_u64(&mut w, model.seed)?;
    write_widths(&mut w, model.encoder_spec().widths())?;
    write_widths(&mut w, model.decoder_spec().widths())?;
    write_u64(&mut w, model.params.len() as u64)?;
    for &p in &model.params {
        write_f64(&mut w, p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Model, CheckpointError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut vbuf = [0u8; 4];
    r.read_exact(&mut vbuf)?;
    let version = u32::from_le_bytes(vbuf);
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let amplitude = read_f64(&mut r)?;
    let chip_count = read_u64(&mut r)? as usize;
    let seed = read_u64(&mut r)?;
    let enc = MlpSpec::new(read_widths(&mut r)?)?;
    let dec = MlpSpec::new(read_widths(&mut r)?)?;
    let mut model = Model::new(enc, dec, amplitude)?;
    model.seed = seed;
    debug_assert_eq!(model.chip_count(), chip_count);
    let count = read_u64(&mut r)? as usize;
    if count != model.params.len() {
        return Err(CheckpointError::ParamCountMismatch {
            expected: model.params.len(),
            got: count,
        });
    }
    for p in &mut model.params {
        *p = read_f64(&mut r)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_model() -> Model {
        let enc = MlpSpec::new(vec![7, 12, 6]).unwrap();
        let dec = MlpSpec::new(vec![6, 12, 7]).unwrap();
        Model::init(enc, dec, 1.5, 77).unwrap()
    }

    #[test]
    fn roundtrip_preserves_everything() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        let model = sample_model();
        save_model(&path, &model).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.seed, 77);
        assert_eq!(loaded.amplitude(), 1.5);
        assert_eq!(loaded.chip_count(), 6);
        assert_eq!(loaded.encoder_spec(), model.encoder_spec());
        assert_eq!(loaded.decoder_spec(), model.decoder_spec());
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"not a checkpoint at all").unwrap();
        assert!(matches!(load_model(&path), Err(CheckpointError::BadMagic)));
    }

    #[test]
    fn truncated_file_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &sample_model()).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(load_model(&path), Err(CheckpointError::Io(_))));
    }

    #[test]
    fn future_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.bin");
        save_model(&path, &sample_model()).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(load_model(&path), Err(CheckpointError::BadVersion(9))));
    }
}
