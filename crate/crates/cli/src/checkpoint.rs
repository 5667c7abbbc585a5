//! Binary model checkpoint.
//!
//! Holds everything a backtest needs to reconstruct the trained model
//! and its data view: the denoiser config, the schedule parameters, the
//! training seed, the number of train months, the retained factor
//! column indices, and the flat parameter vector as raw IEEE-754 bits.
//! Round-trips are bit-exact by construction.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use factordiff_core::denoiser::{DenoiserConfig, DenoiserParams, Layout};

use crate::error::{CliError, CliResult};

const MAGIC: &[u8; 8] = b"FDIFCKPT";
const VERSION: u32 = 1;

/// A trained model plus the context needed to evaluate it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: DenoiserConfig,
    pub schedule_steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    pub train_seed: u64,
    /// Number of leading panel months used for training; the backtest
    /// starts right after them.
    pub train_months: usize,
    /// Characteristic columns (in the source panel) the model was
    /// trained on; empty means the full panel.
    pub factor_indices: Vec<usize>,
    pub flat: Vec<f64>,
}

impl Checkpoint {
    pub fn params(&self) -> CliResult<DenoiserParams> {
        let layout = Layout::build(&self.config);
        Ok(DenoiserParams::new(self.flat.clone(), layout)?)
    }
}

pub fn save(path: &Path, checkpoint: &Checkpoint) -> CliResult<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    write_u32(&mut out, VERSION)?;
    write_u32(&mut out, checkpoint.config.embed_dim as u32)?;
    write_u32(&mut out, checkpoint.config.heads as u32)?;
    write_u32(&mut out, checkpoint.config.layers as u32)?;
    write_u32(&mut out, checkpoint.config.k as u32)?;
    write_u32(&mut out, checkpoint.config.max_steps as u32)?;
    write_u32(&mut out, checkpoint.schedule_steps as u32)?;
    write_f64(&mut out, checkpoint.beta_start)?;
    write_f64(&mut out, checkpoint.beta_end)?;
    write_u64(&mut out, checkpoint.train_seed)?;
    write_u32(&mut out, checkpoint.train_months as u32)?;
    write_u32(&mut out, checkpoint.factor_indices.len() as u32)?;
    for &idx in &checkpoint.factor_indices {
        write_u32(&mut out, idx as u32)?;
    }
    write_u64(&mut out, checkpoint.flat.len() as u64)?;
    for &v in &checkpoint.flat {
        write_f64(&mut out, v)?;
    }
    Ok(())
}

pub fn load(path: &Path) -> CliResult<Checkpoint> {
    let mut input = BufReader::new(
        File::open(path)
            .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?,
    );
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CliError::data(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(CliError::data(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let config = DenoiserConfig {
        embed_dim: read_u32(&mut input)? as usize,
        heads: read_u32(&mut input)? as usize,
        layers: read_u32(&mut input)? as usize,
        k: read_u32(&mut input)? as usize,
        max_steps: read_u32(&mut input)? as usize,
    };
    let schedule_steps = read_u32(&mut input)? as usize;
    let beta_start = read_f64(&mut input)?;
    let beta_end = read_f64(&mut input)?;
    let train_seed = read_u64(&mut input)?;
    let train_months = read_u32(&mut input)? as usize;
    let factor_count = read_u32(&mut input)? as usize;
    let mut factor_indices = Vec::with_capacity(factor_count);
    for _ in 0..factor_count {
        factor_indices.push(read_u32(&mut input)? as usize);
    }
    let flat_len = read_u64(&mut input)? as usize;
    let expected = Layout::build(&config).len();
    if flat_len != expected {
        return Err(CliError::data(format!(
            "checkpoint holds {flat_len} parameters, config requires {expected}"
        )));
    }
    let mut flat = Vec::with_capacity(flat_len);
    for _ in 0..flat_len {
        flat.push(read_f64(&mut input)?);
    }
    Ok(Checkpoint {
        config,
        schedule_steps,
        beta_start,
        beta_end,
        train_seed,
        train_months,
        factor_indices,
        flat,
    })
}

fn write_u32(out: &mut impl Write, v: u32) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn write_u64(out: &mut impl Write, v: u64) -> std::io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn write_f64(out: &mut impl Write, v: f64) -> std::io::Result<()> {
    out.write_all(&v.to_bits().to_le_bytes())
}

fn read_u32(input: &mut impl Read) -> std::io::Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(input: &mut impl Read) -> std::io::Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_f64(input: &mut impl Read) -> std::io::Result<f64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf)?;
    Ok(f64::from_bits(u64::from_le_bytes(buf)))
}
