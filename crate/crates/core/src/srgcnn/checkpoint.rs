use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelParams, TrainConfig};
use crate::error::{GmcError, Result};

const FORMAT_VERSION: u32 = 1;

/// Fitted parameters together with the configuration that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: TrainConfig,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(config: TrainConfig, params: ModelParams) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            config,
            params,
        }
    }
}

/// Writes a JSON checkpoint. Floats are printed with shortest round-trip
/// formatting, so [`load_checkpoint`] restores every bit.
pub fn save_checkpoint<P: AsRef<Path>>(path: P, ckpt: &Checkpoint) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, ckpt)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Checkpoint> {
    let ckpt: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if ckpt.format_version != FORMAT_VERSION {
        return Err(GmcError::invalid(
            "srgcnn::checkpoint",
            format!("unsupported format version {}", ckpt.format_version),
        ));
    }
    Ok(ckpt)
}
