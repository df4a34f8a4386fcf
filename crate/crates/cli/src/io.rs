//! File helpers: atomic writes and input sniffing.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use capsfold_core::capsnet::{CapsNetModel, CheckpointExtras};
use capsfold_core::pdb::{parse_pdb, ProteinStructure};
use capsfold_core::voxel::{read_cvox, VoxelGrid};

use crate::errors::CliError;

/// Write via a temp file in the same directory, then rename into place, so
/// partially written artifacts are never observed.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let file_name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let mut tmp = PathBuf::from(dir.unwrap_or_else(|| Path::new(".")));
    tmp.push(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| {
        if e.kind() == io::ErrorKind::NotFound {
            CliError::data(format!("file not found: {}", path.display()))
        } else {
            CliError::data(format!("cannot read {}: {e}", path.display()))
        }
    })
}

pub fn read_structure(path: &Path) -> Result<ProteinStructure, CliError> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::data(format!("{} is not text", path.display())))?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".to_string());
    parse_pdb(&text, &source_id)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

/// A prediction input: either a PDB file or a CVOX grid, sniffed by magic.
pub enum SampleInput {
    Structure(ProteinStructure),
    Grid(VoxelGrid),
}

pub fn read_sample(path: &Path) -> Result<SampleInput, CliError> {
    let bytes = read_file(path)?;
    if bytes.starts_with(b"CVOX") {
        let grid = read_cvox(&mut bytes.as_slice())
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        return Ok(SampleInput::Grid(grid));
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| CliError::data(format!("{} is neither CVOX nor PDB text", path.display())))?;
    let source_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".to_string());
    let structure = parse_pdb(&text, &source_id)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    Ok(SampleInput::Structure(structure))
}

pub fn read_model(path: &Path) -> Result<(CapsNetModel, CheckpointExtras), CliError> {
    let bytes = read_file(path)?;
    CapsNetModel::load(&mut bytes.as_slice())
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}
