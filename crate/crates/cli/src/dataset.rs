//! Dataset directories: `<root>/<class_name>/*.pdb`, class order alphabetical.

use std::fs;
use std::path::{Path, PathBuf};

use capsfold_core::pdb::parse_pdb;
use capsfold_core::train::LabeledSample;
use capsfold_core::voxel::{encode, Mode};
use rayon::prelude::*;

use crate::errors::CliError;

pub struct LoadedDataset {
    pub samples: Vec<LabeledSample>,
    pub class_names: Vec<String>,
}

/// Parse and voxelize every PDB file under the per-class subdirectories,
/// fanning out over a worker pool of `jobs` threads.
pub fn load_dataset(root: &Path, mode: Mode, jobs: usize) -> Result<LoadedDataset, CliError> {
    let mut class_dirs: Vec<(String, PathBuf)> = fs::read_dir(root)
        .map_err(|e| CliError::data(format!("cannot read dataset directory {}: {e}", root.display())))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.path().is_dir())
        .map(|entry| (entry.file_name().to_string_lossy().into_owned(), entry.path()))
        .collect();
    class_dirs.sort();
    if class_dirs.len() < 2 {
        return Err(CliError::data(format!(
            "dataset {} needs at least 2 class subdirectories, found {}",
            root.display(),
            class_dirs.len()
        )));
    }

    let mut work: Vec<(usize, PathBuf)> = Vec::new();
    for (label, (_, dir)) in class_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| CliError::data(format!("cannot read {}: {e}", dir.display())))?
            .filter_map(|entry| entry.ok())
            .map(|entry| entry.path())
            .filter(|p| p.extension().map(|e| e == "pdb").unwrap_or(false))
            .collect();
        files.sort();
        work.extend(files.into_iter().map(|f| (label, f)));
    }
    if work.is_empty() {
        return Err(CliError::data(format!(
            "dataset {} contains no .pdb files",
            root.display()
        )));
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::data(format!("worker pool: {e}")))?;
    let samples: Result<Vec<LabeledSample>, CliError> = pool.install(|| {
        work.par_iter()
            .map(|(label, path)| {
                let text = fs::read_to_string(path)
                    .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
                let source_id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let structure = parse_pdb(&text, &source_id)
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
                let grid = encode(&structure, mode)
                    .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
                Ok(LabeledSample {
                    grid,
                    label: *label,
                    source_id,
                })
            })
            .collect()
    });

    Ok(LoadedDataset {
        samples: samples?,
        class_names: class_dirs.into_iter().map(|(name, _)| name).collect(),
    })
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
