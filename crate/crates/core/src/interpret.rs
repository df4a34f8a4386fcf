//! Perturbation analysis of trained models.
//!
//! A structure and an edited copy are encoded identically and run through
//! the same model; the per-class activation vectors are compared
//! element-wise and the Euclidean norm of each difference vector is
//! reported, showing how much each class capsule responds to the edit.
//! Per-channel scores use retain-one-channel evaluation: the score of
//! channel c is the reference-class capsule length when every other channel
//! is zeroed. That operationalization is an assumption and is flagged in
//! the report's `definition` field.

use serde::Serialize;
use thiserror::Error;

use crate::capsnet::{grid_tensor, ActivationVectors, CapsNetModel, ModelError};
use crate::pdb::{apply_edit, ChannelClass, ProteinStructure, StructureEdit, CHANNEL_COUNT};
use crate::voxel::{encode, Mode, VoxelError};

#[derive(Debug, Error)]
pub enum InterpretError {
    #[error(transparent)]
    Voxel(#[from] VoxelError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How one edit moved the activation vectors, in the shape of the
/// classification-change tables: original/modified predictions plus one
/// difference norm per class capsule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbationReport {
    pub edit: String,
    pub class_names: Vec<String>,
    pub original_class: usize,
    pub original_class_name: String,
    pub modified_class: usize,
    pub modified_class_name: String,
    /// Euclidean norm of (original - modified) per class capsule.
    pub class_norms: Vec<f64>,
    pub original_activations: ActivationVectors,
    pub modified_activations: ActivationVectors,
}

/// Retain-one-channel scores for one structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChannelScoreReport {
    /// Channel names in index order.
    pub channels: Vec<String>,
    /// Reference-class capsule length per retained channel, each in [0, 1).
    pub scores: Vec<f64>,
    /// Class whose capsule length is reported.
    pub reference_class: usize,
    pub reference_class_name: String,
    /// The operationalization behind `scores`, flagged as an assumption.
    pub definition: String,
}

fn class_name(names: &[String], class: usize) -> String {
    names
        .get(class)
        .cloned()
        .unwrap_or_else(|| format!("class{class}"))
}

/// Encode, edit, re-encode, and compare activation vectors.
pub fn perturb_and_compare(
    model: &CapsNetModel,
    structure: &ProteinStructure,
    edit: &StructureEdit,
    mode: Mode,
    class_names: &[String],
) -> Result<PerturbationReport, InterpretError> {
    let original = encode(structure, mode)?;
    let edited_structure = apply_edit(structure, edit);
    let modified = encode(&edited_structure, mode)?;

    let original_activations = model.activations(&grid_tensor(&original))?;
    let modified_activations = model.activations(&grid_tensor(&modified))?;

    let class_norms = original_activations
        .vectors
        .iter()
        .zip(&modified_activations.vectors)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .collect();

    let original_class = original_activations.predicted_class();
    let modified_class = modified_activations.predicted_class();
    Ok(PerturbationReport {
        edit: edit.describe(),
        class_names: class_names.to_vec(),
        original_class,
        original_class_name: class_name(class_names, original_class),
        modified_class,
        modified_class_name: class_name(class_names, modified_class),
        class_norms,
        original_activations,
        modified_activations,
    })
}

pub const CHANNEL_SCORE_DEFINITION: &str =
    "retain-one-channel evaluation: score(c) is the reference-class capsule length \
     with every channel except c zeroed (operationalization chosen here; \
     not a published formula)";

/// Retain-one-channel scores. The reference class is `label` when given,
/// otherwise the class predicted from the full grid.
pub fn channel_scores(
    model: &CapsNetModel,
    structure: &ProteinStructure,
    mode: Mode,
    label: Option<usize>,
    class_names: &[String],
) -> Result<ChannelScoreReport, InterpretError> {
    let grid = encode(structure, mode)?;
    let reference_class = match label {
        Some(class) => class,
        None => model.activations(&grid_tensor(&grid))?.predicted_class(),
    };
    let mut scores = Vec::with_capacity(CHANNEL_COUNT);
    for channel in 0..CHANNEL_COUNT {
        let masked = grid.retain_channel(channel);
        let activations = model.activations(&grid_tensor(&masked))?;
        scores.push(activations.lengths[reference_class]);
    }
    Ok(ChannelScoreReport {
        channels: ChannelClass::ALL.iter().map(|c| c.name().to_string()).collect(),
        scores,
        reference_class,
        reference_class_name: class_name(class_names, reference_class),
        definition: CHANNEL_SCORE_DEFINITION.to_string(),
    })
}
