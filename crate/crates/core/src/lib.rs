//! Protein structure classification with capsule networks.
//!
//! The pipeline: parse PDB files ([`pdb`]), encode them as 8-channel voxel
//! grids in 3D or as 2D Hilbert-curve layouts ([`voxel`], [`hilbert`]),
//! classify with a convolutional capsule network trained by dynamic routing
//! ([`capsnet`], [`tensor`], [`train`]), and attribute decisions to parts of
//! the structure by comparing activation vectors before and after targeted
//! edits ([`interpret`]).

pub mod capsnet;
pub mod hilbert;
pub mod interpret;
pub mod pdb;
pub mod synthetic;
pub mod tensor;
pub mod train;
pub mod voxel;
