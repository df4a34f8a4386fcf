//! Error-to-exit-code mapping: 1 for usage errors, 2 for data errors.

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Data(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

macro_rules! data_from {
    ($($ty:ty),*) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        })*
    };
}

data_from!(
    std::io::Error,
    capsfold_core::pdb::PdbError,
    capsfold_core::voxel::VoxelError,
    capsfold_core::voxel::CvoxError,
    capsfold_core::capsnet::ModelError,
    capsfold_core::train::TrainError,
    capsfold_core::interpret::InterpretError,
    serde_json::Error
);
