//! Voxel encodings of protein structures.
//!
//! A structure becomes an 8-channel occupancy grid in two flavors: a 3D cube
//! (1 A voxels, 64 per side for PDB inputs) and a 2D square produced by
//! reading the cube along a 3D Hilbert curve and laying the resulting
//! sequence back down along a 2D Hilbert curve. The cube-to-square map is a
//! bijection: a cube of side 2^m folds to a square of side 2^(3m/2)
//! whenever 3m is even (64^3 -> 512^2, 16^3 -> 64^2).
//!
//! Channel semantics: channels 0-5 mark atoms of residues in the matching
//! side-chain class, channel 6 marks CA atoms, channel 7 CB atoms. Occupancy
//! is binary presence by default; saturating per-voxel atom counts are
//! available as an option.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hilbert::HilbertCurve;
use crate::pdb::{ChannelClass, ProteinStructure, CHANNEL_COUNT};

/// Grid side used for PDB voxelization (1 A voxels).
pub const PDB_EXTENT: usize = 64;

/// Which of the two encodings a pipeline works with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "2d")]
    D2,
    #[serde(rename = "3d")]
    D3,
}

impl Mode {
    pub fn spatial_rank(self) -> usize {
        match self {
            Mode::D2 => 2,
            Mode::D3 => 3,
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "2d" => Some(Mode::D2),
            "3d" => Some(Mode::D3),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::D2 => "2d",
            Mode::D3 => "3d",
        }
    }
}

/// Errors from voxel grid construction.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum VoxelError {
    #[error("cannot voxelize a structure with no atoms")]
    EmptyStructure,
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },
}

/// Errors from the CVOX binary format.
#[derive(Debug, Error)]
pub enum CvoxError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("invalid CVOX data: {0}")]
    Format(String),
}

/// How an atom marks its voxel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OccupancyMode {
    /// Binary presence: every element is 0 or 1.
    #[default]
    Binary,
    /// Saturating per-voxel atom count.
    Counts,
}

/// Parameters of the 3D grid a 2D grid was folded from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Provenance3D {
    pub origin: [f64; 3],
    pub extent: usize,
    pub dropped_atoms: usize,
}

/// An 8-channel 3D occupancy cube.
///
/// Data is channel-major, row-major within a channel:
/// index(c, x, y, z) = ((c * E + x) * E + y) * E + z.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid3D {
    extent: usize,
    data: Vec<u8>,
    origin: [f64; 3],
    dropped_atoms: usize,
}

impl VoxelGrid3D {
    /// An all-zero cube. `extent` must be a power of two.
    pub fn zeros(extent: usize) -> Result<Self, VoxelError> {
        if extent == 0 || !extent.is_power_of_two() {
            return Err(VoxelError::ShapeMismatch {
                expected: "power-of-two extent".into(),
                got: format!("{extent}"),
            });
        }
        Ok(Self {
            extent,
            data: vec![0; CHANNEL_COUNT * extent * extent * extent],
            origin: [0.0; 3],
            dropped_atoms: 0,
        })
    }

    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn dropped_atoms(&self) -> usize {
        self.dropped_atoms
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    fn offset(&self, channel: usize, cell: [usize; 3]) -> usize {
        ((channel * self.extent + cell[0]) * self.extent + cell[1]) * self.extent + cell[2]
    }

    pub fn get(&self, channel: usize, cell: [usize; 3]) -> u8 {
        self.data[self.offset(channel, cell)]
    }

    pub fn set(&mut self, channel: usize, cell: [usize; 3], value: u8) {
        let i = self.offset(channel, cell);
        self.data[i] = value;
    }

    /// Occupied-voxel count per channel.
    pub fn popcounts(&self) -> [usize; CHANNEL_COUNT] {
        per_channel_popcounts(&self.data)
    }
}

/// An 8-channel 2D occupancy square from Hilbert folding.
///
/// Data is channel-major, row-major: index(c, x, y) = (c * S + x) * S + y.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid2D {
    side: usize,
    data: Vec<u8>,
    provenance: Option<Provenance3D>,
}

impl VoxelGrid2D {
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn provenance(&self) -> Option<&Provenance3D> {
        self.provenance.as_ref()
    }

    pub fn get(&self, channel: usize, cell: [usize; 2]) -> u8 {
        self.data[(channel * self.side + cell[0]) * self.side + cell[1]]
    }

    pub fn popcounts(&self) -> [usize; CHANNEL_COUNT] {
        per_channel_popcounts(&self.data)
    }
}

/// Either voxel encoding, as stored in CVOX files and training samples.
#[derive(Debug, Clone, PartialEq)]
pub enum VoxelGrid {
    D2(VoxelGrid2D),
    D3(VoxelGrid3D),
}

impl VoxelGrid {
    pub fn data(&self) -> &[u8] {
        match self {
            VoxelGrid::D2(g) => g.data(),
            VoxelGrid::D3(g) => g.data(),
        }
    }

    /// Spatial extents, channel dimension excluded.
    pub fn extents(&self) -> Vec<usize> {
        match self {
            VoxelGrid::D2(g) => vec![g.side, g.side],
            VoxelGrid::D3(g) => vec![g.extent, g.extent, g.extent],
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            VoxelGrid::D2(_) => Mode::D2,
            VoxelGrid::D3(_) => Mode::D3,
        }
    }

    /// Spatial side length (grids are square/cubic).
    pub fn extent(&self) -> usize {
        match self {
            VoxelGrid::D2(g) => g.side,
            VoxelGrid::D3(g) => g.extent,
        }
    }

    pub fn popcounts(&self) -> [usize; CHANNEL_COUNT] {
        per_channel_popcounts(self.data())
    }

    /// Copy with every channel other than `channel` zeroed.
    pub fn retain_channel(&self, channel: usize) -> VoxelGrid {
        let mut out = self.clone();
        let data = match &mut out {
            VoxelGrid::D2(g) => &mut g.data,
            VoxelGrid::D3(g) => &mut g.data,
        };
        let per = data.len() / CHANNEL_COUNT;
        for (c, chunk) in data.chunks_exact_mut(per).enumerate() {
            if c != channel {
                chunk.fill(0);
            }
        }
        out
    }
}

/// Encode a structure for the given mode: the 64^3 cube, folded to 512^2
/// for [`Mode::D2`].
pub fn encode(structure: &ProteinStructure, mode: Mode) -> Result<VoxelGrid, VoxelError> {
    let cube = voxelize3d(structure)?;
    Ok(match mode {
        Mode::D3 => VoxelGrid::D3(cube),
        Mode::D2 => VoxelGrid::D2(fold_to_2d(&cube)?),
    })
}

fn per_channel_popcounts(data: &[u8]) -> [usize; CHANNEL_COUNT] {
    let per = data.len() / CHANNEL_COUNT;
    let mut counts = [0usize; CHANNEL_COUNT];
    for (c, chunk) in data.chunks_exact(per).enumerate() {
        counts[c] = chunk.iter().filter(|&&v| v != 0).count();
    }
    counts
}

/// Voxelize a structure into the standard 64^3 binary cube.
///
/// The grid origin is the geometric center of all atoms minus half the
/// extent on each axis, so the centroid sits at the grid center. Each atom
/// occupies the cell floor(position - origin); atoms outside [0, 64)^3 are
/// dropped and counted.
pub fn voxelize3d(structure: &ProteinStructure) -> Result<VoxelGrid3D, VoxelError> {
    voxelize3d_mode(structure, PDB_EXTENT, OccupancyMode::Binary)
}

/// Voxelize with an explicit extent and occupancy mode.
pub fn voxelize3d_mode(
    structure: &ProteinStructure,
    extent: usize,
    mode: OccupancyMode,
) -> Result<VoxelGrid3D, VoxelError> {
    let atom_count = structure.atom_count();
    if atom_count == 0 {
        return Err(VoxelError::EmptyStructure);
    }
    let mut grid = VoxelGrid3D::zeros(extent)?;

    let mut centroid = [0.0f64; 3];
    for atom in structure.atoms() {
        for (acc, p) in centroid.iter_mut().zip(atom.position) {
            *acc += p;
        }
    }
    let half = extent as f64 / 2.0;
    for (axis, acc) in centroid.iter_mut().enumerate() {
        *acc /= atom_count as f64;
        grid.origin[axis] = *acc - half;
    }

    let mut dropped = 0usize;
    for residue in &structure.residues {
        let class = residue.channel();
        for atom in &residue.atoms {
            let mut cell = [0usize; 3];
            let mut in_bounds = true;
            for axis in 0..3 {
                let c = (atom.position[axis] - grid.origin[axis]).floor();
                if c < 0.0 || c >= extent as f64 {
                    in_bounds = false;
                    break;
                }
                cell[axis] = c as usize;
            }
            if !in_bounds {
                dropped += 1;
                continue;
            }
            if let Some(class) = class {
                mark(&mut grid, class.index(), cell, mode);
            }
            if atom.name == "CA" {
                mark(&mut grid, ChannelClass::AlphaCarbon.index(), cell, mode);
            } else if atom.name == "CB" {
                mark(&mut grid, ChannelClass::BetaCarbon.index(), cell, mode);
            }
        }
    }
    grid.dropped_atoms = dropped;
    Ok(grid)
}

fn mark(grid: &mut VoxelGrid3D, channel: usize, cell: [usize; 3], mode: OccupancyMode) {
    let i = grid.offset(channel, cell);
    grid.data[i] = match mode {
        OccupancyMode::Binary => 1,
        OccupancyMode::Counts => grid.data[i].saturating_add(1),
    };
}

/// Hilbert curve pair for folding a cube of the given extent.
fn fold_curves(extent: usize) -> Result<(HilbertCurve, HilbertCurve), VoxelError> {
    let err = |got: String| VoxelError::ShapeMismatch {
        expected: "cube extent 2^m with 3m even (e.g. 4, 16, 64)".into(),
        got,
    };
    if !extent.is_power_of_two() {
        return Err(err(format!("{extent}")));
    }
    let m = extent.trailing_zeros();
    if m == 0 || (3 * m) % 2 != 0 {
        return Err(err(format!("{extent}")));
    }
    let cube = HilbertCurve::new(m, 3).map_err(|e| err(e.to_string()))?;
    let square = HilbertCurve::new(3 * m / 2, 2).map_err(|e| err(e.to_string()))?;
    Ok((cube, square))
}

/// Linear cube offset -> linear plane offset, shared by all channels.
fn fold_map(extent: usize) -> Result<Vec<u32>, VoxelError> {
    let (cube, square) = fold_curves(extent)?;
    let side = square.side() as usize;
    let cells = cube.cell_count();
    let mut map = vec![0u32; cells as usize];
    let mut c3 = [0u32; 3];
    let mut c2 = [0u32; 2];
    for index in 0..cells {
        cube.decode(index, &mut c3).expect("index in range");
        square.decode(index, &mut c2).expect("index in range");
        let from =
            (c3[0] as usize * extent + c3[1] as usize) * extent + c3[2] as usize;
        let to = c2[0] as usize * side + c2[1] as usize;
        map[from] = to as u32;
    }
    Ok(map)
}

/// Fold a 3D cube into its 2D Hilbert layout.
///
/// Per channel, the cube is read along the 3D curve and written along the
/// 2D curve; the map is a bijection, so per-channel occupancy is conserved
/// and [`unfold_to_3d`] restores the cube bit-exactly.
pub fn fold_to_2d(grid: &VoxelGrid3D) -> Result<VoxelGrid2D, VoxelError> {
    let map = fold_map(grid.extent)?;
    let cells = map.len();
    let side = (cells as f64).sqrt() as usize;
    let mut data = vec![0u8; CHANNEL_COUNT * cells];
    for channel in 0..CHANNEL_COUNT {
        let src = &grid.data[channel * cells..(channel + 1) * cells];
        let dst = &mut data[channel * cells..(channel + 1) * cells];
        for (from, &to) in map.iter().enumerate() {
            dst[to as usize] = src[from];
        }
    }
    Ok(VoxelGrid2D {
        side,
        data,
        provenance: Some(Provenance3D {
            origin: grid.origin,
            extent: grid.extent,
            dropped_atoms: grid.dropped_atoms,
        }),
    })
}

/// Inverse of [`fold_to_2d`].
pub fn unfold_to_3d(grid: &VoxelGrid2D) -> Result<VoxelGrid3D, VoxelError> {
    let cells = grid.side * grid.side;
    let extent = match cells {
        c if c == 0 => 0,
        c => (c as f64).cbrt().round() as usize,
    };
    if extent * extent * extent != cells {
        return Err(VoxelError::ShapeMismatch {
            expected: "square side 2^(3m/2) for some cube extent 2^m".into(),
            got: format!("{}", grid.side),
        });
    }
    let map = fold_map(extent)?;
    let mut cube = VoxelGrid3D::zeros(extent)?;
    if let Some(p) = grid.provenance {
        cube.origin = p.origin;
        cube.dropped_atoms = p.dropped_atoms;
    }
    for channel in 0..CHANNEL_COUNT {
        let src = &grid.data[channel * cells..(channel + 1) * cells];
        let dst = &mut cube.data[channel * cells..(channel + 1) * cells];
        for (from, &to) in map.iter().enumerate() {
            dst[from] = src[to as usize];
        }
    }
    Ok(cube)
}

const CVOX_MAGIC: &[u8; 4] = b"CVOX";
const CVOX_VERSION: u8 = 1;

/// Write a grid in the CVOX binary format: magic "CVOX", version, dimension
/// (2 or 3), channel count, dtype (0 = u8), little-endian u32 extent per
/// dimension, then the raw channel-major row-major payload.
pub fn write_cvox<W: Write>(writer: &mut W, grid: &VoxelGrid) -> Result<(), CvoxError> {
    let extents = grid.extents();
    writer.write_all(CVOX_MAGIC)?;
    writer.write_all(&[CVOX_VERSION, extents.len() as u8, CHANNEL_COUNT as u8, 0])?;
    for e in &extents {
        writer.write_all(&(*e as u32).to_le_bytes())?;
    }
    writer.write_all(grid.data())?;
    Ok(())
}

/// Read a CVOX file. Grids loaded this way carry no 3D provenance.
pub fn read_cvox<R: Read>(reader: &mut R) -> Result<VoxelGrid, CvoxError> {
    let mut header = [0u8; 8];
    reader.read_exact(&mut header)?;
    if &header[..4] != CVOX_MAGIC {
        return Err(CvoxError::Format("bad magic".into()));
    }
    let (version, dimension, channels, dtype) = (header[4], header[5], header[6], header[7]);
    if version != CVOX_VERSION {
        return Err(CvoxError::Format(format!("unsupported version {version}")));
    }
    if channels as usize != CHANNEL_COUNT {
        return Err(CvoxError::Format(format!(
            "expected {CHANNEL_COUNT} channels, got {channels}"
        )));
    }
    if dtype != 0 {
        return Err(CvoxError::Format(format!("unsupported dtype {dtype}")));
    }
    let mut extents = Vec::with_capacity(dimension as usize);
    for _ in 0..dimension {
        let mut buf = [0u8; 4];
        reader.read_exact(&mut buf)?;
        extents.push(u32::from_le_bytes(buf) as usize);
    }
    let cells: usize = extents.iter().product();
    let mut data = vec![0u8; CHANNEL_COUNT * cells];
    reader.read_exact(&mut data)?;
    match dimension {
        2 => {
            if extents[0] != extents[1] {
                return Err(CvoxError::Format("non-square 2D grid".into()));
            }
            Ok(VoxelGrid::D2(VoxelGrid2D {
                side: extents[0],
                data,
                provenance: None,
            }))
        }
        3 => {
            if extents[0] != extents[1] || extents[1] != extents[2] {
                return Err(CvoxError::Format("non-cubic 3D grid".into()));
            }
            if !extents[0].is_power_of_two() {
                return Err(CvoxError::Format("extent is not a power of two".into()));
            }
            Ok(VoxelGrid::D3(VoxelGrid3D {
                extent: extents[0],
                data,
                origin: [0.0; 3],
                dropped_atoms: 0,
            }))
        }
        d => Err(CvoxError::Format(format!("unsupported dimension {d}"))),
    }
}
