//! PDB file ingestion and structure editing.
//!
//! Parses fixed-column ATOM records into an in-memory structure model,
//! classifies residues into the eight information channels used by the voxel
//! encoder, and applies targeted structural edits (residue-range deletion,
//! atom removal, rigid translation) for perturbation studies.
//!
//! Only ATOM records are consumed; HETATM, headers and every other record
//! type are skipped, as are alternate locations other than blank or 'A'.
//! Multi-model files contribute their first model only.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Errors from PDB parsing.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum PdbError {
    #[error("malformed ATOM record at line {line}: {reason}")]
    MalformedRecord { line: usize, reason: String },
    #[error("no ATOM records found")]
    EmptyStructure,
}

/// The eight information channels of the voxel encoding.
///
/// Channels 0-5 are side-chain classes assigned per residue; 6 and 7 are
/// assigned per atom (CA and CB atoms respectively). Indices are stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum ChannelClass {
    Aliphatic = 0,
    Aromatic = 1,
    Neutral = 2,
    Acid = 3,
    Basic = 4,
    Glycine = 5,
    AlphaCarbon = 6,
    BetaCarbon = 7,
}

/// Number of information channels.
pub const CHANNEL_COUNT: usize = 8;

impl ChannelClass {
    pub const ALL: [ChannelClass; CHANNEL_COUNT] = [
        ChannelClass::Aliphatic,
        ChannelClass::Aromatic,
        ChannelClass::Neutral,
        ChannelClass::Acid,
        ChannelClass::Basic,
        ChannelClass::Glycine,
        ChannelClass::AlphaCarbon,
        ChannelClass::BetaCarbon,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ChannelClass::Aliphatic => "aliphatic",
            ChannelClass::Aromatic => "aromatic",
            ChannelClass::Neutral => "neutral",
            ChannelClass::Acid => "acid",
            ChannelClass::Basic => "basic",
            ChannelClass::Glycine => "glycine",
            ChannelClass::AlphaCarbon => "alpha_carbon",
            ChannelClass::BetaCarbon => "beta_carbon",
        }
    }
}

/// Map a 3-letter residue code to its side-chain channel.
///
/// Standard physicochemical grouping; codes outside the six sets (ligands,
/// non-standard residues such as MSE) return `None` and contribute nothing
/// to channels 0-5. CA/CB channels are per-atom and not assigned here.
pub fn classify_residue(residue_name: &str) -> Option<ChannelClass> {
    match residue_name {
        "ALA" | "VAL" | "LEU" | "ILE" | "MET" | "PRO" => Some(ChannelClass::Aliphatic),
        "PHE" | "TRP" | "TYR" => Some(ChannelClass::Aromatic),
        "SER" | "THR" | "ASN" | "GLN" | "CYS" => Some(ChannelClass::Neutral),
        "ASP" | "GLU" => Some(ChannelClass::Acid),
        "LYS" | "ARG" | "HIS" => Some(ChannelClass::Basic),
        "GLY" => Some(ChannelClass::Glycine),
        _ => None,
    }
}

/// A single atom from an ATOM record.
#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub serial: i32,
    pub name: String,
    pub residue_name: String,
    pub chain_id: char,
    pub residue_seq: i32,
    pub position: [f64; 3],
    pub element: String,
}

/// A residue: all atoms sharing (chain_id, residue_seq, residue_name).
#[derive(Debug, Clone, PartialEq)]
pub struct Residue {
    pub chain_id: char,
    pub residue_seq: i32,
    pub residue_name: String,
    pub atoms: Vec<Atom>,
}

impl Residue {
    /// Side-chain channel of this residue, if it has one.
    pub fn channel(&self) -> Option<ChannelClass> {
        classify_residue(&self.residue_name)
    }
}

/// A parsed protein structure: residues in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct ProteinStructure {
    pub source_id: String,
    pub residues: Vec<Residue>,
}

impl ProteinStructure {
    pub fn residue_count(&self) -> usize {
        self.residues.len()
    }

    pub fn atom_count(&self) -> usize {
        self.residues.iter().map(|r| r.atoms.len()).sum()
    }

    pub fn atoms(&self) -> impl Iterator<Item = &Atom> {
        self.residues.iter().flat_map(|r| r.atoms.iter())
    }

    pub fn find_residue(&self, chain_id: char, residue_seq: i32) -> Option<&Residue> {
        self.residues
            .iter()
            .find(|r| r.chain_id == chain_id && r.residue_seq == residue_seq)
    }

    /// Per-channel residue tallies for channels 0-5 plus the count of
    /// residues with no side-chain class.
    pub fn channel_tallies(&self) -> ([usize; 6], usize) {
        let mut tallies = [0usize; 6];
        let mut unclassified = 0usize;
        for residue in &self.residues {
            match residue.channel() {
                Some(class) => tallies[class.index()] += 1,
                None => unclassified += 1,
            }
        }
        (tallies, unclassified)
    }

    /// Re-emit the parsed atoms as fixed-column ATOM records.
    ///
    /// Parsing the output yields an equal structure, provided coordinates
    /// carry at most three decimals (the format's precision).
    pub fn to_pdb_string(&self) -> String {
        let mut out = String::new();
        for residue in &self.residues {
            for atom in &residue.atoms {
                // Names shorter than 4 chars start at column 14 by convention.
                let name_field = if atom.name.len() >= 4 {
                    atom.name.clone()
                } else {
                    format!(" {:<3}", atom.name)
                };
                let _ = writeln!(
                    out,
                    "ATOM  {:>5} {:<4} {:<3} {}{:>4}    {:>8.3}{:>8.3}{:>8.3}  1.00  0.00          {:>2}",
                    atom.serial,
                    name_field,
                    atom.residue_name,
                    atom.chain_id,
                    atom.residue_seq,
                    atom.position[0],
                    atom.position[1],
                    atom.position[2],
                    atom.element,
                );
            }
        }
        out.push_str("END\n");
        out
    }
}

/// A targeted structural edit. All edits are pure: they produce a new
/// structure and leave the original untouched.
#[derive(Debug, Clone, PartialEq)]
pub enum StructureEdit {
    /// Delete every residue with the given chain whose sequence number lies
    /// in `seq_start..=seq_end`. An empty or non-matching range is a no-op.
    RemoveResidueRange {
        chain_id: char,
        seq_start: i32,
        seq_end: i32,
    },
    /// Delete every atom with the given name (e.g. "CB"); residues left
    /// without atoms are dropped.
    RemoveAtomsByName { name: String },
    /// Translate the atoms of the residues in range by a fixed offset.
    TranslateAtoms {
        chain_id: char,
        seq_start: i32,
        seq_end: i32,
        offset: [f64; 3],
    },
}

impl StructureEdit {
    /// Short human-readable description used in perturbation reports.
    pub fn describe(&self) -> String {
        match self {
            StructureEdit::RemoveResidueRange {
                chain_id,
                seq_start,
                seq_end,
            } => format!("removed residues {chain_id}:{seq_start}-{seq_end}"),
            StructureEdit::RemoveAtomsByName { name } => format!("removed atoms named {name}"),
            StructureEdit::TranslateAtoms {
                chain_id,
                seq_start,
                seq_end,
                offset,
            } => format!(
                "translated residues {chain_id}:{seq_start}-{seq_end} by ({}, {}, {})",
                offset[0], offset[1], offset[2]
            ),
        }
    }
}

/// Apply an edit, returning the edited copy.
pub fn apply_edit(structure: &ProteinStructure, edit: &StructureEdit) -> ProteinStructure {
    let mut edited = structure.clone();
    match edit {
        StructureEdit::RemoveResidueRange {
            chain_id,
            seq_start,
            seq_end,
        } => {
            edited.residues.retain(|r| {
                !(r.chain_id == *chain_id && (*seq_start..=*seq_end).contains(&r.residue_seq))
            });
        }
        StructureEdit::RemoveAtomsByName { name } => {
            for residue in &mut edited.residues {
                residue.atoms.retain(|a| a.name != *name);
            }
            edited.residues.retain(|r| !r.atoms.is_empty());
        }
        StructureEdit::TranslateAtoms {
            chain_id,
            seq_start,
            seq_end,
            offset,
        } => {
            for residue in &mut edited.residues {
                if residue.chain_id == *chain_id
                    && (*seq_start..=*seq_end).contains(&residue.residue_seq)
                {
                    for atom in &mut residue.atoms {
                        for (p, o) in atom.position.iter_mut().zip(offset) {
                            *p += o;
                        }
                    }
                }
            }
        }
    }
    edited
}

/// Parse PDB text into a structure.
///
/// Fixed column layout: name in columns 13-16, residue name 18-20, chain 22,
/// residue sequence 23-26, coordinates 31-38/39-46/47-54. Alternate
/// locations other than blank or 'A' are skipped; only the first model of a
/// multi-model file is read.
pub fn parse_pdb(text: &str, source_id: &str) -> Result<ProteinStructure, PdbError> {
    let mut residues: Vec<Residue> = Vec::new();
    let mut index: HashMap<(char, i32), usize> = HashMap::new();
    let mut in_first_model = true;

    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        if line.starts_with("ENDMDL") {
            in_first_model = false;
            continue;
        }
        if !in_first_model || !line.starts_with("ATOM  ") {
            continue;
        }
        let bytes = line.as_bytes();

        let altloc = column_char(bytes, 17);
        if altloc != ' ' && altloc != 'A' {
            continue;
        }

        let name = columns(bytes, 13, 16).trim().to_string();
        if name.is_empty() {
            return Err(PdbError::MalformedRecord {
                line: line_no,
                reason: "blank atom name".into(),
            });
        }
        let residue_name = columns(bytes, 18, 20).trim().to_string();
        if residue_name.is_empty() {
            return Err(PdbError::MalformedRecord {
                line: line_no,
                reason: "blank residue name".into(),
            });
        }
        let chain_id = column_char(bytes, 22);
        let residue_seq: i32 = columns(bytes, 23, 26).trim().parse().map_err(|_| {
            PdbError::MalformedRecord {
                line: line_no,
                reason: format!("unparseable residue sequence {:?}", columns(bytes, 23, 26)),
            }
        })?;

        let mut position = [0.0f64; 3];
        for (axis, (lo, hi)) in [(31, 38), (39, 46), (47, 54)].into_iter().enumerate() {
            let field = columns(bytes, lo, hi);
            let value: f64 = field.trim().parse().map_err(|_| PdbError::MalformedRecord {
                line: line_no,
                reason: format!("unparseable coordinate {field:?}"),
            })?;
            if !value.is_finite() {
                return Err(PdbError::MalformedRecord {
                    line: line_no,
                    reason: format!("non-finite coordinate {field:?}"),
                });
            }
            position[axis] = value;
        }

        // Serial numbers overflow their column in large files; tolerate them.
        let serial: i32 = columns(bytes, 7, 11).trim().parse().unwrap_or(0);
        let element = columns(bytes, 77, 78).trim().to_string();

        let atom = Atom {
            serial,
            name,
            residue_name: residue_name.clone(),
            chain_id,
            residue_seq,
            position,
            element,
        };

        match index.get(&(chain_id, residue_seq)) {
            Some(&i) => {
                // Insertion-code collisions would break (chain, seq) uniqueness;
                // atoms whose residue name disagrees with the first occupant
                // are dropped.
                if residues[i].residue_name == residue_name {
                    residues[i].atoms.push(atom);
                }
            }
            None => {
                index.insert((chain_id, residue_seq), residues.len());
                residues.push(Residue {
                    chain_id,
                    residue_seq,
                    residue_name,
                    atoms: vec![atom],
                });
            }
        }
    }

    if residues.is_empty() {
        return Err(PdbError::EmptyStructure);
    }
    Ok(ProteinStructure {
        source_id: source_id.to_string(),
        residues,
    })
}

/// 1-based inclusive column slice, tolerant of short lines.
fn columns(bytes: &[u8], start: usize, end: usize) -> &str {
    let lo = (start - 1).min(bytes.len());
    let hi = end.min(bytes.len());
    std::str::from_utf8(&bytes[lo..hi]).unwrap_or("")
}

fn column_char(bytes: &[u8], col: usize) -> char {
    bytes.get(col - 1).map(|&b| b as char).unwrap_or(' ')
}
