//! Matrix Market coordinate reader plus the plain index-list format for
//! vector structures.
//!
//! Supported headers: `matrix coordinate {real|integer|pattern}
//! {general|symmetric}`. Symmetric files are expanded to both triangles,
//! explicitly stored zeros are dropped, and indices are converted to 0-based.

use super::LoadedStructure;
use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Real,
    Integer,
    Pattern,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

/// Parsed header plus dimensions; exposed for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct MatrixMarketData {
    pub rows: i64,
    pub cols: i64,
    pub declared_entries: usize,
    pub pattern: bool,
    pub symmetric: bool,
}

fn parse_header(line: &str) -> Result<(Field, Symmetry)> {
    let mut words = line.split_whitespace();
    if words.next() != Some("%%MatrixMarket") {
        return Err(Error::MatrixMarket(
            "first line must start with %%MatrixMarket".into(),
        ));
    }
    if words.next() != Some("matrix") {
        return Err(Error::MatrixMarket(
            "only `matrix` objects are supported".into(),
        ));
    }
    if words.next() != Some("coordinate") {
        return Err(Error::MatrixMarket(
            "only `coordinate` format is supported".into(),
        ));
    }
    let field = match words.next() {
        Some("real") => Field::Real,
        Some("integer") => Field::Integer,
        Some("pattern") => Field::Pattern,
        other => {
            return Err(Error::MatrixMarket(format!(
                "unsupported field type {:?} (expected real, integer or pattern)",
                other.unwrap_or("<missing>")
            )))
        }
    };
    let symmetry = match words.next() {
        Some("general") => Symmetry::General,
        Some("symmetric") => Symmetry::Symmetric,
        other => {
            return Err(Error::MatrixMarket(format!(
                "unsupported symmetry {:?} (expected general or symmetric)",
                other.unwrap_or("<missing>")
            )))
        }
    };
    Ok((field, symmetry))
}

/// Reads a Matrix Market coordinate file from any reader.
pub fn read_matrix_market<R: Read>(reader: R) -> Result<(MatrixMarketData, LoadedStructure)> {
    let reader = BufReader::new(reader);
    let mut lines = reader.lines();
    let header = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(Error::MatrixMarket("empty file".into())),
        }
    };
    let (field, symmetry) = parse_header(&header)?;

    // size line, after comments
    let size_line = loop {
        match lines.next() {
            Some(line) => {
                let line = line?;
                let t = line.trim();
                if t.is_empty() || t.starts_with('%') {
                    continue;
                }
                break line;
            }
            None => return Err(Error::MatrixMarket("missing size line".into())),
        }
    };
    let sizes: Vec<&str> = size_line.split_whitespace().collect();
    if sizes.len() != 3 {
        return Err(Error::MatrixMarket(format!(
            "malformed size line `{}`",
            size_line.trim()
        )));
    }
    let rows: i64 = sizes[0]
        .parse()
        .map_err(|_| Error::MatrixMarket("bad row count".into()))?;
    let cols: i64 = sizes[1]
        .parse()
        .map_err(|_| Error::MatrixMarket("bad column count".into()))?;
    let declared: usize = sizes[2]
        .parse()
        .map_err(|_| Error::MatrixMarket("bad entry count".into()))?;
    if rows < 0 || cols < 0 {
        return Err(Error::MatrixMarket("negative dimensions".into()));
    }

    let mut structure = LoadedStructure {
        dims: vec![rows, cols],
        set: BTreeMap::new(),
    };
    let mut seen = 0usize;
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let parts: Vec<&str> = t.split_whitespace().collect();
        let expected = if field == Field::Pattern { 2 } else { 3 };
        if parts.len() < expected {
            return Err(Error::MatrixMarket(format!("malformed entry line `{t}`")));
        }
        let i: i64 = parts[0]
            .parse()
            .map_err(|_| Error::MatrixMarket(format!("bad row index `{}`", parts[0])))?;
        let j: i64 = parts[1]
            .parse()
            .map_err(|_| Error::MatrixMarket(format!("bad column index `{}`", parts[1])))?;
        if i < 1 || i > rows || j < 1 || j > cols {
            return Err(Error::MatrixMarket(format!(
                "entry ({i}, {j}) outside declared {rows} x {cols} matrix"
            )));
        }
        let value = match field {
            Field::Pattern => None,
            Field::Real | Field::Integer => Some(
                parts[2]
                    .parse::<f64>()
                    .map_err(|_| Error::MatrixMarket(format!("bad value `{}`", parts[2])))?,
            ),
        };
        seen += 1;
        if value == Some(0.0) {
            continue; // explicitly stored zero: not part of the structure
        }
        let (r, c) = (i - 1, j - 1);
        structure.insert(vec![r, c], value)?;
        if symmetry == Symmetry::Symmetric && r != c {
            structure.insert(vec![c, r], value)?;
        }
    }
    if seen != declared {
        return Err(Error::MatrixMarket(format!(
            "file declares {declared} entries but contains {seen}"
        )));
    }
    Ok((
        MatrixMarketData {
            rows,
            cols,
            declared_entries: declared,
            pattern: field == Field::Pattern,
            symmetric: symmetry == Symmetry::Symmetric,
        },
        structure,
    ))
}

/// Loads a Matrix Market file from disk.
pub fn load_matrix_market(path: &Path) -> Result<(MatrixMarketData, LoadedStructure)> {
    let file = File::open(path)
        .map_err(|e| Error::MatrixMarket(format!("cannot open {}: {e}", path.display())))?;
    read_matrix_market(file)
}

/// Loads a vector structure from a plain text file holding one 0-based index
/// per line. The vector length is not encoded in the file; the caller supplies
/// it from the kernel's declarations.
pub fn load_index_list(path: &Path, len: i64) -> Result<LoadedStructure> {
    let file = File::open(path)
        .map_err(|e| Error::Structure(format!("cannot open {}: {e}", path.display())))?;
    let reader = BufReader::new(file);
    let mut structure = LoadedStructure {
        dims: vec![len],
        set: BTreeMap::new(),
    };
    for line in reader.lines() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.starts_with('%') {
            continue;
        }
        let i: i64 = t
            .parse()
            .map_err(|_| Error::Structure(format!("bad index `{t}` in {}", path.display())))?;
        if i < 0 || i >= len {
            return Err(Error::Structure(format!(
                "index {i} outside vector of length {len} in {}",
                path.display()
            )));
        }
        structure.insert(vec![i], None)?;
    }
    Ok(structure)
}
