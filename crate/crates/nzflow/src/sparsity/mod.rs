//! Tagged index sets and the deterministic sparse value layout.
//!
//! A `DataIndex` is a matrix-tagged coordinate vector; `EssentialSet`s of them
//! are the data-flow values of the analysis. `SparseLayout` maps the indices
//! of one matrix to dense offsets in row-major coordinate order, reproducing
//! the value-array positions of the generated code.

mod matrix_market;
mod synth;

pub use matrix_market::{load_index_list, load_matrix_market, MatrixMarketData};
pub use synth::{synth_vector, SynthMode, SynthSpec};

use crate::error::{Error, Result};
use crate::kernel::Name;
use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Coordinate vector of one matrix element (0-based, row-major significance).
pub type Coords = Vec<i64>;

/// A matrix-tagged data index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DataIndex {
    pub array: Name,
    pub coords: Coords,
}

impl DataIndex {
    pub fn new(array: Name, coords: Coords) -> Self {
        DataIndex { array, coords }
    }
}

impl fmt::Display for DataIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.array)?;
        for c in &self.coords {
            write!(f, ",{c}")?;
        }
        write!(f, ")")
    }
}

/// Ordered, duplicate-free set of data indices, grouped per array. Iteration
/// order is array name, then row-major lexicographic coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EssentialSet {
    by_array: BTreeMap<Name, BTreeSet<Coords>>,
}

impl EssentialSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, idx: DataIndex) -> bool {
        self.by_array
            .entry(idx.array)
            .or_default()
            .insert(idx.coords)
    }

    pub fn insert_coords(&mut self, array: &Name, coords: Coords) -> bool {
        match self.by_array.get_mut(array) {
            Some(set) => set.insert(coords),
            None => self
                .by_array
                .entry(array.clone())
                .or_default()
                .insert(coords),
        }
    }

    pub fn contains(&self, array: &str, coords: &[i64]) -> bool {
        self.by_array.get(array).is_some_and(|s| s.contains(coords))
    }

    pub fn len(&self) -> usize {
        self.by_array.values().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_array.values().all(|s| s.is_empty())
    }

    pub fn array_len(&self, array: &str) -> usize {
        self.by_array.get(array).map_or(0, |s| s.len())
    }

    pub fn arrays(&self) -> impl Iterator<Item = &Name> {
        self.by_array.keys()
    }

    pub fn coords_of(&self, array: &str) -> impl Iterator<Item = &Coords> {
        self.by_array.get(array).into_iter().flatten()
    }

    pub fn iter(&self) -> impl Iterator<Item = DataIndex> + '_ {
        self.by_array.iter().flat_map(|(a, set)| {
            set.iter()
                .map(move |c| DataIndex::new(a.clone(), c.clone()))
        })
    }

    /// In-place union; returns the number of indices actually added.
    pub fn union_with(&mut self, other: &EssentialSet) -> usize {
        let mut added = 0;
        for (a, set) in &other.by_array {
            let dst = self.by_array.entry(a.clone()).or_default();
            for c in set {
                if dst.insert(c.clone()) {
                    added += 1;
                }
            }
        }
        added
    }

    /// `self \ other`, preserving order.
    pub fn difference(&self, other: &EssentialSet) -> EssentialSet {
        let mut out = EssentialSet::new();
        for (a, set) in &self.by_array {
            let other_set = other.by_array.get(a);
            for c in set {
                if !other_set.is_some_and(|s| s.contains(c)) {
                    out.insert_coords(a, c.clone());
                }
            }
        }
        out
    }

    /// Restriction to one array.
    pub fn restrict(&self, array: &str) -> EssentialSet {
        let mut out = EssentialSet::new();
        if let Some((a, set)) = self.by_array.get_key_value(array) {
            out.by_array.insert(a.clone(), set.clone());
        }
        out
    }

    pub fn is_disjoint(&self, other: &EssentialSet) -> bool {
        for (a, set) in &self.by_array {
            if let Some(other_set) = other.by_array.get(a) {
                if set.intersection(other_set).next().is_some() {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_subset(&self, other: &EssentialSet) -> bool {
        self.by_array.iter().all(|(a, set)| {
            let Some(os) = other.by_array.get(a) else {
                return set.is_empty();
            };
            set.is_subset(os)
        })
    }

    /// Checks every coordinate lies in `[0, dims[k])`.
    pub fn check_bounds(&self, array: &str, dims: &[i64]) -> Result<()> {
        for c in self.coords_of(array) {
            if c.len() != dims.len() {
                return Err(Error::Structure(format!(
                    "index of `{array}` has {} coordinates, expected {}",
                    c.len(),
                    dims.len()
                )));
            }
            for (v, d) in c.iter().zip(dims) {
                if *v < 0 || v >= d {
                    return Err(Error::Structure(format!(
                        "index ({}) of `{array}` outside declared size {:?}",
                        c.iter()
                            .map(|x| x.to_string())
                            .collect::<Vec<_>>()
                            .join(","),
                        dims
                    )));
                }
            }
        }
        Ok(())
    }
}

impl FromIterator<DataIndex> for EssentialSet {
    fn from_iter<T: IntoIterator<Item = DataIndex>>(iter: T) -> Self {
        let mut s = EssentialSet::new();
        for d in iter {
            s.insert(d);
        }
        s
    }
}

// ---------------------------------------------------------------------------
// Sparse layout and value arrays
// ---------------------------------------------------------------------------

/// Bijection between one matrix's essential indices and dense offsets
/// `0..nnz`, assigned in row-major lexicographic coordinate order.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseLayout {
    pub array: Name,
    position: BTreeMap<Coords, usize>,
    index_of: Vec<Coords>,
}

impl SparseLayout {
    /// Builds the layout of `array` from an index set (only that array's
    /// indices are consumed).
    pub fn build(array: &Name, dset: &EssentialSet) -> SparseLayout {
        let mut position = BTreeMap::new();
        let mut index_of = Vec::new();
        for c in dset.coords_of(array) {
            position.insert(c.clone(), index_of.len());
            index_of.push(c.clone());
        }
        SparseLayout {
            array: array.clone(),
            position,
            index_of,
        }
    }

    pub fn nnz(&self) -> usize {
        self.index_of.len()
    }

    pub fn position(&self, coords: &[i64]) -> Option<usize> {
        self.position.get(coords).copied()
    }

    pub fn coords_at(&self, pos: usize) -> Option<&Coords> {
        self.index_of.get(pos)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Coords, usize)> {
        self.index_of.iter().enumerate().map(|(p, c)| (c, p))
    }
}

/// Dense vector of the nonzero values of one matrix, in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueArray {
    pub array: Name,
    pub values: Vec<f64>,
}

/// Row-major dense tensor used by the dense executor and the scatter/gather
/// bridge between the two executors.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub dims: Vec<i64>,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dims: Vec<i64>) -> Result<DenseTensor> {
        let mut len: usize = 1;
        for d in &dims {
            if *d < 0 {
                return Err(Error::Structure(format!("negative dimension {d}")));
            }
            len = len
                .checked_mul(*d as usize)
                .ok_or_else(|| Error::Structure("tensor too large".into()))?;
        }
        Ok(DenseTensor {
            dims,
            data: vec![0.0; len],
        })
    }

    pub fn offset(&self, coords: &[i64]) -> Result<usize> {
        if coords.len() != self.dims.len() {
            return Err(Error::Structure(format!(
                "rank mismatch: {} coordinates for {} dimensions",
                coords.len(),
                self.dims.len()
            )));
        }
        let mut off: usize = 0;
        for (c, d) in coords.iter().zip(&self.dims) {
            if *c < 0 || c >= d {
                return Err(Error::Structure(format!("coordinate {c} outside [0, {d})")));
            }
            off = off * (*d as usize) + *c as usize;
        }
        Ok(off)
    }

    pub fn get(&self, coords: &[i64]) -> Result<f64> {
        Ok(self.data[self.offset(coords)?])
    }

    pub fn set(&mut self, coords: &[i64], v: f64) -> Result<()> {
        let off = self.offset(coords)?;
        self.data[off] = v;
        Ok(())
    }

    /// Visits every coordinate/value pair in row-major order.
    pub fn for_each(&self, mut f: impl FnMut(&[i64], f64)) {
        let mut coords = vec![0i64; self.dims.len()];
        for (off, v) in self.data.iter().enumerate() {
            let mut rem = off;
            for (k, d) in self.dims.iter().enumerate().rev() {
                let d = *d as usize;
                coords[k] = (rem % d) as i64;
                rem /= d;
            }
            f(&coords, *v);
        }
    }
}

/// Packs the nonzero values of a dense tensor into layout order. A nonzero
/// outside the layout means the predicted structure is unsound; that is a
/// hard error, not a truncation.
pub fn scatter_dense(dense: &DenseTensor, layout: &SparseLayout) -> Result<ValueArray> {
    let mut values = vec![0.0; layout.nnz()];
    let mut leak: Option<Coords> = None;
    dense.for_each(|coords, v| {
        if let Some(p) = layout.position(coords) {
            values[p] = v;
        } else if v != 0.0 && leak.is_none() {
            leak = Some(coords.to_vec());
        }
    });
    if let Some(c) = leak {
        return Err(Error::Structure(format!(
            "dense value at ({}) of `{}` is nonzero but outside the sparse layout",
            c.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(","),
            layout.array
        )));
    }
    Ok(ValueArray {
        array: layout.array.clone(),
        values,
    })
}

/// Expands a value array back to a dense tensor; indices outside the layout
/// are zero.
pub fn gather_dense(
    values: &ValueArray,
    layout: &SparseLayout,
    dims: &[i64],
) -> Result<DenseTensor> {
    if values.values.len() != layout.nnz() {
        return Err(Error::Structure(format!(
            "value array of `{}` has {} entries, layout has {}",
            values.array,
            values.values.len(),
            layout.nnz()
        )));
    }
    let mut dense = DenseTensor::zeros(dims.to_vec())?;
    for (coords, pos) in layout.entries() {
        dense.set(coords, values.values[pos])?;
    }
    Ok(dense)
}

/// Loaded sparsity structure (and optional values) of one matrix file.
#[derive(Debug, Clone)]
pub struct LoadedStructure {
    pub dims: Vec<i64>,
    pub set: BTreeMap<Coords, Option<f64>>,
}

impl LoadedStructure {
    /// Index set tagged with `array`, plus a value array in layout order when
    /// the file carried values.
    pub fn tagged(&self, array: &Name) -> (EssentialSet, Option<ValueArray>) {
        let mut set = EssentialSet::new();
        let mut values = Vec::with_capacity(self.set.len());
        let mut have_values = true;
        for (c, v) in &self.set {
            set.insert_coords(array, c.clone());
            match v {
                Some(x) => values.push(*x),
                None => have_values = false,
            }
        }
        let va = (have_values && !self.set.is_empty()).then(|| ValueArray {
            array: array.clone(),
            values,
        });
        (set, va)
    }

    pub fn insert(&mut self, coords: Coords, value: Option<f64>) -> Result<()> {
        match self.set.entry(coords) {
            Entry::Vacant(e) => {
                e.insert(value);
                Ok(())
            }
            Entry::Occupied(e) => Err(Error::MatrixMarket(format!(
                "duplicate entry at ({})",
                e.key()
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(",")
            ))),
        }
    }
}
