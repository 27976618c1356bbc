//! Reference executors: a dense interpreter of the kernel IR, an interpreter
//! of the generated piecewise program, and the differential checker tying
//! them together.

mod dense;
mod diff;
mod piecewise;

pub use dense::{dense_execute, DenseState};
pub use diff::{differential_check, DiffConfig, DiffReport};
pub use piecewise::piecewise_execute;

use crate::error::{Error, Result};
use crate::kernel::{Kernel, ParamBindings};
use crate::sparsity::{DenseTensor, EssentialSet};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// How trial values are placed on an input structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValueModel {
    /// Independent values uniform in [0.5, 2.0].
    #[default]
    Uniform,
    /// For square 2-D arrays with transposition-closed structures: symmetric
    /// off-diagonal values plus a diagonally dominant diagonal, keeping the
    /// matrix positive definite. Other arrays fall back to uniform values.
    SpdPattern,
}

fn structure_is_symmetric(set: &EssentialSet, array: &str) -> bool {
    set.coords_of(array)
        .all(|c| c.len() == 2 && set.contains(array, &[c[1], c[0]]))
}

/// Builds a dense state for one trial: declared arrays are allocated at their
/// concrete sizes, and input/inout arrays get random nonzero values at their
/// `d0` positions. Deterministic in (seed, trial).
pub fn synth_values(
    kernel: &Kernel,
    d0: &EssentialSet,
    params: &ParamBindings,
    seed: u64,
    trial: u64,
    model: ValueModel,
) -> Result<DenseState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_add(1));
    let mut state = DenseState::allocate(kernel, params)?;
    for decl in &kernel.arrays {
        if decl.role == crate::kernel::Role::Output {
            continue;
        }
        let dims = kernel.array_dims(decl, params)?;
        d0.check_bounds(&decl.name, &dims)?;
        let tensor = state
            .tensors
            .get_mut(&decl.name)
            .expect("allocate covers every declared array");
        let spd = model == ValueModel::SpdPattern
            && dims.len() == 2
            && dims[0] == dims[1]
            && structure_is_symmetric(d0, &decl.name);
        if spd {
            fill_spd(tensor, d0, &decl.name, &mut rng)?;
        } else {
            for coords in d0.coords_of(&decl.name) {
                tensor.set(coords, rng.gen_range(0.5..2.0))?;
            }
        }
    }
    Ok(state)
}

/// Symmetric values below/above the diagonal, then a dominant diagonal
/// `1 + sum(|row|)` wherever the pattern stores a diagonal element.
fn fill_spd(
    tensor: &mut DenseTensor,
    d0: &EssentialSet,
    array: &str,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let mut diagonal: Vec<i64> = Vec::new();
    for coords in d0.coords_of(array) {
        let (i, j) = (coords[0], coords[1]);
        if i > j {
            let v = rng.gen_range(0.5..2.0);
            tensor.set(&[i, j], v)?;
            tensor.set(&[j, i], v)?;
        } else if i == j {
            diagonal.push(i);
        }
    }
    let n = tensor.dims[0];
    for i in diagonal {
        let mut row_sum = 0.0;
        for j in 0..n {
            if j != i {
                row_sum += tensor.get(&[i, j])?.abs();
            }
        }
        tensor.set(&[i, i], 1.0 + row_sum)?;
    }
    Ok(())
}

/// Convenience: all written arrays must hold exactly zero outside `dfinal`.
/// Returns the number of violations.
pub fn count_structure_leaks(kernel: &Kernel, state: &DenseState, dfinal: &EssentialSet) -> usize {
    let mut leaks = 0;
    for decl in &kernel.arrays {
        if !decl.role.is_written() {
            continue;
        }
        state.tensors[&decl.name].for_each(|coords, v| {
            if v != 0.0 && !dfinal.contains(&decl.name, coords) {
                leaks += 1;
            }
        });
    }
    leaks
}

pub(crate) fn checked_div(a: f64, b: f64, what: &str) -> Result<f64> {
    if b == 0.0 {
        return Err(Error::Exec(format!("division by zero in {what}")));
    }
    Ok(a / b)
}

pub(crate) fn checked_mod(a: f64, b: f64, what: &str) -> Result<f64> {
    if b == 0.0 {
        return Err(Error::Exec(format!("modulus by zero in {what}")));
    }
    Ok(a % b)
}

pub(crate) fn checked_sqrt(v: f64, what: &str) -> Result<f64> {
    if v < 0.0 {
        return Err(Error::Exec(format!(
            "square root of negative value {v} in {what}"
        )));
    }
    Ok(v.sqrt())
}
