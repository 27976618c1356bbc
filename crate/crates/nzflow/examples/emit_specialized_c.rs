//! Emit the specialized C translation unit for a small factorization: direct
//! value-array indexing, no indirect references, runtime guards kept.
//!
//! ```sh
//! cargo run -p nzflow --example emit_specialized_c
//! ```

use nzflow::adg::build_adg;
use nzflow::analysis::run_analysis;
use nzflow::codegen::{build_program, emit_c};
use nzflow::kernel::{name, Builtin};
use nzflow::sparsity::{DataIndex, EssentialSet};

fn main() -> nzflow::Result<()> {
    let kernel = Builtin::Cholesky.kernel();
    let adg = build_adg(&kernel);

    let a = name("A");
    let mut d0 = EssentialSet::new();
    // three decoupled diagonal entries followed by a coupled 2x2 block
    for i in 0..3 {
        d0.insert(DataIndex::new(a.clone(), vec![i, i]));
    }
    for coords in [[3, 3], [4, 4], [4, 3], [3, 4]] {
        d0.insert(DataIndex::new(a.clone(), coords.to_vec()));
    }

    let params = [(name("n"), 5)].into_iter().collect();
    let result = run_analysis(&kernel, &adg, &d0, &params)?;
    let program = build_program(&kernel, &result, &params)?;
    print!("{}", emit_c(&program));
    Ok(())
}
