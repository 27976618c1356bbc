//! Differentially verify the pipeline: run the dense interpreter and the
//! generated piecewise program on the same random inputs and require bitwise
//! agreement on the predicted structure, with exact zeros outside it.
//!
//! ```sh
//! cargo run -p nzflow --example differential_verify
//! ```

use nzflow::exec::{differential_check, DiffConfig, ValueModel};
use nzflow::kernel::{name, Builtin};
use nzflow::sparsity::{DataIndex, EssentialSet};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() -> nzflow::Result<()> {
    // random symmetric pattern with a full diagonal, 20x20
    let n = 20i64;
    let a = name("A");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut d0 = EssentialSet::new();
    for i in 0..n {
        d0.insert(DataIndex::new(a.clone(), vec![i, i]));
        for j in 0..i {
            if rng.gen_bool(0.15) {
                d0.insert(DataIndex::new(a.clone(), vec![i, j]));
                d0.insert(DataIndex::new(a.clone(), vec![j, i]));
            }
        }
    }

    let kernel = Builtin::Cholesky.kernel();
    let params = [(name("n"), n)].into_iter().collect();
    let cfg = DiffConfig {
        trials: 100,
        seed: 7,
        tolerance: 0.0,
        model: ValueModel::SpdPattern,
        inject_fault: false,
    };
    let report = differential_check(&kernel, &d0, &params, &cfg)?;
    println!("{report}");
    assert!(report.pass);

    // sabotage the predicted structure: the checker must notice
    let bad = DiffConfig {
        inject_fault: true,
        trials: 5,
        ..cfg
    };
    let report = differential_check(&kernel, &d0, &params, &bad)?;
    println!("\nwith an injected structure fault:\n{report}");
    assert!(!report.pass);
    Ok(())
}
