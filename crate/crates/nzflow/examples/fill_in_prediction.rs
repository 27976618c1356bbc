//! Predict the fill-in of an in-place factorization statically, then confirm
//! with randomized concrete runs that no nonzero ever lands outside the
//! predicted structure.
//!
//! ```sh
//! cargo run -p nzflow --example fill_in_prediction
//! ```

use nzflow::adg::build_adg;
use nzflow::analysis::{run_analysis, soundness_probe};
use nzflow::exec::ValueModel;
use nzflow::kernel::{name, Builtin};
use nzflow::sparsity::{DataIndex, EssentialSet};

fn main() -> nzflow::Result<()> {
    let kernel = Builtin::Cholesky.kernel();
    let adg = build_adg(&kernel);

    // arrow pattern: full diagonal plus a dense first column/row; eliminating
    // column 0 fills in the entire lower triangle transitively
    let n = 8i64;
    let a = name("A");
    let mut d0 = EssentialSet::new();
    for i in 0..n {
        d0.insert(DataIndex::new(a.clone(), vec![i, i]));
        if i > 0 {
            d0.insert(DataIndex::new(a.clone(), vec![i, 0]));
            d0.insert(DataIndex::new(a.clone(), vec![0, i]));
        }
    }

    let params = [(name("n"), n)].into_iter().collect();
    let result = run_analysis(&kernel, &adg, &d0, &params)?;

    println!("input nonzeros: {}", result.d0.len());
    println!("predicted fill-ins: {}", result.afill.len());
    for d in result.afill.iter() {
        println!("  {d}");
    }
    println!("output structure size: {}", result.dfinal.len());

    let probe = soundness_probe(&kernel, &result, &params, 100, 42, ValueModel::SpdPattern)?;
    println!(
        "\nsoundness probe: {} trials, {} nonzeros observed outside the prediction",
        probe.trials, probe.violations
    );
    assert!(probe.passed());
    Ok(())
}
