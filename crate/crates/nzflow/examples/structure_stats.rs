//! Structural statistics of the generated code: fill-in share, how much of
//! the trace folds into regular loops, and the mean loop size.
//!
//! ```sh
//! cargo run -p nzflow --example structure_stats
//! ```

use nzflow::adg::build_adg;
use nzflow::analysis::run_analysis;
use nzflow::codegen::{build_program, code_stats};
use nzflow::kernel::{name, Builtin, ParamBindings};
use nzflow::sparsity::{DataIndex, EssentialSet};

fn run_case(label: &str, n: i64, d0: EssentialSet) -> nzflow::Result<()> {
    let kernel = Builtin::Cholesky.kernel();
    let adg = build_adg(&kernel);
    let params: ParamBindings = [(name("n"), n)].into_iter().collect();
    let result = run_analysis(&kernel, &adg, &d0, &params)?;
    let program = build_program(&kernel, &result, &params)?;
    let stats = code_stats(&kernel, &program, &result.d0, &result.dfinal);
    println!(
        "{label:<18} fill {:6.2}%   loops {:6.2}%   avg size {:7.2}   ({} loops, {} singletons)",
        stats.fill_in_pct,
        stats.loop_coverage_pct,
        stats.avg_loop_size,
        stats.loop_count,
        stats.singleton_count
    );
    Ok(())
}

fn main() -> nzflow::Result<()> {
    let a = name("A");

    // purely diagonal: one loop covering everything, no fill
    let n = 64i64;
    let diag: EssentialSet = (0..n)
        .map(|i| DataIndex::new(a.clone(), vec![i, i]))
        .collect();
    run_case("diagonal", n, diag)?;

    // pentadiagonal band: fills one extra band, folds well
    let mut band = EssentialSet::new();
    for i in 0..n {
        for d in -2i64..=2 {
            let j = i + d;
            if j >= 0 && j < n {
                band.insert(DataIndex::new(a.clone(), vec![i, j]));
            }
        }
    }
    run_case("pentadiagonal", n, band)?;

    // arrow: dense first column plus diagonal, fills the whole triangle
    let mut arrow = EssentialSet::new();
    for i in 0..32 {
        arrow.insert(DataIndex::new(a.clone(), vec![i, i]));
        if i > 0 {
            arrow.insert(DataIndex::new(a.clone(), vec![i, 0]));
            arrow.insert(DataIndex::new(a.clone(), vec![0, i]));
        }
    }
    run_case("arrow", 32, arrow)?;
    Ok(())
}
