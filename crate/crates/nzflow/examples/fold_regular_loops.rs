//! From essential instances to piecewise-regular loops: order the instances
//! by timestamps, resolve operands to sparse positions, and fold equidistant
//! runs back into counted loops.
//!
//! ```sh
//! cargo run -p nzflow --example fold_regular_loops
//! ```

use nzflow::adg::build_adg;
use nzflow::analysis::run_analysis;
use nzflow::codegen::{build_layouts, build_program, execution_trace, memory_trace, ProgramItem};
use nzflow::kernel::{name, Builtin};
use nzflow::sparsity::{DataIndex, EssentialSet};

fn main() -> nzflow::Result<()> {
    let kernel = Builtin::Cholesky.kernel();
    let adg = build_adg(&kernel);

    // tridiagonal-ish band: diagonal plus one subdiagonal entry every row
    let n = 10i64;
    let a = name("A");
    let mut d0 = EssentialSet::new();
    for i in 0..n {
        d0.insert(DataIndex::new(a.clone(), vec![i, i]));
        if i > 0 {
            d0.insert(DataIndex::new(a.clone(), vec![i, i - 1]));
            d0.insert(DataIndex::new(a.clone(), vec![i - 1, i]));
        }
    }

    let params = [(name("n"), n)].into_iter().collect();
    let result = run_analysis(&kernel, &adg, &d0, &params)?;
    let trace = execution_trace(&kernel, &result)?;
    println!("execution trace ({} instances):", trace.len());
    for t in trace.iter().take(10) {
        let ivec = t
            .ivec
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        println!("  <{},{ivec}>", t.stmt);
    }
    if trace.len() > 10 {
        println!("  ...");
    }

    let layouts = build_layouts(&kernel, &result.dfinal);
    let mtrace = memory_trace(&kernel, &trace, &layouts, &params)?;
    println!("\nmemory access trace (first 6 points):");
    for ap in mtrace.iter().take(6) {
        let slots = ap
            .slots
            .iter()
            .map(|(arr, p)| match p.pos() {
                Some(p) => format!("val{arr}[{p}]"),
                None => "0.0".into(),
            })
            .collect::<Vec<_>>()
            .join(" ");
        println!("  {}: {slots}", ap.stmt);
    }

    let program = build_program(&kernel, &result, &params)?;
    println!("\nfolded program ({} items):", program.items.len());
    for item in &program.items {
        match item {
            ProgramItem::RegularLoop(p) => println!(
                "  loop over {} instances of {} with stride {:?}",
                p.count, p.stmt, p.stride
            ),
            ProgramItem::Singleton(ap) => println!("  single instance of {}", ap.stmt),
        }
    }
    // the folded program replays the memory trace exactly
    assert_eq!(program.flatten(), mtrace);
    println!("\nflatten(program) == memory trace");
    Ok(())
}
