//! Run the essential-indices analysis on the sparse matrix-sparse vector
//! product and watch it reach its fixed point: the output structure is
//! derived statically from the input structures.
//!
//! ```sh
//! cargo run -p nzflow --example fixed_point_analysis
//! ```

use nzflow::adg::build_adg;
use nzflow::analysis::run_analysis;
use nzflow::kernel::{name, Builtin};
use nzflow::sparsity::{DataIndex, EssentialSet};

fn main() -> nzflow::Result<()> {
    let kernel = Builtin::Spmspv.kernel();
    let adg = build_adg(&kernel);

    // A is 4x4 with six nonzeros, X has nonzeros at rows 1 and 3
    let a = name("A");
    let x = name("X");
    let mut d0 = EssentialSet::new();
    for (i, j) in [(0, 0), (0, 2), (1, 1), (2, 1), (3, 1), (3, 3)] {
        d0.insert(DataIndex::new(a.clone(), vec![i, j]));
    }
    for i in [1, 3] {
        d0.insert(DataIndex::new(x.clone(), vec![i]));
    }

    let params = [(name("m"), 4), (name("n"), 4)].into_iter().collect();
    let result = run_analysis(&kernel, &adg, &d0, &params)?;

    println!("converged after {} sweeps", result.sweeps);
    println!(
        "structure of Y: {}",
        set_to_string(&result.structure_of("Y"))
    );
    println!("fill-ins:       {}", set_to_string(&result.afill));
    println!("essential instances of S:");
    for ivec in &result.ainds[&name("S")] {
        println!("  i = {}, j = {}", ivec[0], ivec[1]);
    }
    println!("\nfinal Out sets per access node:");
    for node in &adg.nodes {
        println!(
            "  {:<22} |Out| = {}",
            adg.node_label(node.id),
            result.node_states[node.id].out.len()
        );
    }
    Ok(())
}

fn set_to_string(set: &EssentialSet) -> String {
    set.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
