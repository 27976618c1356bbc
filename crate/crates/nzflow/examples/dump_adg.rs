//! Build the access dependence graph of a kernel and dump it in Graphviz
//! format, together with its depth (the quantity bounding worklist rounds for
//! non-cascading structures).
//!
//! ```sh
//! cargo run -p nzflow --example dump_adg
//! ```

use nzflow::adg::build_adg;
use nzflow::kernel::Builtin;

fn main() -> nzflow::Result<()> {
    for builtin in [Builtin::Spmv, Builtin::Cholesky] {
        let kernel = builtin.kernel();
        let adg = build_adg(&kernel);
        println!(
            "// kernel {}: {} nodes, {} edges, d(G) = {}",
            kernel.name,
            adg.nodes.len(),
            adg.edges.len(),
            adg.depth()?
        );
        print!("{}", adg.to_graphviz());
        println!();
    }
    Ok(())
}
