//! Parse a kernel from the DSL, inspect its structure, and show that the
//! pretty-printer round-trips.
//!
//! ```sh
//! cargo run -p nzflow --example parse_and_print
//! ```

use nzflow::kernel::{parse_kernel, timestamp_templates};

const SOURCE: &str = "
kernel smooth(n) {
    array U[n] inout;
    array F[n] input;
    for i in 1..n - 1 {
        S1: U[i] = U[i - 1] + U[i + 1];
        S2: U[i] -= F[i] * F[i];
    }
}
";

fn main() -> nzflow::Result<()> {
    let kernel = parse_kernel(SOURCE)?;
    println!("parsed kernel `{}`", kernel.name);
    for ctx in kernel.statement_contexts() {
        println!(
            "  {} at depth {} writes {}{}",
            ctx.stmt.id,
            ctx.depth(),
            ctx.stmt.lhs,
            if ctx.stmt.is_accumulate() {
                " (accumulating)"
            } else {
                ""
            }
        );
    }
    for (stmt, template) in timestamp_templates(&kernel) {
        println!("  schedule template of {stmt}: {template}");
    }

    let printed = kernel.to_dsl();
    println!("\ncanonical form:\n{printed}");
    let reparsed = parse_kernel(&printed)?;
    assert_eq!(kernel, reparsed);
    println!("round trip: parse(print(kernel)) == kernel");
    Ok(())
}
