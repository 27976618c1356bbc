//! C emission and structural statistics of the generated program.

use super::{PiecewiseProgram, ProgramItem, SlotExpr, SlotPos, StmtRecipe};
use crate::kernel::{BinOp, Kernel, Role, UnaryOp};
use crate::sparsity::EssentialSet;
use serde::Serialize;
use std::fmt::Write as _;

/// Rendered operand of one slot: an index expression into the value array, or
/// the literal zero for a dead operand.
#[derive(Clone)]
enum SlotAccess {
    Index(String),
    Zero,
}

/// Position of slot `k` of a loop member as a C index expression in `i`.
fn access_expr(base: usize, stride: i64) -> String {
    let base = base as i64;
    if stride == 0 {
        return base.to_string();
    }
    let head = match stride {
        1 => "i".to_string(),
        -1 => "-i".to_string(),
        s => format!("{s}*i"),
    };
    if base == 0 {
        if stride == 1 {
            head
        } else {
            format!("{head} + 0")
        }
    } else if base > 0 {
        format!("{head} + {base}")
    } else {
        format!("{head} - {}", -base)
    }
}

fn slot_operand(recipe: &StmtRecipe, slot: usize, positions: &[SlotAccess]) -> String {
    match &positions[slot] {
        SlotAccess::Index(idx) => format!("val{}[{}]", recipe.slot_arrays[slot], idx),
        SlotAccess::Zero => "0.0".to_string(),
    }
}

fn render_expr(
    e: &SlotExpr,
    recipe: &StmtRecipe,
    positions: &[SlotAccess],
    min_prec: u8,
) -> String {
    // fmod is rendered as a call, hence atomic
    let prec = match e {
        SlotExpr::Slot(_) | SlotExpr::Lit(_) => 3,
        SlotExpr::Binary(BinOp::Mod, ..) => 3,
        SlotExpr::Unary(..) => 2,
        SlotExpr::Binary(BinOp::Mul | BinOp::Div, ..) => 1,
        SlotExpr::Binary(BinOp::Add | BinOp::Sub, ..) => 0,
    };
    let body = match e {
        SlotExpr::Slot(k) => slot_operand(recipe, *k, positions),
        SlotExpr::Lit(v) => {
            if v.fract() == 0.0 && v.abs() < 1e15 {
                format!("{:.1}", v)
            } else {
                format!("{v}")
            }
        }
        SlotExpr::Unary(UnaryOp::Neg, inner) => {
            format!("-{}", render_expr(inner, recipe, positions, 2))
        }
        SlotExpr::Unary(UnaryOp::Sqrt, inner) => {
            format!("sqrt({})", render_expr(inner, recipe, positions, 0))
        }
        SlotExpr::Binary(BinOp::Mod, a, b) => format!(
            "fmod({}, {})",
            render_expr(a, recipe, positions, 0),
            render_expr(b, recipe, positions, 0)
        ),
        SlotExpr::Binary(op, a, b) => format!(
            "{} {} {}",
            render_expr(a, recipe, positions, prec),
            op.symbol(),
            render_expr(b, recipe, positions, prec + 1)
        ),
    };
    if prec < min_prec {
        format!("({body})")
    } else {
        body
    }
}

/// One statement instance as a C line (without the guard).
fn statement_line(recipe: &StmtRecipe, positions: &[SlotAccess]) -> String {
    let dst = slot_operand(recipe, 0, positions);
    match recipe.accum_op {
        Some(op) if op != BinOp::Mod => {
            // canonical expr is op(old, increment); print as compound
            let SlotExpr::Binary(bop, _, increment) = &recipe.expr else {
                unreachable!("accumulate statements have a binary canonical rhs")
            };
            debug_assert_eq!(*bop, op);
            let inc = render_expr(
                increment,
                recipe,
                positions,
                if op == BinOp::Add { 0 } else { 1 },
            );
            format!("{dst} {}= {inc};", op.symbol())
        }
        _ => {
            let rhs = render_expr(&recipe.expr, recipe, positions, 0);
            format!("{dst} = {rhs};")
        }
    }
}

fn emit_instance(out: &mut String, indent: &str, recipe: &StmtRecipe, positions: &[SlotAccess]) {
    let line = statement_line(recipe, positions);
    match recipe.guard_slot {
        Some(g) => {
            let guard = slot_operand(recipe, g, positions);
            let _ = writeln!(out, "{indent}if ({guard} != 0) {{");
            let _ = writeln!(out, "{indent}    {line} /* {} */", recipe.stmt);
            let _ = writeln!(out, "{indent}}}");
        }
        None => {
            let _ = writeln!(out, "{indent}{line} /* {} */", recipe.stmt);
        }
    }
}

/// Emits the piecewise program as one self-contained C99 translation unit.
/// Output is byte-deterministic for identical inputs.
pub fn emit_c(program: &PiecewiseProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "/* specialized kernel `{}`, generated code */",
        program.kernel_name
    );
    let _ = writeln!(
        out,
        "/* do not edit: regenerate when the sparsity structure changes */"
    );
    let _ = writeln!(out, "#include <math.h>");
    let _ = writeln!(out);

    // layout documentation
    for array in &program.array_order {
        let layout = &program.layouts[array];
        let _ = writeln!(
            out,
            "/* val{array}: {} nonzero elements of {array} */",
            layout.nnz()
        );
        if layout.nnz() > 0 && layout.nnz() <= 10_000 {
            let mut line = String::from("/*");
            for (coords, pos) in layout.entries() {
                let cell = format!(
                    " {pos}:({})",
                    coords
                        .iter()
                        .map(|c| c.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                );
                if line.len() + cell.len() > 96 {
                    let _ = writeln!(out, "{line} */");
                    line = String::from("/*");
                }
                line.push_str(&cell);
            }
            if line.len() > 2 {
                let _ = writeln!(out, "{line} */");
            }
        } else if layout.nnz() > 10_000 {
            let _ = writeln!(
                out,
                "/*   (index table elided: {} entries) */",
                layout.nnz()
            );
        }
    }
    let _ = writeln!(out);

    let args: Vec<String> = program
        .array_order
        .iter()
        .map(|a| format!("double* val{a}"))
        .collect();
    let _ = writeln!(
        out,
        "void kernel_{}({})",
        program.kernel_name,
        args.join(", ")
    );
    let _ = writeln!(out, "{{");
    for item in &program.items {
        match item {
            ProgramItem::Singleton(ap) => {
                let recipe = &program.recipes[&ap.stmt];
                let positions: Vec<SlotAccess> = ap
                    .slots
                    .iter()
                    .map(|(_, p)| match p {
                        SlotPos::Pos(p) => SlotAccess::Index(p.to_string()),
                        SlotPos::Zero => SlotAccess::Zero,
                    })
                    .collect();
                emit_instance(&mut out, "    ", recipe, &positions);
            }
            ProgramItem::RegularLoop(p) => {
                let recipe = &program.recipes[&p.stmt];
                let positions: Vec<SlotAccess> = p
                    .base
                    .slots
                    .iter()
                    .zip(&p.stride)
                    .map(|((_, base), stride)| match base {
                        SlotPos::Pos(b) => SlotAccess::Index(access_expr(*b, *stride)),
                        SlotPos::Zero => SlotAccess::Zero,
                    })
                    .collect();
                let _ = writeln!(out, "    for (int i = 0; i < {}; i++) {{", p.count);
                emit_instance(&mut out, "        ", recipe, &positions);
                let _ = writeln!(out, "    }}");
            }
        }
    }
    let _ = writeln!(out, "}}");
    out
}

/// Structural statistics of the generated code.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CodeStats {
    /// Share of the output structure that the operation filled in, percent.
    pub fill_in_pct: f64,
    /// Share of trace entries that live inside regular loops, percent.
    pub loop_coverage_pct: f64,
    /// Mean instance count over regular loops; 0 when no loops exist.
    pub avg_loop_size: f64,
    pub has_loops: bool,
    pub loop_count: usize,
    pub singleton_count: usize,
    pub trace_len: usize,
    pub elem_in: usize,
    pub elem_out: usize,
}

/// Fill-in is measured over the written (output/inout) arrays: the number of
/// structure elements after the operation against before.
pub fn code_stats(
    kernel: &Kernel,
    program: &PiecewiseProgram,
    d0: &EssentialSet,
    dfinal: &EssentialSet,
) -> CodeStats {
    let mut elem_in = 0usize;
    let mut elem_out = 0usize;
    for decl in &kernel.arrays {
        if decl.role == Role::Input {
            continue;
        }
        elem_in += d0.array_len(&decl.name);
        elem_out += dfinal.array_len(&decl.name);
    }
    let fill_in_pct = if elem_out == 0 {
        0.0
    } else {
        (elem_out - elem_in) as f64 / elem_out as f64 * 100.0
    };

    let mut in_loops = 0usize;
    let mut loop_count = 0usize;
    let mut singleton_count = 0usize;
    for item in &program.items {
        match item {
            ProgramItem::RegularLoop(p) => {
                loop_count += 1;
                in_loops += p.count;
            }
            ProgramItem::Singleton(_) => singleton_count += 1,
        }
    }
    let trace_len = program.trace_len;
    let loop_coverage_pct = if trace_len == 0 {
        0.0
    } else {
        in_loops as f64 / trace_len as f64 * 100.0
    };
    let avg_loop_size = if loop_count == 0 {
        0.0
    } else {
        in_loops as f64 / loop_count as f64
    };
    CodeStats {
        fill_in_pct,
        loop_coverage_pct,
        avg_loop_size,
        has_loops: loop_count > 0,
        loop_count,
        singleton_count,
        trace_len,
        elem_in,
        elem_out,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adg::build_adg;
    use crate::analysis::run_analysis;
    use crate::codegen::build_program;
    use crate::kernel::{name, Builtin, ParamBindings};
    use crate::sparsity::DataIndex;

    fn diag_cholesky(
        n: i64,
    ) -> (
        crate::kernel::Kernel,
        crate::analysis::AnalysisResult,
        ParamBindings,
    ) {
        let k = Builtin::Cholesky.kernel();
        let adg = build_adg(&k);
        let d0: EssentialSet = (0..n)
            .map(|i| DataIndex::new(name("A"), vec![i, i]))
            .collect();
        let params: ParamBindings = [(name("n"), n)].into_iter().collect();
        let r = run_analysis(&k, &adg, &d0, &params).unwrap();
        (k, r, params)
    }

    #[test]
    fn diagonal_emission_has_one_loop_and_one_sqrt() {
        let (k, r, params) = diag_cholesky(3);
        let program = build_program(&k, &r, &params).unwrap();
        let c = emit_c(&program);
        assert_eq!(c.matches("for (").count(), 1);
        assert_eq!(c.matches("sqrt(").count(), 1);
        assert!(c.contains("void kernel_cholesky(double* valA)"));
        assert!(c.contains("valA[i] = sqrt(valA[i]);"));
    }

    #[test]
    fn empty_program_emits_an_empty_function_body() {
        let k = Builtin::Spmv.kernel();
        let adg = build_adg(&k);
        let params: ParamBindings = [(name("n"), 4)].into_iter().collect();
        let r = run_analysis(&k, &adg, &EssentialSet::new(), &params).unwrap();
        let program = build_program(&k, &r, &params).unwrap();
        let c = emit_c(&program);
        assert!(c.contains("void kernel_spmv(double* valA, double* valX, double* valY)\n{\n}\n"));
    }

    #[test]
    fn emission_is_deterministic() {
        let (k, r, params) = diag_cholesky(5);
        let p1 = build_program(&k, &r, &params).unwrap();
        let p2 = build_program(&k, &r, &params).unwrap();
        assert_eq!(emit_c(&p1), emit_c(&p2));
    }

    #[test]
    fn diagonal_stats_are_exact() {
        let (k, r, params) = diag_cholesky(1473);
        let program = build_program(&k, &r, &params).unwrap();
        let stats = code_stats(&k, &program, &r.d0, &r.dfinal);
        assert_eq!(stats.fill_in_pct, 0.0);
        assert_eq!(stats.loop_coverage_pct, 100.0);
        assert_eq!(stats.avg_loop_size, 1473.0);
        assert!(stats.has_loops);
    }

    #[test]
    fn empty_program_stats_are_zero_with_flag() {
        let k = Builtin::Spmv.kernel();
        let adg = build_adg(&k);
        let params: ParamBindings = [(name("n"), 4)].into_iter().collect();
        let r = run_analysis(&k, &adg, &EssentialSet::new(), &params).unwrap();
        let program = build_program(&k, &r, &params).unwrap();
        let stats = code_stats(&k, &program, &r.d0, &r.dfinal);
        assert_eq!(stats.fill_in_pct, 0.0);
        assert_eq!(stats.loop_coverage_pct, 0.0);
        assert_eq!(stats.avg_loop_size, 0.0);
        assert!(!stats.has_loops);
    }

    #[test]
    fn access_expr_formats() {
        assert_eq!(access_expr(0, 1), "i");
        assert_eq!(access_expr(0, 2), "2*i + 0");
        assert_eq!(access_expr(7, 1), "i + 7");
        assert_eq!(access_expr(3, -1), "-i + 3");
        assert_eq!(access_expr(5, 0), "5");
    }
}
