//! From essential iteration indices to piecewise-regular code.
//!
//! The essential instances are ordered by lexicographic timestamps into the
//! execution trace, every operand slot is resolved to a position in its
//! array's sparse layout (the memory access trace), maximal runs of
//! homogeneous equidistant access points are folded into one-dimensional
//! counted loops, and the result is emitted as specialized C free of indirect
//! references.

mod emit;

pub use emit::{code_stats, emit_c, CodeStats};

use crate::analysis::AnalysisResult;
use crate::error::{Error, Result};
use crate::kernel::{
    lex_cmp, timestamp_templates, ArrayRef, BinOp, Expr, Kernel, Name, ParamBindings, UnaryOp,
};
use crate::sparsity::{Coords, EssentialSet, SparseLayout};
use std::collections::BTreeMap;

/// One essential statement instance with its instantiated timestamp.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEntry {
    pub stmt: Name,
    pub ivec: Coords,
    pub timestamp: Vec<i64>,
}

/// Where one operand slot of an instance points: a position in its array's
/// value layout, or the known-zero cell. An operand is `Zero` when the
/// instance is essential through some other operand of an addition or
/// subtraction while this one stays abstractly zero; the dense execution
/// reads an exact 0.0 there, so the specialized code substitutes the literal.
/// Write targets are always essential and never `Zero`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotPos {
    Pos(usize),
    Zero,
}

impl SlotPos {
    pub fn pos(self) -> Option<usize> {
        match self {
            SlotPos::Pos(p) => Some(p),
            SlotPos::Zero => None,
        }
    }
}

/// Sparse positions touched by one statement instance, one per operand slot:
/// destination first, then the canonical rhs leaves in order, then the guard
/// if it does not coincide with an earlier slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessPoint {
    pub stmt: Name,
    pub slots: Vec<(Name, SlotPos)>,
}

/// Maximal homogeneous, equidistant run of access points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub stmt: Name,
    pub base: AccessPoint,
    pub stride: Vec<i64>,
    pub count: usize,
}

impl Partition {
    /// Access point of member `k` (0-based).
    pub fn member(&self, k: usize) -> AccessPoint {
        let slots = self
            .base
            .slots
            .iter()
            .zip(&self.stride)
            .map(|((a, p), s)| {
                let pos = match p {
                    SlotPos::Pos(base) => SlotPos::Pos((*base as i64 + s * k as i64) as usize),
                    SlotPos::Zero => SlotPos::Zero,
                };
                (a.clone(), pos)
            })
            .collect();
        AccessPoint {
            stmt: self.stmt.clone(),
            slots,
        }
    }
}

/// Distance between two slot positions; `None` when the slots are not
/// comparable (zero against stored, or vice versa).
fn slot_delta(a: SlotPos, b: SlotPos) -> Option<i64> {
    match (a, b) {
        (SlotPos::Pos(x), SlotPos::Pos(y)) => Some(y as i64 - x as i64),
        (SlotPos::Zero, SlotPos::Zero) => Some(0),
        _ => None,
    }
}

/// Expression over operand slots; the executable form of one statement after
/// subscripts are replaced by slot positions.
#[derive(Debug, Clone, PartialEq)]
pub enum SlotExpr {
    Slot(usize),
    Lit(f64),
    Unary(UnaryOp, Box<SlotExpr>),
    Binary(BinOp, Box<SlotExpr>, Box<SlotExpr>),
}

/// Executable shape of one statement: slot roles plus the canonical rhs over
/// slot ids. Slot 0 is the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct StmtRecipe {
    pub stmt: Name,
    /// Array of each slot, destination first.
    pub slot_arrays: Vec<Name>,
    /// Canonical rhs; reads slots `1..=leaf_count`.
    pub expr: SlotExpr,
    /// Present for `lhs op= rhs` statements; drives compound-assignment
    /// rendering. Execution always evaluates the canonical expression.
    pub accum_op: Option<BinOp>,
    /// Slot whose runtime value gates the statement.
    pub guard_slot: Option<usize>,
}

impl StmtRecipe {
    fn build(kernel: &Kernel, stmt_id: &Name) -> Result<StmtRecipe> {
        let s = kernel
            .statement(stmt_id)
            .ok_or_else(|| Error::Codegen(format!("unknown statement `{stmt_id}`")))?;
        let mut slot_refs: Vec<ArrayRef> = vec![s.lhs.clone()];
        slot_refs.extend(s.canonical_leaves());
        let guard_slot = match &s.guard {
            None => None,
            Some(g) => match slot_refs.iter().position(|r| r == g) {
                Some(k) => Some(k),
                None => {
                    slot_refs.push(g.clone());
                    Some(slot_refs.len() - 1)
                }
            },
        };
        let canon = s.canonical_rhs();
        let mut next = 1usize; // slot 0 is the destination
        fn to_slots(e: &Expr, next: &mut usize) -> SlotExpr {
            match e {
                Expr::Ref(_) => {
                    let k = *next;
                    *next += 1;
                    SlotExpr::Slot(k)
                }
                Expr::Lit(v) => SlotExpr::Lit(*v),
                Expr::Unary(op, inner) => SlotExpr::Unary(*op, Box::new(to_slots(inner, next))),
                Expr::Binary(op, a, b) => SlotExpr::Binary(
                    *op,
                    Box::new(to_slots(a, next)),
                    Box::new(to_slots(b, next)),
                ),
            }
        }
        let expr = to_slots(&canon, &mut next);
        Ok(StmtRecipe {
            stmt: stmt_id.clone(),
            slot_arrays: slot_refs.iter().map(|r| r.array.clone()).collect(),
            expr,
            accum_op: s.accum_op,
            guard_slot,
        })
    }

    /// The operand refs backing each slot, in slot order.
    pub fn slot_refs(kernel: &Kernel, stmt_id: &Name) -> Result<Vec<ArrayRef>> {
        let s = kernel
            .statement(stmt_id)
            .ok_or_else(|| Error::Codegen(format!("unknown statement `{stmt_id}`")))?;
        let mut refs: Vec<ArrayRef> = vec![s.lhs.clone()];
        refs.extend(s.canonical_leaves());
        if let Some(g) = &s.guard {
            if !refs.iter().any(|r| r == g) {
                refs.push(g.clone());
            }
        }
        Ok(refs)
    }
}

/// Ordered program of straight-line statement instances and folded regular
/// loops; flattening it in order reproduces the memory access trace exactly.
#[derive(Debug, Clone, PartialEq)]
pub enum ProgramItem {
    Singleton(AccessPoint),
    RegularLoop(Partition),
}

#[derive(Debug, Clone)]
pub struct PiecewiseProgram {
    pub kernel_name: Name,
    pub items: Vec<ProgramItem>,
    pub recipes: BTreeMap<Name, StmtRecipe>,
    pub layouts: BTreeMap<Name, SparseLayout>,
    /// Arrays in declaration order; fixes the emitted function signature.
    pub array_order: Vec<Name>,
    pub trace_len: usize,
}

impl PiecewiseProgram {
    /// Reconstructs the memory access trace from the folded program.
    pub fn flatten(&self) -> Vec<AccessPoint> {
        let mut out = Vec::with_capacity(self.trace_len);
        for item in &self.items {
            match item {
                ProgramItem::Singleton(ap) => out.push(ap.clone()),
                ProgramItem::RegularLoop(p) => {
                    for k in 0..p.count {
                        out.push(p.member(k));
                    }
                }
            }
        }
        out
    }

    pub fn loop_count(&self) -> usize {
        self.items
            .iter()
            .filter(|i| matches!(i, ProgramItem::RegularLoop(_)))
            .count()
    }
}

/// Lexicographically ordered essential statement instances.
pub fn execution_trace(kernel: &Kernel, result: &AnalysisResult) -> Result<Vec<TraceEntry>> {
    let templates = timestamp_templates(kernel);
    let mut entries = Vec::with_capacity(result.essential_iters.len());
    for (stmt, ivec) in &result.essential_iters {
        let t = templates
            .get(stmt)
            .ok_or_else(|| Error::Codegen(format!("no timestamp template for `{stmt}`")))?;
        entries.push(TraceEntry {
            stmt: stmt.clone(),
            ivec: ivec.clone(),
            timestamp: t.instantiate(ivec)?,
        });
    }
    entries.sort_by(|a, b| {
        lex_cmp(&a.timestamp, &b.timestamp)
            .then_with(|| a.stmt.cmp(&b.stmt))
            .then_with(|| a.ivec.cmp(&b.ivec))
    });
    // instances occupy pairwise distinct schedule points
    for pair in entries.windows(2) {
        if pair[0].timestamp == pair[1].timestamp {
            return Err(Error::Codegen(format!(
                "instances <{},{:?}> and <{},{:?}> share the timestamp {:?}",
                pair[0].stmt, pair[0].ivec, pair[1].stmt, pair[1].ivec, pair[0].timestamp
            )));
        }
    }
    Ok(entries)
}

/// Builds row-major layouts for every array from the final structure.
pub fn build_layouts(kernel: &Kernel, dfinal: &EssentialSet) -> BTreeMap<Name, SparseLayout> {
    kernel
        .arrays
        .iter()
        .map(|decl| (decl.name.clone(), SparseLayout::build(&decl.name, dfinal)))
        .collect()
}

/// Resolves every operand slot of every trace entry to its sparse position.
/// A dense reference missing from the final structure's layout means analysis
/// and code generation disagree; that is a hard error.
pub fn memory_trace(
    kernel: &Kernel,
    trace: &[TraceEntry],
    layouts: &BTreeMap<Name, SparseLayout>,
    params: &ParamBindings,
) -> Result<Vec<AccessPoint>> {
    let mut slot_refs: BTreeMap<Name, Vec<ArrayRef>> = BTreeMap::new();
    for ctx in kernel.statement_contexts() {
        slot_refs.insert(
            ctx.stmt.id.clone(),
            StmtRecipe::slot_refs(kernel, &ctx.stmt.id)?,
        );
    }
    let contexts: BTreeMap<Name, _> = kernel
        .statement_contexts()
        .into_iter()
        .map(|c| (c.stmt.id.clone(), c))
        .collect();

    let mut out = Vec::with_capacity(trace.len());
    for entry in trace {
        let ctx = &contexts[&entry.stmt];
        let env = ctx.instance_env(params, &entry.ivec);
        let refs = &slot_refs[&entry.stmt];
        let mut slots = Vec::with_capacity(refs.len());
        for (slot, r) in refs.iter().enumerate() {
            let coords = r.coords(&env)?;
            let layout = layouts
                .get(&r.array)
                .ok_or_else(|| Error::Codegen(format!("no layout for array `{}`", r.array)))?;
            let pos = match layout.position(&coords) {
                Some(p) => SlotPos::Pos(p),
                // read operands may be abstractly zero; the write target may
                // not, and a missing destination means analysis and code
                // generation disagree
                None if slot > 0 => SlotPos::Zero,
                None => {
                    return Err(Error::Codegen(format!(
                        "instance {:?} of `{}` writes {} at ({}) which is outside the final \
                         structure; analysis and code generation disagree",
                        entry.ivec,
                        entry.stmt,
                        r,
                        coords
                            .iter()
                            .map(|c| c.to_string())
                            .collect::<Vec<_>>()
                            .join(",")
                    )))
                }
            };
            slots.push((r.array.clone(), pos));
        }
        out.push(AccessPoint {
            stmt: entry.stmt.clone(),
            slots,
        });
    }
    Ok(out)
}

/// Greedy left-to-right partitioning: a point extends the current partition
/// iff it has the same statement and repeats the established slot-wise
/// distance vector; the first pair of a partition fixes the stride.
pub fn partition_trace(mtrace: &[AccessPoint]) -> Vec<Partition> {
    let mut out: Vec<Partition> = Vec::new();
    for ap in mtrace {
        if let Some(cur) = out.last_mut() {
            if cur.stmt == ap.stmt && cur.base.slots.len() == ap.slots.len() {
                let last = cur.member(cur.count - 1);
                let delta: Option<Vec<i64>> = last
                    .slots
                    .iter()
                    .zip(&ap.slots)
                    .map(|((_, p0), (_, p1))| slot_delta(*p0, *p1))
                    .collect();
                if let Some(delta) = delta {
                    if cur.count == 1 {
                        cur.stride = delta;
                        cur.count = 2;
                        continue;
                    } else if cur.stride == delta {
                        cur.count += 1;
                        continue;
                    }
                }
            }
        }
        out.push(Partition {
            stmt: ap.stmt.clone(),
            base: ap.clone(),
            stride: vec![0; ap.slots.len()],
            count: 1,
        });
    }
    out
}

/// Partitions of two or more instances become regular loops; the rest stay
/// straight-line.
pub fn fold_loops(partitions: Vec<Partition>) -> Vec<ProgramItem> {
    partitions
        .into_iter()
        .map(|p| {
            if p.count >= 2 {
                ProgramItem::RegularLoop(p)
            } else {
                ProgramItem::Singleton(p.base)
            }
        })
        .collect()
}

/// Runs the whole code-generation pipeline on an analysis result.
pub fn build_program(
    kernel: &Kernel,
    result: &AnalysisResult,
    params: &ParamBindings,
) -> Result<PiecewiseProgram> {
    let trace = execution_trace(kernel, result)?;
    let layouts = build_layouts(kernel, &result.dfinal);
    let mtrace = memory_trace(kernel, &trace, &layouts, params)?;
    let items = fold_loops(partition_trace(&mtrace));
    let mut recipes = BTreeMap::new();
    for ctx in kernel.statement_contexts() {
        recipes.insert(
            ctx.stmt.id.clone(),
            StmtRecipe::build(kernel, &ctx.stmt.id)?,
        );
    }
    let program = PiecewiseProgram {
        kernel_name: kernel.name.clone(),
        items,
        recipes,
        layouts,
        array_order: kernel.arrays.iter().map(|a| a.name.clone()).collect(),
        trace_len: mtrace.len(),
    };
    debug_assert_eq!(program.flatten(), mtrace);
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adg::build_adg;
    use crate::analysis::run_analysis;
    use crate::kernel::{name, Builtin};
    use crate::sparsity::DataIndex;

    fn bind(pairs: &[(&str, i64)]) -> ParamBindings {
        pairs.iter().map(|(k, v)| (name(k), *v)).collect()
    }

    fn di(a: &str, c: &[i64]) -> DataIndex {
        DataIndex::new(name(a), c.to_vec())
    }

    fn ap(stmt: &str, pos: &[usize]) -> AccessPoint {
        AccessPoint {
            stmt: name(stmt),
            slots: pos.iter().map(|p| (name("A"), SlotPos::Pos(*p))).collect(),
        }
    }

    #[test]
    fn empty_essential_set_gives_empty_trace_and_program() {
        let k = Builtin::Spmv.kernel();
        let adg = build_adg(&k);
        let params = bind(&[("n", 4)]);
        let r = run_analysis(&k, &adg, &EssentialSet::new(), &params).unwrap();
        let program = build_program(&k, &r, &params).unwrap();
        assert!(program.items.is_empty());
        assert_eq!(program.trace_len, 0);
    }

    #[test]
    fn single_statement_trace_equals_plain_iteration_order() {
        let k = Builtin::Spmv.kernel();
        let adg = build_adg(&k);
        let params = bind(&[("n", 4)]);
        let mut d0 = EssentialSet::new();
        for (i, j) in [(0i64, 0i64), (0, 2), (1, 1), (2, 1), (3, 1), (3, 3)] {
            d0.insert(di("A", &[i, j]));
        }
        d0.insert(di("X", &[1]));
        d0.insert(di("X", &[3]));
        let r = run_analysis(&k, &adg, &d0, &params).unwrap();
        let trace = execution_trace(&k, &r).unwrap();
        // oracle: direct sort of the iteration vectors
        let mut expect: Vec<Coords> = r.ainds[&name("S")].iter().cloned().collect();
        expect.sort();
        let got: Vec<Coords> = trace.iter().map(|t| t.ivec.clone()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn greedy_partitioning_follows_the_first_pair_stride() {
        // positions 0,3,6,10 for one statement/slot: {0,3,6} then {10}
        let mtrace: Vec<AccessPoint> = [0usize, 3, 6, 10].iter().map(|p| ap("S", &[*p])).collect();
        let parts = partition_trace(&mtrace);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].count, 3);
        assert_eq!(parts[0].stride, vec![3]);
        assert_eq!(parts[1].count, 1);
        // flatten(fold(partition)) reproduces the trace
        let program_items = fold_loops(parts);
        let flat: Vec<AccessPoint> = program_items
            .iter()
            .flat_map(|item| match item {
                ProgramItem::Singleton(a) => vec![a.clone()],
                ProgramItem::RegularLoop(p) => (0..p.count).map(|k| p.member(k)).collect(),
            })
            .collect();
        assert_eq!(flat, mtrace);
    }

    #[test]
    fn alternating_statements_break_homogeneity() {
        let mtrace = vec![
            ap("S2", &[0]),
            ap("S3", &[1]),
            ap("S2", &[2]),
            ap("S3", &[3]),
        ];
        let parts = partition_trace(&mtrace);
        assert_eq!(parts.len(), 4);
        assert!(parts.iter().all(|p| p.count == 1));
    }

    #[test]
    fn a_run_with_stride_change_splits_at_the_change() {
        // 0,2,4,7: {0,2,4} stride 2, then {7}
        let mtrace: Vec<AccessPoint> = [0usize, 2, 4, 7].iter().map(|p| ap("S", &[*p])).collect();
        let parts = partition_trace(&mtrace);
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].stride, vec![2]);
        assert_eq!(parts[0].count, 3);
    }

    #[test]
    fn diagonal_cholesky_folds_into_one_loop() {
        let n = 16i64;
        let k = Builtin::Cholesky.kernel();
        let adg = build_adg(&k);
        let d0: EssentialSet = (0..n).map(|i| di("A", &[i, i])).collect();
        let params = bind(&[("n", n)]);
        let r = run_analysis(&k, &adg, &d0, &params).unwrap();
        let program = build_program(&k, &r, &params).unwrap();
        assert_eq!(program.items.len(), 1);
        match &program.items[0] {
            ProgramItem::RegularLoop(p) => {
                assert_eq!(&*p.stmt, "S4");
                assert_eq!(p.count, n as usize);
                assert_eq!(p.stride, vec![1, 1]);
                assert_eq!(p.base.slots[0].1, SlotPos::Pos(0));
            }
            other => panic!("expected a regular loop, got {other:?}"),
        }
    }

    #[test]
    fn s4_recipe_has_two_slots_and_guarded_s2_reuses_its_denominator_slot() {
        let k = Builtin::Cholesky.kernel();
        let r4 = StmtRecipe::build(&k, &name("S4")).unwrap();
        assert_eq!(r4.slot_arrays.len(), 2);
        assert_eq!(r4.guard_slot, None);
        let r2 = StmtRecipe::build(&k, &name("S2")).unwrap();
        // destination, old value, denominator; the guard coincides with the
        // denominator slot
        assert_eq!(r2.slot_arrays.len(), 3);
        assert_eq!(r2.guard_slot, Some(2));
    }
}
