//! Essential indices analysis: a forward data-flow analysis over the access
//! dependence graph whose values are sets of matrix-tagged indices that may
//! hold nonzero values.
//!
//! Each node carries an `Out` set. Read nodes merge their predecessors; write
//! nodes additionally generate indices by abstractly evaluating their
//! statement over the operand `Out` sets: an index is generated when some
//! combination of essential operand indices forces the written value nonzero.
//! Iteration proceeds in Jacobi rounds over the reverse postorder until the
//! least fixed point; `Gen` sets are accumulated into `AGen`, fill-ins are
//! `AGen \ D0`, and the iteration vectors recorded during generation become
//! the essential iteration indices that drive code generation.
//!
//! The value lattice per index is {Z, NZ} with NZ below Z; encoding the state
//! as a set of NZ indices turns the pointwise join into set union, which is
//! what `Out` unioning implements.

use crate::adg::{AccessKind, Adg};
use crate::error::{Error, Result};
use crate::exec::{dense_execute, synth_values, ValueModel};
use crate::kernel::{ArrayRef, BinOp, Expr, Kernel, Name, ParamBindings, StmtCtx, UnaryOp};
use crate::sparsity::{Coords, DataIndex, EssentialSet};
use std::collections::{BTreeMap, BTreeSet, HashMap};

// ---------------------------------------------------------------------------
// Abstract values
// ---------------------------------------------------------------------------

/// Two-point abstraction of a concrete value: exactly zero, or possibly
/// nonzero. `NZ` is the lower lattice element; joining any state with `NZ`
/// yields `NZ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbstractVal {
    Z,
    NZ,
}

impl AbstractVal {
    pub fn join(self, other: AbstractVal) -> AbstractVal {
        if self == AbstractVal::NZ || other == AbstractVal::NZ {
            AbstractVal::NZ
        } else {
            AbstractVal::Z
        }
    }

    pub fn of(v: f64) -> AbstractVal {
        if v == 0.0 {
            AbstractVal::Z
        } else {
            AbstractVal::NZ
        }
    }
}

/// Abstract transfer of a unary operator: negation and square root preserve
/// zero-ness exactly.
pub fn abstract_eval_unary(_op: UnaryOp, a: AbstractVal) -> AbstractVal {
    a
}

/// Abstract transfer of a binary operator. Addition and subtraction
/// over-approximate cancellation; multiplication is exact; division and
/// modulus require an abstractly nonzero denominator, which the caller must
/// have established -- a zero denominator here is a contract violation.
pub fn abstract_eval(op: BinOp, a: AbstractVal, b: AbstractVal) -> Result<AbstractVal> {
    use AbstractVal::*;
    Ok(match op {
        BinOp::Add | BinOp::Sub => {
            if a == NZ || b == NZ {
                NZ
            } else {
                Z
            }
        }
        BinOp::Mul => {
            if a == NZ && b == NZ {
                NZ
            } else {
                Z
            }
        }
        BinOp::Div | BinOp::Mod => {
            if b == Z {
                return Err(Error::Analysis(
                    "division or modulus with abstractly zero denominator".into(),
                ));
            }
            a
        }
    })
}

/// Total abstract evaluation of an expression tree given leaf values in
/// left-to-right order. A division whose denominator is abstractly zero never
/// executes concretely and therefore contributes zero here.
pub fn abstract_eval_expr(expr: &Expr, leaf_vals: &[AbstractVal]) -> AbstractVal {
    fn walk(e: &Expr, vals: &[AbstractVal], next: &mut usize) -> AbstractVal {
        match e {
            Expr::Ref(_) => {
                let v = vals[*next];
                *next += 1;
                v
            }
            Expr::Lit(c) => AbstractVal::of(*c),
            Expr::Unary(op, inner) => abstract_eval_unary(*op, walk(inner, vals, next)),
            Expr::Binary(op, a, b) => {
                let va = walk(a, vals, next);
                let vb = walk(b, vals, next);
                match op {
                    BinOp::Div | BinOp::Mod => {
                        if vb == AbstractVal::Z {
                            AbstractVal::Z
                        } else {
                            va
                        }
                    }
                    _ => abstract_eval(*op, va, vb).expect("non-division ops are total"),
                }
            }
        }
    }
    let mut next = 0;
    walk(expr, leaf_vals, &mut next)
}

// ---------------------------------------------------------------------------
// Generation supports
// ---------------------------------------------------------------------------

/// Minimal sets of canonical-leaf ordinals whose joint nonzero-ness forces the
/// expression nonzero (disjunctive normal form of "evaluates to NZ").
fn nz_supports(expr: &Expr, next: &mut usize) -> Vec<Vec<usize>> {
    match expr {
        Expr::Ref(_) => {
            let id = *next;
            *next += 1;
            vec![vec![id]]
        }
        Expr::Lit(c) => {
            if *c != 0.0 {
                vec![vec![]]
            } else {
                vec![]
            }
        }
        Expr::Unary(_, inner) => nz_supports(inner, next),
        Expr::Binary(op, a, b) => {
            let sa = nz_supports(a, next);
            let sb = nz_supports(b, next);
            match op {
                BinOp::Add | BinOp::Sub => {
                    let mut out = sa;
                    out.extend(sb);
                    dedup_supports(out)
                }
                // multiplication needs both sides; division and modulus need
                // a nonzero numerator and a nonzero denominator
                BinOp::Mul | BinOp::Div | BinOp::Mod => {
                    let mut out = Vec::new();
                    for x in &sa {
                        for y in &sb {
                            let mut merged = x.clone();
                            merged.extend_from_slice(y);
                            merged.sort_unstable();
                            merged.dedup();
                            out.push(merged);
                        }
                    }
                    dedup_supports(out)
                }
            }
        }
    }
}

fn dedup_supports(mut s: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    s.sort();
    s.dedup();
    s
}

/// Per-statement generation recipe: which leaf combinations generate, over
/// which loops, writing which destination.
struct GenPlan<'k> {
    ctx: StmtCtx<'k>,
    /// canonical leaf refs with their ADG read-node ids
    leaves: Vec<(ArrayRef, usize)>,
    guard: Option<(ArrayRef, usize)>,
    supports: Vec<Vec<usize>>,
}

impl<'k> GenPlan<'k> {
    fn build(kernel: &'k Kernel, adg: &Adg, stmt_id: &Name) -> Result<GenPlan<'k>> {
        let ctx = kernel
            .statement_contexts()
            .into_iter()
            .find(|c| c.stmt.id == *stmt_id)
            .ok_or_else(|| Error::Analysis(format!("unknown statement `{stmt_id}`")))?;
        let s = ctx.stmt;
        let leaf_nodes = adg.leaf_nodes(stmt_id);
        let leaves: Vec<_> = s
            .canonical_leaves()
            .into_iter()
            .zip(leaf_nodes.iter().copied())
            .collect();
        let guard = s.guard.clone().map(|g| {
            let gid = adg
                .guard_node(stmt_id)
                .expect("guarded statement has a guard node");
            (g, gid)
        });

        let canon = s.canonical_rhs();
        let mut next = 0;
        let mut supports = nz_supports(&canon, &mut next);
        debug_assert_eq!(next, leaves.len());
        // For accumulation by addition or subtraction the old value alone is
        // not a new computation: instances whose increment is abstractly zero
        // are exact no-ops, and previously essential indices persist through
        // the Out union. Accumulation by multiplication, division or modulus
        // keeps the old-value leaf inside its conjunctions.
        if matches!(s.accum_op, Some(BinOp::Add) | Some(BinOp::Sub)) {
            supports.retain(|c| c.as_slice() != [0]);
        }
        Ok(GenPlan {
            ctx,
            leaves,
            guard,
            supports,
        })
    }
}

/// One generated contribution: the data index plus the iteration vector of
/// the instance that generates it.
pub type GenContrib = (DataIndex, Coords);

/// Computes the `Gen` set of a statement's write node from the operand `Out`
/// sets (indexed by ADG node id), together with the generating instances.
///
/// Enumeration runs over preimages of essential operand indices: each leaf in
/// a support either pins iterators (when already bound, membership is a
/// lookup) or is scanned filtered by the bound dimensions. Iterators no leaf
/// constrains are swept over their concrete ranges.
pub fn gen_for_write(
    kernel: &Kernel,
    adg: &Adg,
    stmt_id: &Name,
    outs: &[EssentialSet],
    params: &ParamBindings,
) -> Result<(EssentialSet, Vec<GenContrib>)> {
    let plan = GenPlan::build(kernel, adg, stmt_id)?;
    run_gen_plan(kernel, &plan, outs, params)
}

fn run_gen_plan(
    kernel: &Kernel,
    plan: &GenPlan<'_>,
    outs: &[EssentialSet],
    params: &ParamBindings,
) -> Result<(EssentialSet, Vec<GenContrib>)> {
    let mut gen = EssentialSet::new();
    let mut contribs: BTreeSet<GenContrib> = BTreeSet::new();
    let iterators: BTreeSet<Name> = plan.ctx.iterators().into_iter().collect();
    let lhs_decl = kernel.array(&plan.ctx.stmt.lhs.array).ok_or_else(|| {
        Error::Analysis(format!("undeclared array `{}`", plan.ctx.stmt.lhs.array))
    })?;
    let lhs_dims = kernel.array_dims(lhs_decl, params)?;

    let mut enumerator = Enumerator {
        plan,
        iterators,
        outs,
        params,
        lhs_dims,
        col_index: HashMap::new(),
        gen: &mut gen,
        contribs: &mut contribs,
    };
    for support in &plan.supports {
        let mut constraints: Vec<&(ArrayRef, usize)> =
            support.iter().map(|&k| &plan.leaves[k]).collect();
        if let Some(g) = &plan.guard {
            constraints.push(g);
        }
        let order: Vec<usize> = (0..constraints.len()).collect();
        let mut env = BTreeMap::new();
        enumerator.join(&order, &constraints, &mut env)?;
    }
    Ok((gen, contribs.into_iter().collect()))
}

/// Per-dimension constraint of a reference under the current assignment.
enum DimCheck {
    Fixed(i64),
    Bind { iter: Name, sign: i64, offset: i64 },
}

struct Enumerator<'a, 'k> {
    plan: &'a GenPlan<'k>,
    iterators: BTreeSet<Name>,
    outs: &'a [EssentialSet],
    params: &'a ParamBindings,
    lhs_dims: Vec<i64>,
    /// secondary indexes per (node, dimension), built on demand per call
    col_index: HashMap<(usize, usize), HashMap<i64, Vec<Coords>>>,
    gen: &'a mut EssentialSet,
    contribs: &'a mut BTreeSet<GenContrib>,
}

impl Enumerator<'_, '_> {
    fn dim_checks(&self, aref: &ArrayRef, env: &BTreeMap<Name, i64>) -> Result<Vec<DimCheck>> {
        let mut checks = Vec::with_capacity(aref.subscripts.len());
        for sub in &aref.subscripts {
            let (it, residue) = sub.split_iterator(&self.iterators);
            let base = residue.eval(self.params)?;
            match it {
                None => checks.push(DimCheck::Fixed(base)),
                Some((iter, sign)) => match env.get(iter) {
                    Some(v) => {
                        let val = sign
                            .checked_mul(*v)
                            .and_then(|x| x.checked_add(base))
                            .ok_or_else(|| Error::Overflow(sub.to_string()))?;
                        checks.push(DimCheck::Fixed(val));
                    }
                    None => checks.push(DimCheck::Bind {
                        iter: iter.clone(),
                        sign,
                        offset: base,
                    }),
                },
            }
        }
        Ok(checks)
    }

    /// Depth-first join over the remaining constraints with dynamic ordering:
    /// a constraint whose iterators are all bound becomes a membership test.
    fn join(
        &mut self,
        remaining: &[usize],
        constraints: &[&(ArrayRef, usize)],
        env: &mut BTreeMap<Name, i64>,
    ) -> Result<()> {
        let Some((&first, _)) = remaining.split_first() else {
            return self.sweep_and_emit(env);
        };
        let mut pick = first;
        for &c in remaining {
            let (aref, _) = constraints[c];
            let all_bound = aref.subscripts.iter().all(|sub| {
                let (it, _) = sub.split_iterator(&self.iterators);
                it.is_none_or(|(n, _)| env.contains_key(n))
            });
            if all_bound {
                pick = c;
                break;
            }
        }
        let rest: Vec<usize> = remaining.iter().copied().filter(|&c| c != pick).collect();
        let (aref, node) = constraints[pick];
        let checks = self.dim_checks(aref, env)?;

        if checks.iter().all(|c| matches!(c, DimCheck::Fixed(_))) {
            let coords: Vec<i64> = checks
                .iter()
                .map(|c| match c {
                    DimCheck::Fixed(v) => *v,
                    DimCheck::Bind { .. } => unreachable!(),
                })
                .collect();
            if self.outs[*node].contains(&aref.array, &coords) {
                self.join(&rest, constraints, env)?;
            }
            return Ok(());
        }

        // candidate scan, filtered through a per-dimension index when some
        // dimension is already fixed
        let candidates: Vec<Coords> = {
            let fixed_dim = checks.iter().position(|c| matches!(c, DimCheck::Fixed(_)));
            match fixed_dim {
                Some(d) => {
                    let DimCheck::Fixed(v) = checks[d] else {
                        unreachable!()
                    };
                    let out = &self.outs[*node];
                    let array = aref.array.clone();
                    let index = self.col_index.entry((*node, d)).or_insert_with(|| {
                        let mut m: HashMap<i64, Vec<Coords>> = HashMap::new();
                        for c in out.coords_of(&array) {
                            m.entry(c[d]).or_default().push(c.clone());
                        }
                        m
                    });
                    index.get(&v).cloned().unwrap_or_default()
                }
                None => self.outs[*node].coords_of(&aref.array).cloned().collect(),
            }
        };

        'cand: for cand in candidates {
            if cand.len() != checks.len() {
                continue;
            }
            let mut bound_here: Vec<Name> = Vec::new();
            for (d, check) in checks.iter().enumerate() {
                match check {
                    DimCheck::Fixed(v) => {
                        if cand[d] != *v {
                            for b in bound_here.drain(..) {
                                env.remove(&b);
                            }
                            continue 'cand;
                        }
                    }
                    DimCheck::Bind { iter, sign, offset } => {
                        // cand[d] = sign * it + offset  =>  it = sign * (cand[d] - offset)
                        let it_val = sign * (cand[d] - offset);
                        match env.get(iter) {
                            Some(v) if *v == it_val => {}
                            Some(_) => {
                                for b in bound_here.drain(..) {
                                    env.remove(&b);
                                }
                                continue 'cand;
                            }
                            None => {
                                env.insert(iter.clone(), it_val);
                                bound_here.push(iter.clone());
                            }
                        }
                    }
                }
            }
            self.join(&rest, constraints, env)?;
            for b in bound_here {
                env.remove(&b);
            }
        }
        Ok(())
    }

    /// Sweeps iterators the support left unbound over their concrete ranges,
    /// verifies bound iterators lie inside their domains, and emits the
    /// generated index per complete instance.
    fn sweep_and_emit(&mut self, partial: &BTreeMap<Name, i64>) -> Result<()> {
        fn walk(
            this: &mut Enumerator<'_, '_>,
            level: usize,
            env: &mut BTreeMap<Name, i64>,
            partial: &BTreeMap<Name, i64>,
            ivec: &mut Vec<i64>,
        ) -> Result<()> {
            if level == this.plan.ctx.loops.len() {
                let coords = this.plan.ctx.stmt.lhs.coords(env)?;
                for (c, d) in coords.iter().zip(&this.lhs_dims) {
                    if *c < 0 || c >= d {
                        return Err(Error::Analysis(format!(
                            "instance {:?} of `{}` writes {} outside the declared array bounds",
                            ivec, this.plan.ctx.stmt.id, this.plan.ctx.stmt.lhs
                        )));
                    }
                }
                let d = DataIndex::new(this.plan.ctx.stmt.lhs.array.clone(), coords);
                this.gen.insert(d.clone());
                this.contribs.insert((d, ivec.clone()));
                return Ok(());
            }
            let l = this.plan.ctx.loops[level];
            let lb = l.lower.eval(env)?;
            let ub = l.upper.eval(env)?;
            match partial.get(&l.iterator) {
                Some(&v) => {
                    if v >= lb && v < ub {
                        env.insert(l.iterator.clone(), v);
                        ivec.push(v);
                        walk(this, level + 1, env, partial, ivec)?;
                        ivec.pop();
                        env.remove(&l.iterator);
                    }
                }
                None => {
                    for v in lb..ub {
                        env.insert(l.iterator.clone(), v);
                        ivec.push(v);
                        walk(this, level + 1, env, partial, ivec)?;
                        ivec.pop();
                    }
                    env.remove(&l.iterator);
                }
            }
            Ok(())
        }

        let mut env: BTreeMap<Name, i64> = self.params.clone();
        let mut ivec = Vec::new();
        walk(self, 0, &mut env, partial, &mut ivec)
    }
}

// ---------------------------------------------------------------------------
// Fixed point
// ---------------------------------------------------------------------------

/// Per-node data-flow state after convergence.
#[derive(Debug, Clone)]
pub struct NodeState {
    pub out: EssentialSet,
    /// `Gen` from the node's final recomputation (empty for reads).
    pub gen: EssentialSet,
    /// Union of every `Gen` ever produced at this node.
    pub agen: EssentialSet,
}

/// Results of the analysis at the least fixed point.
#[derive(Debug, Clone)]
pub struct AnalysisResult {
    pub d0: EssentialSet,
    /// Final structure: `d0` plus all fill-ins, over all arrays.
    pub dfinal: EssentialSet,
    /// Generated indices that were not already in `d0`.
    pub afill: EssentialSet,
    /// Statement instances the generated code must execute: the generating
    /// instances plus, for statements able to overwrite a stored value with
    /// zero (plain assignment and multiplicative accumulation), every
    /// instance whose destination is stored.
    pub essential_iters: BTreeSet<(Name, Coords)>,
    /// For each generated index, the instances that generate it.
    pub iter_map: BTreeMap<DataIndex, BTreeSet<(Name, Coords)>>,
    /// Per-statement generating iteration vectors (`AInd` of its write node).
    pub ainds: BTreeMap<Name, BTreeSet<Coords>>,
    /// Per-statement rewrite instances added beyond `ainds`: their execution
    /// can only overwrite an already-stored value (possibly with zero), never
    /// create a new nonzero index.
    pub rewrite_iters: BTreeMap<Name, BTreeSet<Coords>>,
    /// Per-statement accumulated generation sets.
    pub agen: BTreeMap<Name, EssentialSet>,
    /// Rounds until quiescence, including the verification round.
    pub sweeps: usize,
    /// Final per-node states, indexed by ADG node id.
    pub node_states: Vec<NodeState>,
}

impl AnalysisResult {
    /// Final structure of one array.
    pub fn structure_of(&self, array: &str) -> EssentialSet {
        self.dfinal.restrict(array)
    }

    pub fn instance_count(&self) -> usize {
        self.essential_iters.len()
    }
}

/// Runs the analysis to its least fixed point. All size parameters must be
/// bound. Deterministic: rounds process nodes in reverse postorder and every
/// set is ordered.
pub fn run_analysis(
    kernel: &Kernel,
    adg: &Adg,
    d0: &EssentialSet,
    params: &ParamBindings,
) -> Result<AnalysisResult> {
    run_analysis_limited(kernel, adg, d0, params, None)
}

/// `run_analysis` with a cap on the number of essential instances; exceeding
/// it aborts with a clear error instead of exhausting memory.
pub fn run_analysis_limited(
    kernel: &Kernel,
    adg: &Adg,
    d0: &EssentialSet,
    params: &ParamBindings,
    max_essential: Option<usize>,
) -> Result<AnalysisResult> {
    // the initial structure covers input and inout arrays of this kernel;
    // output arrays start all-zero by definition
    for array in d0.arrays() {
        let decl = kernel.array(array).ok_or_else(|| {
            Error::Analysis(format!(
                "initial structure names undeclared array `{array}`"
            ))
        })?;
        if decl.role == crate::kernel::Role::Output {
            return Err(Error::Analysis(format!(
                "initial structure marks output array `{array}`, which starts all-zero"
            )));
        }
        let dims = kernel.array_dims(decl, params)?;
        d0.check_bounds(array, &dims)?;
    }
    let n = adg.nodes.len();
    let mut outs: Vec<EssentialSet> = Vec::with_capacity(n);
    for node in &adg.nodes {
        // reads start at D0 (whether or not they have predecessors); writes
        // start empty unless predecessor-free
        match node.kind {
            AccessKind::Read => outs.push(d0.clone()),
            AccessKind::Write => {
                if adg.predecessors(node.id).is_empty() {
                    outs.push(d0.clone());
                } else {
                    outs.push(EssentialSet::new());
                }
            }
        }
    }
    let mut gens: Vec<EssentialSet> = vec![EssentialSet::new(); n];
    let mut agens: Vec<EssentialSet> = vec![EssentialSet::new(); n];
    let mut iter_map: BTreeMap<DataIndex, BTreeSet<(Name, Coords)>> = BTreeMap::new();
    let mut ainds: BTreeMap<Name, BTreeSet<Coords>> = BTreeMap::new();
    // membership mirror of the ordered maps; generation re-discovers the same
    // instances every round it reruns
    let mut known: BTreeSet<(Name, Coords)> = BTreeSet::new();
    let mut instance_count = 0usize;

    let contexts = kernel.statement_contexts();
    let plans: BTreeMap<usize, GenPlan<'_>> = contexts
        .iter()
        .map(|ctx| {
            let wid = adg
                .write_node(&ctx.stmt.id)
                .ok_or_else(|| Error::Analysis(format!("no write node for `{}`", ctx.stmt.id)))?;
            Ok((wid, GenPlan::build(kernel, adg, &ctx.stmt.id)?))
        })
        .collect::<Result<_>>()?;

    let rpo = adg.reverse_postorder();
    let mut scheduled: BTreeSet<usize> = (0..n).collect();
    let mut sweeps = 0usize;

    while !scheduled.is_empty() {
        sweeps += 1;
        // one reverse-postorder round over the scheduled nodes; updates are
        // visible within the round (chaotic iteration with a deterministic
        // order), successors of changed nodes form the next round
        let mut changed: Vec<usize> = Vec::new();
        for &node in rpo.iter().filter(|v| scheduled.contains(v)) {
            let mut next = outs[node].clone();
            let mut added = 0;
            for &p in adg.predecessors(node) {
                added += next.union_with(&outs[p]);
            }
            if adg.nodes[node].kind == AccessKind::Write {
                if let Some(plan) = plans.get(&node) {
                    let (gen, contribs) = run_gen_plan(kernel, plan, &outs, params)?;
                    for (d, ivec) in contribs {
                        let stmt = plan.ctx.stmt.id.clone();
                        if !known.insert((stmt.clone(), ivec.clone())) {
                            continue;
                        }
                        iter_map
                            .entry(d)
                            .or_default()
                            .insert((stmt.clone(), ivec.clone()));
                        ainds.entry(stmt).or_default().insert(ivec);
                        instance_count += 1;
                        if let Some(cap) = max_essential {
                            if instance_count > cap {
                                return Err(Error::Analysis(format!(
                                    "essential iteration indices exceed the configured cap of \
                                     {cap}; this kernel/structure pair is beyond desk scale \
                                     (raise the cap to override)"
                                )));
                            }
                        }
                    }
                    agens[node].union_with(&gen);
                    added += next.union_with(&gen);
                    gens[node] = gen;
                }
            }
            if added > 0 {
                outs[node] = next;
                changed.push(node);
            }
        }
        let mut next_scheduled = BTreeSet::new();
        for node in changed {
            for &s in adg.successors(node) {
                next_scheduled.insert(s);
            }
        }
        if next_scheduled.is_empty() {
            break;
        }
        scheduled = next_scheduled;
    }

    // AFill = union of AGen minus D0; Dfinal = AFill union D0.
    let mut all_agen = EssentialSet::new();
    for a in &agens {
        all_agen.union_with(a);
    }
    let afill = all_agen.difference(d0);
    let mut dfinal = d0.clone();
    dfinal.union_with(&afill);

    debug_assert!(afill.is_disjoint(d0));

    let mut essential_iters: BTreeSet<(Name, Coords)> = BTreeSet::new();
    for (stmt, ivecs) in &ainds {
        for v in ivecs {
            essential_iters.insert((stmt.clone(), v.clone()));
        }
    }

    // Rewrite completion. A plain assignment (and `*=`) can turn a stored
    // nonzero into a zero; monotone structure prediction cannot drop the
    // index, so value correctness requires executing every such instance
    // whose destination is stored. Accumulation by addition or subtraction
    // is a no-op on zero increments and guarded division skips itself, so
    // neither needs this.
    let mut rewrite_iters: BTreeMap<Name, BTreeSet<Coords>> = BTreeMap::new();
    for ctx in &contexts {
        let can_kill = matches!(ctx.stmt.accum_op, None | Some(BinOp::Mul));
        if !can_kill {
            continue;
        }
        let generated = ainds.get(&ctx.stmt.id);
        for ivec in destination_instances(ctx, &dfinal, params)? {
            if generated.is_some_and(|g| g.contains(&ivec)) {
                continue;
            }
            if essential_iters.insert((ctx.stmt.id.clone(), ivec.clone())) {
                instance_count += 1;
                if let Some(cap) = max_essential {
                    if instance_count > cap {
                        return Err(Error::Analysis(format!(
                            "essential iteration indices exceed the configured cap of {cap}; \
                             this kernel/structure pair is beyond desk scale (raise the cap to \
                             override)"
                        )));
                    }
                }
                rewrite_iters
                    .entry(ctx.stmt.id.clone())
                    .or_default()
                    .insert(ivec);
            }
        }
    }

    let mut agen_by_stmt = BTreeMap::new();
    for (wid, plan) in &plans {
        agen_by_stmt.insert(plan.ctx.stmt.id.clone(), agens[*wid].clone());
    }

    let node_states = (0..n)
        .map(|i| NodeState {
            out: outs[i].clone(),
            gen: gens[i].clone(),
            agen: agens[i].clone(),
        })
        .collect();

    Ok(AnalysisResult {
        d0: d0.clone(),
        dfinal,
        afill,
        essential_iters,
        iter_map,
        ainds,
        rewrite_iters,
        agen: agen_by_stmt,
        sweeps,
        node_states,
    })
}

/// Iteration vectors of every domain instance whose destination index lies in
/// `structure`: preimages of the stored indices through the lhs subscripts,
/// with unconstrained iterators swept over their ranges.
fn destination_instances(
    ctx: &StmtCtx<'_>,
    structure: &EssentialSet,
    params: &ParamBindings,
) -> Result<Vec<Coords>> {
    let iterators: BTreeSet<Name> = ctx.iterators().into_iter().collect();
    let lhs = &ctx.stmt.lhs;
    let mut out = Vec::new();
    'cand: for coords in structure.coords_of(&lhs.array) {
        if coords.len() != lhs.subscripts.len() {
            continue;
        }
        let mut bound: BTreeMap<Name, i64> = BTreeMap::new();
        for (sub, value) in lhs.subscripts.iter().zip(coords) {
            let (it, residue) = sub.split_iterator(&iterators);
            let base = residue.eval(params)?;
            match it {
                None => {
                    if base != *value {
                        continue 'cand;
                    }
                }
                Some((iter, sign)) => {
                    let it_val = sign * (value - base);
                    match bound.get(iter) {
                        Some(v) if *v == it_val => {}
                        Some(_) => continue 'cand,
                        None => {
                            bound.insert(iter.clone(), it_val);
                        }
                    }
                }
            }
        }
        sweep_instances(ctx, &bound, params, &mut out)?;
    }
    out.sort();
    out.dedup();
    Ok(out)
}

/// Completes a partial iterator assignment over the loop domain, collecting
/// every full iteration vector.
fn sweep_instances(
    ctx: &StmtCtx<'_>,
    partial: &BTreeMap<Name, i64>,
    params: &ParamBindings,
    out: &mut Vec<Coords>,
) -> Result<()> {
    fn walk(
        ctx: &StmtCtx<'_>,
        level: usize,
        env: &mut BTreeMap<Name, i64>,
        partial: &BTreeMap<Name, i64>,
        ivec: &mut Vec<i64>,
        out: &mut Vec<Coords>,
    ) -> Result<()> {
        if level == ctx.loops.len() {
            out.push(ivec.clone());
            return Ok(());
        }
        let l = ctx.loops[level];
        let lb = l.lower.eval(env)?;
        let ub = l.upper.eval(env)?;
        match partial.get(&l.iterator) {
            Some(&v) => {
                if v >= lb && v < ub {
                    env.insert(l.iterator.clone(), v);
                    ivec.push(v);
                    walk(ctx, level + 1, env, partial, ivec, out)?;
                    ivec.pop();
                    env.remove(&l.iterator);
                }
            }
            None => {
                for v in lb..ub {
                    env.insert(l.iterator.clone(), v);
                    ivec.push(v);
                    walk(ctx, level + 1, env, partial, ivec, out)?;
                    ivec.pop();
                }
                env.remove(&l.iterator);
            }
        }
        Ok(())
    }
    let mut env: BTreeMap<Name, i64> = params.clone();
    let mut ivec = Vec::new();
    walk(ctx, 0, &mut env, partial, &mut ivec, out)
}

// ---------------------------------------------------------------------------
// Soundness probe
// ---------------------------------------------------------------------------

/// Outcome of randomized concrete validation of the analysis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SoundnessReport {
    pub trials: usize,
    /// Output indices observed concretely nonzero but missing from `Dfinal`.
    pub violations: usize,
}

impl SoundnessReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Executes the dense kernel on random values placed at the `d0` positions
/// and checks that every concretely nonzero output index was predicted
/// essential. Over-approximation in the other direction is expected.
pub fn soundness_probe(
    kernel: &Kernel,
    result: &AnalysisResult,
    params: &ParamBindings,
    trials: usize,
    seed: u64,
    model: ValueModel,
) -> Result<SoundnessReport> {
    let mut violations = 0;
    for trial in 0..trials {
        let state = synth_values(kernel, &result.d0, params, seed, trial as u64, model)?;
        let out_state = dense_execute(kernel, state, params)?;
        for decl in &kernel.arrays {
            if !decl.role.is_written() {
                continue;
            }
            let tensor = &out_state.tensors[&decl.name];
            tensor.for_each(|coords, v| {
                if v != 0.0 && !result.dfinal.contains(&decl.name, coords) {
                    violations += 1;
                }
            });
        }
    }
    Ok(SoundnessReport { trials, violations })
}
