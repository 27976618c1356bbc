//! Dense interpreter of the kernel IR with C-like double semantics.

use super::{checked_div, checked_mod, checked_sqrt};
use crate::error::{Error, Result};
use crate::kernel::{BinOp, Expr, Item, Kernel, Name, ParamBindings, Statement, UnaryOp};
use crate::sparsity::DenseTensor;
use std::collections::BTreeMap;

/// Per-array dense tensors at the declared sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseState {
    pub tensors: BTreeMap<Name, DenseTensor>,
}

impl DenseState {
    /// Zero-initialized tensors for every declared array.
    pub fn allocate(kernel: &Kernel, params: &ParamBindings) -> Result<DenseState> {
        let mut tensors = BTreeMap::new();
        for decl in &kernel.arrays {
            let dims = kernel.array_dims(decl, params)?;
            tensors.insert(decl.name.clone(), DenseTensor::zeros(dims)?);
        }
        Ok(DenseState { tensors })
    }
}

fn eval_expr(
    expr: &Expr,
    env: &BTreeMap<Name, i64>,
    state: &DenseState,
    stmt: &Name,
) -> Result<f64> {
    match expr {
        Expr::Ref(r) => {
            let coords = r.coords(env)?;
            let tensor = state
                .tensors
                .get(&r.array)
                .ok_or_else(|| Error::Exec(format!("array `{}` not allocated", r.array)))?;
            tensor.get(&coords)
        }
        Expr::Lit(v) => Ok(*v),
        Expr::Unary(UnaryOp::Neg, inner) => Ok(-eval_expr(inner, env, state, stmt)?),
        Expr::Unary(UnaryOp::Sqrt, inner) => {
            let v = eval_expr(inner, env, state, stmt)?;
            checked_sqrt(v, &format!("statement `{stmt}`"))
        }
        Expr::Binary(op, a, b) => {
            let va = eval_expr(a, env, state, stmt)?;
            let vb = eval_expr(b, env, state, stmt)?;
            match op {
                BinOp::Add => Ok(va + vb),
                BinOp::Sub => Ok(va - vb),
                BinOp::Mul => Ok(va * vb),
                BinOp::Div => checked_div(va, vb, &format!("statement `{stmt}`")),
                BinOp::Mod => checked_mod(va, vb, &format!("statement `{stmt}`")),
            }
        }
    }
}

fn exec_statement(s: &Statement, env: &BTreeMap<Name, i64>, state: &mut DenseState) -> Result<()> {
    if let Some(g) = &s.guard {
        let coords = g.coords(env)?;
        if state.tensors[&g.array].get(&coords)? == 0.0 {
            return Ok(());
        }
    }
    // evaluate the canonical form `lhs = lhs op rhs`: identical operations in
    // identical order to the piecewise interpreter
    let canon = s.canonical_rhs();
    let value = eval_expr(&canon, env, state, &s.id)?;
    let coords = s.lhs.coords(env)?;
    let tensor = state
        .tensors
        .get_mut(&s.lhs.array)
        .ok_or_else(|| Error::Exec(format!("array `{}` not allocated", s.lhs.array)))?;
    tensor.set(&coords, value)
}

fn exec_items(items: &[Item], env: &mut BTreeMap<Name, i64>, state: &mut DenseState) -> Result<()> {
    for item in items {
        match item {
            Item::Stmt(s) => exec_statement(s, env, state)?,
            Item::Loop(l) => {
                let lb = l.lower.eval(env)?;
                let ub = l.upper.eval(env)?;
                for v in lb..ub {
                    env.insert(l.iterator.clone(), v);
                    exec_items(&l.body, env, state)?;
                }
                env.remove(&l.iterator);
            }
        }
    }
    Ok(())
}

/// Executes the kernel in program order over dense arrays; in-place arrays
/// are mutated in `state`. Unguarded division by zero and square roots of
/// negative values are errors, never silently produced.
pub fn dense_execute(
    kernel: &Kernel,
    mut state: DenseState,
    params: &ParamBindings,
) -> Result<DenseState> {
    let mut env: BTreeMap<Name, i64> = params.clone();
    exec_items(&kernel.body, &mut env, &mut state)?;
    Ok(state)
}
