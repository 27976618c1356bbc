//! Interpreter of the generated piecewise program over sparse value arrays.

use super::{checked_div, checked_mod, checked_sqrt};
use crate::codegen::{PiecewiseProgram, ProgramItem, SlotExpr, SlotPos, StmtRecipe};
use crate::error::{Error, Result};
use crate::kernel::{BinOp, Name, UnaryOp};
use std::collections::BTreeMap;

fn eval_slot_expr(
    e: &SlotExpr,
    recipe: &StmtRecipe,
    positions: &[SlotPos],
    values: &BTreeMap<Name, Vec<f64>>,
) -> Result<f64> {
    match e {
        SlotExpr::Slot(k) => {
            let array = &recipe.slot_arrays[*k];
            match positions[*k] {
                SlotPos::Zero => Ok(0.0),
                SlotPos::Pos(pos) => values
                    .get(array)
                    .and_then(|v| v.get(pos))
                    .copied()
                    .ok_or_else(|| {
                        Error::Exec(format!(
                            "position {pos} of val{array} out of bounds (program construction bug)"
                        ))
                    }),
            }
        }
        SlotExpr::Lit(v) => Ok(*v),
        SlotExpr::Unary(UnaryOp::Neg, inner) => {
            Ok(-eval_slot_expr(inner, recipe, positions, values)?)
        }
        SlotExpr::Unary(UnaryOp::Sqrt, inner) => {
            let v = eval_slot_expr(inner, recipe, positions, values)?;
            checked_sqrt(v, &format!("statement `{}`", recipe.stmt))
        }
        SlotExpr::Binary(op, a, b) => {
            let va = eval_slot_expr(a, recipe, positions, values)?;
            let vb = eval_slot_expr(b, recipe, positions, values)?;
            match op {
                BinOp::Add => Ok(va + vb),
                BinOp::Sub => Ok(va - vb),
                BinOp::Mul => Ok(va * vb),
                BinOp::Div => checked_div(va, vb, &format!("statement `{}`", recipe.stmt)),
                BinOp::Mod => checked_mod(va, vb, &format!("statement `{}`", recipe.stmt)),
            }
        }
    }
}

fn exec_instance(
    recipe: &StmtRecipe,
    positions: &[SlotPos],
    values: &mut BTreeMap<Name, Vec<f64>>,
) -> Result<()> {
    if let Some(g) = recipe.guard_slot {
        let array = &recipe.slot_arrays[g];
        let gv = match positions[g] {
            SlotPos::Zero => 0.0,
            SlotPos::Pos(pos) => values
                .get(array)
                .and_then(|v| v.get(pos))
                .copied()
                .ok_or_else(|| {
                    Error::Exec(format!("guard position {pos} of val{array} out of bounds"))
                })?,
        };
        if gv == 0.0 {
            return Ok(());
        }
    }
    let value = eval_slot_expr(&recipe.expr, recipe, positions, values)?;
    let array = recipe.slot_arrays[0].clone();
    let SlotPos::Pos(pos) = positions[0] else {
        return Err(Error::Exec(format!(
            "write target of `{}` resolved to the zero cell (program construction bug)",
            recipe.stmt
        )));
    };
    let dst = values
        .get_mut(&array)
        .and_then(|v| v.get_mut(pos))
        .ok_or_else(|| Error::Exec(format!("position {pos} of val{array} out of bounds")))?;
    *dst = value;
    Ok(())
}

/// Runs the program in order. Loops interpret the affine access functions
/// `base + stride * i`; guards are tested at run time.
pub fn piecewise_execute(
    program: &PiecewiseProgram,
    values: &mut BTreeMap<Name, Vec<f64>>,
) -> Result<()> {
    for (array, layout) in &program.layouts {
        let len = values.get(array).map(|v| v.len()).unwrap_or(0);
        if len != layout.nnz() {
            return Err(Error::Exec(format!(
                "val{array} has {len} values but the layout holds {}",
                layout.nnz()
            )));
        }
    }
    let mut positions: Vec<SlotPos> = Vec::new();
    for item in &program.items {
        match item {
            ProgramItem::Singleton(ap) => {
                let recipe = &program.recipes[&ap.stmt];
                positions.clear();
                positions.extend(ap.slots.iter().map(|(_, p)| *p));
                exec_instance(recipe, &positions, values)?;
            }
            ProgramItem::RegularLoop(p) => {
                let recipe = &program.recipes[&p.stmt];
                for k in 0..p.count {
                    positions.clear();
                    for ((_, base), stride) in p.base.slots.iter().zip(&p.stride) {
                        match base {
                            SlotPos::Zero => positions.push(SlotPos::Zero),
                            SlotPos::Pos(b) => {
                                let pos = *b as i64 + stride * k as i64;
                                if pos < 0 {
                                    return Err(Error::Exec(format!(
                                        "negative position {pos} in loop over `{}`",
                                        p.stmt
                                    )));
                                }
                                positions.push(SlotPos::Pos(pos as usize));
                            }
                        }
                    }
                    exec_instance(recipe, &positions, values)?;
                }
            }
        }
    }
    Ok(())
}
