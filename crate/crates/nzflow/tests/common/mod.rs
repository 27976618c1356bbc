//! Shared test utilities: seeded random kernels and random sparsity
//! structures in the admissible statement family.

use nzflow::kernel::{
    name, AffineExpr, ArrayDecl, ArrayRef, BinOp, Expr, Item, Kernel, Loop, Name, ParamBindings,
    Role, Statement, UnaryOp,
};
use nzflow::sparsity::{DataIndex, EssentialSet};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

pub struct RandomKernel {
    pub kernel: Kernel,
    pub params: ParamBindings,
    pub d0: EssentialSet,
}

struct LoopShape {
    iterator: Name,
    /// lower bound is 1 (so `it - 1` stays in range)
    from_one: bool,
    /// upper bound is `n - 1` (so `it + 1` stays in range)
    to_n_minus_one: bool,
}

/// Subscript over one of the `visible` loops that stays inside `[0, n)`.
fn subscript(rng: &mut ChaCha8Rng, visible: &[LoopShape]) -> AffineExpr {
    if visible.is_empty() || rng.gen_ratio(1, 10) {
        return AffineExpr::constant(rng.gen_range(0..3));
    }
    let l = &visible[rng.gen_range(0..visible.len())];
    let roll: u8 = rng.gen_range(0..10);
    match roll {
        0 if l.to_n_minus_one => AffineExpr::var(l.iterator.clone())
            .add(&AffineExpr::constant(1))
            .unwrap(),
        1 if l.from_one => AffineExpr::var(l.iterator.clone())
            .add(&AffineExpr::constant(-1))
            .unwrap(),
        _ => AffineExpr::var(l.iterator.clone()),
    }
}

fn make_ref(rng: &mut ChaCha8Rng, array: &ArrayDecl, visible: &[LoopShape]) -> ArrayRef {
    let subs = (0..array.dims.len())
        .map(|_| subscript(rng, visible))
        .collect();
    ArrayRef::new(array.name.clone(), subs)
}

/// Generates a valid kernel with 1..=3 nested loops, 1..=3 statements from
/// the admissible forms, and random input structures. Deterministic in
/// `seed`.
pub fn random_kernel(seed: u64) -> RandomKernel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_param = name("n");
    let nsize: i64 = rng.gen_range(3..=8);

    // declarations: 2..=4 arrays, the first is always a written target
    let array_count = rng.gen_range(2..=4usize);
    let mut arrays = Vec::new();
    for a in 0..array_count {
        let rank = if rng.gen_bool(0.5) { 1 } else { 2 };
        let dims = vec![AffineExpr::var(n_param.clone()); rank];
        let role = if a == 0 {
            if rng.gen_bool(0.5) {
                Role::Output
            } else {
                Role::Inout
            }
        } else if rng.gen_bool(0.2) {
            Role::Inout
        } else {
            Role::Input
        };
        arrays.push(ArrayDecl {
            name: name(&format!("M{a}")),
            dims,
            role,
        });
    }

    let depth = rng.gen_range(1..=3usize);
    let mut shapes = Vec::new();
    for d in 0..depth {
        shapes.push(LoopShape {
            iterator: name(&format!("i{d}")),
            from_one: rng.gen_bool(0.3),
            to_n_minus_one: rng.gen_bool(0.3),
        });
    }

    // statements, each placed at a depth and using only enclosing iterators
    let stmt_count = rng.gen_range(1..=3usize);
    let writable: Vec<usize> = arrays
        .iter()
        .enumerate()
        .filter(|(_, a)| a.role.is_written())
        .map(|(i, _)| i)
        .collect();
    let mut placed: Vec<(usize, Statement)> = Vec::new();
    for s in 0..stmt_count {
        let at_depth = rng.gen_range(1..=depth);
        let visible = &shapes[..at_depth];
        let target = &arrays[writable[rng.gen_range(0..writable.len())]];
        let lhs = make_ref(&mut rng, target, visible);
        let leaf = |rng: &mut ChaCha8Rng| {
            let pool: Vec<ArrayDecl> = arrays.clone();
            let a = &pool[rng.gen_range(0..pool.len())];
            Expr::Ref(make_ref(rng, a, visible))
        };
        let shape: u8 = rng.gen_range(0..6);
        let (rhs, accum_op, guard) = match shape {
            0 => (leaf(&mut rng), None, None),
            1 => (
                Expr::Unary(
                    if rng.gen_bool(0.5) {
                        UnaryOp::Neg
                    } else {
                        UnaryOp::Sqrt
                    },
                    Box::new(leaf(&mut rng)),
                ),
                None,
                None,
            ),
            2 => (
                Expr::Binary(
                    if rng.gen_bool(0.5) {
                        BinOp::Add
                    } else {
                        BinOp::Sub
                    },
                    Box::new(leaf(&mut rng)),
                    Box::new(leaf(&mut rng)),
                ),
                None,
                None,
            ),
            3 => (
                Expr::Binary(
                    BinOp::Mul,
                    Box::new(leaf(&mut rng)),
                    Box::new(leaf(&mut rng)),
                ),
                Some(BinOp::Add),
                None,
            ),
            4 => {
                let den = {
                    let a = &arrays[rng.gen_range(0..arrays.len())];
                    make_ref(&mut rng, a, visible)
                };
                (
                    Expr::Binary(
                        BinOp::Div,
                        Box::new(leaf(&mut rng)),
                        Box::new(Expr::Ref(den.clone())),
                    ),
                    None,
                    Some(den),
                )
            }
            _ => (
                Expr::Binary(
                    BinOp::Sub,
                    Box::new(leaf(&mut rng)),
                    Box::new(Expr::Binary(
                        BinOp::Mul,
                        Box::new(leaf(&mut rng)),
                        Box::new(leaf(&mut rng)),
                    )),
                ),
                if rng.gen_bool(0.5) {
                    Some(BinOp::Sub)
                } else {
                    None
                },
                None,
            ),
        };
        placed.push((
            at_depth,
            Statement {
                id: name(&format!("S{s}")),
                guard,
                lhs,
                rhs,
                accum_op,
            },
        ));
    }

    // assemble innermost-first: level k holds its statements around the next
    // deeper loop
    let mut inner_body: Vec<Item> = Vec::new();
    for level in (1..=depth).rev() {
        let mut body: Vec<Item> = Vec::new();
        let here: Vec<Statement> = placed
            .iter()
            .filter(|(d, _)| *d == level)
            .map(|(_, s)| s.clone())
            .collect();
        let before = rng.gen_range(0..=here.len());
        for s in here.iter().take(before) {
            body.push(Item::Stmt(s.clone()));
        }
        if !inner_body.is_empty() {
            let shape = &shapes[level]; // loop at depth level+1 in 1-based terms
            body.push(Item::Loop(Loop {
                iterator: shape.iterator.clone(),
                lower: if shape.from_one {
                    AffineExpr::constant(1)
                } else {
                    AffineExpr::constant(0)
                },
                upper: if shape.to_n_minus_one {
                    AffineExpr::var(n_param.clone())
                        .add(&AffineExpr::constant(-1))
                        .unwrap()
                } else {
                    AffineExpr::var(n_param.clone())
                },
                body: inner_body,
            }));
        }
        for s in here.iter().skip(before) {
            body.push(Item::Stmt(s.clone()));
        }
        inner_body = body;
    }
    let outer = &shapes[0];
    let body = vec![Item::Loop(Loop {
        iterator: outer.iterator.clone(),
        lower: if outer.from_one {
            AffineExpr::constant(1)
        } else {
            AffineExpr::constant(0)
        },
        upper: if outer.to_n_minus_one {
            AffineExpr::var(n_param.clone())
                .add(&AffineExpr::constant(-1))
                .unwrap()
        } else {
            AffineExpr::var(n_param.clone())
        },
        body: inner_body,
    })];

    let kernel = Kernel {
        name: name(&format!("rand{seed}")),
        params: vec![n_param.clone()],
        arrays,
        body,
    };
    kernel.validate().expect("generated kernels must validate");

    let mut params = ParamBindings::new();
    params.insert(n_param, nsize);

    let mut d0 = EssentialSet::new();
    let density: f64 = rng.gen_range(0.05..0.3);
    for decl in &kernel.arrays {
        if decl.role == Role::Output {
            continue;
        }
        let rank = decl.dims.len();
        let total: i64 = nsize.pow(rank as u32);
        for flat in 0..total {
            if rng.gen_bool(density) {
                let coords = if rank == 1 {
                    vec![flat]
                } else {
                    vec![flat / nsize, flat % nsize]
                };
                d0.insert(DataIndex::new(decl.name.clone(), coords));
            }
        }
    }

    RandomKernel { kernel, params, d0 }
}

/// Random sparse structure for an `n x n` matrix at the given density;
/// optionally symmetric with a full diagonal (a factorization-friendly
/// pattern).
#[allow(dead_code)]
pub fn random_matrix_structure(
    array: &str,
    n: i64,
    density: f64,
    spd_like: bool,
    seed: u64,
) -> EssentialSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arr = name(array);
    let mut set = EssentialSet::new();
    if spd_like {
        for i in 0..n {
            set.insert(DataIndex::new(arr.clone(), vec![i, i]));
            for j in 0..i {
                if rng.gen_bool(density) {
                    set.insert(DataIndex::new(arr.clone(), vec![i, j]));
                    set.insert(DataIndex::new(arr.clone(), vec![j, i]));
                }
            }
        }
    } else {
        for i in 0..n {
            for j in 0..n {
                if rng.gen_bool(density) {
                    set.insert(DataIndex::new(arr.clone(), vec![i, j]));
                }
            }
        }
    }
    set
}

/// Random vector structure of length `n`.
#[allow(dead_code)]
pub fn random_vector_structure(array: &str, n: i64, density: f64, seed: u64) -> EssentialSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arr = name(array);
    (0..n)
        .filter(|_| rng.gen_bool(density))
        .map(|i| DataIndex::new(arr.clone(), vec![i]))
        .collect()
}
