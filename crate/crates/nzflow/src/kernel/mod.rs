//! Loop-nest kernel IR restricted to static control parts: loop bounds and
//! array subscripts are affine in surrounding iterators and size parameters,
//! statements are guarded assignments over arithmetic expression trees.
//!
//! The IR is immutable after construction and validation; analysis and code
//! generation never mutate it.

mod builtin;
mod parse;
mod timestamp;

pub use builtin::{builtin_kernel, complete_builtin_bindings, Builtin};
pub use parse::parse_kernel;
pub use timestamp::{lex_cmp, timestamp_templates, TimestampTemplate, TsEntry};

use crate::error::{Error, Result};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

/// Interned name, cheap to clone and ordered by string value.
pub type Name = Arc<str>;

/// Concrete values for size parameters.
pub type ParamBindings = BTreeMap<Name, i64>;

pub fn name(s: &str) -> Name {
    Arc::from(s)
}

// ---------------------------------------------------------------------------
// Affine expressions
// ---------------------------------------------------------------------------

/// Integer-affine expression: sum of `coeff * var` terms plus a constant.
/// Variables are loop iterators or size parameters. Evaluation is checked
/// integer arithmetic; overflow is an error, never wrapped.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AffineExpr {
    terms: BTreeMap<Name, i64>,
    constant: i64,
}

impl AffineExpr {
    pub fn constant(c: i64) -> Self {
        AffineExpr {
            terms: BTreeMap::new(),
            constant: c,
        }
    }

    pub fn var(v: Name) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(v, 1);
        AffineExpr { terms, constant: 0 }
    }

    pub fn term(coeff: i64, v: Name) -> Self {
        let mut terms = BTreeMap::new();
        if coeff != 0 {
            terms.insert(v, coeff);
        }
        AffineExpr { terms, constant: 0 }
    }

    pub fn add(&self, other: &AffineExpr) -> Result<AffineExpr> {
        let mut out = self.clone();
        for (v, c) in &other.terms {
            let e = out.terms.entry(v.clone()).or_insert(0);
            *e = e
                .checked_add(*c)
                .ok_or_else(|| Error::Overflow(format!("{self} + {other}")))?;
            if *e == 0 {
                out.terms.remove(v);
            }
        }
        out.constant = out
            .constant
            .checked_add(other.constant)
            .ok_or_else(|| Error::Overflow(format!("{self} + {other}")))?;
        Ok(out)
    }

    pub fn sub(&self, other: &AffineExpr) -> Result<AffineExpr> {
        self.add(&other.scale(-1)?)
    }

    pub fn scale(&self, k: i64) -> Result<AffineExpr> {
        let mut out = AffineExpr::constant(
            self.constant
                .checked_mul(k)
                .ok_or_else(|| Error::Overflow(format!("{k}*{self}")))?,
        );
        for (v, c) in &self.terms {
            let ck = c
                .checked_mul(k)
                .ok_or_else(|| Error::Overflow(format!("{k}*{self}")))?;
            if ck != 0 {
                out.terms.insert(v.clone(), ck);
            }
        }
        Ok(out)
    }

    pub fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn constant_part(&self) -> i64 {
        self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Name, i64)> {
        self.terms.iter().map(|(v, c)| (v, *c))
    }

    pub fn variables(&self) -> impl Iterator<Item = &Name> {
        self.terms.keys()
    }

    /// Exact evaluation under `env`; every variable must be bound.
    pub fn eval(&self, env: &BTreeMap<Name, i64>) -> Result<i64> {
        let mut acc = self.constant;
        for (v, c) in &self.terms {
            let val = *env
                .get(v)
                .ok_or_else(|| Error::Validate(format!("unbound variable `{v}` in `{self}`")))?;
            let prod = c
                .checked_mul(val)
                .ok_or_else(|| Error::Overflow(self.to_string()))?;
            acc = acc
                .checked_add(prod)
                .ok_or_else(|| Error::Overflow(self.to_string()))?;
        }
        Ok(acc)
    }

    /// Splits a subscript into its single iterator term and the residue.
    /// Returns `(Some((iter, sign)), residue)` when exactly one term refers to
    /// an iterator (which then must have coefficient +/-1 per validation), or
    /// `(None, residue)` for an iterator-free subscript.
    pub fn split_iterator<'a>(
        &'a self,
        iterators: &BTreeSet<Name>,
    ) -> (Option<(&'a Name, i64)>, AffineExpr) {
        let mut found = None;
        let mut residue = AffineExpr::constant(self.constant);
        for (v, c) in &self.terms {
            if iterators.contains(v) {
                found = Some((v, *c));
            } else {
                residue.terms.insert(v.clone(), *c);
            }
        }
        (found, residue)
    }
}

impl fmt::Display for AffineExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (v, c) in &self.terms {
            if first {
                match *c {
                    1 => write!(f, "{v}")?,
                    -1 => write!(f, "-{v}")?,
                    c => write!(f, "{c}*{v}")?,
                }
                first = false;
            } else if *c < 0 {
                if *c == -1 {
                    write!(f, " - {v}")?;
                } else {
                    write!(f, " - {}*{v}", -c)?;
                }
            } else if *c == 1 {
                write!(f, " + {v}")?;
            } else {
                write!(f, " + {c}*{v}")?;
            }
        }
        if first {
            write!(f, "{}", self.constant)?;
        } else if self.constant > 0 {
            write!(f, " + {}", self.constant)?;
        } else if self.constant < 0 {
            write!(f, " - {}", -self.constant)?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// References, expressions, statements
// ---------------------------------------------------------------------------

/// Subscripted array access, one affine expression per dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrayRef {
    pub array: Name,
    pub subscripts: Vec<AffineExpr>,
}

impl ArrayRef {
    pub fn new(array: Name, subscripts: Vec<AffineExpr>) -> Self {
        ArrayRef { array, subscripts }
    }

    /// Evaluates all subscripts to a concrete coordinate vector.
    pub fn coords(&self, env: &BTreeMap<Name, i64>) -> Result<Vec<i64>> {
        self.subscripts.iter().map(|s| s.eval(env)).collect()
    }
}

impl fmt::Display for ArrayRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.array)?;
        for s in &self.subscripts {
            write!(f, "[{s}]")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum UnaryOp {
    Neg,
    Sqrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Mod,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
        }
    }
}

/// Right-hand-side expression tree. Leaves are array references or nonzero
/// literal multipliers; interior nodes are the admissible operators.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Ref(ArrayRef),
    Lit(f64),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    /// Array-reference leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&ArrayRef> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a ArrayRef>) {
        match self {
            Expr::Ref(r) => out.push(r),
            Expr::Lit(_) => {}
            Expr::Unary(_, e) => e.collect_leaves(out),
            Expr::Binary(_, a, b) => {
                a.collect_leaves(out);
                b.collect_leaves(out);
            }
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Ref(_) | Expr::Lit(_) => 3,
            Expr::Unary(..) => 2,
            Expr::Binary(BinOp::Mul | BinOp::Div | BinOp::Mod, ..) => 1,
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 0,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        let p = self.precedence();
        let parens = p < min;
        if parens {
            write!(f, "(")?;
        }
        match self {
            Expr::Ref(r) => write!(f, "{r}")?,
            Expr::Lit(v) => write!(f, "{v}")?,
            Expr::Unary(UnaryOp::Neg, e) => {
                write!(f, "-")?;
                e.fmt_prec(f, 2)?;
            }
            Expr::Unary(UnaryOp::Sqrt, e) => {
                write!(f, "sqrt(")?;
                e.fmt_prec(f, 0)?;
                write!(f, ")")?;
            }
            Expr::Binary(op, a, b) => {
                a.fmt_prec(f, p)?;
                write!(f, " {} ", op.symbol())?;
                // Right operand needs one level more to keep `a - (b - c)`
                // distinct from `a - b - c`.
                b.fmt_prec(f, p + 1)?;
            }
        }
        if parens {
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// A guarded assignment. `accum_op` is set for `lhs op= rhs` forms; the
/// canonical expanded form `lhs = lhs op rhs` is produced on demand.
#[derive(Debug, Clone, PartialEq)]
pub struct Statement {
    pub id: Name,
    pub guard: Option<ArrayRef>,
    pub lhs: ArrayRef,
    pub rhs: Expr,
    pub accum_op: Option<BinOp>,
}

impl Statement {
    pub fn is_accumulate(&self) -> bool {
        self.accum_op.is_some()
    }

    /// Canonical right-hand side with accumulation expanded: `lhs op rhs`.
    pub fn canonical_rhs(&self) -> Expr {
        match self.accum_op {
            Some(op) => Expr::Binary(
                op,
                Box::new(Expr::Ref(self.lhs.clone())),
                Box::new(self.rhs.clone()),
            ),
            None => self.rhs.clone(),
        }
    }

    /// Leaves of the canonical rhs, left to right. For accumulate statements
    /// leaf 0 is the old value of the destination.
    pub fn canonical_leaves(&self) -> Vec<ArrayRef> {
        let canon = self.canonical_rhs();
        canon.leaves().into_iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Loop(Loop),
    Stmt(Statement),
}

/// Counted loop with affine, half-open bounds `lower..upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct Loop {
    pub iterator: Name,
    pub lower: AffineExpr,
    pub upper: AffineExpr,
    pub body: Vec<Item>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Input,
    Output,
    Inout,
}

impl Role {
    pub fn keyword(self) -> &'static str {
        match self {
            Role::Input => "input",
            Role::Output => "output",
            Role::Inout => "inout",
        }
    }

    pub fn is_written(self) -> bool {
        matches!(self, Role::Output | Role::Inout)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayDecl {
    pub name: Name,
    pub dims: Vec<AffineExpr>,
    pub role: Role,
}

/// A validated kernel: declarations plus a loop-nest body.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    pub name: Name,
    pub params: Vec<Name>,
    pub arrays: Vec<ArrayDecl>,
    pub body: Vec<Item>,
}

/// A statement together with its enclosing loops, outermost first.
#[derive(Debug, Clone)]
pub struct StmtCtx<'k> {
    pub stmt: &'k Statement,
    pub loops: Vec<&'k Loop>,
}

impl<'k> StmtCtx<'k> {
    pub fn depth(&self) -> usize {
        self.loops.len()
    }

    pub fn iterators(&self) -> Vec<Name> {
        self.loops.iter().map(|l| l.iterator.clone()).collect()
    }

    /// Environment for one concrete instance: params plus iterator values.
    pub fn instance_env(&self, params: &ParamBindings, ivec: &[i64]) -> BTreeMap<Name, i64> {
        let mut env = params.clone();
        for (l, v) in self.loops.iter().zip(ivec) {
            env.insert(l.iterator.clone(), *v);
        }
        env
    }

    /// Checks `ivec` lies inside the (affine) iteration domain.
    pub fn contains(&self, params: &ParamBindings, ivec: &[i64]) -> Result<bool> {
        if ivec.len() != self.loops.len() {
            return Ok(false);
        }
        let mut env = params.clone();
        for (l, v) in self.loops.iter().zip(ivec) {
            let lb = l.lower.eval(&env)?;
            let ub = l.upper.eval(&env)?;
            if *v < lb || *v >= ub {
                return Ok(false);
            }
            env.insert(l.iterator.clone(), *v);
        }
        Ok(true)
    }
}

impl Kernel {
    pub fn array(&self, name: &str) -> Option<&ArrayDecl> {
        self.arrays.iter().find(|a| &*a.name == name)
    }

    pub fn statement(&self, id: &str) -> Option<&Statement> {
        self.statement_contexts()
            .into_iter()
            .find(|c| &*c.stmt.id == id)
            .map(|c| c.stmt)
    }

    /// All statements in textual order with their loop context.
    pub fn statement_contexts(&self) -> Vec<StmtCtx<'_>> {
        fn walk<'k>(items: &'k [Item], loops: &mut Vec<&'k Loop>, out: &mut Vec<StmtCtx<'k>>) {
            for item in items {
                match item {
                    Item::Stmt(s) => out.push(StmtCtx {
                        stmt: s,
                        loops: loops.clone(),
                    }),
                    Item::Loop(l) => {
                        loops.push(l);
                        walk(&l.body, loops, out);
                        loops.pop();
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.body, &mut Vec::new(), &mut out);
        out
    }

    /// Concrete extent of each dimension of `decl` under `params`.
    pub fn array_dims(&self, decl: &ArrayDecl, params: &ParamBindings) -> Result<Vec<i64>> {
        decl.dims.iter().map(|d| d.eval(params)).collect()
    }

    /// Structural and typing checks; every kernel must pass before use.
    pub fn validate(&self) -> Result<()> {
        let mut names: BTreeSet<Name> = BTreeSet::new();
        for p in &self.params {
            if !names.insert(p.clone()) {
                return Err(Error::Validate(format!("duplicate parameter `{p}`")));
            }
        }
        for a in &self.arrays {
            if !names.insert(a.name.clone()) {
                return Err(Error::Validate(format!(
                    "duplicate declaration `{}`",
                    a.name
                )));
            }
            if a.dims.is_empty() {
                return Err(Error::Validate(format!(
                    "array `{}` has no dimensions",
                    a.name
                )));
            }
            for d in &a.dims {
                for v in d.variables() {
                    if !self.params.contains(v) {
                        return Err(Error::Validate(format!(
                            "array `{}` size refers to `{v}` which is not a parameter",
                            a.name
                        )));
                    }
                }
            }
        }
        let params: BTreeSet<Name> = self.params.iter().cloned().collect();
        let mut stmt_ids = BTreeSet::new();
        self.validate_items(&self.body, &mut Vec::new(), &params, &mut stmt_ids)
    }

    fn validate_items(
        &self,
        items: &[Item],
        iters: &mut Vec<Name>,
        params: &BTreeSet<Name>,
        stmt_ids: &mut BTreeSet<Name>,
    ) -> Result<()> {
        for item in items {
            match item {
                Item::Loop(l) => {
                    if params.contains(&l.iterator)
                        || iters.contains(&l.iterator)
                        || self.array(&l.iterator).is_some()
                    {
                        return Err(Error::Validate(format!(
                            "iterator `{}` shadows another name",
                            l.iterator
                        )));
                    }
                    for bound in [&l.lower, &l.upper] {
                        for v in bound.variables() {
                            if !params.contains(v) && !iters.contains(v) {
                                return Err(Error::Validate(format!(
                                    "loop bound `{bound}` refers to `{v}` which is neither a \
                                     parameter nor an enclosing iterator"
                                )));
                            }
                        }
                    }
                    iters.push(l.iterator.clone());
                    self.validate_items(&l.body, iters, params, stmt_ids)?;
                    iters.pop();
                }
                Item::Stmt(s) => {
                    if !stmt_ids.insert(s.id.clone()) {
                        return Err(Error::Validate(format!(
                            "duplicate statement id `{}`",
                            s.id
                        )));
                    }
                    self.validate_ref(&s.lhs, iters, params)?;
                    let lhs_decl = self.array(&s.lhs.array).expect("checked in validate_ref");
                    if lhs_decl.role == Role::Input {
                        return Err(Error::Validate(format!(
                            "statement `{}` writes input array `{}`",
                            s.id, s.lhs.array
                        )));
                    }
                    for leaf in s.rhs.leaves() {
                        self.validate_ref(leaf, iters, params)?;
                    }
                    if let Some(g) = &s.guard {
                        self.validate_ref(g, iters, params)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn validate_ref(&self, r: &ArrayRef, iters: &[Name], params: &BTreeSet<Name>) -> Result<()> {
        let decl = self
            .array(&r.array)
            .ok_or_else(|| Error::Validate(format!("undeclared array `{}`", r.array)))?;
        if r.subscripts.len() != decl.dims.len() {
            return Err(Error::Validate(format!(
                "`{r}` has {} subscripts but `{}` is {}-dimensional",
                r.subscripts.len(),
                r.array,
                decl.dims.len()
            )));
        }
        let iter_set: BTreeSet<Name> = iters.iter().cloned().collect();
        for sub in &r.subscripts {
            let mut iter_terms = 0;
            for (v, c) in sub.terms() {
                if iter_set.contains(v) {
                    iter_terms += 1;
                    if c != 1 && c != -1 {
                        return Err(Error::Validate(format!(
                            "subscript `{sub}` of `{r}`: iterator coefficient must be +1 or -1"
                        )));
                    }
                } else if !params.contains(v) {
                    return Err(Error::Validate(format!(
                        "subscript `{sub}` of `{r}` refers to unknown name `{v}`"
                    )));
                }
            }
            if iter_terms > 1 {
                return Err(Error::Validate(format!(
                    "subscript `{sub}` of `{r}` mixes several iterators; only `+-i + c` forms \
                     are supported"
                )));
            }
        }
        Ok(())
    }

    /// Canonical DSL rendering; `parse_kernel` of the output reproduces the IR.
    pub fn to_dsl(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("kernel {}(", self.name));
        out.push_str(
            &self
                .params
                .iter()
                .map(|p| p.to_string())
                .collect::<Vec<_>>()
                .join(", "),
        );
        out.push_str(") {\n");
        for a in &self.arrays {
            out.push_str(&format!("    array {}", a.name));
            for d in &a.dims {
                out.push_str(&format!("[{d}]"));
            }
            out.push_str(&format!(" {};\n", a.role.keyword()));
        }
        fn items(out: &mut String, body: &[Item], indent: usize) {
            let pad = "    ".repeat(indent);
            for item in body {
                match item {
                    Item::Loop(l) => {
                        out.push_str(&format!(
                            "{pad}for {} in {}..{} {{\n",
                            l.iterator, l.lower, l.upper
                        ));
                        items(out, &l.body, indent + 1);
                        out.push_str(&format!("{pad}}}\n"));
                    }
                    Item::Stmt(s) => {
                        let mut line = String::new();
                        let op = match s.accum_op {
                            Some(op) => format!("{}=", op.symbol()),
                            None => "=".to_string(),
                        };
                        line.push_str(&format!("{}: {} {} {};", s.id, s.lhs, op, s.rhs));
                        match &s.guard {
                            Some(g) => {
                                out.push_str(&format!("{pad}if nonzero({g}) {{\n"));
                                out.push_str(&format!("{pad}    {line}\n"));
                                out.push_str(&format!("{pad}}}\n"));
                            }
                            None => out.push_str(&format!("{pad}{line}\n")),
                        }
                    }
                }
            }
        }
        items(&mut out, &self.body, 1);
        out.push_str("}\n");
        out
    }
}
