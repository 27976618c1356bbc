//! Builtin kernels, defined in the DSL itself and parsed on demand.

use super::{name, parse_kernel, Kernel, ParamBindings};
use crate::error::{Error, Result};

/// Matrix-vector product `Y = A * X` over an `n x n` matrix.
const SPMV: &str = "\
kernel spmv(n) {
    array A[n][n] input;
    array X[n] input;
    array Y[n] output;
    for i in 0..n {
        for j in 0..n {
            S: Y[i] += A[i][j] * X[j];
        }
    }
}
";

/// Same dense loop as `spmv` but over a rectangular `m x n` matrix; used when
/// both the matrix and the vector carry sparsity structures.
const SPMSPV: &str = "\
kernel spmspv(m, n) {
    array A[m][n] input;
    array X[n] input;
    array Y[m] output;
    for i in 0..m {
        for j in 0..n {
            S: Y[i] += A[i][j] * X[j];
        }
    }
}
";

/// In-place forward Cholesky decomposition of a symmetric positive definite
/// matrix; reads and writes the lower triangle plus the diagonal.
const CHOLESKY: &str = "\
kernel cholesky(n) {
    array A[n][n] inout;
    for i in 0..n {
        for j in 0..i {
            for k in 0..j {
                S1: A[i][j] -= A[i][k] * A[j][k];
            }
            if nonzero(A[j][j]) {
                S2: A[i][j] /= A[j][j];
            }
        }
        for l in 0..i {
            S3: A[i][i] -= A[i][l] * A[i][l];
        }
        S4: A[i][i] = sqrt(A[i][i]);
    }
}
";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Spmv,
    Spmspv,
    Cholesky,
}

impl Builtin {
    pub fn from_name(s: &str) -> Option<Builtin> {
        match s {
            "spmv" => Some(Builtin::Spmv),
            "spmspv" => Some(Builtin::Spmspv),
            "cholesky" => Some(Builtin::Cholesky),
            _ => None,
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            Builtin::Spmv => SPMV,
            Builtin::Spmspv => SPMSPV,
            Builtin::Cholesky => CHOLESKY,
        }
    }

    pub fn kernel(self) -> Kernel {
        parse_kernel(self.source()).expect("builtin kernels are well-formed")
    }
}

/// Fills in defaulted parameters and checks the rest: `spmspv` defaults its
/// row count `m` to `n`; every remaining kernel parameter must be bound to a
/// non-negative value.
pub fn complete_builtin_bindings(
    builtin: Builtin,
    partial: &ParamBindings,
) -> Result<ParamBindings> {
    let mut bindings = partial.clone();
    if builtin == Builtin::Spmspv && !bindings.contains_key(&name("m")) {
        if let Some(n) = bindings.get(&name("n")).copied() {
            bindings.insert(name("m"), n);
        }
    }
    for p in builtin.kernel().params {
        match bindings.get(&p) {
            None => return Err(Error::Usage(format!("missing size parameter `{p}`"))),
            Some(v) if *v < 0 => {
                return Err(Error::Usage(format!(
                    "size parameter `{p}` must be non-negative, got {v}"
                )))
            }
            Some(_) => {}
        }
    }
    Ok(bindings)
}

/// Returns the named builtin kernel after validating `params` against its
/// parameter list (with defaults applied).
pub fn builtin_kernel(kernel_name: &str, params: &ParamBindings) -> Result<Kernel> {
    let builtin = Builtin::from_name(kernel_name)
        .ok_or_else(|| Error::UnknownBuiltin(kernel_name.to_string()))?;
    complete_builtin_bindings(builtin, params)?;
    Ok(builtin.kernel())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Role;

    fn bind(pairs: &[(&str, i64)]) -> ParamBindings {
        pairs.iter().map(|(k, v)| (name(k), *v)).collect()
    }

    #[test]
    fn cholesky_has_four_statements_with_guard_on_s2() {
        let k = builtin_kernel("cholesky", &bind(&[("n", 494)])).unwrap();
        let ctxs = k.statement_contexts();
        assert_eq!(ctxs.len(), 4);
        let ids: Vec<&str> = ctxs.iter().map(|c| &*c.stmt.id).collect();
        assert_eq!(ids, ["S1", "S2", "S3", "S4"]);
        let s2 = k.statement("S2").unwrap();
        let g = s2.guard.as_ref().expect("S2 is guarded");
        assert_eq!(g.to_string(), "A[j][j]");
        assert_eq!(k.array("A").unwrap().role, Role::Inout);
    }

    #[test]
    fn spmv_is_a_single_accumulate_statement() {
        let k = builtin_kernel("spmv", &bind(&[("n", 4)])).unwrap();
        let ctxs = k.statement_contexts();
        assert_eq!(ctxs.len(), 1);
        assert!(ctxs[0].stmt.is_accumulate());
    }

    #[test]
    fn spmspv_accepts_unit_size_and_defaults_m() {
        let b = complete_builtin_bindings(Builtin::Spmspv, &bind(&[("n", 1)])).unwrap();
        assert_eq!(b.get(&name("m")), Some(&1));
        builtin_kernel("spmspv", &bind(&[("n", 1)])).unwrap();
    }

    #[test]
    fn unknown_builtin_is_an_error() {
        assert!(matches!(
            builtin_kernel("lu", &bind(&[])),
            Err(Error::UnknownBuiltin(_))
        ));
    }

    #[test]
    fn builtins_roundtrip_through_the_printer() {
        for b in [Builtin::Spmv, Builtin::Spmspv, Builtin::Cholesky] {
            let k = b.kernel();
            assert_eq!(parse_kernel(&k.to_dsl()).unwrap(), k);
        }
    }
}
