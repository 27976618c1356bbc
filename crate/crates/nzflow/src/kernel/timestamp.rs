//! Per-statement schedule templates: alternating static positions and loop
//! iterators, `[pos0, it1, pos1, ..., itd, posd]`. Instantiating a template at
//! an iteration vector yields an integer timestamp; lexicographic order of
//! timestamps is the sequential execution order of statement instances.

use super::{Item, Kernel, Name};
use crate::error::{Error, Result};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TsEntry {
    Pos(i64),
    Iter(Name),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampTemplate {
    pub stmt: Name,
    pub entries: Vec<TsEntry>,
}

impl TimestampTemplate {
    /// Number of loop iterators in the template.
    pub fn depth(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| matches!(e, TsEntry::Iter(_)))
            .count()
    }

    /// Concrete timestamp for one statement instance. `ivec` supplies the
    /// iterator values outermost-first.
    pub fn instantiate(&self, ivec: &[i64]) -> Result<Vec<i64>> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut next = 0;
        for e in &self.entries {
            match e {
                TsEntry::Pos(p) => out.push(*p),
                TsEntry::Iter(it) => {
                    let v = ivec.get(next).ok_or_else(|| {
                        Error::Codegen(format!(
                            "iteration vector of length {} too short for template of `{}` (needs `{it}`)",
                            ivec.len(),
                            self.stmt
                        ))
                    })?;
                    out.push(*v);
                    next += 1;
                }
            }
        }
        if next != ivec.len() {
            return Err(Error::Codegen(format!(
                "iteration vector of length {} too long for statement `{}` at depth {next}",
                ivec.len(),
                self.stmt
            )));
        }
        Ok(out)
    }
}

impl fmt::Display for TimestampTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<")?;
        for (i, e) in self.entries.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            match e {
                TsEntry::Pos(p) => write!(f, "{p}")?,
                TsEntry::Iter(it) => write!(f, "{it}")?,
            }
        }
        write!(f, ">")
    }
}

/// Derives the template of every statement from the loop-nest structure:
/// sibling items at each nesting level are numbered in textual order, and a
/// statement's template interleaves those positions with the enclosing
/// iterators. Every template has length `2 * depth + 1`.
pub fn timestamp_templates(kernel: &Kernel) -> BTreeMap<Name, TimestampTemplate> {
    fn walk(items: &[Item], prefix: &[TsEntry], out: &mut BTreeMap<Name, TimestampTemplate>) {
        for (pos, item) in items.iter().enumerate() {
            let mut entries = prefix.to_vec();
            entries.push(TsEntry::Pos(pos as i64));
            match item {
                Item::Stmt(s) => {
                    out.insert(
                        s.id.clone(),
                        TimestampTemplate {
                            stmt: s.id.clone(),
                            entries,
                        },
                    );
                }
                Item::Loop(l) => {
                    entries.push(TsEntry::Iter(l.iterator.clone()));
                    walk(&l.body, &entries, out);
                }
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(&kernel.body, &[], &mut out);
    out
}

/// Total lexicographic order on instantiated timestamps. Shared prefixes are
/// compared elementwise; within one kernel two distinct instances always
/// differ at some shared position, so the length tie-break never decides
/// between real schedule points.
pub fn lex_cmp(a: &[i64], b: &[i64]) -> Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.cmp(y) {
            Ordering::Equal => continue,
            other => return other,
        }
    }
    a.len().cmp(&b.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{name, parse_kernel, Builtin};

    fn template_str(k: &Kernel, id: &str) -> String {
        timestamp_templates(k)[&name(id)].to_string()
    }

    #[test]
    fn cholesky_templates_match_structural_derivation() {
        let k = Builtin::Cholesky.kernel();
        // Full 2d+1 forms; the single top-level loop contributes the leading 0.
        assert_eq!(template_str(&k, "S1"), "<0,i,0,j,0,k,0>");
        assert_eq!(template_str(&k, "S2"), "<0,i,0,j,1>");
        // The l-loop nests under i, so S3 carries `i`, not `j`.
        assert_eq!(template_str(&k, "S3"), "<0,i,1,l,0>");
        assert_eq!(template_str(&k, "S4"), "<0,i,2>");
    }

    #[test]
    fn template_length_is_two_depth_plus_one() {
        let k = Builtin::Cholesky.kernel();
        let templates = timestamp_templates(&k);
        for ctx in k.statement_contexts() {
            let t = &templates[&ctx.stmt.id];
            assert_eq!(t.entries.len(), 2 * ctx.depth() + 1, "{}", ctx.stmt.id);
            assert_eq!(t.depth(), ctx.depth());
        }
    }

    #[test]
    fn top_level_statement_gets_position_zero() {
        let k = parse_kernel(
            "kernel t(n) { array A[n] inout; for i in 0..n { S: A[i] = sqrt(A[i]); } }",
        )
        .unwrap();
        assert_eq!(template_str(&k, "S"), "<0,i,0>");
    }

    #[test]
    fn instantiation_and_order_match_the_worked_cholesky_prefix() {
        let k = Builtin::Cholesky.kernel();
        let templates = timestamp_templates(&k);
        let s4 = &templates[&name("S4")];
        let s2 = &templates[&name("S2")];
        let s3 = &templates[&name("S3")];
        let t_s4_0 = s4.instantiate(&[0]).unwrap();
        let t_s4_3 = s4.instantiate(&[3]).unwrap();
        let t_s2_32 = s2.instantiate(&[3, 2]).unwrap();
        let t_s3_32 = s3.instantiate(&[3, 2]).unwrap();
        assert_eq!(t_s2_32, vec![0, 3, 0, 2, 1]);
        assert_eq!(lex_cmp(&t_s4_0, &t_s2_32), Ordering::Less);
        assert_eq!(lex_cmp(&t_s2_32, &t_s3_32), Ordering::Less);
        assert_eq!(lex_cmp(&t_s3_32, &t_s4_3), Ordering::Less);
    }

    #[test]
    fn instantiate_rejects_wrong_arity() {
        let k = Builtin::Cholesky.kernel();
        let templates = timestamp_templates(&k);
        let s4 = &templates[&name("S4")];
        assert!(s4.instantiate(&[]).is_err());
        assert!(s4.instantiate(&[1, 2]).is_err());
    }

    #[test]
    fn distinct_statements_decide_at_a_static_position() {
        // Two siblings at the same depth share loop counters; the trailing
        // static position must decide the order.
        let k = parse_kernel(
            "kernel two(n) {
                array A[n] inout;
                for i in 0..n {
                    Sa: A[i] = A[i] + A[i];
                    Sb: A[i] = A[i] + A[i];
                }
            }",
        )
        .unwrap();
        let templates = timestamp_templates(&k);
        let a = templates[&name("Sa")].instantiate(&[7]).unwrap();
        let b = templates[&name("Sb")].instantiate(&[7]).unwrap();
        assert_eq!(lex_cmp(&a, &b), Ordering::Less);
        assert_ne!(a, b);
    }
}
