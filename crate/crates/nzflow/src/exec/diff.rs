//! Differential verification: the dense execution and the piecewise program
//! must agree exactly on the predicted structure, and the dense execution
//! must stay exactly zero outside it.

use super::{count_structure_leaks, dense_execute, piecewise_execute, synth_values, ValueModel};
use crate::adg::build_adg;
use crate::analysis::{run_analysis, AnalysisResult};
use crate::codegen::{build_program, PiecewiseProgram};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, Name, ParamBindings, Role};
use crate::sparsity::{scatter_dense, EssentialSet};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;

#[derive(Debug, Clone)]
pub struct DiffConfig {
    pub trials: usize,
    pub seed: u64,
    /// 0.0 demands bitwise-equal doubles; the piecewise program performs the
    /// identical operations in the identical order as the dense essential
    /// subset, so any deviation is a pipeline bug rather than float noise.
    pub tolerance: f64,
    pub model: ValueModel,
    /// Drops one fill-in element from the predicted structure before code
    /// generation; the checker must then report the corruption.
    pub inject_fault: bool,
}

impl Default for DiffConfig {
    fn default() -> Self {
        DiffConfig {
            trials: 100,
            seed: 0,
            tolerance: 0.0,
            model: ValueModel::Uniform,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DiffReport {
    pub trials: usize,
    pub tolerance: f64,
    /// Largest |dense - piecewise| over essential indices of written arrays.
    pub max_abs_error: f64,
    /// Nonzero dense outputs observed outside the predicted structure.
    pub leaks: usize,
    /// Value disagreements beyond tolerance.
    pub mismatches: usize,
    pub pass: bool,
}

impl fmt::Display for DiffReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "differential check: {}",
            if self.pass { "PASS" } else { "FAIL" }
        )?;
        writeln!(f, "  trials:        {}", self.trials)?;
        writeln!(f, "  leaks:         {}", self.leaks)?;
        writeln!(f, "  mismatches:    {}", self.mismatches)?;
        writeln!(f, "  max abs error: {:e}", self.max_abs_error)?;
        write!(f, "  tolerance:     {:e}", self.tolerance)
    }
}

/// Pipeline products reused across trials.
pub struct DiffPipeline {
    pub analysis: AnalysisResult,
    pub program: PiecewiseProgram,
}

pub fn prepare_pipeline(
    kernel: &Kernel,
    d0: &EssentialSet,
    params: &ParamBindings,
    inject_fault: bool,
) -> Result<DiffPipeline> {
    let adg = build_adg(kernel);
    let mut analysis = run_analysis(kernel, &adg, d0, params)?;
    if inject_fault {
        corrupt_analysis(kernel, params, &mut analysis)?;
    }
    let program = build_program(kernel, &analysis, params)?;
    Ok(DiffPipeline { analysis, program })
}

/// Simulates an unsound analysis: forgets one predicted fill-in (falling back
/// to one final-structure element of a written array) and drops every
/// essential instance that touches a now-missing index, keeping the corrupted
/// result internally consistent so code generation succeeds and the checker
/// has to catch the damage at run time.
fn corrupt_analysis(
    kernel: &Kernel,
    params: &ParamBindings,
    analysis: &mut AnalysisResult,
) -> Result<()> {
    let victim = analysis
        .afill
        .iter()
        .last()
        .or_else(|| {
            kernel
                .arrays
                .iter()
                .filter(|a| a.role.is_written())
                .flat_map(|a| analysis.dfinal.restrict(&a.name).iter().collect::<Vec<_>>())
                .last()
        })
        .ok_or_else(|| {
            Error::Exec("fault injection needs a nonempty predicted structure".into())
        })?;
    analysis.dfinal = analysis.dfinal.difference(&[victim].into_iter().collect());

    let contexts: BTreeMap<Name, _> = kernel
        .statement_contexts()
        .into_iter()
        .map(|c| (c.stmt.id.clone(), c))
        .collect();
    let mut kept = std::collections::BTreeSet::new();
    for (stmt, ivec) in &analysis.essential_iters {
        let ctx = &contexts[stmt];
        let env = ctx.instance_env(params, ivec);
        let refs = crate::codegen::StmtRecipe::slot_refs(kernel, stmt)?;
        let mut ok = true;
        for r in refs {
            let coords = r.coords(&env)?;
            if !analysis.dfinal.contains(&r.array, &coords) {
                ok = false;
                break;
            }
        }
        if ok {
            kept.insert((stmt.clone(), ivec.clone()));
        }
    }
    analysis.essential_iters = kept;
    Ok(())
}

/// Runs `trials` randomized executions of both executors and aggregates the
/// comparison. Fixed seed implies an identical report.
pub fn differential_check(
    kernel: &Kernel,
    d0: &EssentialSet,
    params: &ParamBindings,
    cfg: &DiffConfig,
) -> Result<DiffReport> {
    let pipeline = prepare_pipeline(kernel, d0, params, cfg.inject_fault)?;
    differential_check_prepared(kernel, d0, params, cfg, &pipeline)
}

pub fn differential_check_prepared(
    kernel: &Kernel,
    d0: &EssentialSet,
    params: &ParamBindings,
    cfg: &DiffConfig,
    pipeline: &DiffPipeline,
) -> Result<DiffReport> {
    let analysis = &pipeline.analysis;
    let program = &pipeline.program;
    let mut leaks = 0usize;
    let mut mismatches = 0usize;
    let mut max_abs_error = 0.0f64;

    for trial in 0..cfg.trials {
        let input = synth_values(kernel, d0, params, cfg.seed, trial as u64, cfg.model)?;

        // dense reference run
        let dense_out = dense_execute(kernel, input.clone(), params)?;
        leaks += count_structure_leaks(kernel, &dense_out, &analysis.dfinal);

        // piecewise run on scattered inputs
        let mut values: BTreeMap<Name, Vec<f64>> = BTreeMap::new();
        for decl in &kernel.arrays {
            let layout = &program.layouts[&decl.name];
            let va = if decl.role == Role::Output {
                vec![0.0; layout.nnz()]
            } else {
                scatter_dense(&input.tensors[&decl.name], layout)?.values
            };
            values.insert(decl.name.clone(), va);
        }
        piecewise_execute(program, &mut values)?;

        // compare on the predicted structure of written arrays
        for decl in &kernel.arrays {
            if !decl.role.is_written() {
                continue;
            }
            let layout = &program.layouts[&decl.name];
            let dense_tensor = &dense_out.tensors[&decl.name];
            let vals = &values[&decl.name];
            for (coords, pos) in layout.entries() {
                let a = dense_tensor.get(coords)?;
                let b = vals[pos];
                if a == b {
                    continue;
                }
                let err = (a - b).abs();
                let rel = err / a.abs().max(1.0);
                max_abs_error = max_abs_error.max(err);
                if !(err <= cfg.tolerance || rel <= cfg.tolerance) {
                    mismatches += 1;
                }
            }
        }
    }

    Ok(DiffReport {
        trials: cfg.trials,
        tolerance: cfg.tolerance,
        max_abs_error,
        leaks,
        mismatches,
        pass: leaks == 0 && mismatches == 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{name, parse_kernel, Builtin};
    use crate::sparsity::DataIndex;

    fn di(a: &str, c: &[i64]) -> DataIndex {
        DataIndex::new(name(a), c.to_vec())
    }

    fn bind(pairs: &[(&str, i64)]) -> ParamBindings {
        pairs.iter().map(|(k, v)| (name(k), *v)).collect()
    }

    #[test]
    fn spmspv_worked_structure_passes_bitwise() {
        let k = Builtin::Spmspv.kernel();
        let d0: EssentialSet = [
            di("A", &[0, 0]),
            di("A", &[0, 2]),
            di("A", &[1, 1]),
            di("A", &[2, 1]),
            di("A", &[3, 1]),
            di("A", &[3, 3]),
            di("X", &[1]),
            di("X", &[3]),
        ]
        .into_iter()
        .collect();
        let params = bind(&[("m", 4), ("n", 4)]);
        let cfg = DiffConfig {
            trials: 100,
            seed: 7,
            ..DiffConfig::default()
        };
        let report = differential_check(&k, &d0, &params, &cfg).unwrap();
        assert!(report.pass, "{report}");
        assert_eq!(report.leaks, 0);
        assert_eq!(report.max_abs_error, 0.0);
    }

    #[test]
    fn diagonal_cholesky_passes_bitwise() {
        let k = Builtin::Cholesky.kernel();
        let d0: EssentialSet = (0..16).map(|i| di("A", &[i, i])).collect();
        let params = bind(&[("n", 16)]);
        let cfg = DiffConfig {
            trials: 100,
            seed: 3,
            model: ValueModel::SpdPattern,
            ..DiffConfig::default()
        };
        let report = differential_check(&k, &d0, &params, &cfg).unwrap();
        assert!(report.pass, "{report}");
    }

    #[test]
    fn cancellation_kernel_still_passes() {
        // Y[i] = X[i] - X[i] is concretely zero everywhere although the
        // abstraction marks the indices essential: zero at an essential index
        // is fine, only the reverse direction is a failure.
        let k = parse_kernel(
            "kernel cancel(n) {
                array X[n] input;
                array Y[n] output;
                for i in 0..n {
                    S: Y[i] = X[i] - X[i];
                }
            }",
        )
        .unwrap();
        let d0: EssentialSet = (0..4).map(|i| di("X", &[i])).collect();
        let params = bind(&[("n", 4)]);
        let cfg = DiffConfig {
            trials: 20,
            seed: 1,
            ..DiffConfig::default()
        };
        let report = differential_check(&k, &d0, &params, &cfg).unwrap();
        assert!(report.pass, "{report}");
    }

    #[test]
    fn injected_fault_is_caught() {
        let k = Builtin::Spmspv.kernel();
        let d0: EssentialSet = [di("A", &[1, 1]), di("A", &[2, 1]), di("X", &[1])]
            .into_iter()
            .collect();
        let params = bind(&[("m", 3), ("n", 3)]);
        let cfg = DiffConfig {
            trials: 5,
            seed: 9,
            inject_fault: true,
            ..DiffConfig::default()
        };
        let report = differential_check(&k, &d0, &params, &cfg).unwrap();
        assert!(!report.pass);
        assert!(report.leaks > 0, "{report}");
    }

    #[test]
    fn overwriting_kernels_agree_after_rewrite_completion() {
        // the copy overwrites stored values with zeros where B is empty; the
        // generated program must reproduce the kills bitwise
        let k = parse_kernel(
            "kernel copy(n) {
                array B[n] input;
                array A[n] inout;
                for i in 0..n {
                    S: A[i] = B[i];
                }
            }",
        )
        .unwrap();
        let d0: EssentialSet = [di("A", &[1]), di("A", &[2]), di("B", &[2]), di("B", &[5])]
            .into_iter()
            .collect();
        let params = bind(&[("n", 8)]);
        let cfg = DiffConfig {
            trials: 20,
            seed: 13,
            ..DiffConfig::default()
        };
        let report = differential_check(&k, &d0, &params, &cfg).unwrap();
        assert!(report.pass, "{report}");
        assert_eq!(report.max_abs_error, 0.0);
    }

    #[test]
    fn zero_trials_is_a_vacuous_pass() {
        let k = Builtin::Spmv.kernel();
        let d0: EssentialSet = [di("A", &[0, 0]), di("X", &[0])].into_iter().collect();
        let params = bind(&[("n", 1)]);
        let cfg = DiffConfig {
            trials: 0,
            ..DiffConfig::default()
        };
        let report = differential_check(&k, &d0, &params, &cfg).unwrap();
        assert!(report.pass);
        assert_eq!(report.trials, 0);
    }

    #[test]
    fn seeded_reports_are_identical() {
        let k = Builtin::Spmspv.kernel();
        let d0: EssentialSet = [
            di("A", &[0, 0]),
            di("A", &[1, 1]),
            di("X", &[0]),
            di("X", &[1]),
        ]
        .into_iter()
        .collect();
        let params = bind(&[("m", 2), ("n", 2)]);
        let cfg = DiffConfig {
            trials: 10,
            seed: 42,
            ..DiffConfig::default()
        };
        let a = differential_check(&k, &d0, &params, &cfg).unwrap();
        let b = differential_check(&k, &d0, &params, &cfg).unwrap();
        assert_eq!(format!("{a}"), format!("{b}"));
    }
}
