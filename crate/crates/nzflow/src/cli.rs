//! Command-line front end: `analyze`, `codegen`, `verify` and `stats`
//! subcommands over the library pipeline. Reports and emitted code are
//! byte-deterministic for a fixed configuration and seed.

use crate::adg::{build_adg, Adg};
use crate::analysis::{run_analysis_limited, AnalysisResult};
use crate::codegen::{
    build_program, code_stats, emit_c, execution_trace, memory_trace, CodeStats, PiecewiseProgram,
    StmtRecipe,
};
use crate::error::{Error, Result};
use crate::exec::{differential_check, DiffConfig, ValueModel};
use crate::kernel::{
    complete_builtin_bindings, parse_kernel, AffineExpr, Builtin, Expr, Item, Kernel, Name,
    ParamBindings, Role, UnaryOp,
};
use crate::sparsity::{
    load_index_list, load_matrix_market, synth_vector, EssentialSet, LoadedStructure, SynthSpec,
};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

pub const DEFAULT_MAX_ESSENTIAL: usize = 5_000_000;

#[derive(Debug, Parser)]
#[command(
    name = "nzflow",
    about = "sparsity-structure-specific kernel compiler",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the essential-indices analysis and report the predicted structure.
    Analyze(CommonArgs),
    /// Generate specialized C code plus structural statistics.
    Codegen(CommonArgs),
    /// Differentially verify the pipeline against the dense interpreter.
    Verify(VerifyArgs),
    /// Print structural statistics without emitting code.
    Stats(CommonArgs),
}

#[derive(Debug, Args, Clone)]
pub struct CommonArgs {
    /// Builtin kernel name (spmv, spmspv, cholesky) or a path to a `.spk` file.
    #[arg(long)]
    pub kernel: String,

    /// Bind an input array: NAME=PATH (`.mtx` matrix market or `.idx` index list).
    #[arg(long = "bind", value_name = "NAME=PATH")]
    pub bind: Vec<String>,

    /// Synthesize an input vector structure: NAME=SPEC, e.g. X=density=0.1,mode=prefix.
    #[arg(long = "synth", value_name = "NAME=SPEC")]
    pub synth: Vec<String>,

    /// Output directory for reports and generated code.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Seed for synthesized structures and verification trials.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Include full listings (fill-ins, final structure, instances) in reports.
    #[arg(long, default_value_t = false)]
    pub full: bool,

    /// Dump the execution and memory access traces.
    #[arg(long = "dump-trace", default_value_t = false)]
    pub dump_trace: bool,

    /// Cap on the number of essential statement instances.
    #[arg(long = "max-essential", default_value_t = DEFAULT_MAX_ESSENTIAL)]
    pub max_essential: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,

    /// Number of randomized trials.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,

    /// Corrupt the predicted structure on purpose; the check must then fail.
    #[arg(long = "inject-fault", default_value_t = false)]
    pub inject_fault: bool,
}

/// Resolved run configuration: kernel, bindings and initial structures.
#[derive(Debug)]
pub struct RunConfig {
    pub kernel: Kernel,
    pub params: ParamBindings,
    pub d0: EssentialSet,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub full: bool,
    pub dump_trace: bool,
    pub max_essential: usize,
}

fn split_kv(raw: &str, what: &str) -> Result<(String, String)> {
    raw.split_once('=')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .ok_or_else(|| Error::Usage(format!("{what} expects NAME=VALUE, got `{raw}`")))
}

fn resolve_kernel(spec: &str) -> Result<Kernel> {
    if let Some(builtin) = Builtin::from_name(spec) {
        return Ok(builtin.kernel());
    }
    let path = Path::new(spec);
    if path.extension().is_some_and(|e| e == "spk") || path.exists() {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Usage(format!("cannot read kernel `{spec}`: {e}")))?;
        return parse_kernel(&text);
    }
    Err(Error::Usage(format!(
        "unknown kernel `{spec}`: expected spmv, spmspv, cholesky or a .spk path"
    )))
}

/// Unifies a declared affine dimension with a concrete loaded extent,
/// binding parameters where the form allows it.
fn unify_dim(expr: &AffineExpr, value: i64, params: &mut ParamBindings) -> Result<()> {
    // single-variable affine: coeff * v + rest = value
    let vars: Vec<Name> = expr.variables().cloned().collect();
    let unresolved: Vec<&Name> = vars.iter().filter(|v| !params.contains_key(*v)).collect();
    match unresolved.len() {
        0 => {
            let got = expr.eval(params)?;
            if got != value {
                return Err(Error::Usage(format!(
                    "declared dimension `{expr}` = {got} does not match loaded extent {value}"
                )));
            }
            Ok(())
        }
        1 => {
            let v = unresolved[0].clone();
            let coeff = expr
                .terms()
                .find(|(n, _)| **n == v)
                .map(|(_, c)| c)
                .unwrap();
            let mut rest = params.clone();
            rest.insert(v.clone(), 0);
            let base = expr.eval(&rest)?;
            let need = value - base;
            if need % coeff != 0 {
                return Err(Error::Usage(format!(
                    "cannot solve `{expr}` = {value} for `{v}`"
                )));
            }
            params.insert(v, need / coeff);
            Ok(())
        }
        _ => Err(Error::Usage(format!(
            "dimension `{expr}` has several unresolved parameters; bind a matrix that pins them"
        ))),
    }
}

enum PendingBinding {
    Loaded(LoadedStructure),
    IndexList(PathBuf),
    Synth(SynthSpec),
}

/// Builds the resolved configuration: loads matrix bindings first (they pin
/// size parameters), then index lists and synthesized vectors against the
/// resolved sizes.
pub fn resolve_config(args: &CommonArgs) -> Result<RunConfig> {
    let kernel = resolve_kernel(&args.kernel)?;
    let mut pending: BTreeMap<Name, PendingBinding> = BTreeMap::new();

    for raw in &args.bind {
        let (array, path) = split_kv(raw, "--bind")?;
        let decl = kernel
            .array(&array)
            .ok_or_else(|| Error::Usage(format!("--bind {array}: kernel has no such array")))?;
        if decl.role == Role::Output {
            return Err(Error::Usage(format!(
                "--bind {array}: output arrays take no structure binding; the analysis derives it"
            )));
        }
        let path = PathBuf::from(path);
        let binding = match path.extension().and_then(|e| e.to_str()) {
            Some("mtx") => {
                let (_, structure) = load_matrix_market(&path)?;
                PendingBinding::Loaded(structure)
            }
            Some("idx") => PendingBinding::IndexList(path),
            other => {
                return Err(Error::Usage(format!(
                    "--bind {array}: unsupported file extension {other:?} (use .mtx or .idx)"
                )))
            }
        };
        pending.insert(crate::kernel::name(&array), binding);
    }
    for raw in &args.synth {
        let (array, spec) = split_kv(raw, "--synth")?;
        let decl = kernel
            .array(&array)
            .ok_or_else(|| Error::Usage(format!("--synth {array}: kernel has no such array")))?;
        if decl.dims.len() != 1 {
            return Err(Error::Usage(format!(
                "--synth {array}: only 1-D arrays can be synthesized"
            )));
        }
        if decl.role == Role::Output {
            return Err(Error::Usage(format!(
                "--synth {array}: output arrays take no structure binding"
            )));
        }
        pending.insert(
            crate::kernel::name(&array),
            PendingBinding::Synth(SynthSpec::parse(&spec)?),
        );
    }

    // every input/inout array needs a structure source
    for decl in &kernel.arrays {
        if decl.role != Role::Output && !pending.contains_key(&decl.name) {
            return Err(Error::Usage(format!(
                "array `{}` ({}) has no structure binding; pass --bind {}=PATH or --synth",
                decl.name,
                decl.role.keyword(),
                decl.name
            )));
        }
    }

    // parameter inference from loaded extents, possibly over several passes
    // (a vector bound by .idx gets its length from matrix-pinned parameters)
    let mut params = ParamBindings::new();
    for (array, binding) in &pending {
        if let PendingBinding::Loaded(s) = binding {
            let decl = kernel.array(array).expect("checked above");
            let loaded_dims = adapt_dims(&s.dims, decl.dims.len(), array)?;
            for (expr, value) in decl.dims.iter().zip(loaded_dims) {
                unify_dim(expr, value, &mut params)?;
            }
        }
    }
    if let Some(builtin) = Builtin::from_name(&kernel.name) {
        params = complete_builtin_bindings(builtin, &params)?;
    }
    for p in &kernel.params {
        if !params.contains_key(p) {
            return Err(Error::Usage(format!(
                "size parameter `{p}` is not determined by any binding"
            )));
        }
    }

    // materialize structures
    let mut d0 = EssentialSet::new();
    for (array, binding) in pending {
        let decl = kernel.array(&array).expect("checked above");
        let dims = kernel.array_dims(decl, &params)?;
        let structure = match binding {
            PendingBinding::Loaded(s) => s,
            PendingBinding::IndexList(path) => load_index_list(&path, dims[0])?,
            PendingBinding::Synth(spec) => synth_vector(dims[0], &spec, args.seed)?,
        };
        let loaded_dims = adapt_dims(&structure.dims, dims.len(), &array)?;
        if loaded_dims != dims {
            return Err(Error::Usage(format!(
                "array `{array}`: loaded extent {loaded_dims:?} does not match declared {dims:?}"
            )));
        }
        let set = adapt_structure(&structure, &array, dims.len());
        d0.union_with(&set);
        d0.check_bounds(&array, &dims)?;
    }

    Ok(RunConfig {
        kernel,
        params,
        d0,
        out_dir: args.out.clone(),
        seed: args.seed,
        full: args.full,
        dump_trace: args.dump_trace,
        max_essential: args.max_essential,
    })
}

/// A 1-column or 1-row matrix market file may bind a 1-D array.
fn adapt_dims(loaded: &[i64], declared_rank: usize, array: &str) -> Result<Vec<i64>> {
    if loaded.len() == declared_rank {
        return Ok(loaded.to_vec());
    }
    if declared_rank == 1 && loaded.len() == 2 {
        if loaded[1] == 1 {
            return Ok(vec![loaded[0]]);
        }
        if loaded[0] == 1 {
            return Ok(vec![loaded[1]]);
        }
    }
    Err(Error::Usage(format!(
        "array `{array}` is {declared_rank}-dimensional but the file has extent {loaded:?}"
    )))
}

fn adapt_structure(s: &LoadedStructure, array: &str, declared_rank: usize) -> EssentialSet {
    let name = crate::kernel::name(array);
    let mut set = EssentialSet::new();
    for coords in s.set.keys() {
        let c = if coords.len() == declared_rank {
            coords.clone()
        } else if declared_rank == 1 && coords.len() == 2 {
            // 1-column (or 1-row) file flattened to a vector
            if s.dims[1] == 1 {
                vec![coords[0]]
            } else {
                vec![coords[1]]
            }
        } else {
            coords.clone()
        };
        set.insert_coords(&name, c);
    }
    set
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AnalysisDump {
    kernel: String,
    params: BTreeMap<String, i64>,
    adg_nodes: usize,
    adg_edges: usize,
    adg_depth: Option<usize>,
    d0_len: usize,
    afill_len: usize,
    dfinal_len: usize,
    instances: usize,
    sweeps: usize,
    per_statement_instances: BTreeMap<String, usize>,
    per_statement_rewrites: BTreeMap<String, usize>,
    afill: Vec<(String, Vec<i64>)>,
    dfinal: Vec<(String, Vec<i64>)>,
    essential_iters: Vec<(String, Vec<i64>)>,
}

fn dump_of(config: &RunConfig, adg: &Adg, result: &AnalysisResult) -> Result<AnalysisDump> {
    Ok(AnalysisDump {
        kernel: config.kernel.name.to_string(),
        params: config
            .params
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
        adg_nodes: adg.nodes.len(),
        adg_edges: adg.edges.len(),
        adg_depth: adg.depth().ok(),
        d0_len: result.d0.len(),
        afill_len: result.afill.len(),
        dfinal_len: result.dfinal.len(),
        instances: result.instance_count(),
        sweeps: result.sweeps,
        per_statement_instances: result
            .ainds
            .iter()
            .map(|(k, v)| (k.to_string(), v.len()))
            .collect(),
        per_statement_rewrites: result
            .rewrite_iters
            .iter()
            .map(|(k, v)| (k.to_string(), v.len()))
            .collect(),
        afill: result
            .afill
            .iter()
            .map(|d| (d.array.to_string(), d.coords))
            .collect(),
        dfinal: result
            .dfinal
            .iter()
            .map(|d| (d.array.to_string(), d.coords))
            .collect(),
        essential_iters: result
            .essential_iters
            .iter()
            .map(|(s, v)| (s.to_string(), v.clone()))
            .collect(),
    })
}

fn analysis_report(config: &RunConfig, adg: &Adg, result: &AnalysisResult) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "kernel: {}", config.kernel.name);
    let param_str = config
        .params
        .iter()
        .map(|(k, v)| format!("{k} = {v}"))
        .collect::<Vec<_>>()
        .join(", ");
    let _ = writeln!(out, "parameters: {param_str}");
    for decl in &config.kernel.arrays {
        let dims = config.kernel.array_dims(decl, &config.params)?;
        let dim_str = dims.iter().map(|d| format!("[{d}]")).collect::<String>();
        let _ = writeln!(
            out,
            "array {}{dim_str} {}: d0 {} -> final {}",
            decl.name,
            decl.role.keyword(),
            result.d0.array_len(&decl.name),
            result.dfinal.array_len(&decl.name)
        );
    }
    let depth = adg
        .depth()
        .map(|d| d.to_string())
        .unwrap_or_else(|_| "n/a".into());
    let _ = writeln!(
        out,
        "adg: {} nodes, {} edges, depth {depth}",
        adg.nodes.len(),
        adg.edges.len()
    );
    let _ = writeln!(out, "sweeps to fixed point: {}", result.sweeps);
    let _ = writeln!(out, "d0 size: {}", result.d0.len());
    let _ = writeln!(out, "fill-ins: {}", result.afill.len());
    let _ = writeln!(out, "final structure size: {}", result.dfinal.len());
    let _ = writeln!(out, "essential instances: {}", result.instance_count());
    for (stmt, ivecs) in &result.ainds {
        let rewrites = result.rewrite_iters.get(stmt).map(|r| r.len()).unwrap_or(0);
        if rewrites > 0 {
            let _ = writeln!(out, "  {stmt}: {} (+{rewrites} rewrites)", ivecs.len());
        } else {
            let _ = writeln!(out, "  {stmt}: {}", ivecs.len());
        }
    }
    for (stmt, ivecs) in &result.rewrite_iters {
        if !result.ainds.contains_key(stmt) {
            let _ = writeln!(out, "  {stmt}: 0 (+{} rewrites)", ivecs.len());
        }
    }
    if config.full {
        let _ = writeln!(out, "fill-in listing:");
        for d in result.afill.iter() {
            let _ = writeln!(out, "  {d}");
        }
        let _ = writeln!(out, "final structure listing:");
        for d in result.dfinal.iter() {
            let _ = writeln!(out, "  {d}");
        }
        let _ = writeln!(out, "essential instance listing:");
        for (stmt, ivec) in &result.essential_iters {
            let ivec_str = ivec
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",");
            let _ = writeln!(out, "  <{stmt},{ivec_str}>");
        }
    }
    Ok(out)
}

/// Execution/memory trace dump in a four-column layout: timestamp, instance,
/// dense accesses, sparse accesses.
fn trace_dump(
    config: &RunConfig,
    result: &AnalysisResult,
    program: &PiecewiseProgram,
) -> Result<String> {
    let kernel = &config.kernel;
    let trace = execution_trace(kernel, result)?;
    let mtrace = memory_trace(kernel, &trace, &program.layouts, &config.params)?;
    let contexts: BTreeMap<Name, _> = kernel
        .statement_contexts()
        .into_iter()
        .map(|c| (c.stmt.id.clone(), c))
        .collect();
    let mut out = String::new();
    for (entry, ap) in trace.iter().zip(&mtrace) {
        let ts = entry
            .timestamp
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let ivec = entry
            .ivec
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let ctx = &contexts[&entry.stmt];
        let env = ctx.instance_env(&config.params, &entry.ivec);
        let refs = StmtRecipe::slot_refs(kernel, &entry.stmt)?;
        let dense = refs
            .iter()
            .map(|r| {
                let coords = r.coords(&env)?;
                Ok(format!(
                    "<{},{}>",
                    r.array,
                    coords
                        .iter()
                        .map(|c| c.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                ))
            })
            .collect::<Result<Vec<_>>>()?
            .join(",");
        let sparse = ap
            .slots
            .iter()
            .map(|(a, p)| match p.pos() {
                Some(p) => format!("<val{a},{p}>"),
                None => "<zero>".to_string(),
            })
            .collect::<Vec<_>>()
            .join(",");
        let _ = writeln!(
            out,
            "<{ts}> | <{},{ivec}> | <{},{dense}> | <{},{sparse}>",
            entry.stmt, entry.stmt, entry.stmt
        );
    }
    Ok(out)
}

fn stats_report(stats: &CodeStats, program: &PiecewiseProgram) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "trace length: {}", stats.trace_len);
    let _ = writeln!(out, "regular loops: {}", stats.loop_count);
    let _ = writeln!(out, "singletons: {}", stats.singleton_count);
    let _ = writeln!(
        out,
        "structure: {} -> {} elements",
        stats.elem_in, stats.elem_out
    );
    let _ = writeln!(out, "fill-in: {:.2}%", stats.fill_in_pct);
    let _ = writeln!(out, "loop coverage: {:.2}%", stats.loop_coverage_pct);
    if stats.has_loops {
        let _ = writeln!(out, "avg loop size: {:.2}", stats.avg_loop_size);
    } else {
        let _ = writeln!(out, "avg loop size: 0 (no loops generated)");
    }
    let _ = writeln!(out, "program items: {}", program.items.len());
    out
}

fn write_out(dir: &Path, file: &str, content: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(file), content)?;
    Ok(())
}

struct PipelineProducts {
    adg: Adg,
    result: AnalysisResult,
    program: PiecewiseProgram,
}

fn run_pipeline(config: &RunConfig) -> Result<PipelineProducts> {
    let adg = build_adg(&config.kernel);
    let result = run_analysis_limited(
        &config.kernel,
        &adg,
        &config.d0,
        &config.params,
        Some(config.max_essential),
    )?;
    let program = build_program(&config.kernel, &result, &config.params)?;
    Ok(PipelineProducts {
        adg,
        result,
        program,
    })
}

fn model_for(kernel: &Kernel) -> ValueModel {
    fn expr_has_sqrt(e: &Expr) -> bool {
        match e {
            Expr::Unary(UnaryOp::Sqrt, _) => true,
            Expr::Unary(_, inner) => expr_has_sqrt(inner),
            Expr::Binary(_, a, b) => expr_has_sqrt(a) || expr_has_sqrt(b),
            _ => false,
        }
    }
    fn items_have_sqrt(items: &[Item]) -> bool {
        items.iter().any(|i| match i {
            Item::Stmt(s) => expr_has_sqrt(&s.rhs),
            Item::Loop(l) => items_have_sqrt(&l.body),
        })
    }
    // square-root kernels factorize; keep their trial inputs positive definite
    if items_have_sqrt(&kernel.body) {
        ValueModel::SpdPattern
    } else {
        ValueModel::Uniform
    }
}

pub fn cmd_analyze(config: &RunConfig) -> Result<String> {
    let p = run_pipeline(config)?;
    let report = analysis_report(config, &p.adg, &p.result)?;
    if let Some(dir) = &config.out_dir {
        write_out(dir, "analysis.txt", &report)?;
        let dump = dump_of(config, &p.adg, &p.result)?;
        write_out(dir, "analysis.json", &serde_json::to_string_pretty(&dump)?)?;
        if config.dump_trace {
            write_out(
                dir,
                "trace.txt",
                &trace_dump(config, &p.result, &p.program)?,
            )?;
        }
    }
    Ok(report)
}

pub fn cmd_codegen(config: &RunConfig) -> Result<String> {
    let dir = config
        .out_dir
        .clone()
        .ok_or_else(|| Error::Usage("codegen requires --out DIR".into()))?;
    let p = run_pipeline(config)?;
    let source = emit_c(&p.program);
    let stats = code_stats(&config.kernel, &p.program, &p.result.d0, &p.result.dfinal);
    let report = stats_report(&stats, &p.program);
    write_out(&dir, &format!("kernel_{}.c", config.kernel.name), &source)?;
    write_out(&dir, "stats.txt", &report)?;
    write_out(&dir, "stats.json", &serde_json::to_string_pretty(&stats)?)?;
    if config.dump_trace {
        write_out(
            &dir,
            "trace.txt",
            &trace_dump(config, &p.result, &p.program)?,
        )?;
    }
    Ok(report)
}

pub fn cmd_stats(config: &RunConfig) -> Result<String> {
    let p = run_pipeline(config)?;
    let stats = code_stats(&config.kernel, &p.program, &p.result.d0, &p.result.dfinal);
    let report = stats_report(&stats, &p.program);
    if let Some(dir) = &config.out_dir {
        write_out(dir, "stats.txt", &report)?;
        write_out(dir, "stats.json", &serde_json::to_string_pretty(&stats)?)?;
    }
    Ok(report)
}

/// Returns (report text, pass flag).
pub fn cmd_verify(config: &RunConfig, trials: usize, inject_fault: bool) -> Result<(String, bool)> {
    let cfg = DiffConfig {
        trials,
        seed: config.seed,
        tolerance: 0.0,
        model: model_for(&config.kernel),
        inject_fault,
    };
    let report = differential_check(&config.kernel, &config.d0, &config.params, &cfg)?;
    let mut text = format!("{report}\n");
    if trials == 0 {
        let _ = writeln!(text, "warning: 0 trials requested; the pass is vacuous");
    }
    if let Some(dir) = &config.out_dir {
        write_out(dir, "verify.txt", &text)?;
        write_out(dir, "verify.json", &serde_json::to_string_pretty(&report)?)?;
    }
    Ok((text, report.pass))
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let outcome = match cli.command {
        Command::Analyze(args) => resolve_config(&args)
            .and_then(|c| cmd_analyze(&c))
            .map(|r| (r, true)),
        Command::Codegen(args) => resolve_config(&args)
            .and_then(|c| cmd_codegen(&c))
            .map(|r| (r, true)),
        Command::Stats(args) => resolve_config(&args)
            .and_then(|c| cmd_stats(&c))
            .map(|r| (r, true)),
        Command::Verify(args) => resolve_config(&args.common)
            .and_then(|c| cmd_verify(&c, args.trials, args.inject_fault)),
    };
    match outcome {
        Ok((report, pass)) => {
            print!("{report}");
            if pass {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Usage(_) => 2,
                _ => 1,
            }
        }
    }
}
