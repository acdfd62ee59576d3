//! `statslice`: file-based driver for the statistical slicing pipeline.
//!
//! Clients `run` a program and leave branch traces and sampled dependence
//! files behind, `merge` folds any number of those into one observed
//! dependency graph, and `slice` turns the graph plus one faulty branch trace
//! into a slice. `oracle`, `gen` and `eval` cover the reference slicers and
//! the experiment harness.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use statslice::eval::{evaluate_corpus, generate_corpus, write_cdf_csv, write_table_csv, GenParams, HarnessConfig};
use statslice::interp::execute;
use statslice::ir::{parse_program, Program, StmtId};
use statslice::odg::ObservedDependencyGraph;
use statslice::par::Parallelism;
use statslice::pipeline::slice_run;
use statslice::slicer::{dynamic_slice, static_slice, ProgramFacts, SliceReport};
use statslice::tracing::{encode_branch_trace, sampled_data_deps, BranchTrace, DepSet, SamplerState, SamplingMode};

#[derive(Parser)]
#[command(
    name = "statslice",
    version,
    about = "Statistical program slicing over sampled dependence traces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a program on inputs, writing a branch trace and a sampled dependence file per run.
    Run(RunArgs),
    /// Fold dependence files (and graphs) into one observed dependency graph.
    Merge(MergeArgs),
    /// Statistical slice of one run from a graph and that run's branch trace.
    Slice(SliceArgs),
    /// Reference dynamic or static slice.
    Oracle(OracleArgs),
    /// Generate a corpus, run its workloads and write metric tables.
    Eval(EvalArgs),
    /// Generate a corpus of programs with injected defects.
    Gen(GenArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OracleMode {
    Dynamic,
    Static,
}

#[derive(Args)]
struct SamplingArgs {
    /// Pin every allocation context to this rate and disable adaptation.
    #[arg(long, conflicts_with = "adaptive")]
    sample_rate: Option<f64>,
    /// Adaptive per-context rates (the default).
    #[arg(long)]
    adaptive: bool,
    #[arg(long, default_value_t = 1)]
    rng_seed: u64,
}

impl SamplingArgs {
    fn mode(&self) -> Result<SamplingMode> {
        match self.sample_rate {
            Some(r) if !(0.0..=1.0).contains(&r) => Err(usage(format!("--sample-rate must lie in [0, 1], got {r}"))),
            Some(r) => Ok(SamplingMode::Fixed(r)),
            None => Ok(SamplingMode::Adaptive),
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, required_unless_present = "manifest")]
    program: Option<PathBuf>,
    /// Comma-separated input vector; repeatable.
    #[arg(long)]
    input: Vec<String>,
    /// JSON array of input vectors, or one vector per line.
    #[arg(long)]
    inputs_file: Option<PathBuf>,
    /// Replay a manifest written by an earlier run.
    #[arg(long, conflicts_with_all = ["program", "input", "inputs_file"])]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Also write the full event trace of every run.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MergeArgs {
    /// Dependence files or graphs; branch traces are accepted and only checked.
    files: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SliceArgs {
    #[arg(long)]
    program: PathBuf,
    #[arg(long)]
    odg: PathBuf,
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    seed_stmt: Option<StmtId>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the JSON report here and the text rendering next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    program: PathBuf,
    /// Comma-separated input vector; ignored in static mode.
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    seed_stmt: Option<StmtId>,
    #[arg(long, value_enum, default_value_t = OracleMode::Dynamic)]
    mode: OracleMode,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusArgs {
    /// Corpus seed.
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 12)]
    max_blocks: usize,
    #[arg(long, default_value_t = 3)]
    max_call_depth: usize,
    #[arg(long, default_value_t = 4)]
    loop_bound: u32,
    #[arg(long, default_value_t = 8)]
    inputs_per_program: usize,
    /// Run everything on one thread.
    #[arg(long)]
    sequential: bool,
}

impl CorpusArgs {
    fn params(&self) -> GenParams {
        GenParams {
            max_blocks: self.max_blocks,
            max_call_depth: self.max_call_depth,
            loop_bound: self.loop_bound,
            inputs_per_program: self.inputs_per_program,
            ..GenParams::default()
        }
    }

    fn par(&self) -> Parallelism {
        if self.sequential {
            Parallelism::Sequential
        } else {
            Parallelism::Auto
        }
    }
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value_t = 50)]
    runs: usize,
    #[command(flatten)]
    sampling: SamplingArgs,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Directory for table.csv and cdf.csv; the table goes to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long)]
    out: PathBuf,
}

/// Bad invocation that clap cannot catch on its own.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RunManifest {
    program: PathBuf,
    digest: String,
    inputs: Vec<Vec<i64>>,
    runs: Vec<RunEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RunEntry {
    run_id: u64,
    input: usize,
    rng_seed: u64,
    mode: SamplingMode,
    branch_trace: PathBuf,
    deps: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    full_trace: Option<PathBuf>,
}

/// Sampled dependencies of one run, with the statements it executed so the
/// file can be folded into a graph on its own.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct DepFile {
    kind: String,
    digest: String,
    run_id: u64,
    executed: BTreeSet<StmtId>,
    deps: DepSet,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Merge(a) => cmd_merge(a),
        Command::Slice(a) => cmd_slice(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Gen(a) => cmd_gen(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_program(path: &Path) -> Result<Program> {
    parse_program(&read(path)?).with_context(|| format!("parsing {}", path.display()))
}

fn parse_input(s: &str) -> Result<Vec<i64>> {
    let body = s.trim().trim_start_matches('[').trim_end_matches(']');
    body.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<i64>()
                .map_err(|e| usage(format!("bad input value `{t}`: {e}")))
        })
        .collect()
}

fn parse_inputs_file(text: &str) -> Result<Vec<Vec<i64>>> {
    if let Ok(all) = serde_json::from_str::<Vec<Vec<i64>>>(text) {
        return Ok(all);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("inputs line {}", i + 1)))
        .collect()
}

/// Emits `text` to `out`, or to stdout when no path is given, newline-terminated.
fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    let text = if text.ends_with('\n') { text.to_string() } else { format!("{text}\n") };
    match out {
        Some(p) => write(p, &text),
        None => Ok(io::stdout().lock().write_all(text.as_bytes())?),
    }
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let manifest = match &a.manifest {
        Some(path) => {
            let m: RunManifest = serde_json::from_str(&read(path)?).context("parsing manifest")?;
            let base = path.parent().unwrap_or(Path::new("."));
            RunManifest {
                program: base.join(&m.program),
                runs: m
                    .runs
                    .into_iter()
                    .map(|r| RunEntry {
                        branch_trace: a.out.join(&r.branch_trace),
                        deps: a.out.join(&r.deps),
                        full_trace: r.full_trace.map(|f| a.out.join(f)),
                        ..r
                    })
                    .collect(),
                ..m
            }
        }
        None => build_manifest(&a)?,
    };
    let program = load_program(&manifest.program)?;
    if program.digest() != manifest.digest {
        bail!(
            "program mismatch: manifest expects {}, {} has {}",
            manifest.digest,
            manifest.program.display(),
            program.digest()
        );
    }
    if manifest.runs.is_empty() {
        return Err(usage("no inputs: give --input or --inputs-file"));
    }

    let first = &manifest.runs[0];
    let mut state = match first.mode {
        SamplingMode::Adaptive => SamplerState::adaptive(first.rng_seed),
        SamplingMode::Fixed(r) => SamplerState::fixed(r, first.rng_seed),
    };
    for r in &manifest.runs {
        let input = manifest
            .inputs
            .get(r.input)
            .ok_or_else(|| anyhow!("run {} refers to missing input {}", r.run_id, r.input))?;
        let trace = execute(&program, input, r.run_id).with_context(|| format!("run {}", r.run_id))?;
        let sampled = sampled_data_deps(&trace, &state);
        state = sampled.state;
        let dep_file = DepFile {
            kind: "deps".into(),
            digest: trace.digest.clone(),
            run_id: r.run_id,
            executed: trace.executed(),
            deps: sampled.deps,
        };
        write(&r.deps, &serde_json::to_string_pretty(&dep_file)?)?;
        write(
            &r.branch_trace,
            &serde_json::to_string_pretty(&encode_branch_trace(&trace))?,
        )?;
        if let Some(path) = &r.full_trace {
            write(path, &trace.to_jsonl())?;
        }
    }
    write(&a.out.join("sampler.json"), &serde_json::to_string_pretty(&state)?)?;
    if a.manifest.is_none() {
        let relative = RunManifest {
            runs: manifest
                .runs
                .iter()
                .map(|r| RunEntry {
                    branch_trace: strip(&r.branch_trace, &a.out),
                    deps: strip(&r.deps, &a.out),
                    full_trace: r.full_trace.as_ref().map(|f| strip(f, &a.out)),
                    ..r.clone()
                })
                .collect(),
            program: fs::canonicalize(&manifest.program).unwrap_or(manifest.program.clone()),
            ..manifest
        };
        write(&a.out.join("manifest.json"), &serde_json::to_string_pretty(&relative)?)?;
    }
    Ok(())
}

fn strip(path: &Path, base: &Path) -> PathBuf {
    path.strip_prefix(base)
        .map(Path::to_path_buf)
        .unwrap_or_else(|_| path.to_path_buf())
}

fn build_manifest(a: &RunArgs) -> Result<RunManifest> {
    let program_path = a.program.clone().expect("clap requires --program without --manifest");
    let program = load_program(&program_path)?;
    let mut inputs = a.input.iter().map(|s| parse_input(s)).collect::<Result<Vec<_>>>()?;
    if let Some(f) = &a.inputs_file {
        inputs.extend(parse_inputs_file(&read(f)?)?);
    }
    let mode = a.sampling.mode()?;
    let runs = (0..inputs.len())
        .map(|i| RunEntry {
            run_id: i as u64,
            input: i,
            rng_seed: a.sampling.rng_seed,
            mode,
            branch_trace: a.out.join(format!("run-{i}.branch.json")),
            deps: a.out.join(format!("run-{i}.deps.json")),
            full_trace: a.oracle.then(|| a.out.join(format!("run-{i}.trace.jsonl"))),
        })
        .collect();
    Ok(RunManifest {
        program: program_path,
        digest: program.digest(),
        inputs,
        runs,
    })
}

fn cmd_merge(a: MergeArgs) -> Result<()> {
    if a.files.is_empty() {
        return Err(usage("no inputs: give dependence files or graphs to merge"));
    }
    let mut dep_files = Vec::new();
    let mut graphs = Vec::new();
    let mut digests = BTreeSet::new();
    for path in &a.files {
        let text = read(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        match value.get("kind").and_then(|k| k.as_str()) {
            Some("deps") => {
                let f: DepFile =
                    serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))?;
                digests.insert(f.digest.clone());
                dep_files.push(f);
            }
            Some("odg") => {
                let g =
                    ObservedDependencyGraph::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
                digests.insert(g.digest.clone());
                graphs.push(g);
            }
            _ if value.get("packets").is_some() => {
                let bt: BranchTrace =
                    serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))?;
                digests.insert(bt.digest);
            }
            // run manifests and sampler states share a directory with the run files
            _ if value.get("runs").is_some() || value.get("rates").is_some() => {}
            _ => bail!("{}: not a dependence file, graph or branch trace", path.display()),
        }
    }
    if digests.len() > 1 {
        bail!(
            "program mismatch: inputs come from {} different programs",
            digests.len()
        );
    }
    if dep_files.is_empty() && graphs.is_empty() {
        return Err(usage("no inputs: only branch traces were given"));
    }
    let digest = digests.into_iter().next().expect("at least one input");

    dep_files.sort_by(|x, y| {
        (x.run_id, serde_json::to_string(&x.deps).ok()).cmp(&(y.run_id, serde_json::to_string(&y.deps).ok()))
    });
    let mut merged = ObservedDependencyGraph::new(digest.clone());
    for f in &dep_files {
        let single = ObservedDependencyGraph::new(digest.clone()).add_run(&f.deps, &f.executed, f.run_id)?;
        merged = merged.merge(&single)?;
    }
    for g in &graphs {
        merged = merged.merge(g)?;
    }
    emit(a.out.as_deref(), &merged.to_json())
}

fn report_out(report: &SliceReport, program: &Program, format: Format, out: Option<&Path>) -> Result<()> {
    let (json, text) = (report.to_json(), report.render_text(program));
    match out {
        Some(path) => {
            emit(Some(path), &json)?;
            emit(Some(&path.with_extension("txt")), &text)
        }
        None => match format {
            Format::Json => emit(None, &json),
            Format::Text => emit(None, &text),
            Format::Csv => Err(usage("slice reports are available as json or text")),
        },
    }
}

fn cmd_slice(a: SliceArgs) -> Result<()> {
    let program = load_program(&a.program)?;
    let g = ObservedDependencyGraph::from_json(&read(&a.odg)?).context("parsing graph")?;
    let bt: BranchTrace = serde_json::from_str(&read(&a.trace)?).context("parsing branch trace")?;
    let facts = ProgramFacts::new(&program);
    let (report, _) = slice_run(&facts, &g, &bt, a.seed_stmt)?;
    report_out(&report, &program, a.format, a.out.as_deref())
}

fn cmd_oracle(a: OracleArgs) -> Result<()> {
    let program = load_program(&a.program)?;
    let facts = ProgramFacts::new(&program);
    let report = match a.mode {
        OracleMode::Static => {
            let seed = a
                .seed_stmt
                .ok_or_else(|| usage("no seed: static mode needs --seed-stmt"))?;
            static_slice(&facts, seed)?
        }
        OracleMode::Dynamic => {
            let input = parse_input(a.input.as_deref().ok_or_else(|| usage("dynamic mode needs --input"))?)?;
            let trace = execute(&program, &input, 0)?;
            let seed = a
                .seed_stmt
                .or_else(|| trace.fault().map(|(s, _)| s))
                .ok_or_else(|| anyhow!("no seed: the run did not fail and no --seed-stmt was given"))?;
            dynamic_slice(&facts, &trace, seed)?
        }
    };
    report_out(&report, &program, a.format, a.out.as_deref())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    let cfg = HarnessConfig {
        seed: a.corpus.seed,
        n_programs: a.corpus.n,
        runs_per_program: a.runs,
        sampling: a.sampling.mode()?,
        rng_seed: a.sampling.rng_seed,
        gen: a.corpus.params(),
        par: a.corpus.par(),
    };
    let result = evaluate_corpus(&cfg)?;
    let mut table = Vec::new();
    let mut cdf = Vec::new();
    match a.format {
        Format::Csv => {
            write_table_csv(&result.rows(), &mut table)?;
            write_cdf_csv(&result.cdf_rows(), &mut cdf)?;
        }
        Format::Json => {
            table = serde_json::to_vec_pretty(&result.rows())?;
            cdf = serde_json::to_vec_pretty(&result.cdf_rows())?;
        }
        Format::Text => return Err(usage("eval output is csv or json")),
    }
    let ext = if a.format == Format::Csv { "csv" } else { "json" };
    match &a.out {
        Some(dir) => {
            write(&dir.join(format!("table.{ext}")), std::str::from_utf8(&table)?)?;
            write(&dir.join(format!("cdf.{ext}")), std::str::from_utf8(&cdf)?)
        }
        None => emit(None, std::str::from_utf8(&table)?),
    }
}

#[derive(Serialize)]
struct CorpusEntry {
    index: usize,
    program: String,
    inputs: String,
    digest: String,
    failing_input: usize,
    root_cause: StmtId,
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let corpus = generate_corpus(a.corpus.seed, a.corpus.n, &a.corpus.params(), a.corpus.par())?;
    let mut entries = Vec::new();
    for g in &corpus {
        let program = format!("prog-{:03}.ir", g.index);
        let inputs = format!("prog-{:03}.inputs.json", g.index);
        write(&a.out.join(&program), &g.source)?;
        write(&a.out.join(&inputs), &serde_json::to_string(&g.inputs)?)?;
        entries.push(CorpusEntry {
            index: g.index,
            program,
            inputs,
            digest: g.program.digest(),
            failing_input: g.failing_input,
            root_cause: g.root_cause,
        });
    }
    write(&a.out.join("corpus.json"), &serde_json::to_string_pretty(&entries)?)
}
