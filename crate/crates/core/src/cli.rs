//! Command-line front end. [`dispatch`] is the whole program minus process
//! plumbing, so it can be driven from tests.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::charac::{
    simulate_matmul, sweep_dimension, sweep_to_csv, CacheConfig, MatMulSpec, RegionGranularity,
    SweepDim, SweepParams,
};
use crate::fusion::{assign_priorities, fuse_pass, fusion_json, DataflowGraph};
use crate::math::{
    build_interference_matrix, heatmap_from_records, loss_breakdown, normalize_attention_map,
    normalize_l2_map, parse_records_csv, reduce_attention, Aggregation, AttentionMatrix,
    CodeHeatmap, InterferenceMatrix, RegionMap, DEFAULT_LAMBDA,
};
use crate::planner::{
    apply, apply_live, emit_script, plan, resolve_mount, verify, CgroupPlan, HostFs,
    PlannerConfig, TaskSet, DEFAULT_THETA,
};
use crate::platform::{PlatformModel, Transaction};
use crate::sim::{self, Calibration, Mode, Role, Scenario};

/// Outcome of one invocation: 0 success, 1 domain error, 2 usage error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommandResult {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Parser, Debug)]
#[command(name = "interfere", version, about = "Interference analysis and isolation planning for multi-core platforms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Platform models: validation, transactions, interference channels.
    #[command(subcommand)]
    Platform(PlatformCmd),
    /// Cache characterization of the matrix-multiplication kernel.
    #[command(subcommand)]
    Charac(CharacCmd),
    /// Interference matrices and code heatmaps from measurements.
    #[command(subcommand)]
    Matrix(MatrixCmd),
    /// Loss evaluation.
    #[command(subcommand)]
    Loss(LossCmd),
    /// cgroup v2 isolation plans.
    #[command(subcommand)]
    Plan(PlanCmd),
    /// Simulate a victim/aggressor scenario.
    Simulate(SimulateArgs),
    /// Fuse dataflow nodes down to a thread budget.
    Fuse(FuseArgs),
    /// Order threads by cache misses.
    Priorities(PrioritiesArgs),
    /// Run the calibrated experiment in all three modes.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Platform model JSON; the bundled Raspberry Pi 4 model when omitted.
    #[arg(long)]
    model: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OutArg {
    /// Write the result here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq)]
enum Pairs {
    All,
    Cross,
}

#[derive(Subcommand, Debug)]
enum PlatformCmd {
    /// Validate a model; exits 1 when any diagnostic is reported.
    Check {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// List the transactions of an initiator.
    Paths {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        initiator: String,
        #[arg(long)]
        target: Option<String>,
    },
    /// Pairwise interference channels between transactions.
    Channels {
        #[command(flatten)]
        model: ModelArg,
        /// Comma-separated initiator ids (default: all).
        #[arg(long, value_delimiter = ',')]
        initiators: Option<Vec<String>>,
        #[arg(long)]
        target: Option<String>,
        /// `cross` keeps only pairs whose initiators differ.
        #[arg(long, value_enum, default_value = "all")]
        pairs: Pairs,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args, Debug)]
struct CacheArgs {
    /// L1 geometry as SIZE:LINE:WAYS.
    #[arg(long, default_value = "32K:64:2")]
    l1: String,
    /// L2 geometry as SIZE:LINE:WAYS.
    #[arg(long, default_value = "1M:64:16")]
    l2: String,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Granularity {
    Kernel,
    Outer,
    Middle,
}

impl From<Granularity> for RegionGranularity {
    fn from(g: Granularity) -> Self {
        match g {
            Granularity::Kernel => RegionGranularity::Kernel,
            Granularity::Outer => RegionGranularity::Outer,
            Granularity::Middle => RegionGranularity::Middle,
        }
    }
}

#[derive(Subcommand, Debug)]
enum CharacCmd {
    /// Simulate one kernel and print cache statistics as JSON.
    Matmul {
        /// Full kernel description as JSON; overrides the dimension flags.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 32)]
        n: u64,
        #[arg(long, default_value_t = 32)]
        k: u64,
        #[arg(long, default_value_t = 32)]
        m: u64,
        #[arg(long, default_value_t = 4)]
        element_size: u64,
        #[arg(long, value_enum, default_value = "outer")]
        granularity: Granularity,
        #[command(flatten)]
        cache: CacheArgs,
        #[command(flatten)]
        out: OutArg,
    },
    /// Sweep one dimension (or all) and print CSV.
    Sweep {
        /// N, K, M or all.
        #[arg(long, default_value = "all")]
        dim: String,
        #[arg(long, default_value_t = 64)]
        start: u64,
        #[arg(long, default_value_t = 128)]
        step: u64,
        #[arg(long, default_value_t = 4096)]
        limit: u64,
        /// Value of the two dimensions that are not swept.
        #[arg(long, default_value_t = 32)]
        fixed: u64,
        #[arg(long, default_value_t = 4)]
        element_size: u64,
        #[command(flatten)]
        cache: CacheArgs,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand, Debug)]
enum MatrixCmd {
    /// Interference matrix JSON from measurement CSV.
    Build {
        #[arg(long)]
        records: PathBuf,
        /// Task order (default: first appearance in the records).
        #[arg(long, value_delimiter = ',')]
        tasks: Option<Vec<String>>,
        #[arg(long, default_value = "max")]
        aggregate: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Code heatmap JSON from region-level measurement CSV.
    Heatmap {
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value = "max")]
        aggregate: String,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Subcommand, Debug)]
enum LossCmd {
    /// Evaluate the loss for predictions, observations, attention and L2 counts.
    Eval {
        /// JSON with `predicted`, `observed`, `attention` {entries, partition},
        /// `l2_counts` and optional `lambda`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args, Debug)]
struct MountArg {
    /// Root cgroup v2 directory (default: $INTERFERE_CGROUP_MOUNT or /sys/fs/cgroup).
    #[arg(long)]
    mount: Option<String>,
}

#[derive(Subcommand, Debug)]
enum PlanCmd {
    /// Build a plan from a task set and an interference matrix.
    Build {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
        #[arg(long)]
        consolidate: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Emit a shell script that creates the hierarchy.
    Emit {
        #[arg(long)]
        plan: PathBuf,
        #[command(flatten)]
        mount: MountArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Check a plan against a matrix; exits 1 when it fails.
    Verify {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, default_value_t = DEFAULT_THETA)]
        theta: f64,
    },
    /// Apply a plan. Dry run unless `--live` is given.
    Apply {
        #[arg(long)]
        plan: PathBuf,
        #[command(flatten)]
        mount: MountArg,
        #[arg(long, conflicts_with = "live")]
        dry_run: bool,
        /// Perform the filesystem writes.
        #[arg(long)]
        live: bool,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Solo,
    Interference,
    Protected,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Solo => Mode::Solo,
            ModeArg::Interference => Mode::Interference,
            ModeArg::Protected => Mode::Protected,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario JSON; the default calibration when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Override the scenario's mode.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Put every aggressor on the victim's core.
    #[arg(long)]
    same_core: bool,
    /// Per-job CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CDF CSV of the first victim.
    #[arg(long)]
    cdf: Option<PathBuf>,
    /// Summary JSON file (it is always printed to standard output).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FuseArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    budget: usize,
    /// Heatmap JSON whose region ids name nodes.
    #[arg(long)]
    heatmap: Option<PathBuf>,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct PrioritiesArgs {
    /// CSV with header `id,misses`.
    #[arg(long)]
    threads: PathBuf,
    #[command(flatten)]
    out: OutArg,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Scenario JSON; the default calibration when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Directory for per-mode CSV and summary files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

struct Failure(String);

impl<E: std::error::Error> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

fn fail(msg: impl Display) -> Failure {
    Failure(msg.to_string())
}

type Res<T> = Result<T, Failure>;

#[derive(Default)]
struct Output {
    stdout: String,
    stderr: String,
    code: i32,
}

impl Output {
    fn text(s: impl Into<String>) -> Self {
        Output {
            stdout: s.into(),
            ..Output::default()
        }
    }
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).map_err(|e| fail(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Res<()> {
    fs::write(path, text).map_err(|e| fail(format!("cannot write {}: {e}", path.display())))
}

fn with_newline(mut s: String) -> String {
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

/// Writes to `--out` when given, otherwise returns the text for stdout.
fn emit(out: &OutArg, text: String) -> Res<Output> {
    let text = with_newline(text);
    match &out.out {
        Some(p) => {
            write(p, &text)?;
            Ok(Output::default())
        }
        None => Ok(Output::text(text)),
    }
}

fn load_model(arg: &ModelArg) -> Res<PlatformModel> {
    match &arg.model {
        Some(p) => Ok(PlatformModel::from_json(&read(p)?)?),
        None => Ok(PlatformModel::rpi4()),
    }
}

fn platform(cmd: PlatformCmd) -> Res<Output> {
    match cmd {
        PlatformCmd::Check { model, format } => {
            let m = load_model(&model)?;
            let diags = m.validate();
            let stdout = match format {
                Format::Json => serde_json::to_string_pretty(&diags)?,
                Format::Table if diags.is_empty() => "ok: model is well formed".into(),
                Format::Table => diags
                    .iter()
                    .map(|d| format!("{:?}: {}", d.kind, d.message))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            Ok(Output {
                code: i32::from(!diags.is_empty()),
                stdout: with_newline(stdout),
                stderr: String::new(),
            })
        }
        PlatformCmd::Paths {
            model,
            initiator,
            target,
        } => {
            let m = load_model(&model)?;
            let txs = m.enumerate_transactions(&initiator, target.as_deref())?;
            Ok(Output::text(with_newline(
                txs.iter().map(|t| t.id.clone()).collect::<Vec<_>>().join("\n"),
            )))
        }
        PlatformCmd::Channels {
            model,
            initiators,
            target,
            pairs,
            format,
            out,
        } => {
            let m = load_model(&model)?;
            let diags = m.validate();
            if !diags.is_empty() {
                return Err(fail(format!(
                    "model is invalid: {}",
                    diags.iter().map(|d| d.message.as_str()).collect::<Vec<_>>().join("; ")
                )));
            }
            let mut txs: Vec<Transaction> = m.all_transactions(initiators.as_deref(), target.as_deref())?;
            txs.sort_by(|a, b| a.id.cmp(&b.id));
            let mut verdicts = Vec::new();
            for (i, a) in txs.iter().enumerate() {
                for b in &txs[i + 1..] {
                    if pairs == Pairs::Cross && a.initiator() == b.initiator() {
                        continue;
                    }
                    verdicts.push(m.interference_channels(&[a.clone(), b.clone()])?);
                }
            }
            let text = match format {
                Format::Json => serde_json::to_string_pretty(&verdicts)?,
                Format::Table => verdicts
                    .iter()
                    .map(|v| v.describe(&m))
                    .collect::<Vec<_>>()
                    .join("\n"),
            };
            emit(&out, text)
        }
    }
}

fn caches(c: &CacheArgs) -> Res<(CacheConfig, CacheConfig)> {
    Ok((CacheConfig::parse(&c.l1)?, CacheConfig::parse(&c.l2)?))
}

fn charac(cmd: CharacCmd) -> Res<Output> {
    match cmd {
        CharacCmd::Matmul {
            spec,
            n,
            k,
            m,
            element_size,
            granularity,
            cache,
            out,
        } => {
            let (l1, l2) = caches(&cache)?;
            let spec = match spec {
                Some(p) => serde_json::from_str::<MatMulSpec>(&read(&p)?)?,
                None => MatMulSpec::packed_at(n, k, m, element_size, 0).with_granularity(granularity.into()),
            };
            let stats = simulate_matmul(&spec, l1, l2)?;
            let v = serde_json::json!({
                "spec": spec,
                "l1": l1,
                "l2": l2,
                "l1_accesses": stats.l1_accesses,
                "l1_misses": stats.l1_misses,
                "l2_accesses": stats.l2_accesses(),
                "l2_misses": stats.l2_misses,
                "l1_writebacks": stats.l1_writebacks,
                "per_region_l2": stats.per_region_l2,
            });
            emit(&out, serde_json::to_string_pretty(&v)?)
        }
        CharacCmd::Sweep {
            dim,
            start,
            step,
            limit,
            fixed,
            element_size,
            cache,
            out,
        } => {
            let (l1, l2) = caches(&cache)?;
            let dims: Vec<SweepDim> = if dim.eq_ignore_ascii_case("all") {
                SweepDim::ALL.to_vec()
            } else {
                vec![dim.parse().map_err(fail)?]
            };
            let params = SweepParams {
                start,
                step,
                limit,
                fixed_value: fixed,
            };
            let base = MatMulSpec::packed_at(1, 1, 1, element_size, 0);
            let mut points = Vec::new();
            for d in dims {
                points.extend(sweep_dimension(&base, d, params, l1, l2)?);
            }
            emit(&out, sweep_to_csv(&points))
        }
    }
}

fn first_seen_tasks(records: &[crate::math::MeasurementRecord]) -> Vec<String> {
    let mut order: Vec<String> = Vec::new();
    for r in records {
        for t in [&r.subject, &r.pair] {
            if !t.is_empty() && !order.contains(t) {
                order.push(t.clone());
            }
        }
    }
    order
}

fn matrix(cmd: MatrixCmd) -> Res<Output> {
    match cmd {
        MatrixCmd::Build {
            records,
            tasks,
            aggregate,
            out,
        } => {
            let recs = parse_records_csv(&read(&records)?)?;
            let agg: Aggregation = aggregate.parse().map_err(fail)?;
            let tasks = tasks.unwrap_or_else(|| first_seen_tasks(&recs));
            let m = build_interference_matrix(&tasks, &recs, agg)?;
            emit(&out, m.to_json())
        }
        MatrixCmd::Heatmap {
            records,
            aggregate,
            out,
        } => {
            let recs = parse_records_csv(&read(&records)?)?;
            let agg: Aggregation = aggregate.parse().map_err(fail)?;
            let h = heatmap_from_records(&recs, agg)?;
            emit(&out, serde_json::to_string_pretty(&h)?)
        }
    }
}

#[derive(Deserialize)]
struct AttentionInput {
    entries: Vec<Vec<f64>>,
    partition: Vec<usize>,
}

#[derive(Deserialize)]
struct LossInput {
    predicted: Vec<f64>,
    observed: Vec<f64>,
    attention: AttentionInput,
    l2_counts: Vec<f64>,
    lambda: Option<f64>,
}

fn loss(cmd: LossCmd) -> Res<Output> {
    let LossCmd::Eval { input, lambda, out } = cmd;
    let inp: LossInput = serde_json::from_str(&read(&input)?)?;
    let lambda = lambda.or(inp.lambda).unwrap_or(DEFAULT_LAMBDA);
    let att = AttentionMatrix::new(inp.attention.entries, inp.attention.partition)?;
    let att_map = normalize_attention_map(&reduce_attention(&att)?)?;
    let l2_map = normalize_l2_map(&RegionMap::new(inp.l2_counts)?)?;
    let b = loss_breakdown(&inp.predicted, &inp.observed, &att_map, &l2_map, lambda)?;
    emit(&out, serde_json::to_string_pretty(&b)?)
}

fn plan_cmd(cmd: PlanCmd) -> Res<Output> {
    match cmd {
        PlanCmd::Build {
            tasks,
            matrix,
            theta,
            consolidate,
            out,
        } => {
            let set = TaskSet::from_json(&read(&tasks)?)?;
            let m = InterferenceMatrix::from_json(&read(&matrix)?)?;
            let p = plan(&set.tasks, &m, &PlannerConfig { theta, consolidate })?;
            emit(&out, p.to_json())
        }
        PlanCmd::Emit { plan, mount, out } => {
            let p = CgroupPlan::from_json(&read(&plan)?)?;
            let mount = resolve_mount(mount.mount.as_deref());
            emit(&out, emit_script(&p, &mount)?)
        }
        PlanCmd::Verify {
            plan,
            matrix,
            theta,
        } => {
            let p = CgroupPlan::from_json(&read(&plan)?)?;
            let m = InterferenceMatrix::from_json(&read(&matrix)?)?;
            let v = verify(&p, &m, theta)?;
            Ok(Output {
                code: i32::from(!v.verified),
                stdout: with_newline(serde_json::to_string_pretty(&v)?),
                stderr: if v.verified {
                    String::new()
                } else {
                    format!("plan violates {} conflicting pair(s)\n", v.violations.len())
                },
            })
        }
        PlanCmd::Apply {
            plan,
            mount,
            dry_run: _,
            live,
        } => {
            let p = CgroupPlan::from_json(&read(&plan)?)?;
            let mount = resolve_mount(mount.mount.as_deref());
            let result = if live {
                apply_live(&p, &mount)
            } else {
                apply(&p, &mount, true, &mut HostFs)
            };
            match result {
                Ok(log) => Ok(Output::text(with_newline(serde_json::to_string_pretty(&log)?))),
                Err(e) => Ok(Output {
                    code: 1,
                    stdout: with_newline(serde_json::to_string_pretty(&e.log)?),
                    stderr: format!("{e}\n"),
                }),
            }
        }
    }
}

fn load_scenario(path: Option<&Path>, mode: Option<Mode>) -> Res<Scenario> {
    let s = match path {
        Some(p) => Scenario::load(p)?,
        None => Calibration::default().scenario(mode.unwrap_or(Mode::Interference))?,
    };
    Ok(match mode {
        Some(m) if m != s.mode => s.with_mode(m),
        _ => s,
    })
}

fn simulate(args: SimulateArgs) -> Res<Output> {
    let mut s = load_scenario(args.scenario.as_deref(), args.mode.map(Mode::from))?;
    if args.same_core {
        s = s.same_core();
    }
    let res = sim::run(&s)?;
    if let Some(p) = &args.out {
        write(p, &sim::export_results(&res))?;
    }
    if let Some(p) = &args.cdf {
        let victim = s
            .tasks
            .iter()
            .find(|t| t.role == Role::Victim)
            .ok_or_else(|| fail("scenario has no victim"))?;
        write(p, &sim::export_cdf(&sim::cdf(&res, &victim.id)?))?;
    }
    let summary = with_newline(serde_json::to_string_pretty(&sim::summary(&res))?);
    if let Some(p) = &args.summary {
        write(p, &summary)?;
    }
    Ok(Output::text(summary))
}

fn fuse(args: FuseArgs) -> Res<Output> {
    let g = DataflowGraph::from_json(&read(&args.graph)?)?;
    let heat: Option<CodeHeatmap> = match &args.heatmap {
        Some(p) => Some(serde_json::from_str(&read(p)?)?),
        None => None,
    };
    let (fused, plan) = fuse_pass(&g, args.budget, heat.as_ref())?;
    let mut out = emit(&args.out, fusion_json(&fused, &plan))?;
    if !plan.budget_reached {
        out.stderr = format!(
            "budget {} not reached: {} nodes remain with no eligible pair\n",
            plan.thread_budget,
            fused.nodes.len()
        );
    }
    Ok(out)
}

#[derive(Deserialize)]
struct ThreadRow {
    id: String,
    misses: u64,
}

fn priorities(args: PrioritiesArgs) -> Res<Output> {
    let text = read(&args.threads)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for r in rdr.deserialize::<ThreadRow>() {
        let r = r?;
        rows.push((r.id, r.misses));
    }
    let order = assign_priorities(&rows)?;
    emit(&args.out, order.join("\n"))
}

fn report(args: ReportArgs) -> Res<Output> {
    let base = load_scenario(args.scenario.as_deref(), None)?;
    let victim = base
        .tasks
        .iter()
        .find(|t| t.role == Role::Victim)
        .map(|t| t.id.clone())
        .ok_or_else(|| fail("scenario has no victim"))?;
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| fail(format!("cannot create {}: {e}", dir.display())))?;
    }
    let mut lines = vec![format!("{:<13} {:>6} {:>6} {:>10} {:>12}", "mode", "jobs", "misses", "miss_ratio", "max_exec_ms")];
    for mode in Mode::ALL {
        let mut s = base.with_mode(mode);
        if mode == Mode::Protected && s.plan.is_none() {
            s.plan = Some(s.effective_plan()?);
        }
        let res = sim::run(&s)?;
        let mr = sim::miss_ratio(&res, &victim)?;
        let max = res
            .records_for(&victim)
            .map(|r| r.exec_time())
            .max()
            .map(|t| sim::to_f64(&t))
            .unwrap_or(0.0);
        lines.push(format!(
            "{:<13} {:>6} {:>6} {:>10.4} {:>12.3}",
            mode.to_string(),
            mr.jobs,
            mr.misses,
            mr.value(),
            max
        ));
        if let Some(dir) = &args.out_dir {
            write(&dir.join(format!("{mode}.csv")), &sim::export_results(&res))?;
            write(
                &dir.join(format!("{mode}_cdf.csv")),
                &sim::export_cdf(&sim::cdf(&res, &victim)?),
            )?;
            write(
                &dir.join(format!("{mode}_summary.json")),
                &with_newline(serde_json::to_string_pretty(&sim::summary(&res))?),
            )?;
        }
    }
    Ok(Output::text(with_newline(lines.join("\n"))))
}

fn run(cli: Cli) -> Res<Output> {
    match cli.command {
        Command::Platform(c) => platform(c),
        Command::Charac(c) => charac(c),
        Command::Matrix(c) => matrix(c),
        Command::Loss(c) => loss(c),
        Command::Plan(c) => plan_cmd(c),
        Command::Simulate(a) => simulate(a),
        Command::Fuse(a) => fuse(a),
        Command::Priorities(a) => priorities(a),
        Command::Report(a) => report(a),
    }
}

/// Parses `argv` (program name first) and runs the command.
pub fn dispatch<I, T>(argv: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => CommandResult {
                    code: 0,
                    stdout: text,
                    stderr: String::new(),
                },
                _ => CommandResult {
                    code: 2,
                    stdout: String::new(),
                    stderr: text,
                },
            };
        }
    };
    match run(cli) {
        Ok(o) => CommandResult {
            code: o.code,
            stdout: o.stdout,
            stderr: o.stderr,
        },
        Err(Failure(msg)) => CommandResult {
            code: 1,
            stdout: String::new(),
            stderr: format!("error: {msg}\n"),
        },
    }
}
