//! `pcn`: fit, simulate and bootstrap probabilistic context neighborhood
//! models of categorical lattices.
//!
//! Exit status is 0 on success, 2 for usage or precondition errors and 3
//! for internal failures. Errors are printed to standard error as one line
//! of JSON with `error` and `message` fields.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use pcn::{BoundaryPolicy, FrameMode, PcnError, PenaltySize, ScanOrder, UpdateRule};

#[derive(Debug, Parser)]
#[command(name = "pcn", version, about = "Probabilistic context neighborhood models on 2D lattices")]
struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, env = "PCN_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Estimate a PCN from a grid.
    Fit(FitArgs),
    /// Simulate a lattice from a PCN.
    Simulate(SimulateArgs),
    /// Bootstrap intervals for the leaf probabilities of a PCN.
    Bootstrap(BootstrapArgs),
    /// Compare the pruned tree with exhaustive enumeration.
    Oracle(OracleArgs),
    /// Print the nodes of a model or count-tree file.
    Inspect(InspectArgs),
    /// Write a built-in model to a file.
    Preset(PresetArgs),
    /// Re-run a recorded command and check its outputs.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Count,
    Position,
}

impl From<ModeArg> for FrameMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Count => FrameMode::Count,
            ModeArg::Position => FrameMode::Position,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BoundaryArg {
    Interior,
    Mirror,
    Buffer,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum PenaltyArg {
    /// Number of evaluated center sites.
    Centers,
    /// Number of unmasked sites in the sample region.
    Sites,
}

impl From<PenaltyArg> for PenaltySize {
    fn from(p: PenaltyArg) -> Self {
        match p {
            PenaltyArg::Centers => PenaltySize::EvaluatedCenters,
            PenaltyArg::Sites => PenaltySize::LatticeSites,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ScanArg {
    Raster,
    Random,
}

impl From<ScanArg> for ScanOrder {
    fn from(s: ScanArg) -> Self {
        match s {
            ScanArg::Raster => ScanOrder::Raster,
            ScanArg::Random => ScanOrder::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum UpdateArg {
    HeatBath,
    Metropolis,
}

impl From<UpdateArg> for UpdateRule {
    fn from(u: UpdateArg) -> Self {
        match u {
            UpdateArg::HeatBath => UpdateRule::HeatBath,
            UpdateArg::Metropolis => UpdateRule::Metropolis,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct GridInput {
    /// Comma-separated symbol labels, in index order.
    #[arg(long, default_value = "0,1")]
    alphabet: String,
    /// Token marking masked cells in grid files.
    #[arg(long)]
    mask: Option<String>,
    /// Symbol that masked cells read as inside neighborhoods.
    #[arg(long)]
    mask_as: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct SelectionArgs {
    /// Maximum neighborhood order; defaults to floor(ln(n)^(1/4)).
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, value_enum, default_value = "count")]
    mode: ModeArg,
    #[arg(long, value_enum, default_value = "interior")]
    boundary: BoundaryArg,
    /// Buffer width for `--boundary buffer`; defaults to the depth.
    #[arg(long)]
    margin: Option<usize>,
    #[arg(long, value_enum, default_value = "centers")]
    penalty: PenaltyArg,
}

#[derive(Debug, Args, Serialize)]
struct FitArgs {
    #[arg(long)]
    grid: PathBuf,
    #[command(flatten)]
    input: GridInput,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Also write tree.dot.
    #[arg(long)]
    dot: bool,
    /// Also write the full count tree to counts.json.
    #[arg(long)]
    dump_counts: bool,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[group(id = "source", required = true, multiple = false)]
struct ModelSource {
    /// Model file written by `fit` or `preset`.
    #[arg(long, group = "source")]
    pcn: Option<PathBuf>,
    /// Built-in model name.
    #[arg(long, group = "source")]
    preset: Option<String>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Labels for a preset's symbols.
    #[arg(long, default_value = "0,1")]
    alphabet: String,
    /// Side of a square lattice.
    #[arg(long, conflicts_with_all = ["rows", "cols"])]
    size: Option<usize>,
    #[arg(long, requires = "cols")]
    rows: Option<usize>,
    #[arg(long, requires = "rows")]
    cols: Option<usize>,
    #[arg(long, default_value_t = 100)]
    sweeps: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value = "raster")]
    scan: ScanArg,
    #[arg(long, value_enum, default_value = "heat-bath")]
    update: UpdateArg,
    /// Starting grid; uniform noise when absent.
    #[arg(long)]
    init: Option<PathBuf>,
    /// Token for masked cells, read from `--init` and written to the output.
    #[arg(long, default_value = "NA")]
    mask: String,
    /// Let masked cells of the starting grid evolve.
    #[arg(long)]
    no_freeze_mask: bool,
    /// Write the grid every this many sweeps under snapshots/.
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Class-frequency change below which the chain counts as stabilized.
    #[arg(long, default_value_t = pcn::sampler::DEFAULT_STABILITY_THRESHOLD)]
    threshold: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct BootstrapArgs {
    #[arg(long)]
    pcn: PathBuf,
    /// Number of simulated lattices.
    #[arg(long = "replicates", short = 'B', visible_alias = "B", default_value_t = pcn::bootstrap::DEFAULT_REPLICATES)]
    replicates: usize,
    /// Buffer ring width; must exceed the model depth.
    #[arg(long)]
    delta: usize,
    /// Observed grid; sets the core size and seeds every replicate.
    #[arg(long)]
    observed: Option<PathBuf>,
    /// Token for masked cells in `--observed`.
    #[arg(long)]
    mask: Option<String>,
    #[arg(long, conflicts_with_all = ["rows", "cols", "observed"])]
    size: Option<usize>,
    #[arg(long, requires = "cols", conflicts_with = "observed")]
    rows: Option<usize>,
    #[arg(long, requires = "rows", conflicts_with = "observed")]
    cols: Option<usize>,
    #[arg(long, default_value_t = pcn::bootstrap::DEFAULT_SWEEPS)]
    sweeps: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Refit each replicate and drop those with a different structure.
    #[arg(long)]
    refit: bool,
    #[arg(long, value_enum, default_value = "centers")]
    penalty: PenaltyArg,
    #[arg(long, value_enum, default_value = "raster")]
    scan: ScanArg,
    #[arg(long, value_enum, default_value = "heat-bath")]
    update: UpdateArg,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct OracleArgs {
    #[arg(long)]
    grid: PathBuf,
    #[command(flatten)]
    input: GridInput,
    #[command(flatten)]
    selection: SelectionArgs,
    /// Largest number of candidate trees to enumerate.
    #[arg(long, default_value_t = pcn::selection::DEFAULT_ORACLE_BOUND)]
    bound: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum InspectFormat {
    Table,
    Dot,
    Json,
}

#[derive(Debug, Args, Serialize)]
struct InspectArgs {
    /// A model (pcn.json) or count tree (counts.json).
    path: PathBuf,
    #[arg(long, value_enum, default_value = "table")]
    format: InspectFormat,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct PresetArgs {
    #[arg(value_parser = clap::builder::PossibleValuesParser::new(pcn::presets::PRESET_NAMES))]
    name: String,
    #[arg(long, default_value = "0,1")]
    alphabet: String,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ReplayArgs {
    manifest: PathBuf,
    /// Directory for the new outputs; defaults to the recorded one.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
pub struct CliError {
    code: String,
    message: String,
    exit: u8,
}

impl CliError {
    pub fn precondition(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            message: message.into(),
            exit: 2,
        }
    }

    pub fn internal(code: &str, message: impl Into<String>) -> Self {
        CliError {
            code: code.into(),
            message: message.into(),
            exit: 3,
        }
    }

    pub fn input(path: &Path, e: std::io::Error) -> Self {
        CliError::precondition("IO_ERROR", format!("{}: {e}", path.display()))
    }

    pub fn output(path: &Path, e: std::io::Error) -> Self {
        CliError::internal("IO_ERROR", format!("{}: {e}", path.display()))
    }

    fn to_json(&self) -> String {
        serde_json::json!({ "error": self.code, "message": self.message }).to_string()
    }
}

impl From<PcnError> for CliError {
    fn from(e: PcnError) -> Self {
        let exit = if e.is_precondition() { 2 } else { 3 };
        CliError {
            code: e.code().into(),
            message: e.to_string(),
            exit,
        }
    }
}

fn boundary_policy(sel: &SelectionArgs, depth: usize) -> BoundaryPolicy {
    match sel.boundary {
        BoundaryArg::Interior => BoundaryPolicy::InteriorOnly,
        BoundaryArg::Mirror => BoundaryPolicy::Mirror,
        BoundaryArg::Buffer => BoundaryPolicy::Buffer {
            margin: sel.margin.unwrap_or(depth),
        },
    }
}

fn run(argv: Vec<String>) -> Result<(), CliError> {
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            return Err(CliError::precondition("USAGE_ERROR", e.to_string().trim().replace('\n', " ")));
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::precondition("CONFIG_ERROR", "--threads must be at least 1"));
        }
    }
    let pool = {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(n) = cli.threads {
            b = b.num_threads(n);
        }
        b.build().map_err(|e| CliError::internal("THREAD_POOL", e.to_string()))?
    };
    let threads = pool.current_num_threads();
    let recorded: Vec<String> = argv.iter().skip(1).cloned().collect();
    pool.install(|| commands::dispatch(cli.command, recorded, threads))
}

fn main() -> ExitCode {
    match run(std::env::args().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit)
        }
    }
}
