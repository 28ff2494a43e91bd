use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use clap::Parser;
use serde::Serialize;

use pcn::bootstrap::{bootstrap_ci, BootConfig};
use pcn::counting::CountTreeDump;
use pcn::grid::GridFormat;
use pcn::sampler::{simulate, stabilized, InitState, SimConfig};
use pcn::selection::{default_depth, exhaustive_pic_oracle, fit_detailed, sample_sites, FitConfig};
use pcn::{Alphabet, BoundaryPolicy, CountTree, Grid, Pcn};

use crate::manifest::{self, Io, RunManifest, MANIFEST_FORMAT};
use crate::{
    boundary_policy, BootstrapArgs, BoundaryArg, Cli, CliError, Command, FitArgs, GridInput, InspectArgs,
    InspectFormat, OracleArgs, PresetArgs, ReplayArgs, SelectionArgs, SimulateArgs,
};

/// PIC values of the pruned and enumerated trees must agree this closely.
const ORACLE_TOLERANCE: f64 = 1e-9;

pub fn dispatch(command: Command, mut argv: Vec<String>, threads: usize) -> Result<(), CliError> {
    let start = Instant::now();
    let mut io = Io::default();
    let (name, out, options, seed) = match command {
        Command::Fit(a) => {
            fit(&a, threads, &mut io)?;
            ("fit", a.out.clone(), options(&a), None)
        }
        Command::Simulate(mut a) => {
            let seed = resolve_seed(&mut a.seed, &mut argv);
            run_simulate(&a, &mut io)?;
            ("simulate", a.out.clone(), options(&a), Some(seed))
        }
        Command::Bootstrap(mut a) => {
            let seed = resolve_seed(&mut a.seed, &mut argv);
            run_bootstrap(&a, &mut io)?;
            ("bootstrap", a.out.clone(), options(&a), Some(seed))
        }
        Command::Oracle(a) => {
            oracle(&a, threads, &mut io)?;
            ("oracle", a.out.clone(), options(&a), None)
        }
        Command::Inspect(a) => {
            inspect(&a, &mut io)?;
            ("inspect", a.out.clone(), options(&a), None)
        }
        Command::Preset(a) => {
            preset(&a, &mut io)?;
            ("preset", a.out.clone(), options(&a), None)
        }
        Command::Replay(a) => return replay(&a, threads),
    };
    let m = RunManifest {
        format: MANIFEST_FORMAT.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        command: name.into(),
        argv,
        options,
        seed,
        threads,
        inputs: io.inputs,
        outputs: io.outputs,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    let path = manifest::manifest_path(&out, name);
    let text = serde_json::to_string_pretty(&m).map_err(|e| CliError::internal("JSON_ERROR", e.to_string()))?;
    std::fs::create_dir_all(&out).map_err(|e| CliError::output(&out, e))?;
    std::fs::write(&path, text + "\n").map_err(|e| CliError::output(&path, e))
}

fn options<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn resolve_seed(seed: &mut Option<u64>, argv: &mut Vec<String>) -> u64 {
    match *seed {
        Some(s) => s,
        None => {
            let s: u64 = rand::random();
            *seed = Some(s);
            argv.push("--seed".into());
            argv.push(s.to_string());
            s
        }
    }
}

fn symbol_index(alphabet: &Alphabet, label: &str) -> Result<u8, CliError> {
    alphabet
        .index_of(label)
        .ok_or_else(|| CliError::precondition("CONFIG_ERROR", format!("{label:?} is not in alphabet {alphabet}")))
}

fn load_input_grid(path: &Path, input: &GridInput, io: &mut Io) -> Result<Grid, CliError> {
    let alphabet = Alphabet::parse(&input.alphabet)?;
    let text = io.read(path)?;
    let mut grid = Grid::parse(&text, &alphabet, input.mask.as_deref())?;
    if let Some(label) = &input.mask_as {
        grid = grid.with_mask_substitute(symbol_index(&alphabet, label)?)?;
    }
    Ok(grid)
}

fn fit_config(sel: &SelectionArgs, grid: &Grid, threads: usize) -> Result<FitConfig, CliError> {
    // a buffer without an explicit margin is as wide as the depth
    let depth = match (sel.boundary, sel.margin, sel.max_depth) {
        (BoundaryArg::Buffer, None, None) => Some(default_depth(sample_sites(grid, BoundaryPolicy::InteriorOnly))),
        _ => sel.max_depth,
    };
    Ok(FitConfig {
        depth,
        mode: sel.mode.into(),
        policy: boundary_policy(sel, depth.unwrap_or(0)),
        penalty: sel.penalty.into(),
        workers: threads.max(1),
    })
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    pic: &'a pcn::PicReport,
    depth: usize,
    model_depth: usize,
    n_centers: u64,
    mode: pcn::FrameMode,
    boundary: BoundaryPolicy,
}

fn fit(a: &FitArgs, threads: usize, io: &mut Io) -> Result<(), CliError> {
    let grid = load_input_grid(&a.grid, &a.input, io)?;
    let cfg = fit_config(&a.selection, &grid, threads)?;
    let o = fit_detailed(&grid, &cfg)?;
    let report = FitReport {
        pic: &o.report,
        depth: o.depth,
        model_depth: o.pcn.depth(),
        n_centers: o.counts.n_total,
        mode: o.counts.mode,
        boundary: cfg.policy,
    };
    io.write(&a.out.join("pcn.json"), &(o.pcn.to_json()? + "\n"))?;
    let report_json = serde_json::to_string_pretty(&report).map_err(pcn::PcnError::from)?;
    io.write(&a.out.join("pic_report.json"), &(report_json + "\n"))?;
    if a.dot {
        io.write(&a.out.join("tree.dot"), &o.pcn.to_dot())?;
    }
    if a.dump_counts {
        let dump = serde_json::to_string(&o.counts.to_dump()).map_err(pcn::PcnError::from)?;
        io.write(&a.out.join("counts.json"), &(dump + "\n"))?;
    }
    io.stdout(&format!(
        "leaves {} depth {} pic {:.6} centers {}\n",
        o.pcn.leaves().len(),
        o.pcn.depth(),
        o.report.tree_pic,
        o.counts.n_total
    ));
    Ok(())
}

fn load_model(source: &crate::ModelSource, alphabet: &str, io: &mut Io) -> Result<Pcn, CliError> {
    match (&source.pcn, &source.preset) {
        (Some(path), _) => Ok(Pcn::from_json(&io.read(path)?)?),
        (None, Some(name)) => {
            let m = pcn::presets::by_name(name).ok_or_else(|| {
                CliError::precondition(
                    "CONFIG_ERROR",
                    format!("unknown preset {name:?}, expected one of {:?}", pcn::presets::PRESET_NAMES),
                )
            })?;
            Ok(m.relabel(Alphabet::parse(alphabet)?)?)
        }
        (None, None) => Err(CliError::precondition("CONFIG_ERROR", "need --pcn or --preset")),
    }
}

fn lattice_size(size: Option<usize>, rows: Option<usize>, cols: Option<usize>) -> Option<(usize, usize)> {
    match (size, rows, cols) {
        (Some(s), _, _) => Some((s, s)),
        (None, Some(r), Some(c)) => Some((r, c)),
        _ => None,
    }
}

fn run_simulate(a: &SimulateArgs, io: &mut Io) -> Result<(), CliError> {
    let model = load_model(&a.source, &a.alphabet, io)?;
    let init = match &a.init {
        Some(path) => {
            let text = io.read(path)?;
            Some(Grid::parse(&text, model.alphabet(), Some(&a.mask))?)
        }
        None => None,
    };
    let (rows, cols) = match (lattice_size(a.size, a.rows, a.cols), &init) {
        (Some(rc), _) => rc,
        (None, Some(g)) => (g.rows(), g.cols()),
        (None, None) => return Err(CliError::precondition("CONFIG_ERROR", "need --size, --rows/--cols or --init")),
    };
    let mut cfg = SimConfig::new(rows, cols, a.sweeps, a.seed.expect("seed resolved"));
    cfg.scan = a.scan.into();
    cfg.update = a.update.into();
    cfg.freeze_mask = !a.no_freeze_mask;
    cfg.snapshot_every = a.snapshot_every;
    if let Some(g) = init {
        cfg.init = InitState::Grid(g);
    }
    let out = simulate(&model, &cfg)?;
    io.write(&a.out.join("grid.txt"), &out.grid.to_text(GridFormat::Text, &a.mask))?;
    io.write(&a.out.join("trace.csv"), &out.trace.to_csv())?;
    for (sweep, g) in &out.snapshots {
        io.write(
            &a.out.join("snapshots").join(format!("sweep_{sweep:06}.txt")),
            &g.to_text(GridFormat::Text, &a.mask),
        )?;
    }
    let stable = match stabilized(&out.trace, a.threshold)? {
        Some(s) => format!("stabilized at sweep {s}"),
        None => "not stabilized".into(),
    };
    let counts = out.grid.symbol_counts();
    let freq: Vec<String> = model
        .alphabet()
        .symbols()
        .iter()
        .zip(&counts)
        .map(|(s, c)| format!("{s}={c}"))
        .collect();
    io.stdout(&format!(
        "{}x{} after {} sweeps, {} (threshold {}), {}\n",
        rows,
        cols,
        a.sweeps,
        stable,
        a.threshold,
        freq.join(" ")
    ));
    Ok(())
}

#[derive(Serialize)]
struct ExclusionReport {
    replicates: usize,
    included: usize,
    excluded: usize,
    refit: bool,
}

fn run_bootstrap(a: &BootstrapArgs, io: &mut Io) -> Result<(), CliError> {
    let model = Pcn::from_json(&io.read(&a.pcn)?)?;
    let observed = match &a.observed {
        Some(path) => {
            let text = io.read(path)?;
            Some(Grid::parse(&text, model.alphabet(), a.mask.as_deref())?)
        }
        None => None,
    };
    let (rows, cols) = match (lattice_size(a.size, a.rows, a.cols), &observed) {
        (Some(rc), _) => rc,
        (None, Some(g)) => (g.rows(), g.cols()),
        (None, None) => {
            return Err(CliError::precondition("CONFIG_ERROR", "need --size, --rows/--cols or --observed"))
        }
    };
    let mut cfg = BootConfig::new(rows, cols, a.delta, a.seed.expect("seed resolved"));
    cfg.replicates = a.replicates;
    cfg.sweeps = a.sweeps;
    cfg.refit = a.refit;
    cfg.penalty = a.penalty.into();
    cfg.observed = observed;
    cfg.scan = a.scan.into();
    cfg.update = a.update.into();
    let table = bootstrap_ci(&model, &cfg)?;
    io.write(&a.out.join("ci.csv"), &table.to_csv())?;
    let report = ExclusionReport {
        replicates: table.replicates,
        included: table.included,
        excluded: table.excluded,
        refit: a.refit,
    };
    let json = serde_json::to_string_pretty(&report).map_err(pcn::PcnError::from)?;
    io.write(&a.out.join("exclusions.json"), &(json + "\n"))?;
    io.stdout(&format!(
        "{} intervals from {} of {} replicates ({} excluded)\n",
        table.rows.len(),
        table.included,
        table.replicates,
        table.excluded
    ));
    Ok(())
}

fn oracle(a: &OracleArgs, threads: usize, io: &mut Io) -> Result<(), CliError> {
    let grid = load_input_grid(&a.grid, &a.input, io)?;
    let cfg = fit_config(&a.selection, &grid, threads)?;
    let fitted = fit_detailed(&grid, &cfg)?;
    let exhaustive = exhaustive_pic_oracle(&fitted.counts, a.bound)?;
    let pruned: Vec<String> = fitted.pcn.leaf_keys().iter().map(|k| k.to_string()).collect();
    let enumerated: Vec<String> = exhaustive.leaves.iter().map(|k| k.to_string()).collect();
    let diff = (fitted.report.tree_pic - exhaustive.report.tree_pic).abs();
    let matched = diff <= ORACLE_TOLERANCE;
    let mut text = String::new();
    let _ = writeln!(text, "candidates {}", exhaustive.candidates);
    let _ = writeln!(text, "oracle pic {:.9} leaves {}", exhaustive.report.tree_pic, enumerated.join(" "));
    let _ = writeln!(text, "pruned pic {:.9} leaves {}", fitted.report.tree_pic, pruned.join(" "));
    let _ = writeln!(text, "{} (|diff| = {diff:e})", if matched { "MATCH" } else { "MISMATCH" });
    io.stdout(&text);
    if matched {
        Ok(())
    } else {
        Err(CliError::internal(
            "ORACLE_MISMATCH",
            format!("pruned and enumerated PIC differ by {diff:e}"),
        ))
    }
}

enum Artifact {
    Model(Pcn),
    Counts(CountTree),
}

fn read_artifact(text: &str) -> Result<Artifact, CliError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| CliError::precondition("JSON_ERROR", e.to_string()))?;
    match value.get("format").and_then(|f| f.as_str()) {
        Some(pcn::model::PCN_FORMAT) => Ok(Artifact::Model(Pcn::from_json(text)?)),
        Some(pcn::counting::COUNT_TREE_FORMAT) => {
            let dump: CountTreeDump = serde_json::from_value(value).map_err(pcn::PcnError::from)?;
            Ok(Artifact::Counts(CountTree::from_dump(&dump)?))
        }
        other => Err(CliError::precondition(
            "CONFIG_ERROR",
            format!("unrecognized artifact format {other:?}"),
        )),
    }
}

fn fmt_probs(p: &[f64]) -> String {
    p.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" ")
}

fn fmt_counts(c: &[u64]) -> String {
    c.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn model_table(m: &Pcn) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "alphabet {} mode {} depth {}", m.alphabet(), m.mode(), m.depth());
    let _ = writeln!(out, "{:<28} {:>8} {:>16} probabilities", "context", "n_occ", "counts");
    for n in m.leaves() {
        let _ = writeln!(
            out,
            "{:<28} {:>8} {:>16} {}",
            n.key.to_string(),
            n.n_occ,
            fmt_counts(&n.counts),
            fmt_probs(&n.probs)
        );
    }
    let mut per_order: BTreeMap<usize, usize> = BTreeMap::new();
    for n in m.leaves() {
        *per_order.entry(n.key.order()).or_default() += 1;
    }
    let _ = writeln!(out, "leaves per order:");
    for (order, count) in per_order {
        let _ = writeln!(out, "  {order}: {count}");
    }
    out
}

fn counts_table(t: &CountTree) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "alphabet {} mode {} depth {} centers {}",
        t.alphabet, t.mode, t.max_depth, t.n_total
    );
    let _ = writeln!(out, "{:<28} {:>8} {:>16} empirical", "context", "n_occ", "counts");
    let mut by_order: BTreeMap<usize, Vec<(String, u64)>> = BTreeMap::new();
    for n in t.nodes() {
        let _ = writeln!(
            out,
            "{:<28} {:>8} {:>16} {}",
            n.key.to_string(),
            n.n_occ,
            fmt_counts(&n.center_counts),
            fmt_probs(&n.empirical())
        );
        if let Some(last) = n.key.last() {
            by_order.entry(n.order()).or_default().push((last.to_string(), n.n_occ));
        }
    }
    let _ = writeln!(out, "class frequencies per order:");
    for (order, classes) in by_order {
        let mut merged: BTreeMap<String, u64> = BTreeMap::new();
        for (c, n) in classes {
            *merged.entry(c).or_default() += n;
        }
        let total: u64 = merged.values().sum();
        let _ = writeln!(out, "  order {order}:");
        for (c, n) in merged {
            let _ = writeln!(out, "    {c:<24} {n:>8} {:.4}", n as f64 / total.max(1) as f64);
        }
    }
    out
}

fn inspect(a: &InspectArgs, io: &mut Io) -> Result<(), CliError> {
    let text = io.read(&a.path)?;
    let artifact = read_artifact(&text)?;
    let rendered = match (a.format, &artifact) {
        (InspectFormat::Table, Artifact::Model(m)) => model_table(m),
        (InspectFormat::Table, Artifact::Counts(t)) => counts_table(t),
        (InspectFormat::Dot, Artifact::Model(m)) => m.to_dot(),
        (InspectFormat::Dot, Artifact::Counts(_)) => {
            return Err(CliError::precondition("CONFIG_ERROR", "dot output needs a model file"))
        }
        (InspectFormat::Json, Artifact::Model(m)) => m.to_json()? + "\n",
        (InspectFormat::Json, Artifact::Counts(t)) => {
            serde_json::to_string_pretty(&t.to_dump()).map_err(pcn::PcnError::from)? + "\n"
        }
    };
    io.stdout(&rendered);
    Ok(())
}

fn preset(a: &PresetArgs, io: &mut Io) -> Result<(), CliError> {
    let m = pcn::presets::by_name(&a.name)
        .ok_or_else(|| CliError::precondition("CONFIG_ERROR", format!("unknown preset {:?}", a.name)))?
        .relabel(Alphabet::parse(&a.alphabet)?)?;
    io.write(&a.out.join(format!("{}.json", a.name)), &(m.to_json()? + "\n"))?;
    Ok(())
}

fn replay(a: &ReplayArgs, threads: usize) -> Result<(), CliError> {
    let recorded = manifest::load(&a.manifest)?;
    let argv = match &a.out {
        Some(out) => manifest::with_out(&recorded.argv, out),
        None => recorded.argv.clone(),
    };
    let cli = Cli::try_parse_from(std::iter::once("pcn".to_string()).chain(argv.iter().cloned()))
        .map_err(|e| CliError::precondition("USAGE_ERROR", e.to_string().trim().replace('\n', " ")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(CliError::precondition("CONFIG_ERROR", "cannot replay a replay"));
    }
    let out_dir = match &cli.command {
        Command::Fit(x) => x.out.clone(),
        Command::Simulate(x) => x.out.clone(),
        Command::Bootstrap(x) => x.out.clone(),
        Command::Oracle(x) => x.out.clone(),
        Command::Inspect(x) => x.out.clone(),
        Command::Preset(x) => x.out.clone(),
        Command::Replay(_) => unreachable!(),
    };
    dispatch(cli.command, argv, threads)?;
    let fresh = manifest::load(&manifest::manifest_path(&out_dir, &recorded.command))?;
    let old: Vec<&str> = recorded.outputs.iter().map(|d| d.sha256.as_str()).collect();
    let new: Vec<&str> = fresh.outputs.iter().map(|d| d.sha256.as_str()).collect();
    if old != new {
        return Err(CliError::internal(
            "REPLAY_MISMATCH",
            format!("{} recorded outputs, {} reproduced, digests differ", old.len(), new.len()),
        ));
    }
    eprintln!("replay: {} outputs reproduced", new.len());
    Ok(())
}
