//! Parametric bootstrap intervals for the leaf probabilities of a PCN.
//!
//! Each replicate simulates a lattice of side `base + 2 delta` from the
//! model and re-estimates the leaf distributions on the central `base`
//! region only, the `delta` ring acting as a buffer. Replicate `i` is seeded
//! with `seed ^ i`, so tables do not depend on the number of workers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::counting::{build_count_tree, node_lookup, CountTree};
use crate::error::{PcnError, Result};
use crate::grid::{mirror_pad, BoundaryPolicy, Grid};
use crate::model::Pcn;
use crate::sampler::{self, ContextIndex, InitState, ScanOrder, SimConfig, UpdateRule};
use crate::selection::{fit_counts, sample_sites, PenaltySize};

pub const DEFAULT_REPLICATES: usize = 100;
pub const DEFAULT_SWEEPS: usize = 400;

#[derive(Debug, Clone)]
pub struct BootConfig {
    pub replicates: usize,
    pub delta: usize,
    pub base_rows: usize,
    pub base_cols: usize,
    pub sweeps: usize,
    pub seed: u64,
    /// Re-run structure selection on each replicate and keep only those
    /// that recover the model's internal nodes.
    pub refit: bool,
    pub penalty: PenaltySize,
    /// Observed `base_rows x base_cols` grid; mirror-padded by `delta` it
    /// becomes the starting state of every replicate. Uniform noise
    /// otherwise.
    pub observed: Option<Grid>,
    pub scan: ScanOrder,
    pub update: UpdateRule,
}

impl BootConfig {
    pub fn new(base_rows: usize, base_cols: usize, delta: usize, seed: u64) -> Self {
        BootConfig {
            replicates: DEFAULT_REPLICATES,
            delta,
            base_rows,
            base_cols,
            sweeps: DEFAULT_SWEEPS,
            seed,
            refit: false,
            penalty: PenaltySize::default(),
            observed: None,
            scan: ScanOrder::Raster,
            update: UpdateRule::HeatBath,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiRow {
    pub context: String,
    pub symbol: String,
    /// `None` when no included replicate observed the context.
    pub interval: Option<Interval>,
    pub n_replicates: usize,
    /// Median occurrence count over the included replicates, counting
    /// replicates without the context as zero.
    pub n_occ_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CiTable {
    pub rows: Vec<CiRow>,
    pub replicates: usize,
    pub included: usize,
    pub excluded: usize,
}

impl CiTable {
    /// Fixed column order: context, symbol, lower, median, upper,
    /// n_replicates, n_occ_median. Unobserved contexts print `ABSENT` in
    /// the three interval columns.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("context,symbol,lower,median,upper,n_replicates,n_occ_median\n");
        for r in &self.rows {
            let ctx = csv_field(&r.context);
            match r.interval {
                Some(iv) => {
                    let _ = writeln!(
                        out,
                        "{ctx},{},{:.6},{:.6},{:.6},{},{}",
                        r.symbol, iv.lower, iv.median, iv.upper, r.n_replicates, r.n_occ_median
                    );
                }
                None => {
                    let _ = writeln!(out, "{ctx},{},ABSENT,ABSENT,ABSENT,0,{}", r.symbol, r.n_occ_median);
                }
            }
        }
        out
    }

    pub fn row(&self, context: &str, symbol: &str) -> Option<&CiRow> {
        self.rows.iter().find(|r| r.context == context && r.symbol == symbol)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Median-unbiased sample quantile: `h = (n + 1/3) p + 1/3` clamped to
/// `[1, n]`, interpolating linearly between the order statistics around
/// `h`. `sorted` must be ascending.
pub fn quantile_median_unbiased(sorted: &[f64], p: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(PcnError::EmptyInput);
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(PcnError::Config(format!("quantile level {p} outside [0, 1]")));
    }
    let n = sorted.len() as f64;
    let h = ((n + 1.0 / 3.0) * p + 1.0 / 3.0).clamp(1.0, n);
    let lo = h.floor() as usize;
    if lo >= sorted.len() {
        return Ok(sorted[sorted.len() - 1]);
    }
    let frac = h - lo as f64;
    Ok(sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1]))
}

/// One simulated lattice and its buffered counts.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub index: usize,
    pub grid: Grid,
    pub counts: CountTree,
    /// Set when the replicate was refitted.
    pub structure_matches: Option<bool>,
}

fn validate(pcn: &Pcn, config: &BootConfig) -> Result<()> {
    let depth = pcn.depth();
    if config.delta <= depth {
        return Err(PcnError::Delta {
            delta: config.delta,
            depth,
        });
    }
    if config.replicates == 0 {
        return Err(PcnError::Config("at least one replicate is required".into()));
    }
    if config.base_rows == 0 || config.base_cols == 0 {
        return Err(PcnError::Config("the core region must be non-empty".into()));
    }
    if let Some(g) = &config.observed {
        if g.rows() != config.base_rows || g.cols() != config.base_cols {
            return Err(PcnError::Config(format!(
                "observed grid is {}x{}, core region is {}x{}",
                g.rows(),
                g.cols(),
                config.base_rows,
                config.base_cols
            )));
        }
    }
    Ok(())
}

fn sim_config(config: &BootConfig, start: &Option<Grid>, index: usize) -> SimConfig {
    let rows = config.base_rows + 2 * config.delta;
    let cols = config.base_cols + 2 * config.delta;
    let mut sim = SimConfig::new(rows, cols, config.sweeps, config.seed ^ index as u64);
    sim.scan = config.scan;
    sim.update = config.update;
    if let Some(g) = start {
        sim.init = InitState::Grid(g.clone());
    }
    sim
}

fn start_grid(config: &BootConfig) -> Result<Option<Grid>> {
    config.observed.as_ref().map(|g| mirror_pad(g, config.delta)).transpose()
}

fn run_replicate(pcn: &Pcn, idx: &ContextIndex, config: &BootConfig, start: &Option<Grid>, i: usize) -> Result<Replicate> {
    let out = sampler::simulate_indexed(pcn, idx, &sim_config(config, start, i))?;
    let policy = BoundaryPolicy::Buffer { margin: config.delta };
    let fit_depth = pcn.depth().max(1);
    let counts = build_count_tree(&out.grid, fit_depth, pcn.mode(), policy)?;
    let structure_matches = if config.refit {
        let refit = fit_counts(counts.clone(), config.penalty, sample_sites(&out.grid, policy))?;
        Some(refit.pcn.internal_keys() == pcn.internal_keys())
    } else {
        None
    };
    Ok(Replicate {
        index: i,
        grid: out.grid,
        counts,
        structure_matches,
    })
}

/// Simulates replicate `index` exactly as [`bootstrap_ci`] does.
pub fn replicate(pcn: &Pcn, config: &BootConfig, index: usize) -> Result<Replicate> {
    validate(pcn, config)?;
    let idx = ContextIndex::new(pcn)?;
    run_replicate(pcn, &idx, config, &start_grid(config)?, index)
}

/// Per-leaf estimates of one replicate: probabilities when observed, and
/// the occurrence count.
type LeafEstimates = Vec<(Option<Vec<f64>>, u64)>;

/// Runs the replicates on the current rayon pool and summarizes each leaf
/// probability by its 2.5%, 50% and 97.5% median-unbiased quantiles.
pub fn bootstrap_ci(pcn: &Pcn, config: &BootConfig) -> Result<CiTable> {
    validate(pcn, config)?;
    let idx = ContextIndex::new(pcn)?;
    let start = start_grid(config)?;

    let per_rep: Vec<Option<LeafEstimates>> = (0..config.replicates)
        .into_par_iter()
        .map(|i| -> Result<Option<LeafEstimates>> {
            let rep = run_replicate(pcn, &idx, config, &start, i)?;
            if rep.structure_matches == Some(false) {
                return Ok(None);
            }
            let est = pcn
                .leaves()
                .iter()
                .map(|leaf| match node_lookup(&rep.counts, &leaf.key) {
                    Some(n) if n.n_occ > 0 => (Some(n.empirical()), n.n_occ),
                    _ => (None, 0),
                })
                .collect();
            Ok(Some(est))
        })
        .collect::<Result<_>>()?;

    let included: Vec<&LeafEstimates> = per_rep.iter().flatten().collect();
    let symbols = pcn.alphabet().symbols();
    let mut rows = Vec::new();
    for (li, leaf) in pcn.leaves().iter().enumerate() {
        let mut occ: Vec<f64> = included.iter().map(|e| e[li].1 as f64).collect();
        occ.sort_by(f64::total_cmp);
        let n_occ_median = if occ.is_empty() {
            0.0
        } else {
            quantile_median_unbiased(&occ, 0.5)?
        };
        let observed: Vec<&Vec<f64>> = included.iter().filter_map(|e| e[li].0.as_ref()).collect();
        for (a, sym) in symbols.iter().enumerate() {
            let interval = if observed.is_empty() {
                None
            } else {
                let mut v: Vec<f64> = observed.iter().map(|p| p[a]).collect();
                v.sort_by(f64::total_cmp);
                Some(Interval {
                    lower: quantile_median_unbiased(&v, 0.025)?,
                    median: quantile_median_unbiased(&v, 0.5)?,
                    upper: quantile_median_unbiased(&v, 0.975)?,
                })
            };
            rows.push(CiRow {
                context: leaf.key.to_string(),
                symbol: sym.clone(),
                interval,
                n_replicates: observed.len(),
                n_occ_median,
            });
        }
    }
    Ok(CiTable {
        rows,
        replicates: config.replicates,
        included: included.len(),
        excluded: config.replicates - included.len(),
    })
}

/// Fraction of `(leaf, symbol)` intervals with median replicate count at
/// least `min_occ` that contain the model's probability, with the number
/// of intervals considered.
pub fn coverage(pcn: &Pcn, table: &CiTable, min_occ: f64) -> (f64, usize) {
    let truth: BTreeMap<(String, String), f64> = pcn
        .leaves()
        .iter()
        .flat_map(|l| {
            pcn.alphabet()
                .symbols()
                .iter()
                .zip(&l.probs)
                .map(|(s, &p)| ((l.key.to_string(), s.clone()), p))
                .collect::<Vec<_>>()
        })
        .collect();
    let mut hit = 0usize;
    let mut total = 0usize;
    for r in &table.rows {
        let (Some(iv), Some(&p)) = (r.interval, truth.get(&(r.context.clone(), r.symbol.clone()))) else {
            continue;
        };
        if r.n_occ_median < min_occ {
            continue;
        }
        total += 1;
        if iv.lower <= p && p <= iv.upper {
            hit += 1;
        }
    }
    if total == 0 {
        (f64::NAN, 0)
    } else {
        (hit as f64 / total as f64, total)
    }
}
