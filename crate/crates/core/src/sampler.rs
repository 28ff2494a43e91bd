//! Lattice simulation from a PCN by single-site MCMC sweeps.
//!
//! Every sweep visits each unmasked site once, reads its neighborhood from
//! the current grid (reflecting about the edges), resolves the context in
//! the model and redraws the site. Sites see updates made earlier in the
//! same sweep.
//!
//! Randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`, so runs reproduce across platforms.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};
use crate::geometry::{self, ContextKey, FrameKey, FrameMode, FramePayload};
use crate::grid::{self, Grid, Site, MASKED};
use crate::model::{Pcn, PcnNode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrder {
    /// Row by row, left to right.
    #[default]
    Raster,
    /// A fresh random permutation of the sites every sweep.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Draw the new symbol from the conditional distribution.
    #[default]
    HeatBath,
    /// Propose a uniform symbol, accept with `min(1, Q(new) / Q(old))`.
    /// A current symbol with `Q(old) = 0` always accepts.
    Metropolis,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitState {
    RandomUniform,
    Grid(Grid),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub rows: usize,
    pub cols: usize,
    pub sweeps: usize,
    pub scan: ScanOrder,
    pub seed: u64,
    pub init: InitState,
    pub update: UpdateRule,
    /// Masked cells of the initial grid never change. When false they are
    /// unmasked with a uniform draw and evolve like any other site.
    pub freeze_mask: bool,
    /// Keep a copy of the grid after sweep 0 (the initial state) and after
    /// every multiple of this many sweeps.
    pub snapshot_every: Option<usize>,
}

impl SimConfig {
    pub fn new(rows: usize, cols: usize, sweeps: usize, seed: u64) -> Self {
        SimConfig {
            rows,
            cols,
            sweeps,
            scan: ScanOrder::Raster,
            seed,
            init: InitState::RandomUniform,
            update: UpdateRule::HeatBath,
            freeze_mask: true,
            snapshot_every: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub sweep: usize,
    /// Fraction of unmasked sites whose first frame falls in each count
    /// class.
    pub frequencies: Vec<f64>,
    /// Largest absolute change against the previous sweep.
    pub max_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    /// First-order count classes in canonical order, as frame keys.
    pub classes: Vec<String>,
    /// Entry 0 is the initial grid, entry `k` the grid after sweep `k`.
    pub sweeps: Vec<SweepStats>,
}

impl ConvergenceTrace {
    /// CSV with columns `sweep`, one per class, `max_diff`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sweep");
        for c in &self.classes {
            out.push(',');
            out.push_str(&c.replace(',', ";"));
        }
        out.push_str(",max_diff\n");
        for s in &self.sweeps {
            out.push_str(&s.sweep.to_string());
            for f in &s.frequencies {
                out.push_str(&format!(",{f}"));
            }
            match s.max_diff {
                Some(d) => out.push_str(&format!(",{d}\n")),
                None => out.push_str(",\n"),
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub grid: Grid,
    pub trace: ConvergenceTrace,
    pub snapshots: Vec<(usize, Grid)>,
}

/// Default stabilization threshold on class-frequency changes.
pub const DEFAULT_STABILITY_THRESHOLD: f64 = 1e-3;

/// First sweep whose largest class-frequency change drops below
/// `threshold`, or `None` if that never happens.
pub fn stabilized(trace: &ConvergenceTrace, threshold: f64) -> Result<Option<usize>> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(PcnError::Config(format!("threshold must be positive, got {threshold}")));
    }
    if trace.sweeps.len() < 2 {
        return Err(PcnError::InsufficientTrace(trace.sweeps.len()));
    }
    Ok(trace
        .sweeps
        .iter()
        .skip(1)
        .find(|s| s.max_diff.is_some_and(|d| d < threshold))
        .map(|s| s.sweep))
}

fn frame_code_base(order: usize, mode: FrameMode, k: usize) -> u64 {
    match mode {
        FrameMode::Count => 8 * order as u64 + 1,
        FrameMode::Position => k as u64,
    }
}

/// Largest frame order whose codes fit in a `u64`.
fn check_code_range(order: usize, mode: FrameMode, k: usize) -> Result<()> {
    let base = frame_code_base(order, mode, k) as u128;
    let digits = match mode {
        FrameMode::Count => k,
        FrameMode::Position => 8 * order,
    };
    let mut acc: u128 = 1;
    for _ in 0..digits {
        acc = acc.saturating_mul(base);
        if acc > u64::MAX as u128 {
            return Err(PcnError::Model(format!(
                "order-{order} {mode} frames over {k} symbols are too many to index"
            )));
        }
    }
    Ok(())
}

fn payload_code(fk: &FrameKey, k: usize) -> u64 {
    let base = frame_code_base(fk.order(), fk.mode(), k);
    match fk.payload() {
        FramePayload::Count(c) => c.iter().rev().fold(0, |acc, &v| acc * base + v as u64),
        FramePayload::Position(p) => p.iter().rev().fold(0, |acc, &v| acc * base + v as u64),
    }
}

#[derive(Debug, Clone)]
struct IndexNode {
    order: usize,
    leaf: bool,
    /// Index into the distribution table.
    dist: Option<u32>,
    children: HashMap<u64, u32>,
}

/// A PCN compiled for fast per-site lookups: frame configurations are
/// reduced to integer codes and the tree is stored as an arena.
#[derive(Debug, Clone)]
pub struct ContextIndex {
    nodes: Vec<IndexNode>,
    /// Cumulative distributions, `k` entries per node with a distribution.
    cumulative: Vec<f64>,
    probs: Vec<f64>,
    k: usize,
    mode: FrameMode,
    offsets: Vec<Vec<(isize, isize)>>,
    depth: usize,
}

impl ContextIndex {
    pub fn new(pcn: &Pcn) -> Result<Self> {
        let k = pcn.alphabet().size();
        let mode = pcn.mode();
        let depth = pcn.depth();
        for j in 1..=depth {
            check_code_range(j, mode, k)?;
        }
        let mut idx = ContextIndex {
            nodes: vec![IndexNode {
                order: 0,
                leaf: false,
                dist: None,
                children: HashMap::new(),
            }],
            cumulative: Vec::new(),
            probs: Vec::new(),
            k,
            mode,
            offsets: (1..=depth).map(geometry::frame_offsets).collect(),
            depth,
        };
        for n in pcn.leaves() {
            let id = idx.insert_path(&n.key, k);
            idx.nodes[id].leaf = true;
            idx.attach(id, n);
        }
        for n in pcn.internal() {
            let id = idx.insert_path(&n.key, k);
            idx.attach(id, n);
        }
        Ok(idx)
    }

    fn insert_path(&mut self, key: &ContextKey, k: usize) -> usize {
        let mut id = 0usize;
        for fk in key.frames() {
            let code = payload_code(fk, k);
            id = match self.nodes[id].children.get(&code) {
                Some(&c) => c as usize,
                None => {
                    let new = self.nodes.len();
                    self.nodes.push(IndexNode {
                        order: fk.order(),
                        leaf: false,
                        dist: None,
                        children: HashMap::new(),
                    });
                    self.nodes[id].children.insert(code, new as u32);
                    new
                }
            };
        }
        id
    }

    fn attach(&mut self, id: usize, n: &PcnNode) {
        let d = (self.probs.len() / self.k) as u32;
        let total: f64 = n.probs.iter().sum();
        let mut acc = 0.0;
        for (a, &p) in n.probs.iter().enumerate() {
            acc += p / total;
            self.probs.push(p);
            self.cumulative.push(if a + 1 == self.k { 1.0 } else { acc });
        }
        self.nodes[id].dist = Some(d);
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    #[inline]
    fn frame_code(&self, grid: &Grid, site: Site, order: usize, counts: &mut [u32]) -> u64 {
        let offs = &self.offsets[order - 1];
        let (r0, c0) = (site.row as isize, site.col as isize);
        let base = frame_code_base(order, self.mode, self.k);
        match self.mode {
            FrameMode::Count => {
                counts.iter_mut().for_each(|c| *c = 0);
                for &(dr, dc) in offs {
                    let r = grid::reflect(r0 + dr, grid.rows());
                    let c = grid::reflect(c0 + dc, grid.cols());
                    counts[grid.neighbor_symbol(r, c) as usize] += 1;
                }
                counts.iter().rev().fold(0, |acc, &v| acc * base + v as u64)
            }
            FrameMode::Position => {
                let mut code = 0u64;
                let mut scale = 1u64;
                for &(dr, dc) in offs {
                    let r = grid::reflect(r0 + dr, grid.rows());
                    let c = grid::reflect(c0 + dc, grid.cols());
                    code += grid.neighbor_symbol(r, c) as u64 * scale;
                    scale = scale.wrapping_mul(base);
                }
                code
            }
        }
    }

    /// Distribution id for the site's current neighborhood, reading
    /// neighbors with mirrored boundaries.
    fn resolve(&self, grid: &Grid, site: Site, counts: &mut [u32]) -> Result<u32> {
        let mut id = 0usize;
        let mut fallback = None;
        loop {
            let node = &self.nodes[id];
            if node.leaf {
                return Ok(node.dist.expect("leaves carry distributions"));
            }
            if node.dist.is_some() {
                fallback = node.dist;
            }
            if node.order >= self.depth {
                break;
            }
            let code = self.frame_code(grid, site, node.order + 1, counts);
            match node.children.get(&code) {
                Some(&c) => id = c as usize,
                None => break,
            }
        }
        fallback.ok_or_else(|| {
            let key = geometry::extract_context(grid, site, self.depth, self.mode, grid::BoundaryPolicy::Mirror)
                .map(|k| k.to_string())
                .unwrap_or_else(|_| format!("{site:?}"));
            PcnError::UncoveredContext(key)
        })
    }

    /// Conditional distribution that the model assigns to the site.
    pub fn distribution(&self, grid: &Grid, site: Site) -> Result<&[f64]> {
        let mut counts = vec![0u32; self.k];
        let d = self.resolve(grid, site, &mut counts)? as usize;
        Ok(&self.probs[d * self.k..(d + 1) * self.k])
    }
}

struct TraceBuilder {
    classes: Vec<FrameKey>,
    class_of: HashMap<u64, usize>,
    offsets: Vec<(isize, isize)>,
    k: usize,
}

impl TraceBuilder {
    fn new(k: usize) -> Self {
        let payloads = geometry::count_classes(1, k);
        let classes: Vec<FrameKey> = payloads
            .into_iter()
            .map(|p| FrameKey::count(1, p).expect("valid class"))
            .collect();
        let class_of = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (payload_code(c, k), i))
            .collect();
        TraceBuilder {
            classes,
            class_of,
            offsets: geometry::frame_offsets(1),
            k,
        }
    }

    fn frequencies(&self, grid: &Grid) -> Vec<f64> {
        let mut hist = vec![0u64; self.classes.len()];
        let mut counts = vec![0u32; self.k];
        let base = 9u64;
        let mut total = 0u64;
        for r in 0..grid.rows() {
            for c in 0..grid.cols() {
                if grid.is_masked(r, c) {
                    continue;
                }
                counts.iter_mut().for_each(|x| *x = 0);
                for &(dr, dc) in &self.offsets {
                    let rr = grid::reflect(r as isize + dr, grid.rows());
                    let cc = grid::reflect(c as isize + dc, grid.cols());
                    counts[grid.neighbor_symbol(rr, cc) as usize] += 1;
                }
                let code = counts.iter().rev().fold(0, |acc, &v| acc * base + v as u64);
                hist[self.class_of[&code]] += 1;
                total += 1;
            }
        }
        if total == 0 {
            return vec![0.0; hist.len()];
        }
        hist.iter().map(|&h| h as f64 / total as f64).collect()
    }
}

fn initial_grid(pcn: &Pcn, config: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Grid> {
    let k = pcn.alphabet().size();
    let mut g = match &config.init {
        InitState::RandomUniform => {
            let cells = (0..config.rows * config.cols).map(|_| rng.gen_range(0..k) as u8).collect();
            Grid::from_cells(config.rows, config.cols, cells, pcn.alphabet().clone())?
        }
        InitState::Grid(g) => {
            if g.rows() != config.rows || g.cols() != config.cols {
                return Err(PcnError::Config(format!(
                    "initial grid is {}x{}, expected {}x{}",
                    g.rows(),
                    g.cols(),
                    config.rows,
                    config.cols
                )));
            }
            if g.alphabet() != pcn.alphabet() {
                return Err(PcnError::Config(format!(
                    "initial grid alphabet {} differs from model alphabet {}",
                    g.alphabet(),
                    pcn.alphabet()
                )));
            }
            g.clone()
        }
    };
    if !config.freeze_mask {
        for r in 0..g.rows() {
            for c in 0..g.cols() {
                if g.is_masked(r, c) {
                    g.set(r, c, rng.gen_range(0..k) as u8);
                }
            }
        }
    }
    Ok(g)
}

/// Runs `config.sweeps` sweeps from the initial state.
pub fn simulate(pcn: &Pcn, config: &SimConfig) -> Result<SimOutput> {
    let index = ContextIndex::new(pcn)?;
    simulate_indexed(pcn, &index, config)
}

/// Like [`simulate`] with a prebuilt index, for repeated runs of one model.
pub fn simulate_indexed(pcn: &Pcn, index: &ContextIndex, config: &SimConfig) -> Result<SimOutput> {
    let depth = pcn.depth();
    let min_side = (2 * depth + 1).max(2);
    if config.rows < min_side || config.cols < min_side {
        return Err(PcnError::Config(format!(
            "a {}x{} lattice is too small for a depth-{depth} model (need at least {min_side} per side)",
            config.rows, config.cols
        )));
    }
    if config.sweeps == 0 {
        return Err(PcnError::Config("at least one sweep is required".into()));
    }
    let k = pcn.alphabet().size();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut grid = initial_grid(pcn, config, &mut rng)?;

    let mut sites: Vec<Site> = (0..grid.rows())
        .flat_map(|r| (0..grid.cols()).map(move |c| Site::new(r, c)))
        .filter(|s| !grid.is_masked(s.row, s.col))
        .collect();

    let tracer = TraceBuilder::new(k);
    let mut sweeps = vec![SweepStats {
        sweep: 0,
        frequencies: tracer.frequencies(&grid),
        max_diff: None,
    }];
    let mut snapshots = Vec::new();
    if config.snapshot_every.is_some() {
        snapshots.push((0, grid.clone()));
    }

    let mut counts = vec![0u32; k];
    for sweep in 1..=config.sweeps {
        if config.scan == ScanOrder::Random {
            sites.shuffle(&mut rng);
        }
        for &site in &sites {
            let d = index.resolve(&grid, site, &mut counts)? as usize;
            let next = match config.update {
                UpdateRule::HeatBath => {
                    let cum = &index.cumulative[d * k..(d + 1) * k];
                    let u: f64 = rng.gen();
                    draw(cum, &index.probs[d * k..(d + 1) * k], u)
                }
                UpdateRule::Metropolis => {
                    let probs = &index.probs[d * k..(d + 1) * k];
                    let current = grid.get(site.row, site.col).expect("site is unmasked") as usize;
                    let proposal = rng.gen_range(0..k);
                    let u: f64 = rng.gen();
                    let accept = probs[current] == 0.0 || u < probs[proposal] / probs[current];
                    if accept {
                        proposal as u8
                    } else {
                        current as u8
                    }
                }
            };
            grid.set(site.row, site.col, next);
        }
        let freqs = tracer.frequencies(&grid);
        let prev = &sweeps.last().expect("initial entry").frequencies;
        let max_diff = freqs
            .iter()
            .zip(prev)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        sweeps.push(SweepStats {
            sweep,
            frequencies: freqs,
            max_diff: Some(max_diff),
        });
        if let Some(every) = config.snapshot_every {
            if every > 0 && sweep % every == 0 {
                snapshots.push((sweep, grid.clone()));
            }
        }
    }
    debug_assert!(grid.cells().iter().all(|&c| c == MASKED || (c as usize) < k));
    Ok(SimOutput {
        grid,
        trace: ConvergenceTrace {
            classes: tracer.classes.iter().map(|c| c.to_string()).collect(),
            sweeps,
        },
        snapshots,
    })
}

#[inline]
fn draw(cumulative: &[f64], probs: &[f64], u: f64) -> u8 {
    for (a, &c) in cumulative.iter().enumerate() {
        if u < c && probs[a] > 0.0 {
            return a as u8;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u8
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Alphabet;
    use crate::model::PcnNode;

    fn iid(p_black: f64) -> Pcn {
        Pcn::iid(Alphabet::binary(), vec![1.0 - p_black, p_black]).unwrap()
    }

    #[test]
    fn deterministic_black() {
        let out = simulate(&iid(1.0), &SimConfig::new(10, 10, 1, 3)).unwrap();
        assert!(out.grid.cells().iter().all(|&c| c == 1));
    }

    #[test]
    fn deterministic_black_keeps_masks() {
        let mut init = Grid::filled(10, 10, 0, Alphabet::binary()).unwrap();
        init.set(3, 4, MASKED);
        init.set(0, 0, MASKED);
        let mut cfg = SimConfig::new(10, 10, 1, 3);
        cfg.init = InitState::Grid(init);
        let out = simulate(&iid(1.0), &cfg).unwrap();
        assert_eq!(out.grid.masked_count(), 2);
        assert!(out.grid.is_masked(3, 4));
        assert_eq!(out.grid.symbol_counts(), vec![0, 98]);
    }

    #[test]
    fn unfrozen_masks_are_resampled() {
        let mut init = Grid::filled(10, 10, 0, Alphabet::binary()).unwrap();
        init.set(3, 4, MASKED);
        let mut cfg = SimConfig::new(10, 10, 1, 3);
        cfg.init = InitState::Grid(init);
        cfg.freeze_mask = false;
        let out = simulate(&iid(1.0), &cfg).unwrap();
        assert_eq!(out.grid.masked_count(), 0);
        assert_eq!(out.grid.symbol_counts(), vec![0, 100]);
    }

    #[test]
    fn fair_coin_fraction() {
        let out = simulate(&iid(0.5), &SimConfig::new(100, 100, 20, 11)).unwrap();
        let black = out.grid.symbol_counts()[1] as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&black), "{black}");
    }

    #[test]
    fn seeds_reproduce() {
        let pcn = crate::presets::variable_depth_logistic();
        for scan in [ScanOrder::Raster, ScanOrder::Random] {
            for update in [UpdateRule::HeatBath, UpdateRule::Metropolis] {
                let mut cfg = SimConfig::new(30, 30, 5, 7);
                cfg.scan = scan;
                cfg.update = update;
                let a = simulate(&pcn, &cfg).unwrap();
                let b = simulate(&pcn, &cfg).unwrap();
                assert_eq!(a.grid, b.grid);
                assert_eq!(a.trace, b.trace);
                cfg.seed = 8;
                let c = simulate(&pcn, &cfg).unwrap();
                assert_ne!(a.grid, c.grid);
            }
        }
    }

    #[test]
    fn metropolis_targets_the_same_marginal() {
        let mut cfg = SimConfig::new(100, 100, 30, 5);
        cfg.update = UpdateRule::Metropolis;
        let out = simulate(&iid(0.8), &cfg).unwrap();
        let black = out.grid.symbol_counts()[1] as f64 / 10_000.0;
        // 4 sigma of a binomial(10^4, 0.8) proportion is 0.016
        assert!((black - 0.8).abs() < 0.016, "{black}");
    }

    #[test]
    fn too_small_for_depth() {
        let pcn = crate::presets::variable_depth_logistic();
        let err = simulate(&pcn, &SimConfig::new(4, 10, 1, 0)).unwrap_err();
        assert_eq!(err.code(), "CONFIG_ERROR");
    }

    #[test]
    fn trace_rows_sum_to_one() {
        let pcn = crate::presets::variable_depth_logistic();
        let out = simulate(&pcn, &SimConfig::new(40, 40, 6, 1)).unwrap();
        assert_eq!(out.trace.sweeps.len(), 7);
        assert_eq!(out.trace.classes.len(), 9);
        for s in &out.trace.sweeps {
            assert!((s.frequencies.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let csv = out.trace.to_csv();
        assert_eq!(csv.lines().count(), 8);
        assert!(csv.starts_with("sweep,1:8;0,1:7;1"));
    }

    #[test]
    fn stabilization() {
        let out = simulate(&iid(1.0), &SimConfig::new(10, 10, 3, 3)).unwrap();
        // after the first sweep nothing changes any more
        assert_eq!(stabilized(&out.trace, 1e-3).unwrap(), Some(2));

        let constant = ConvergenceTrace {
            classes: vec![],
            sweeps: (0..3)
                .map(|i| SweepStats {
                    sweep: i,
                    frequencies: vec![1.0],
                    max_diff: (i > 0).then_some(0.0),
                })
                .collect(),
        };
        assert_eq!(stabilized(&constant, 1e-3).unwrap(), Some(1));

        let oscillating = ConvergenceTrace {
            classes: vec![],
            sweeps: (0..6)
                .map(|i| SweepStats {
                    sweep: i,
                    frequencies: vec![(i % 2) as f64, 1.0 - (i % 2) as f64],
                    max_diff: (i > 0).then_some(1.0),
                })
                .collect(),
        };
        assert_eq!(stabilized(&oscillating, 1e-3).unwrap(), None);

        let short = ConvergenceTrace {
            classes: vec![],
            sweeps: constant.sweeps[..1].to_vec(),
        };
        assert_eq!(stabilized(&short, 1e-3).unwrap_err().code(), "INSUFFICIENT_TRACE");
    }

    #[test]
    fn fallback_uses_deepest_internal_distribution() {
        // only the all-white first frame is expanded, and only one of its
        // children is listed; everything else falls back
        let root = ContextKey::root();
        let w8: ContextKey = "1:8,0".parse().unwrap();
        let leaves = vec![PcnNode::from_probs("1:8,0|2:16,0".parse().unwrap(), vec![1.0, 0.0])];
        let internal = vec![
            PcnNode::from_probs(root, vec![0.0, 1.0]),
            PcnNode::from_probs(w8, vec![0.5, 0.5]),
        ];
        let pcn = Pcn::new(Alphabet::binary(), FrameMode::Count, leaves, internal).unwrap();
        let idx = ContextIndex::new(&pcn).unwrap();

        let white = Grid::filled(7, 7, 0, Alphabet::binary()).unwrap();
        assert_eq!(idx.distribution(&white, Site::new(3, 3)).unwrap(), &[1.0, 0.0]);
        let mut g = white.clone();
        g.set(1, 3, 1); // second frame of (3, 3) now has one black site
        assert_eq!(idx.distribution(&g, Site::new(3, 3)).unwrap(), &[0.5, 0.5]);
        g.set(2, 3, 1); // first frame no longer all white
        assert_eq!(idx.distribution(&g, Site::new(3, 3)).unwrap(), &[0.0, 1.0]);
    }

    #[test]
    fn uncovered_context_is_an_error() {
        let leaves = vec![PcnNode::from_probs("1:8,0".parse().unwrap(), vec![1.0, 0.0])];
        let pcn = Pcn::new(Alphabet::binary(), FrameMode::Count, leaves, vec![]).unwrap();
        let mut cfg = SimConfig::new(8, 8, 1, 0);
        cfg.init = InitState::Grid(Grid::filled(8, 8, 1, Alphabet::binary()).unwrap());
        assert_eq!(simulate(&pcn, &cfg).unwrap_err().code(), "UNCOVERED_CONTEXT");
    }

    #[test]
    fn index_agrees_with_model_resolution() {
        let pcn = crate::presets::variable_depth_logistic();
        let idx = ContextIndex::new(&pcn).unwrap();
        let g = simulate(&iid(0.5), &SimConfig::new(12, 12, 1, 9)).unwrap().grid;
        for r in 0..12 {
            for c in 0..12 {
                let key = geometry::extract_context(&g, Site::new(r, c), 2, FrameMode::Count, grid::BoundaryPolicy::Mirror)
                    .unwrap();
                let expected = pcn.resolve(&key).unwrap().node().probs.clone();
                assert_eq!(idx.distribution(&g, Site::new(r, c)).unwrap(), &expected[..]);
            }
        }
    }

    #[test]
    fn position_mode_index() {
        // a position model that expands nothing: root only, plus a depth-1
        // position leaf set covering one ring
        let ring: ContextKey = "1:1 0 0 0 0 0 0 0".parse().unwrap();
        let leaves = vec![PcnNode::from_probs(ring, vec![0.0, 1.0])];
        let internal = vec![PcnNode::from_probs(ContextKey::root(), vec![1.0, 0.0])];
        let pcn = Pcn::new(Alphabet::binary(), FrameMode::Position, leaves, internal).unwrap();
        let idx = ContextIndex::new(&pcn).unwrap();
        let mut g = Grid::filled(5, 5, 0, Alphabet::binary()).unwrap();
        assert_eq!(idx.distribution(&g, Site::new(2, 2)).unwrap(), &[1.0, 0.0]);
        g.set(1, 1, 1);
        assert_eq!(idx.distribution(&g, Site::new(2, 2)).unwrap(), &[0.0, 1.0]);
    }
}
