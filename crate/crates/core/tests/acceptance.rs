//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and a summary line.
//!
//! `PCN_SKIP_SLOW=1` skips the bootstrap coverage study.
//! `PCN_ACCEPTANCE_STRICT=1` makes any failed criterion a non-zero exit.

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pcn::bootstrap::{bootstrap_ci, BootConfig};
use pcn::counting::{build_count_tree, build_count_tree_sharded, node_lookup, CountNode, CountTree};
use pcn::geometry::{max_leaves, num_classes};
use pcn::model::Resolved;
use pcn::presets::{full_depth2_logistic, variable_depth_logistic};
use pcn::selection::{exhaustive_pic_oracle, fit_detailed, log_p_tilde, FitOutcome, DEFAULT_ORACLE_BOUND};
use pcn::{
    simulate, Alphabet, BoundaryPolicy, ContextKey, FitConfig, FrameMode, Grid, InitState, Pcn, SimConfig,
};

const ORACLE_PIC_TOL: f64 = 1e-9;
const ORACLE_GAP: f64 = 1e-9;
const ORACLE_MIN_GRIDS: usize = 100;

const SIM1_SIZE: usize = 150;
const SIM1_SWEEPS: usize = 50;
const SIM1_SEED: u64 = 1;
const SIM1_SECOND_ORDER_SHARE: f64 = 0.90;
const SIM1_MIN_OCC_FOR_REQUIRED: u64 = 5;

const ACCURACY_MIN_OCC: u64 = 500;
const ACCURACY_TOL: f64 = 0.05;

const SIM2_SIZE: usize = 200;
const SIM2_SWEEPS: usize = 100;
const SIM2_SEED: u64 = 1;
const SIM2_MIN_SECOND_ORDER: usize = 135;

const COVERAGE_TRUTHS: u64 = 40;
const COVERAGE_REPLICATES: usize = 50;
const COVERAGE_SIZE: usize = 100;
const COVERAGE_DELTA: usize = 3;
const COVERAGE_SWEEPS: usize = 50;
const COVERAGE_MIN_OCC: f64 = 100.0;
const COVERAGE_MIN: f64 = 0.85;

const PROB_SUM_TOL: f64 = 1e-12;
const FACTORIZATION_TOL: f64 = 1e-10;

/// Chi-square critical value, 1 degree of freedom, alpha = 0.01.
const CHI2_1DF_99: f64 = 6.634896601021214;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn random_binary_grid(rng: &mut ChaCha8Rng) -> Grid {
    let rows = rng.gen_range(15..=30);
    let cols = rng.gen_range(15..=30);
    let cells: Vec<u8> = if rng.gen_bool(0.5) {
        let p: f64 = rng.gen_range(0.1..0.9);
        (0..rows * cols).map(|_| rng.gen_bool(p) as u8).collect()
    } else {
        let flip: f64 = rng.gen_range(0.02..0.4);
        (0..rows * cols)
            .map(|i| (((i / cols + i % cols) % 2) as u8) ^ rng.gen_bool(flip) as u8)
            .collect()
    };
    Grid::from_cells(rows, cols, cells, Alphabet::binary()).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut grids = 0;
    let mut comparisons = 0;
    let mut structure_checks = 0;
    let mut failures = Vec::new();
    for g in 0..ORACLE_MIN_GRIDS {
        let grid = random_binary_grid(&mut rng);
        grids += 1;
        for depth in [1, 2] {
            let fitted = fit_detailed(&grid, &FitConfig::with_depth(depth)).unwrap();
            let oracle = match exhaustive_pic_oracle(&fitted.counts, DEFAULT_ORACLE_BOUND) {
                Ok(o) => o,
                Err(_) => continue,
            };
            comparisons += 1;
            let diff = (fitted.report.tree_pic - oracle.report.tree_pic).abs();
            if diff > ORACLE_PIC_TOL {
                failures.push(format!("grid {g} D={depth}: PIC differs by {diff:e}"));
            }
            let gap = oracle.runner_up_pic.map_or(f64::INFINITY, |r| r - oracle.report.tree_pic);
            if gap > ORACLE_GAP {
                structure_checks += 1;
                let leaves: Vec<ContextKey> = fitted.pcn.leaf_keys().into_iter().collect();
                if leaves != oracle.leaves {
                    failures.push(format!("grid {g} D={depth}: structures differ"));
                }
            }
        }
    }
    outcome(
        failures.is_empty() && grids >= ORACLE_MIN_GRIDS && comparisons >= ORACLE_MIN_GRIDS,
        format!(
            "{grids} grids, {comparisons} prune/oracle comparisons, {structure_checks} structure checks, {} mismatches {}",
            failures.len(),
            failures.first().cloned().unwrap_or_default()
        ),
    )
}

fn first_order_expansions(pcn: &Pcn) -> Vec<ContextKey> {
    pcn.internal_keys().into_iter().filter(|k| k.order() == 1).collect()
}

fn keys_to_string(keys: &[ContextKey]) -> String {
    let v: Vec<String> = keys.iter().map(|k| k.to_string()).collect();
    format!("[{}]", v.join(" "))
}

fn sim1_fit() -> FitOutcome {
    let truth = variable_depth_logistic();
    let sample = simulate(&truth, &SimConfig::new(SIM1_SIZE, SIM1_SIZE, SIM1_SWEEPS, SIM1_SEED))
        .unwrap()
        .grid;
    fit_detailed(&sample, &FitConfig::with_depth(2)).unwrap()
}

fn sim1_recovery(fitted: &FitOutcome) -> Outcome {
    let truth = variable_depth_logistic();
    let want = first_order_expansions(&truth);
    let got = first_order_expansions(&fitted.pcn);
    let classes_ok = want == got;

    // second-order truth leaves seen often enough must be fitted leaves
    let fitted_leaves = fitted.pcn.leaf_keys();
    let mut required = 0;
    let mut recovered = 0;
    for leaf in truth.leaves().iter().filter(|l| l.key.order() == 2) {
        let n = node_lookup(&fitted.counts, &leaf.key).map_or(0, |n| n.n_occ);
        if n == 0 {
            continue;
        }
        let hit = fitted_leaves.contains(&leaf.key);
        if n >= SIM1_MIN_OCC_FOR_REQUIRED || hit {
            required += 1;
            recovered += hit as usize;
        }
    }
    let share = if required == 0 { 0.0 } else { recovered as f64 / required as f64 };
    outcome(
        classes_ok && share >= SIM1_SECOND_ORDER_SHARE,
        format!(
            "expanded first-order classes {} (truth {}), second-order recovered {recovered}/{required} = {share:.3} (need {SIM1_SECOND_ORDER_SHARE})",
            keys_to_string(&got),
            keys_to_string(&want)
        ),
    )
}

/// The truth's conditional probability of black for a fitted context. A
/// context coarser than the truth gets the average of the truth leaves
/// below it, weighted by their counts in the sample.
fn truth_black(truth: &Pcn, node: &CountNode) -> Option<f64> {
    if let Ok(Resolved::Leaf(l)) = truth.resolve(&node.key) {
        return Some(l.probs[1]);
    }
    if node.children.is_empty() || node.n_occ == 0 {
        return None;
    }
    let mut acc = 0.0;
    for c in node.children.values() {
        acc += c.n_occ as f64 * truth_black(truth, c)?;
    }
    Some(acc / node.n_occ as f64)
}

fn probability_accuracy(fitted: &FitOutcome) -> Outcome {
    let truth = variable_depth_logistic();
    let mut checked = 0;
    let mut worst = (0.0f64, String::new());
    let mut failures = 0;
    for leaf in fitted.pcn.leaves().iter().filter(|l| l.n_occ >= ACCURACY_MIN_OCC) {
        let node = node_lookup(&fitted.counts, &leaf.key).unwrap();
        let Some(p) = truth_black(&truth, node) else {
            failures += 1;
            continue;
        };
        checked += 1;
        let err = (leaf.probs[1] - p).abs();
        if err > ACCURACY_TOL {
            failures += 1;
        }
        if err > worst.0 {
            worst = (err, format!("{} (n={}, fit {:.4}, truth {:.4})", leaf.key, leaf.n_occ, leaf.probs[1], p));
        }
    }
    outcome(
        failures == 0 && checked > 0,
        format!(
            "{checked} contexts with n_occ >= {ACCURACY_MIN_OCC}, {failures} beyond {ACCURACY_TOL}; worst {:.4} at {}",
            worst.0, worst.1
        ),
    )
}

fn sim2_regime() -> Outcome {
    let truth = full_depth2_logistic();
    let sample = simulate(&truth, &SimConfig::new(SIM2_SIZE, SIM2_SIZE, SIM2_SWEEPS, SIM2_SEED))
        .unwrap()
        .grid;
    let fitted = fit_detailed(&sample, &FitConfig::with_depth(2)).unwrap();
    let second = fitted.pcn.leaves().iter().filter(|l| l.key.order() == 2).count();
    let observed: usize = fitted.counts.root.children.values().map(|c| c.children.len()).sum();
    let want = first_order_expansions(&truth);
    let got = first_order_expansions(&fitted.pcn);
    let missing: Vec<ContextKey> = want.iter().filter(|k| !got.contains(k)).cloned().collect();
    outcome(
        second >= SIM2_MIN_SECOND_ORDER && missing.is_empty(),
        format!(
            "{second} second-order leaves (need {SIM2_MIN_SECOND_ORDER}, {observed} observed), unexpanded truth classes {}",
            keys_to_string(&missing)
        ),
    )
}

fn bootstrap_coverage() -> Outcome {
    let truth = variable_depth_logistic();
    let mut hit = 0usize;
    let mut total = 0usize;
    let mut excluded = 0usize;
    for t in 0..COVERAGE_TRUTHS {
        let sample = simulate(&truth, &SimConfig::new(COVERAGE_SIZE, COVERAGE_SIZE, SIM1_SWEEPS, 1000 + t))
            .unwrap()
            .grid;
        let fitted = fit_detailed(&sample, &FitConfig::with_depth(2)).unwrap();
        let mut cfg = BootConfig::new(COVERAGE_SIZE, COVERAGE_SIZE, COVERAGE_DELTA, 5000 + t);
        cfg.replicates = COVERAGE_REPLICATES;
        cfg.sweeps = COVERAGE_SWEEPS;
        cfg.refit = true;
        cfg.observed = Some(sample);
        let table = bootstrap_ci(&fitted.pcn, &cfg).unwrap();
        excluded += table.excluded;
        for row in &table.rows {
            let Some(iv) = row.interval else { continue };
            if row.n_occ_median < COVERAGE_MIN_OCC {
                continue;
            }
            // contexts coarser than the truth have no single true value
            let key: ContextKey = row.context.parse().unwrap();
            let Ok(Resolved::Leaf(leaf)) = truth.resolve(&key) else { continue };
            let a = truth.alphabet().index_of(&row.symbol).unwrap() as usize;
            total += 1;
            if iv.lower <= leaf.probs[a] && leaf.probs[a] <= iv.upper {
                hit += 1;
            }
        }
    }
    let cov = if total == 0 { 0.0 } else { hit as f64 / total as f64 };
    outcome(
        total > 0 && cov >= COVERAGE_MIN,
        format!(
            "coverage {hit}/{total} = {cov:.3} (need {COVERAGE_MIN}); {excluded} of {} replicates excluded by refit",
            COVERAGE_TRUTHS as usize * COVERAGE_REPLICATES
        ),
    )
}

fn combinatorics() -> Outcome {
    let got = [
        num_classes(1, 2, FrameMode::Count).unwrap(),
        num_classes(2, 2, FrameMode::Count).unwrap(),
        max_leaves(2, 2, FrameMode::Count).unwrap(),
        num_classes(1, 2, FrameMode::Position).unwrap(),
    ];
    let want = [9u128, 17, 153, 256];
    outcome(got == want, format!("{got:?} vs {want:?}"))
}

fn hierarchical_ok(node: &CountNode, depth: usize) -> bool {
    if node.order() < depth {
        let n: u64 = node.children.values().map(|c| c.n_occ).sum();
        if n != node.n_occ {
            return false;
        }
        for a in 0..node.center_counts.len() {
            let s: u64 = node.children.values().map(|c| c.center_counts[a]).sum();
            if s != node.center_counts[a] {
                return false;
            }
        }
    }
    node.children.values().all(|c| hierarchical_ok(c, depth))
}

fn identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let truth = variable_depth_logistic();
    let mut problems = Vec::new();
    for i in 0..6u64 {
        let grid = if i % 2 == 0 {
            random_binary_grid(&mut rng)
        } else {
            simulate(&truth, &SimConfig::new(60, 60, 20, i)).unwrap().grid
        };
        let fitted = fit_detailed(&grid, &FitConfig::with_depth(2)).unwrap();
        for l in fitted.pcn.leaves() {
            let s: f64 = l.probs.iter().sum();
            if (s - 1.0).abs() > PROB_SUM_TOL {
                problems.push(format!("row sum {s} at {}", l.key));
            }
        }
        if !hierarchical_ok(&fitted.counts.root, fitted.counts.max_depth) {
            problems.push(format!("grid {i}: count tree not hierarchical"));
        }
        // -PIC equals the sum of penalized leaf scores
        let n = fitted.report.penalty_n;
        let by_leaves: f64 = fitted
            .pcn
            .leaves()
            .iter()
            .map(|l| log_p_tilde(node_lookup(&fitted.counts, &l.key).unwrap(), n, 2))
            .sum();
        if (by_leaves + fitted.report.tree_pic).abs() > FACTORIZATION_TOL {
            problems.push(format!("grid {i}: factorization off by {:e}", by_leaves + fitted.report.tree_pic));
        }
        let trees: Vec<CountTree> = [1, 2, 8]
            .iter()
            .map(|&w| build_count_tree_sharded(&grid, 2, FrameMode::Count, BoundaryPolicy::InteriorOnly, w).unwrap())
            .collect();
        let single = build_count_tree(&grid, 2, FrameMode::Count, BoundaryPolicy::InteriorOnly).unwrap();
        let dumps: Vec<String> = trees
            .iter()
            .chain(std::iter::once(&single))
            .map(|t| serde_json::to_string(&t.to_dump()).unwrap())
            .collect();
        if dumps.windows(2).any(|w| w[0] != w[1]) {
            problems.push(format!("grid {i}: sharded counts differ"));
        }
    }
    outcome(
        problems.is_empty(),
        format!("6 grids; {}", if problems.is_empty() { "all identities hold".into() } else { problems.join("; ") }),
    )
}

fn sampler_checks() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;

    let p_black = 0.3;
    let iid = Pcn::iid(Alphabet::binary(), vec![1.0 - p_black, p_black]).unwrap();
    let out = simulate(&iid, &SimConfig::new(100, 100, 1, 12)).unwrap();
    let counts = out.grid.symbol_counts();
    let n = 10_000.0;
    let chi2: f64 = [(counts[0] as f64, 1.0 - p_black), (counts[1] as f64, p_black)]
        .iter()
        .map(|&(o, p)| (o - n * p).powi(2) / (n * p))
        .sum();
    pass &= chi2 < CHI2_1DF_99;
    notes.push(format!("chi2 {chi2:.3} < {CHI2_1DF_99:.3}"));

    let truth = variable_depth_logistic();
    let cfg = SimConfig::new(80, 80, 10, 99);
    let a = simulate(&truth, &cfg).unwrap();
    let b = simulate(&truth, &cfg).unwrap();
    let same = a.grid == b.grid && a.trace == b.trace;
    pass &= same;
    notes.push(format!("seed determinism {same}"));

    // a lake in the middle and a strip along one edge stay masked
    let mut init = simulate(&iid, &SimConfig::new(120, 120, 1, 3)).unwrap().grid;
    for r in 0..120usize {
        for c in 0..120usize {
            let dr = r as f64 - 60.0;
            let dc = c as f64 - 50.0;
            if dr * dr / 400.0 + dc * dc / 900.0 < 1.0 || c >= 112 {
                init.set(r, c, pcn::grid::MASKED);
            }
        }
    }
    let mut cfg = SimConfig::new(120, 120, 20, 4);
    cfg.init = InitState::Grid(init.clone());
    let out = simulate(&truth, &cfg).unwrap();
    let conserved = (0..120).all(|r| (0..120).all(|c| init.is_masked(r, c) == out.grid.is_masked(r, c)));
    pass &= conserved && init.masked_count() > 0;
    notes.push(format!("{} masked cells conserved {conserved}", init.masked_count()));

    outcome(pass, notes.join(", "))
}

fn main() -> ExitCode {
    let skip_slow = std::env::var("PCN_SKIP_SLOW").is_ok_and(|v| v == "1");
    let start = Instant::now();
    let sim1 = sim1_fit();
    let mut results: Vec<(usize, &str, Option<Outcome>)> = vec![
        (1, "oracle equivalence", Some(oracle_equivalence())),
        (2, "variable-depth recovery", Some(sim1_recovery(&sim1))),
        (3, "probability accuracy", Some(probability_accuracy(&sim1))),
        (4, "full depth-2 regime", Some(sim2_regime())),
    ];
    results.push((5, "bootstrap coverage", (!skip_slow).then(bootstrap_coverage)));
    results.push((6, "combinatorics", Some(combinatorics())));
    results.push((7, "identities", Some(identities())));
    results.push((8, "sampler checks", Some(sampler_checks())));

    let mut failed = 0;
    for (id, name, res) in &results {
        match res {
            Some(o) => {
                println!("criterion {id} {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
                failed += (!o.pass) as usize;
            }
            None => println!("criterion {id} {name}: SKIP (PCN_SKIP_SLOW=1)"),
        }
    }
    println!("acceptance: {} failed, {:.1}s", failed, start.elapsed().as_secs_f64());
    let strict = std::env::var("PCN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed == 0 || !strict {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
