//! Probabilistic context neighborhoods on 2D lattices: counting, PIC-based
//! model selection, MCMC simulation and parametric bootstrap intervals.

pub mod bootstrap;
pub mod counting;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod model;
pub mod presets;
pub mod sampler;
pub mod selection;

pub use counting::{build_count_tree, build_count_tree_sharded, merge_count_trees, CountNode, CountTree};
pub use error::{PcnError, Result};
pub use geometry::{extract_context, is_suffix, ContextKey, FrameKey, FrameMode};
pub use grid::{load_grid, save_grid, Alphabet, BoundaryPolicy, Grid, GridFormat, Site};
pub use model::{Pcn, PcnNode};
pub use sampler::{simulate, ConvergenceTrace, InitState, ScanOrder, SimConfig, SimOutput, UpdateRule};
pub use selection::{exhaustive_pic_oracle, fit, pic, FitConfig, PenaltySize, PicReport};
