//! Lattice data model: alphabets, grids with masked cells, boundary
//! policies, and the plain-text grid format.
//!
//! Grid files are UTF-8 text with one lattice row per line. Tokens are
//! separated by commas and/or whitespace, so the same reader accepts both the
//! whitespace "text-grid" layout and CSV. Masked cells (for example water in
//! a burned-area map) are written with a configurable mask token.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{PcnError, Result};

/// Cell value used for masked sites.
pub const MASKED: u8 = u8::MAX;

/// Default token for masked cells in grid files.
pub const DEFAULT_MASK_TOKEN: &str = "NA";

/// Ordered, duplicate-free list of symbol labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new<S: Into<String>>(symbols: impl IntoIterator<Item = S>) -> Result<Self> {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.len() < 2 {
            return Err(PcnError::Alphabet(format!(
                "need at least 2 symbols, got {}",
                symbols.len()
            )));
        }
        if symbols.len() >= MASKED as usize {
            return Err(PcnError::Alphabet(format!(
                "at most {} symbols are supported",
                MASKED as usize - 1
            )));
        }
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s.contains(|c: char| c == ',' || c.is_whitespace()) {
                return Err(PcnError::Alphabet(format!("invalid symbol label {s:?}")));
            }
            if symbols[..i].contains(s) {
                return Err(PcnError::Alphabet(format!("duplicate symbol {s:?}")));
            }
        }
        Ok(Alphabet { symbols })
    }

    /// Parses a comma-separated label list such as `"white,black"`.
    pub fn parse(list: &str) -> Result<Self> {
        Alphabet::new(list.split(',').map(str::trim))
    }

    /// The `{white, black}` alphabet used throughout the binary examples.
    pub fn binary() -> Self {
        Alphabet::new(["white", "black"]).expect("static alphabet")
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, label: &str) -> Option<u8> {
        self.symbols.iter().position(|s| s == label).map(|i| i as u8)
    }

    pub fn label(&self, index: u8) -> &str {
        &self.symbols[index as usize]
    }
}

impl TryFrom<Vec<String>> for Alphabet {
    type Error = PcnError;

    fn try_from(v: Vec<String>) -> Result<Self> {
        Alphabet::new(v)
    }
}

impl From<Alphabet> for Vec<String> {
    fn from(a: Alphabet) -> Self {
        a.symbols
    }
}

impl fmt::Display for Alphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.symbols.join(","))
    }
}

/// A lattice coordinate, zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Site {
    pub row: usize,
    pub col: usize,
}

impl Site {
    pub fn new(row: usize, col: usize) -> Self {
        Site { row, col }
    }
}

/// How neighborhoods that cross the edge of the grid are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Only sites whose whole neighborhood lies inside the grid are centers.
    #[default]
    InteriorOnly,
    /// Out-of-range neighbors are read by reflecting about the edge.
    Mirror,
    /// The outer `margin` ring of the grid is context only; centers are the
    /// core sites.
    Buffer { margin: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFormat {
    Text,
    Csv,
}

impl GridFormat {
    /// `.csv` files are CSV, everything else is the whitespace text grid.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => GridFormat::Csv,
            _ => GridFormat::Text,
        }
    }

    fn separator(self) -> &'static str {
        match self {
            GridFormat::Text => " ",
            GridFormat::Csv => ",",
        }
    }
}

/// Rectangular lattice of symbol indices, row-major, with optional masked
/// cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    cells: Vec<u8>,
    alphabet: Alphabet,
    mask_substitute: u8,
}

impl Grid {
    /// Builds a grid from row-major cells; `MASKED` marks masked cells.
    pub fn from_cells(rows: usize, cols: usize, cells: Vec<u8>, alphabet: Alphabet) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(PcnError::EmptySample);
        }
        if cells.len() != rows * cols {
            return Err(PcnError::Shape {
                row: rows,
                expected: rows * cols,
                found: cells.len(),
            });
        }
        let k = alphabet.size() as u8;
        if let Some(pos) = cells.iter().position(|&c| c != MASKED && c >= k) {
            return Err(PcnError::Parse {
                row: pos / cols + 1,
                col: pos % cols + 1,
                token: cells[pos].to_string(),
            });
        }
        Ok(Grid {
            rows,
            cols,
            cells,
            alphabet,
            mask_substitute: 0,
        })
    }

    pub fn filled(rows: usize, cols: usize, symbol: u8, alphabet: Alphabet) -> Result<Self> {
        Grid::from_cells(rows, cols, vec![symbol; rows * cols], alphabet)
    }

    /// Sets the symbol that masked cells read as when they appear inside a
    /// neighborhood.
    pub fn with_mask_substitute(mut self, symbol: u8) -> Result<Self> {
        if symbol as usize >= self.alphabet.size() {
            return Err(PcnError::Config(format!(
                "mask substitute {symbol} outside alphabet of size {}",
                self.alphabet.size()
            )));
        }
        self.mask_substitute = symbol;
        Ok(self)
    }

    /// Parses grid text. Rows are lines; blank lines are skipped.
    pub fn parse(text: &str, alphabet: &Alphabet, mask_token: Option<&str>) -> Result<Self> {
        let mut cells = Vec::new();
        let mut cols = None;
        let mut rows = 0;
        for line in text.lines() {
            let tokens: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .collect();
            if tokens.is_empty() {
                continue;
            }
            rows += 1;
            match cols {
                None => cols = Some(tokens.len()),
                Some(expected) if expected != tokens.len() => {
                    return Err(PcnError::Shape {
                        row: rows,
                        expected,
                        found: tokens.len(),
                    })
                }
                _ => {}
            }
            for (c, token) in tokens.iter().enumerate() {
                let cell = if Some(*token) == mask_token {
                    MASKED
                } else {
                    alphabet.index_of(token).ok_or_else(|| PcnError::Parse {
                        row: rows,
                        col: c + 1,
                        token: token.to_string(),
                    })?
                };
                cells.push(cell);
            }
        }
        match cols {
            None => Err(PcnError::EmptySample),
            Some(cols) => Grid::from_cells(rows, cols, cells, alphabet.clone()),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn mask_substitute(&self) -> u8 {
        self.mask_substitute
    }

    /// Symbol index at a site, `None` when masked.
    pub fn get(&self, row: usize, col: usize) -> Option<u8> {
        let v = self.cells[row * self.cols + col];
        (v != MASKED).then_some(v)
    }

    pub fn is_masked(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.cols + col] == MASKED
    }

    /// Symbol as seen from a neighboring site: masked cells read as the
    /// substitute symbol.
    #[inline]
    pub fn neighbor_symbol(&self, row: usize, col: usize) -> u8 {
        let v = self.cells[row * self.cols + col];
        if v == MASKED {
            self.mask_substitute
        } else {
            v
        }
    }

    pub fn set(&mut self, row: usize, col: usize, value: u8) {
        debug_assert!(value == MASKED || (value as usize) < self.alphabet.size());
        self.cells[row * self.cols + col] = value;
    }

    pub fn masked_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c == MASKED).count()
    }

    /// Number of unmasked cells holding each symbol.
    pub fn symbol_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.alphabet.size()];
        for &c in &self.cells {
            if c != MASKED {
                counts[c as usize] += 1;
            }
        }
        counts
    }

    /// Copies the rectangle starting at (`row`, `col`).
    pub fn window(&self, row: usize, col: usize, rows: usize, cols: usize) -> Result<Grid> {
        if row + rows > self.rows || col + cols > self.cols {
            return Err(PcnError::Margin {
                margin: 0,
                rows: self.rows,
                cols: self.cols,
            });
        }
        let mut cells = Vec::with_capacity(rows * cols);
        for r in row..row + rows {
            cells.extend_from_slice(&self.cells[r * self.cols + col..r * self.cols + col + cols]);
        }
        Ok(Grid {
            rows,
            cols,
            cells,
            alphabet: self.alphabet.clone(),
            mask_substitute: self.mask_substitute,
        })
    }

    pub fn to_text(&self, format: GridFormat, mask_token: &str) -> String {
        let mut out = String::with_capacity(self.cells.len() * 4);
        for r in 0..self.rows {
            for c in 0..self.cols {
                if c > 0 {
                    out.push_str(format.separator());
                }
                match self.get(r, c) {
                    Some(s) => out.push_str(self.alphabet.label(s)),
                    None => out.push_str(mask_token),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn load_grid(
    path: &Path,
    alphabet: &Alphabet,
    mask_token: Option<&str>,
) -> Result<Grid> {
    let text = fs::read_to_string(path)?;
    Grid::parse(&text, alphabet, mask_token)
}

pub fn save_grid(grid: &Grid, path: &Path, format: GridFormat, mask_token: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(grid.to_text(format, mask_token).as_bytes())?;
    Ok(())
}

/// Reflects an out-of-range index about the nearest edge without repeating
/// the edge cell: -1 maps to 1, n maps to n-2.
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let r = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&r), "reflection out of range");
    r as usize
}

/// Pads the grid by `margin` cells on every side with its mirror image.
pub fn mirror_pad(grid: &Grid, margin: usize) -> Result<Grid> {
    if margin >= grid.rows.min(grid.cols) {
        return Err(PcnError::Margin {
            margin,
            rows: grid.rows,
            cols: grid.cols,
        });
    }
    let rows = grid.rows + 2 * margin;
    let cols = grid.cols + 2 * margin;
    let m = margin as isize;
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let sr = reflect(r as isize - m, grid.rows);
        for c in 0..cols {
            let sc = reflect(c as isize - m, grid.cols);
            cells.push(grid.cells[sr * grid.cols + sc]);
        }
    }
    Ok(Grid {
        rows,
        cols,
        cells,
        alphabet: grid.alphabet.clone(),
        mask_substitute: grid.mask_substitute,
    })
}

/// Half-open row and column ranges of sites eligible as centers, ignoring
/// masks. Empty when the policy cannot resolve a neighborhood of `depth`.
pub(crate) fn center_region(
    grid: &Grid,
    depth: usize,
    policy: BoundaryPolicy,
) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
    let empty = (0..0, 0..0);
    match policy {
        BoundaryPolicy::InteriorOnly => {
            if grid.rows < 2 * depth + 1 || grid.cols < 2 * depth + 1 {
                return empty;
            }
            (depth..grid.rows - depth, depth..grid.cols - depth)
        }
        BoundaryPolicy::Mirror => {
            if depth >= grid.rows.min(grid.cols) {
                return empty;
            }
            (0..grid.rows, 0..grid.cols)
        }
        BoundaryPolicy::Buffer { margin } => {
            if margin < depth || grid.rows <= 2 * margin || grid.cols <= 2 * margin {
                return empty;
            }
            (margin..grid.rows - margin, margin..grid.cols - margin)
        }
    }
}

/// Non-masked sites whose order-`depth` neighborhood resolves under
/// `policy`, in row-major order.
pub fn valid_centers(grid: &Grid, depth: usize, policy: BoundaryPolicy) -> Vec<Site> {
    let (rows, cols) = center_region(grid, depth, policy);
    let mut sites = Vec::new();
    for r in rows {
        for c in cols.clone() {
            if !grid.is_masked(r, c) {
                sites.push(Site::new(r, c));
            }
        }
    }
    sites
}

pub fn is_valid_center(grid: &Grid, site: Site, depth: usize, policy: BoundaryPolicy) -> bool {
    let (rows, cols) = center_region(grid, depth, policy);
    rows.contains(&site.row) && cols.contains(&site.col) && !grid.is_masked(site.row, site.col)
}
