//! Synthetic tables with complementary text and vision carriers.
//!
//! The two encodings are asymmetric on purpose:
//!
//! - [`serialize_text`] is content-lossless and layout-implicit — a flat
//!   row-major token stream with `<row>`/`<col>` separators and no
//!   coordinate information beyond what counting separators recovers;
//! - [`VisionCodec::encode`] is layout-lossless and content-lossy — every
//!   cell carries an exact 2-D sinusoidal position code, while its content
//!   channels may be swapped for a random symbol and blurred with noise.
//!
//! Five task kinds probe structure and content along these axes: cell
//! retrieval (content → coordinates), cell extraction (coordinates →
//! content), size recognition, column extraction, and header lookup.

mod io;
#[cfg(test)]
mod tests;

pub use io::{read_dataset, write_dataset};

use crate::error::{Error, Result};
use crate::lm::vocab::{TokenId, Vocab, ALPHABET, MAX_GRID};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

// ── Tables ──────────────────────────────────────────────────────────

/// Rectangular grid of short cell strings over the alphabet.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    rows: usize,
    cols: usize,
    cells: Vec<String>,
}

impl Table {
    pub fn new(rows: usize, cols: usize, cells: Vec<String>) -> Result<Table> {
        if rows == 0 || cols == 0 || rows > MAX_GRID || cols > MAX_GRID {
            return Err(Error::InvalidConfig(format!(
                "table dims {rows}x{cols} outside 1..={MAX_GRID}"
            )));
        }
        if cells.len() != rows * cols {
            return Err(Error::InvalidConfig(format!(
                "cell count {} != {rows}x{cols}",
                cells.len()
            )));
        }
        for cell in &cells {
            if cell.is_empty() || cell.chars().count() > 3 {
                return Err(Error::InvalidConfig(format!(
                    "cell `{cell}` must have 1..=3 symbols"
                )));
            }
            if let Some(bad) = cell.chars().find(|c| !ALPHABET.contains(c)) {
                return Err(Error::InvalidConfig(format!(
                    "cell `{cell}` uses `{bad}` outside the alphabet"
                )));
            }
        }
        Ok(Table { rows, cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of cells; the visual token count.
    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Cell content, 0-based coordinates.
    pub fn cell(&self, r: usize, c: usize) -> &str {
        &self.cells[r * self.cols + c]
    }

    pub fn cells(&self) -> &[String] {
        &self.cells
    }

    /// How many cells hold exactly this string.
    pub fn count_value(&self, value: &str) -> usize {
        self.cells.iter().filter(|c| c.as_str() == value).count()
    }

    /// 0-based (row, col) of the first cell equal to `value`, scanning
    /// row-major.
    pub fn find_value(&self, value: &str) -> Option<(usize, usize)> {
        self.cells
            .iter()
            .position(|c| c == value)
            .map(|i| (i / self.cols, i % self.cols))
    }

    /// Aligned ASCII rendering for human inspection.
    pub fn render_ascii(&self) -> String {
        let mut widths = vec![0usize; self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                widths[c] = widths[c].max(self.cell(r, c).len());
            }
        }
        let mut out = String::new();
        let hline = |out: &mut String| {
            out.push('+');
            for w in &widths {
                out.push_str(&"-".repeat(w + 2));
                out.push('+');
            }
            out.push('\n');
        };
        hline(&mut out);
        for r in 0..self.rows {
            out.push('|');
            for c in 0..self.cols {
                out.push_str(&format!(" {:width$} |", self.cell(r, c), width = widths[c]));
            }
            out.push('\n');
            hline(&mut out);
        }
        out
    }
}

/// Inclusive dimension bounds for generated tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableBounds {
    pub min_rows: usize,
    pub max_rows: usize,
    pub min_cols: usize,
    pub max_cols: usize,
}

impl Default for TableBounds {
    fn default() -> Self {
        TableBounds {
            min_rows: 2,
            max_rows: 4,
            min_cols: 2,
            max_cols: 4,
        }
    }
}

impl TableBounds {
    pub fn validate(&self) -> Result<()> {
        let ok = self.min_rows >= 2
            && self.min_cols >= 2
            && self.min_rows <= self.max_rows
            && self.min_cols <= self.max_cols
            && self.max_rows <= MAX_GRID
            && self.max_cols <= MAX_GRID;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "infeasible table bounds {self:?} (need 2..={MAX_GRID}, min<=max)"
            )))
        }
    }
}

/// Uniform dimensions within bounds, cells of 1..=3 uniform symbols.
pub fn gen_table(rng: &mut ChaCha8Rng, bounds: &TableBounds) -> Result<Table> {
    bounds.validate()?;
    let rows = rng.random_range(bounds.min_rows..=bounds.max_rows);
    let cols = rng.random_range(bounds.min_cols..=bounds.max_cols);
    let mut cells = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        let len = rng.random_range(1..=3usize);
        let cell: String = (0..len)
            .map(|_| ALPHABET[rng.random_range(0..ALPHABET.len())])
            .collect();
        cells.push(cell);
    }
    Table::new(rows, cols, cells)
}

// ── Text carrier ────────────────────────────────────────────────────

/// Row-major serialization: each row opens with `<row>`, cells are spelled
/// symbol-by-symbol and separated by `<col>`. Lossless and layout-implicit.
pub fn serialize_text(table: &Table, vocab: &Vocab) -> Vec<TokenId> {
    let mut out = Vec::new();
    for r in 0..table.rows() {
        out.push(vocab.row_marker());
        for c in 0..table.cols() {
            if c > 0 {
                out.push(vocab.col_marker());
            }
            for ch in table.cell(r, c).chars() {
                out.push(vocab.symbol(ch).expect("cells use alphabet symbols"));
            }
        }
    }
    out
}

/// Inverse of [`serialize_text`]. Rejects anything that is not a
/// well-formed rectangular serialization.
pub fn parse_table_tokens(tokens: &[TokenId], vocab: &Vocab) -> Result<Table> {
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut row: Vec<String> = Vec::new();
    let mut cell = String::new();
    let bad = |msg: &str| Error::LineParse {
        line: 0,
        msg: msg.to_string(),
    };

    let finish_cell = |cell: &mut String, row: &mut Vec<String>| -> Result<()> {
        if cell.is_empty() {
            return Err(bad("empty cell"));
        }
        if cell.chars().count() > 3 {
            return Err(bad("cell longer than 3 symbols"));
        }
        row.push(std::mem::take(cell));
        Ok(())
    };

    for (i, &tok) in tokens.iter().enumerate() {
        if tok == vocab.row_marker() {
            if i > 0 {
                finish_cell(&mut cell, &mut row)?;
                rows.push(std::mem::take(&mut row));
            }
        } else if tok == vocab.col_marker() {
            if rows.is_empty() && row.is_empty() && cell.is_empty() && i == 0 {
                return Err(bad("stream must open with <row>"));
            }
            finish_cell(&mut cell, &mut row)?;
        } else if let Some(sym) = vocab.as_symbol(tok) {
            if rows.is_empty() && row.is_empty() && cell.is_empty() && i == 0 {
                return Err(bad("stream must open with <row>"));
            }
            cell.push(sym);
        } else {
            return Err(bad(&format!("unexpected token id {tok}")));
        }
    }
    if tokens.is_empty() {
        return Err(bad("empty token stream"));
    }
    finish_cell(&mut cell, &mut row)?;
    rows.push(row);

    let n_cols = rows[0].len();
    if rows.iter().any(|r| r.len() != n_cols) {
        return Err(bad("ragged rows"));
    }
    let n_rows = rows.len();
    Table::new(n_rows, n_cols, rows.into_iter().flatten().collect())
        .map_err(|e| bad(&e.to_string()))
}

// ── Vision carrier ──────────────────────────────────────────────────

/// What degrades the vision channel. Positions are never corrupted; the
/// text serializer never embeds 2-D indices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Gaussian noise added to every content channel.
    pub content_noise_std: f64,
    /// Probability a cell's content embedding is replaced by a random
    /// single symbol's embedding.
    pub symbol_swap_prob: f64,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            content_noise_std: 0.5,
            symbol_swap_prob: 0.25,
        }
    }
}

impl CorruptionSpec {
    pub const NONE: CorruptionSpec = CorruptionSpec {
        content_noise_std: 0.0,
        symbol_swap_prob: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.symbol_swap_prob) {
            return Err(Error::InvalidConfig(format!(
                "symbol_swap_prob {} outside [0,1]",
                self.symbol_swap_prob
            )));
        }
        if !(self.content_noise_std >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "content_noise_std {} must be >= 0",
                self.content_noise_std
            )));
        }
        Ok(())
    }
}

/// Pre-projection channel widths.
pub const POS_CHANNELS: usize = 16;
pub const CONTENT_CHANNELS: usize = 48;

/// Seed of the fixed encoder machinery (symbol embeddings, slot signs,
/// projection). Independent of instance seeds by construction.
const CODEC_SEED: u64 = 0x1ab0_c0de;

/// One visual token per cell: exact 2-D position code concatenated with a
/// (possibly corrupted) content embedding, projected to the model width.
#[derive(Clone, Debug)]
pub struct VisualGrid {
    /// n×d projected features, n = rows·cols.
    pub features: Tensor,
    /// n×16 exact position channels (pre-projection).
    pub pos_channels: Tensor,
    /// n×48 content channels after corruption (pre-projection).
    pub content_channels: Tensor,
    /// Which cells had their content embedding swapped.
    pub swapped: Vec<bool>,
}

impl VisualGrid {
    pub fn n(&self) -> usize {
        self.features.rows()
    }
}

/// Fixed seeded encoder: symbol embedding table, per-slot sign vectors,
/// and the projection to model width.
#[derive(Clone, Debug)]
pub struct VisionCodec {
    pub d: usize,
    sym_emb: Vec<f64>,    // 36 × CONTENT_CHANNELS
    slot_signs: Vec<f64>, // 3 × CONTENT_CHANNELS, entries ±1
    proj: Vec<f64>,       // (POS+CONTENT) × d
}

impl VisionCodec {
    pub fn new(d: usize) -> VisionCodec {
        let mut rng = ChaCha8Rng::seed_from_u64(CODEC_SEED);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let sym_emb = (0..ALPHABET.len() * CONTENT_CHANNELS)
            .map(|_| normal.sample(&mut rng))
            .collect();
        let slot_signs = (0..3 * CONTENT_CHANNELS)
            .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
            .collect();
        let width = POS_CHANNELS + CONTENT_CHANNELS;
        let proj_std = 1.0 / (width as f64).sqrt();
        let proj_dist = Normal::new(0.0, proj_std).unwrap();
        let proj = (0..width * d).map(|_| proj_dist.sample(&mut rng)).collect();
        VisionCodec {
            d,
            sym_emb,
            slot_signs,
            proj,
        }
    }

    /// Exact sinusoidal code of a 1-based (row, col): four frequencies per
    /// axis, sin and cos each.
    fn pos_code(r: usize, c: usize) -> [f64; POS_CHANNELS] {
        let mut out = [0.0; POS_CHANNELS];
        let scales = [1.0, 4.0, 16.0, 64.0];
        for (i, s) in scales.iter().enumerate() {
            out[2 * i] = (r as f64 / s).sin();
            out[2 * i + 1] = (r as f64 / s).cos();
            out[8 + 2 * i] = (c as f64 / s).sin();
            out[8 + 2 * i + 1] = (c as f64 / s).cos();
        }
        out
    }

    fn symbol_row(&self, idx: usize) -> &[f64] {
        &self.sym_emb[idx * CONTENT_CHANNELS..(idx + 1) * CONTENT_CHANNELS]
    }

    /// Clean content embedding: per-slot sign-modulated sum of symbol rows,
    /// so "AB" and "BA" encode differently.
    fn content_embed(&self, cell: &str) -> Vec<f64> {
        let mut out = vec![0.0; CONTENT_CHANNELS];
        for (slot, ch) in cell.chars().enumerate() {
            let idx = ALPHABET.iter().position(|&a| a == ch).expect("alphabet");
            let signs = &self.slot_signs[slot * CONTENT_CHANNELS..(slot + 1) * CONTENT_CHANNELS];
            for (o, (&e, &s)) in out.iter_mut().zip(self.symbol_row(idx).iter().zip(signs)) {
                *o += e * s;
            }
        }
        out
    }

    /// Nearest single symbol to a content-channel row, by L2 distance.
    pub fn nearest_symbol(&self, channels: &[f64]) -> char {
        let mut best = (f64::INFINITY, 0usize);
        for idx in 0..ALPHABET.len() {
            let clean = self.content_embed(&ALPHABET[idx].to_string());
            let dist: f64 = channels
                .iter()
                .zip(&clean)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if dist < best.0 {
                best = (dist, idx);
            }
        }
        ALPHABET[best.1]
    }

    /// Encode a table. `seed` drives only the corruption draws; the
    /// encoder machinery itself is fixed.
    pub fn encode(&self, table: &Table, spec: &CorruptionSpec, seed: u64) -> VisualGrid {
        let n = table.n_cells();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, spec.content_noise_std.max(0.0)).unwrap();
        let width = POS_CHANNELS + CONTENT_CHANNELS;

        let mut pos = Vec::with_capacity(n * POS_CHANNELS);
        let mut content = Vec::with_capacity(n * CONTENT_CHANNELS);
        let mut features = Vec::with_capacity(n * self.d);
        let mut swapped = Vec::with_capacity(n);
        for r in 0..table.rows() {
            for c in 0..table.cols() {
                let p = Self::pos_code(r + 1, c + 1);
                let swap = rng.random::<f64>() < spec.symbol_swap_prob;
                let mut e = if swap {
                    let idx = rng.random_range(0..ALPHABET.len());
                    self.content_embed(&ALPHABET[idx].to_string())
                } else {
                    self.content_embed(table.cell(r, c))
                };
                if spec.content_noise_std > 0.0 {
                    for v in e.iter_mut() {
                        *v += noise.sample(&mut rng);
                    }
                }
                // project [pos; content] to d
                let mut cat = [0.0; POS_CHANNELS + CONTENT_CHANNELS];
                cat[..POS_CHANNELS].copy_from_slice(&p);
                cat[POS_CHANNELS..].copy_from_slice(&e);
                for j in 0..self.d {
                    let mut acc = 0.0;
                    for (i, &x) in cat.iter().enumerate() {
                        acc += x * self.proj[i * self.d + j];
                    }
                    features.push(acc);
                }
                let _ = width;
                pos.extend_from_slice(&p);
                content.extend_from_slice(&e);
                swapped.push(swap);
            }
        }
        VisualGrid {
            features: Tensor::from_vec(vec![n, self.d], features).unwrap(),
            pos_channels: Tensor::from_vec(vec![n, POS_CHANNELS], pos).unwrap(),
            content_channels: Tensor::from_vec(vec![n, CONTENT_CHANNELS], content).unwrap(),
            swapped,
        }
    }
}

/// Encode with the default model width of 64.
pub fn encode_vision(table: &Table, spec: &CorruptionSpec, seed: u64) -> VisualGrid {
    VisionCodec::new(64).encode(table, spec, seed)
}

// ── Task instances ──────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Content → coordinates, 1–3 queried cells, scored per coordinate.
    Tcr,
    /// Coordinates → content.
    Tce,
    /// Table size.
    Tsr,
    /// All cells of one column.
    Rce,
    /// Value at the intersection of a row header and a column header.
    LookupQa,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Tcr,
        TaskKind::Tce,
        TaskKind::Tsr,
        TaskKind::Rce,
        TaskKind::LookupQa,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskKind::Tcr => "tcr",
            TaskKind::Tce => "tce",
            TaskKind::Tsr => "tsr",
            TaskKind::Rce => "rce",
            TaskKind::LookupQa => "lookup_qa",
        }
    }

    pub fn parse(s: &str) -> Result<TaskKind> {
        TaskKind::ALL
            .iter()
            .find(|k| k.as_str() == s)
            .copied()
            .ok_or_else(|| Error::InvalidConfig(format!("unknown task kind `{s}`")))
    }

    fn keyword(&self) -> &'static str {
        match self {
            TaskKind::Tcr => "<tcr>",
            TaskKind::Tce => "<tce>",
            TaskKind::Tsr => "<tsr>",
            TaskKind::Rce => "<rce>",
            TaskKind::LookupQa => "<qa>",
        }
    }
}

/// Structured answer, the scoring ground truth. Coordinates are 1-based.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Gold {
    Coords {
        queries: Vec<String>,
        locs: Vec<(usize, usize)>,
    },
    Cell {
        row: usize,
        col: usize,
        value: String,
    },
    Size {
        rows: usize,
        cols: usize,
    },
    Column {
        col: usize,
        values: Vec<String>,
    },
    Lookup {
        row: usize,
        col: usize,
        value: String,
    },
}

impl Gold {
    /// How many scored items this answer carries.
    pub fn item_count(&self) -> usize {
        match self {
            Gold::Coords { locs, .. } => locs.len(),
            Gold::Column { values, .. } => values.len(),
            _ => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskInstance {
    pub id: String,
    pub kind: TaskKind,
    pub table: Table,
    pub prompt_tokens: Vec<TokenId>,
    pub target_tokens: Vec<TokenId>,
    pub gold: Gold,
}

impl TaskInstance {
    /// Seed for this instance's vision encoding, derived from its id so the
    /// grid is stable across runs and processes (FNV-1a over the id bytes).
    pub fn vision_seed(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.id.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}

/// Render a prompt and target in the task's fixed answer grammar.
pub fn make_instance(
    table: &Table,
    kind: TaskKind,
    rng: &mut ChaCha8Rng,
    vocab: &Vocab,
) -> Result<TaskInstance> {
    let kw = vocab.id(kind.keyword()).expect("task keyword in vocab");
    let (prompt, target, gold) = match kind {
        TaskKind::Tcr => {
            // only cells whose content is unique in the grid may be queried
            let unique: Vec<usize> = (0..table.n_cells())
                .filter(|&i| table.count_value(&table.cells()[i]) == 1)
                .collect();
            if unique.is_empty() {
                return Err(Error::Infeasible(
                    "tcr needs at least one unique cell value".into(),
                ));
            }
            let n_q = rng.random_range(1..=unique.len().min(3));
            let mut picked = unique;
            picked.shuffle(rng);
            picked.truncate(n_q);

            let mut prompt = vec![kw];
            let mut target = Vec::new();
            let mut queries = Vec::new();
            let mut locs = Vec::new();
            for &idx in &picked {
                let (r, c) = (idx / table.cols(), idx % table.cols());
                let value = table.cells()[idx].clone();
                prompt.push(vocab.sep());
                prompt.extend(vocab.encode_cell(&value)?);
                target.push(vocab.coord_row(r + 1)?);
                target.push(vocab.coord_col(c + 1)?);
                queries.push(value);
                locs.push((r + 1, c + 1));
            }
            (prompt, target, Gold::Coords { queries, locs })
        }
        TaskKind::Tce => {
            let r = rng.random_range(0..table.rows());
            let c = rng.random_range(0..table.cols());
            let prompt = vec![kw, vocab.coord_row(r + 1)?, vocab.coord_col(c + 1)?];
            let value = table.cell(r, c).to_string();
            let target = vocab.encode_cell(&value)?;
            (
                prompt,
                target,
                Gold::Cell {
                    row: r + 1,
                    col: c + 1,
                    value,
                },
            )
        }
        TaskKind::Tsr => {
            let prompt = vec![kw];
            let target = vec![
                vocab.coord_row(table.rows())?,
                vocab.coord_col(table.cols())?,
            ];
            (
                prompt,
                target,
                Gold::Size {
                    rows: table.rows(),
                    cols: table.cols(),
                },
            )
        }
        TaskKind::Rce => {
            let c = rng.random_range(0..table.cols());
            let prompt = vec![kw, vocab.coord_col(c + 1)?];
            let mut target = Vec::new();
            let mut values = Vec::new();
            for r in 0..table.rows() {
                if r > 0 {
                    target.push(vocab.col_marker());
                }
                target.extend(vocab.encode_cell(table.cell(r, c))?);
                values.push(table.cell(r, c).to_string());
            }
            (prompt, target, Gold::Column { col: c + 1, values })
        }
        TaskKind::LookupQa => {
            if table.rows() < 2 || table.cols() < 2 {
                return Err(Error::Infeasible("lookup_qa needs a 2x2 table".into()));
            }
            // row headers: column 0 below the corner; col headers: row 0
            // right of the corner; both must identify their line uniquely
            let row_ok = |r: usize| (1..table.rows()).filter(|&i| table.cell(i, 0) == table.cell(r, 0)).count() == 1;
            let col_ok = |c: usize| (1..table.cols()).filter(|&j| table.cell(0, j) == table.cell(0, c)).count() == 1;
            let candidates: Vec<(usize, usize)> = (1..table.rows())
                .flat_map(|r| (1..table.cols()).map(move |c| (r, c)))
                .filter(|&(r, c)| row_ok(r) && col_ok(c))
                .collect();
            if candidates.is_empty() {
                return Err(Error::Infeasible(
                    "lookup_qa needs unique row and column headers".into(),
                ));
            }
            let (r, c) = candidates[rng.random_range(0..candidates.len())];
            let mut prompt = vec![kw];
            prompt.extend(vocab.encode_cell(table.cell(r, 0))?);
            prompt.push(vocab.sep());
            prompt.extend(vocab.encode_cell(table.cell(0, c))?);
            let value = table.cell(r, c).to_string();
            let target = vocab.encode_cell(&value)?;
            (
                prompt,
                target,
                Gold::Lookup {
                    row: r + 1,
                    col: c + 1,
                    value,
                },
            )
        }
    };
    Ok(TaskInstance {
        id: String::new(),
        kind,
        table: table.clone(),
        prompt_tokens: prompt,
        target_tokens: target,
        gold,
    })
}

/// Per-item correctness of a decoded prediction. Never fails: anything
/// unparsable scores false on the affected items.
pub fn score_instance(prediction: &[TokenId], instance: &TaskInstance, vocab: &Vocab) -> Vec<bool> {
    // trim at the first <eos>
    let pred: &[TokenId] = match prediction.iter().position(|&t| t == vocab.eos()) {
        Some(i) => &prediction[..i],
        None => prediction,
    };
    match &instance.gold {
        Gold::Coords { locs, .. } => locs
            .iter()
            .enumerate()
            .map(|(i, &(gr, gc))| {
                let (Some(&pr), Some(&pc)) = (pred.get(2 * i), pred.get(2 * i + 1)) else {
                    return false;
                };
                vocab.as_coord_row(pr) == Some(gr) && vocab.as_coord_col(pc) == Some(gc)
            })
            .collect(),
        Gold::Column { values, .. } => {
            let mut cells: Vec<Vec<TokenId>> = vec![Vec::new()];
            for &t in pred {
                if t == vocab.col_marker() {
                    cells.push(Vec::new());
                } else {
                    cells.last_mut().unwrap().push(t);
                }
            }
            values
                .iter()
                .enumerate()
                .map(|(i, v)| match cells.get(i) {
                    Some(toks) => token_string(toks, vocab).as_deref() == Some(v.as_str()),
                    None => false,
                })
                .collect()
        }
        // exact match of the full token sequence
        Gold::Cell { .. } | Gold::Size { .. } | Gold::Lookup { .. } => {
            vec![pred == instance.target_tokens.as_slice()]
        }
    }
}

/// Symbols-only decode of a token span; None if any token is not a symbol.
fn token_string(tokens: &[TokenId], vocab: &Vocab) -> Option<String> {
    tokens.iter().map(|&t| vocab.as_symbol(t)).collect()
}

// ── Instance generation ─────────────────────────────────────────────

/// Deterministic dataset generation: instance `i` is produced from the
/// sub-seed `derive_seed(seed, offset + i)`, so splits with disjoint offset
/// ranges are disjoint and reproducible. Ids are stamped with the seed.
pub fn gen_instances(
    seed: u64,
    offset: u64,
    count: usize,
    kind: TaskKind,
    bounds: &TableBounds,
    vocab: &Vocab,
) -> Result<Vec<TaskInstance>> {
    bounds.validate()?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let sub = crate::derive_seed(seed, offset + i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(sub);
        let mut made = None;
        for _attempt in 0..100 {
            let table = gen_table(&mut rng, bounds)?;
            match make_instance(&table, kind, &mut rng, vocab) {
                Ok(inst) => {
                    made = Some(inst);
                    break;
                }
                Err(Error::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        let mut inst = made.ok_or_else(|| {
            Error::Infeasible(format!(
                "no feasible {} instance in 100 tables (seed {seed}, index {})",
                kind.as_str(),
                offset + i as u64
            ))
        })?;
        inst.id = format!("{seed:08x}-{}-{:05}", kind.as_str(), offset + i as u64);
        out.push(inst);
    }
    Ok(out)
}
