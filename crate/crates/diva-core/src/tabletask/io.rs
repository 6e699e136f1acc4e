//! Line-delimited dataset files: one JSON record per instance.
//!
//! Reading re-validates everything — table invariants, token ranges against
//! the standard vocabulary, and that the stored target tokens decode to the
//! stored gold under the task grammar — so a dataset file from a different
//! build or a corrupted source fails loudly with a line number.

use super::{score_instance, Gold, Table, TaskInstance, TaskKind};
use crate::error::{Error, Result};
use crate::lm::vocab::{TokenId, Vocab};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    kind: TaskKind,
    grid: Vec<Vec<String>>,
    prompt: Vec<TokenId>,
    target: Vec<TokenId>,
    gold: Gold,
}

pub fn write_dataset(path: impl AsRef<Path>, instances: &[TaskInstance]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for inst in instances {
        let grid = (0..inst.table.rows())
            .map(|r| {
                (0..inst.table.cols())
                    .map(|c| inst.table.cell(r, c).to_string())
                    .collect()
            })
            .collect();
        let rec = Record {
            id: inst.id.clone(),
            kind: inst.kind,
            grid,
            prompt: inst.prompt_tokens.clone(),
            target: inst.target_tokens.clone(),
            gold: inst.gold.clone(),
        };
        let line = serde_json::to_string(&rec)
            .map_err(|e| Error::LineParse { line: 0, msg: e.to_string() })?;
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<TaskInstance>> {
    let reader = BufReader::new(File::open(path)?);
    read_dataset_from(reader)
}

pub fn read_dataset_from(reader: impl BufRead) -> Result<Vec<TaskInstance>> {
    let vocab = Vocab::standard();
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        if line.is_empty() {
            return Err(Error::LineParse {
                line: lineno,
                msg: "empty record line".into(),
            });
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::LineParse {
            line: lineno,
            msg: e.to_string(),
        })?;
        out.push(instance_from_record(rec, &vocab).map_err(|e| Error::LineParse {
            line: lineno,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

fn instance_from_record(rec: Record, vocab: &Vocab) -> Result<TaskInstance> {
    let rows = rec.grid.len();
    let cols = rec.grid.first().map(|r| r.len()).unwrap_or(0);
    if rec.grid.iter().any(|r| r.len() != cols) {
        return Err(Error::InvalidConfig("ragged grid".into()));
    }
    let table = Table::new(rows, cols, rec.grid.into_iter().flatten().collect())?;
    for &t in rec.prompt.iter().chain(&rec.target) {
        if t as usize >= vocab.len() {
            return Err(Error::TokenOutOfRange(t));
        }
    }
    let inst = TaskInstance {
        id: rec.id,
        kind: rec.kind,
        table,
        prompt_tokens: rec.prompt,
        target_tokens: rec.target,
        gold: rec.gold,
    };
    if inst.gold.item_count() == 0 {
        return Err(Error::InvalidConfig("gold with zero items".into()));
    }
    // the stored target must decode to the stored gold
    let self_score = score_instance(&inst.target_tokens, &inst, vocab);
    if !self_score.iter().all(|&b| b) {
        return Err(Error::InvalidConfig(
            "target tokens do not decode to gold under the task grammar".into(),
        ));
    }
    Ok(inst)
}
