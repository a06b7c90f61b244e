//! CSV trajectories, JSON reports and run manifests.
//!
//! Trajectory files have a header row, time `t` in the first column and one
//! column per component; numbers are written with 17 significant digits so
//! they read back bit for bit.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fictitious::IterationRecord;
use crate::grid::{AggregateProgress, GridFunction, TimeGrid};

fn io_err(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

#[inline]
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// `prefix_1, ..., prefix_K`.
pub fn regime_columns(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}_{i}")).collect()
}

/// `prefix_j_k` for every ordered pair, row-major.
pub fn pair_columns(prefix: &str, k: usize) -> Vec<String> {
    (1..=k)
        .flat_map(|a| (1..=k).map(move |b| format!("{prefix}_{a}_{b}")))
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Parse {
            line: pos.line() as usize,
            column: 1,
            message: e.to_string(),
        },
        None => io_err(path, e),
    }
}

/// Writes `columns` side by side, every `stride`-th node plus the last.
pub fn write_grid_csv(path: &Path, names: &[String], columns: &[&GridFunction], stride: usize) -> Result<()> {
    let first = columns
        .first()
        .ok_or_else(|| Error::Config("no columns to write".into()))?;
    let grid = *first.grid();
    if columns.iter().any(|c| c.grid() != &grid) {
        return Err(Error::GridMismatch("columns are on different grids".into()));
    }
    let width: usize = columns.iter().map(|c| c.width()).sum();
    if names.len() != width {
        return Err(Error::Config(format!(
            "{} column names for {width} columns",
            names.len()
        )));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(std::iter::once("t").chain(names.iter().map(String::as_str)))
        .map_err(|e| csv_err(path, e))?;
    let stride = stride.max(1);
    let last = grid.n_steps();
    let mut row = Vec::with_capacity(width + 1);
    let mut i = 0;
    loop {
        row.clear();
        row.push(num(grid.time(i)));
        for c in columns {
            row.extend(c.node(i).iter().map(|&x| num(x)));
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
        if i == last {
            break;
        }
        i = (i + stride).min(last);
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// A parsed CSV file with a header row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl CsvTable {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Reads a numeric CSV file; errors carry the 1-based line and field.
pub fn read_csv(path: &Path) -> Result<CsvTable> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row = rec
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    column: col + 1,
                    message: format!("not a number: {field:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(CsvTable { header, rows })
}

/// Reads a trajectory written by [`write_grid_csv`] with stride 1 back onto
/// `grid`; all columns after `t` form the components.
pub fn read_grid_csv(path: &Path, grid: &TimeGrid) -> Result<(Vec<String>, GridFunction)> {
    let table = read_csv(path)?;
    if table.header.first().map(String::as_str) != Some("t") {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "first column must be t".into(),
        });
    }
    if table.rows.len() != grid.n_nodes() {
        return Err(Error::GridMismatch(format!(
            "{} rows for a grid of {} nodes",
            table.rows.len(),
            grid.n_nodes()
        )));
    }
    let h = grid.step();
    for (i, r) in table.rows.iter().enumerate() {
        if (r[0] - grid.time(i)).abs() > 1e-9 * h.max(grid.time(i)) {
            return Err(Error::GridMismatch(format!(
                "time {} at row {} is off the grid",
                r[0],
                i + 2
            )));
        }
    }
    let width = table.header.len() - 1;
    let values = table.rows.iter().flat_map(|r| r[1..].iter().copied()).collect();
    Ok((table.header[1..].to_vec(), GridFunction::new(*grid, width, values)?))
}

/// Loads an aggregate-progress trajectory (single `rho` column).
pub fn read_progress_csv(path: &Path, grid: &TimeGrid) -> Result<AggregateProgress> {
    let (names, f) = read_grid_csv(path, grid)?;
    if names.len() != 1 {
        return Err(Error::Config(format!(
            "expected one progress column, found {}",
            names.len()
        )));
    }
    AggregateProgress::new(f)
}

pub fn write_iterations_csv(path: &Path, history: &[IterationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["n", "exploitability", "sup_change", "payoff"])
        .map_err(|e| csv_err(path, e))?;
    for r in history {
        w.write_record([r.n.to_string(), num(r.exploitability), num(r.sup_change), num(r.payoff)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Writes a numeric table; integer-valued columns listed in `counts` are
/// written without exponent.
pub fn write_table_csv(path: &Path, header: &[&str], rows: &[Vec<f64>], counts: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        let fields = row
            .iter()
            .enumerate()
            .map(|(c, &x)| if counts.contains(&c) { format!("{x}") } else { num(x) });
        w.write_record(fields).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Replay record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: String,
    pub config_sha256: String,
    pub version: String,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl RunManifest {
    pub fn new(command: &str, config_path: &Path, config_bytes: &[u8], seed: u64) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.display().to_string(),
            config_sha256: sha256_hex(config_bytes),
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn record(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }
}

/// Returns `dir/name`, creating its parent directories.
pub fn output_path(dir: &Path, name: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    let parent = path.parent().unwrap_or(dir);
    fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TimeGrid::new(0.1, 30).unwrap();
        let f = GridFunction::from_fn(grid, 2, |t, o| {
            o[0] = (t * 1.1).sin() / 3.0;
            o[1] = std::f64::consts::PI * t.exp();
        });
        let path = dir.path().join("f.csv");
        write_grid_csv(&path, &regime_columns("m", 2), &[&f], 1).unwrap();
        let (names, back) = read_grid_csv(&path, &grid).unwrap();
        assert_eq!(names, vec!["m_1", "m_2"]);
        assert_eq!(back, f);
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,m_1,m_2\n"));
    }

    #[test]
    fn stride_keeps_last_node() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TimeGrid::new(0.1, 10).unwrap();
        let f = GridFunction::from_fn(grid, 1, |t, o| o[0] = t);
        let path = dir.path().join("f.csv");
        write_grid_csv(&path, &["x".to_string()], &[&f], 4).unwrap();
        let t = read_csv(&path).unwrap().column("t").unwrap();
        assert_eq!(t.len(), 4);
        assert_eq!(*t.last().unwrap(), 1.0);
    }

    #[test]
    fn bad_number_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        fs::write(&path, "t,x\n0,1\n0.1,abc\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Parse { line: 3, column: 2, .. })));
        fs::write(&path, "t,x\n0,1\n0.1\n").unwrap();
        assert!(matches!(read_csv(&path), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn hash_and_columns() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(pair_columns("pi", 2), vec!["pi_1_1", "pi_1_2", "pi_2_1", "pi_2_2"]);
    }
}
