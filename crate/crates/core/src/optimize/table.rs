//! Look-up tables mapping (loss rate, hop count) to a packet count.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::eigen::Evaluator;
use crate::analytics::{PathProfile, Policy};
use crate::error::{validation, Error, Result};
use crate::optimize::ps_scan;

pub const TABLE_VERSION: u32 = 1;

/// Hop columns kept by the refined table.
pub const REFINED_HOPS: [u32; 6] = [2, 4, 7, 11, 16, 20];

/// Arithmetic grid of loss rates. Cells are addressed by index, never by float.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsGrid {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl EpsGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<Self> {
        let grid = Self { start, step, count };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid from `start` to `end` inclusive.
    pub fn span(start: f64, end: f64, step: f64) -> Result<Self> {
        if step.is_nan() || step <= 0.0 || end < start {
            return validation(format!("bad grid {start}..{end} step {step}"));
        }
        Self::new(start, step, ((end - start) / step + 1e-9).floor() as usize + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 || self.step.is_nan() || self.step <= 0.0 || self.start.is_nan() || self.start < 0.0 {
            return validation(format!("bad loss-rate grid {self:?}"));
        }
        if self.value(self.count - 1) >= 1.0 {
            return validation("loss-rate grid reaches 1");
        }
        Ok(())
    }

    /// i-th grid value, rounded to 12 decimals so 0.1 + 7·0.01 reads as 0.17.
    pub fn value(&self, i: usize) -> f64 {
        ((self.start + i as f64 * self.step) * 1e12).round() / 1e12
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }

    /// Smallest grid index whose value is ≥ eps, clamped to the grid.
    pub fn index_up(&self, eps: f64) -> (usize, bool) {
        let x = (eps - self.start) / self.step;
        let idx = (x - 1e-9).ceil();
        if idx < 0.0 {
            (0, true)
        } else if idx as usize >= self.count {
            (self.count - 1, true)
        } else {
            (idx as usize, false)
        }
    }

    fn decimals(&self) -> usize {
        let mut d = 2;
        while d < 12 && ((self.step * 10f64.powi(d as i32)).round() - self.step * 10f64.powi(d as i32)).abs() > 1e-9 {
            d += 1;
        }
        d
    }
}

/// Result of a table lookup, with the grid point actually used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableQuery {
    pub t: u32,
    pub eps: f64,
    pub hops: u32,
    pub eps_clamped: bool,
    pub hops_clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub q: u32,
    pub batch_size: u32,
    pub grid: EpsGrid,
    pub hops: Vec<u32>,
    /// Row-major: one row per loss rate, one column per hop count.
    pub cells: Vec<u32>,
}

/// One run of equal cells along a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub t: u32,
    pub len: u32,
}

/// Run-length encoded table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressedTable {
    pub q: u32,
    pub batch_size: u32,
    pub grid: EpsGrid,
    pub hops: Vec<u32>,
    pub runs: Vec<Vec<Run>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TableFile {
    version: u32,
    q: u32,
    #[serde(rename = "M")]
    batch_size: u32,
    eps_start: f64,
    eps_step: f64,
    eps_count: usize,
    hops: Vec<u32>,
    #[serde(default)]
    cells: Vec<u32>,
    compressed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    runs: Option<Vec<Vec<Run>>>,
}

fn check_hops(hops: &[u32]) -> Result<()> {
    if hops.is_empty() {
        return validation("hop grid is empty");
    }
    if hops[0] == 0 || hops.windows(2).any(|w| w[0] >= w[1]) {
        return validation(format!("hop grid must be positive and increasing, got {hops:?}"));
    }
    Ok(())
}

/// Solves the single-variable problem for every (ε, l) cell. Rows run in
/// parallel; `jobs` caps the worker count.
pub fn build_clt(q: u32, batch_size: u32, grid: EpsGrid, hops: Vec<u32>, jobs: Option<usize>) -> Result<LookupTable> {
    grid.validate()?;
    check_hops(&hops)?;
    if batch_size == 0 {
        return validation("batch size must be at least 1");
    }
    let build_row = |i: usize| -> Result<Vec<u32>> {
        let mut eval = Evaluator::new(batch_size, q as f64)?;
        hops.iter().map(|&l| ps_scan(&mut eval, grid.value(i), l)).collect()
    };
    let rows: Result<Vec<Vec<u32>>> = match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Validation(format!("thread pool: {e}")))?
            .install(|| (0..grid.count).into_par_iter().map(build_row).collect()),
        None => (0..grid.count).into_par_iter().map(build_row).collect(),
    };
    let table = LookupTable { q, batch_size, grid, hops, cells: rows?.concat() };
    table.check_monotone()?;
    for w in table.adjacency_warnings() {
        log::warn!("{w}");
    }
    Ok(table)
}

/// Keeps only the hop columns of [`REFINED_HOPS`].
pub fn refine_table(table: &LookupTable) -> Result<LookupTable> {
    let cols: Vec<usize> = REFINED_HOPS
        .iter()
        .map(|h| {
            table
                .hops
                .iter()
                .position(|x| x == h)
                .ok_or_else(|| Error::Validation(format!("table has no column for l={h}")))
        })
        .collect::<Result<_>>()?;
    let cells = (0..table.grid.count)
        .flat_map(|i| cols.iter().map(move |&j| (i, j)))
        .map(|(i, j)| table.cell(i, j))
        .collect();
    Ok(LookupTable { hops: REFINED_HOPS.to_vec(), cells, ..table.clone() })
}

impl LookupTable {
    pub fn cell(&self, eps_index: usize, hop_index: usize) -> u32 {
        self.cells[eps_index * self.hops.len() + hop_index]
    }

    pub fn row(&self, eps_index: usize) -> &[u32] {
        let w = self.hops.len();
        &self.cells[eps_index * w..(eps_index + 1) * w]
    }

    fn validate_shape(&self) -> Result<()> {
        self.grid.validate()?;
        check_hops(&self.hops)?;
        if self.cells.len() != self.grid.count * self.hops.len() {
            return Err(Error::Format(format!(
                "expected {} cells, found {}",
                self.grid.count * self.hops.len(),
                self.cells.len()
            )));
        }
        Ok(())
    }

    /// Every row must be nondecreasing in the hop count.
    pub fn check_monotone(&self) -> Result<()> {
        for i in 0..self.grid.count {
            if let Some(j) = self.row(i).windows(2).position(|w| w[1] < w[0]) {
                return Err(Error::Table(format!(
                    "row eps={} decreases between l={} and l={}",
                    self.grid.value(i),
                    self.hops[j],
                    self.hops[j + 1]
                )));
            }
        }
        Ok(())
    }

    /// Adjacent cells (along either axis) that differ by more than one.
    pub fn adjacency_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        let w = self.hops.len();
        for i in 0..self.grid.count {
            for j in 0..w {
                let v = self.cell(i, j) as i64;
                if j + 1 < w && (self.cell(i, j + 1) as i64 - v).abs() > 1 {
                    out.push(format!("eps={} l={}..{} jumps by more than 1", self.grid.value(i), self.hops[j], self.hops[j + 1]));
                }
                if i + 1 < self.grid.count && (self.cell(i + 1, j) as i64 - v).abs() > 1 {
                    out.push(format!("l={} eps={}..{} jumps by more than 1", self.hops[j], self.grid.value(i), self.grid.value(i + 1)));
                }
            }
        }
        out
    }

    /// Rounds ε up to the grid and l up to the next listed hop count.
    pub fn query(&self, eps: f64, hops: u32) -> Result<TableQuery> {
        if self.cells.is_empty() {
            return validation("table is empty");
        }
        let (i, eps_clamped) = self.grid.index_up(eps);
        let (j, hops_clamped) = hop_column(&self.hops, hops);
        Ok(TableQuery {
            t: self.cell(i, j),
            eps: self.grid.value(i),
            hops: self.hops[j],
            eps_clamped,
            hops_clamped,
        })
    }

    /// Per-hop packet counts for a path: each hop looks up its own loss rate
    /// with the path length.
    pub fn policy_for(&self, profile: &PathProfile) -> Result<Policy> {
        let l = profile.hops() as u32;
        Policy::new(profile.eps().iter().map(|&e| self.query(e, l).map(|r| r.t)).collect::<Result<_>>()?)
    }

    pub fn compress(&self) -> CompressedTable {
        let runs = (0..self.grid.count)
            .map(|i| {
                let mut runs: Vec<Run> = Vec::new();
                for &t in self.row(i) {
                    match runs.last_mut() {
                        Some(r) if r.t == t => r.len += 1,
                        _ => runs.push(Run { t, len: 1 }),
                    }
                }
                runs
            })
            .collect();
        CompressedTable { q: self.q, batch_size: self.batch_size, grid: self.grid, hops: self.hops.clone(), runs }
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TableFile {
            version: TABLE_VERSION,
            q: self.q,
            batch_size: self.batch_size,
            eps_start: self.grid.start,
            eps_step: self.grid.step,
            eps_count: self.grid.count,
            hops: self.hops.clone(),
            cells: self.cells.clone(),
            compressed: false,
            runs: None,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    /// Parses either layout; compressed documents are expanded.
    pub fn from_json(s: &str) -> Result<Self> {
        let doc: TableFile = serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))?;
        if doc.version != TABLE_VERSION {
            return Err(Error::Format(format!("unsupported table version {}", doc.version)));
        }
        let grid = EpsGrid { start: doc.eps_start, step: doc.eps_step, count: doc.eps_count };
        let table = if doc.compressed {
            let runs = doc.runs.ok_or_else(|| Error::Format("compressed table without runs".into()))?;
            CompressedTable { q: doc.q, batch_size: doc.batch_size, grid, hops: doc.hops, runs }.decompress()?
        } else {
            LookupTable { q: doc.q, batch_size: doc.batch_size, grid, hops: doc.hops, cells: doc.cells }
        };
        table.validate_shape()?;
        Ok(table)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    /// Header of hop counts, one row per loss rate.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let map = |e: csv::Error| Error::Format(e.to_string());
        let mut header = vec!["PLR".to_string()];
        header.extend(self.hops.iter().map(|h| h.to_string()));
        w.write_record(&header).map_err(map)?;
        let dec = self.grid.decimals();
        for i in 0..self.grid.count {
            let mut rec = vec![format!("{:.*}", dec, self.grid.value(i))];
            rec.extend(self.row(i).iter().map(|t| t.to_string()));
            w.write_record(&rec).map_err(map)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
    }
}

fn hop_column(hops: &[u32], l: u32) -> (usize, bool) {
    match hops.iter().position(|&h| h >= l) {
        Some(j) => (j, false),
        None => (hops.len() - 1, true),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

impl CompressedTable {
    pub fn decompress(&self) -> Result<LookupTable> {
        if self.runs.len() != self.grid.count {
            return Err(Error::Format(format!("{} run rows for {} loss rates", self.runs.len(), self.grid.count)));
        }
        let mut cells = Vec::with_capacity(self.grid.count * self.hops.len());
        for row in &self.runs {
            let n: u32 = row.iter().map(|r| r.len).sum();
            if n as usize != self.hops.len() {
                return Err(Error::Format(format!("run row covers {n} columns, expected {}", self.hops.len())));
            }
            for r in row {
                cells.extend(std::iter::repeat_n(r.t, r.len as usize));
            }
        }
        Ok(LookupTable { q: self.q, batch_size: self.batch_size, grid: self.grid, hops: self.hops.clone(), cells })
    }

    /// Same lookup rule as the expanded table, walking the runs.
    pub fn query(&self, eps: f64, hops: u32) -> Result<TableQuery> {
        if self.runs.is_empty() {
            return validation("table is empty");
        }
        let (i, eps_clamped) = self.grid.index_up(eps);
        let (j, hops_clamped) = hop_column(&self.hops, hops);
        let mut covered = 0usize;
        for r in &self.runs[i] {
            covered += r.len as usize;
            if j < covered {
                return Ok(TableQuery { t: r.t, eps: self.grid.value(i), hops: self.hops[j], eps_clamped, hops_clamped });
            }
        }
        Err(Error::Format(format!("run row {i} is short")))
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = TableFile {
            version: TABLE_VERSION,
            q: self.q,
            batch_size: self.batch_size,
            eps_start: self.grid.start,
            eps_step: self.grid.step,
            eps_count: self.grid.count,
            hops: self.hops.clone(),
            cells: Vec::new(),
            compressed: true,
            runs: Some(self.runs.clone()),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_json()?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> LookupTable {
        LookupTable {
            q: 256,
            batch_size: 16,
            grid: EpsGrid::new(0.10, 0.01, 3).unwrap(),
            hops: vec![2, 3, 4, 5],
            cells: vec![16, 17, 17, 18, 17, 17, 18, 18, 17, 18, 18, 19],
        }
    }

    #[test]
    fn grid_indexing() {
        let g = EpsGrid::span(0.10, 0.20, 0.01).unwrap();
        assert_eq!(g.count, 11);
        assert_eq!(g.value(7), 0.17);
        assert_eq!(g.index_up(0.13), (3, false));
        assert_eq!(g.index_up(0.131), (4, false));
        assert_eq!(g.index_up(0.05), (0, true));
        assert_eq!(g.index_up(0.5), (10, true));
        assert!(EpsGrid::new(0.5, 0.1, 6).is_err());
    }

    #[test]
    fn query_rounds_up() {
        let t = small();
        let q = t.query(0.105, 3).unwrap();
        assert_eq!((q.t, q.eps, q.hops), (17, 0.11, 3));
        let q = t.query(0.12, 9).unwrap();
        assert_eq!((q.t, q.hops, q.hops_clamped), (19, 5, true));
        let q = t.query(0.11, 1).unwrap();
        assert_eq!((q.t, q.hops, q.hops_clamped), (17, 2, false));
    }

    #[test]
    fn compression_round_trip() {
        let t = small();
        let c = t.compress();
        assert_eq!(c.runs[0], vec![Run { t: 16, len: 1 }, Run { t: 17, len: 2 }, Run { t: 18, len: 1 }]);
        assert_eq!(c.decompress().unwrap(), t);
        for e in [0.0, 0.1, 0.115, 0.12, 0.3] {
            for l in 0..8 {
                assert_eq!(c.query(e, l).unwrap(), t.query(e, l).unwrap());
            }
        }
        let parsed = LookupTable::from_json(&c.to_json().unwrap()).unwrap();
        assert_eq!(parsed, t);
        assert_eq!(LookupTable::from_json(&t.to_json().unwrap()).unwrap(), t);
    }

    #[test]
    fn constant_row_is_one_run() {
        let t = LookupTable { cells: vec![5; 12], ..small() };
        assert!(t.compress().runs.iter().all(|r| r.len() == 1));
    }

    #[test]
    fn monotonicity_is_enforced() {
        let mut t = small();
        t.cells[2] = 15;
        assert!(matches!(t.check_monotone(), Err(Error::Table(_))));
        assert!(!t.adjacency_warnings().is_empty());
    }

    #[test]
    fn csv_layout() {
        let csv = small().to_csv().unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("PLR,2,3,4,5"));
        assert_eq!(lines.next(), Some("0.10,16,17,17,18"));
    }

    #[test]
    fn refine_needs_columns() {
        assert!(refine_table(&small()).is_err());
    }

    #[test]
    fn bad_documents_rejected() {
        assert!(LookupTable::from_json("{}").is_err());
        let mut doc: serde_json::Value = serde_json::from_str(&small().to_json().unwrap()).unwrap();
        doc["cells"] = serde_json::json!([1, 2]);
        assert!(LookupTable::from_json(&doc.to_string()).is_err());
        doc["version"] = serde_json::json!(9);
        assert!(LookupTable::from_json(&doc.to_string()).is_err());
    }

    #[test]
    fn single_cell_build() {
        let t = build_clt(256, 16, EpsGrid::new(0.2, 0.01, 1).unwrap(), vec![20], Some(1)).unwrap();
        assert_eq!(t.cells, vec![23]);
    }
}
