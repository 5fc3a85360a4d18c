//! Side-by-side comparison of finished runs.
//!
//! Rows are grouped by region. Within a region, the highest mean per metric
//! is marked `**x**` and the second highest `_x_`; every metric is better
//! when larger.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::run::{RunRecord, Scores};

pub const METRICS: [&str; 4] = ["service", "ecology", "satisfaction", "inclusion"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rank {
    Best,
    Second,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub region: String,
    pub run_id: String,
    pub dir: PathBuf,
    pub seeds: usize,
    pub mean: Scores,
    pub ranks: [Rank; 4],
}

impl CompareRow {
    pub fn cell(&self, k: usize) -> String {
        match self.mean.values()[k] {
            None => "-".into(),
            Some(v) => {
                let v = format!("{v:.4}");
                match self.ranks[k] {
                    Rank::Best => format!("**{v}**"),
                    Rank::Second => format!("_{v}_"),
                    Rank::Other => v,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
}

/// Loads each run's record and ranks the mean scores within each region.
pub fn compare(dirs: &[PathBuf]) -> anyhow::Result<CompareTable> {
    let mut rows = Vec::new();
    for dir in dirs {
        let record = RunRecord::load(dir).with_context(|| format!("run {}", dir.display()))?;
        let agg = record
            .aggregate
            .with_context(|| format!("run {} has no successful seed", dir.display()))?;
        rows.push(CompareRow {
            region: record.region_name,
            run_id: record.run_id,
            dir: dir.clone(),
            seeds: agg.n,
            mean: agg.mean,
            ranks: [Rank::Other; 4],
        });
    }
    rows.sort_by(|a, b| a.region.cmp(&b.region));
    rank_rows(&mut rows);
    Ok(CompareTable { rows })
}

fn rank_rows(rows: &mut [CompareRow]) {
    let mut start = 0;
    while start < rows.len() {
        let end = start + rows[start..].iter().take_while(|r| r.region == rows[start].region).count();
        for k in 0..4 {
            let mut vals: Vec<f64> = rows[start..end].iter().filter_map(|r| r.mean.values()[k]).collect();
            vals.sort_by(|a, b| b.total_cmp(a));
            vals.dedup();
            for r in &mut rows[start..end] {
                r.ranks[k] = match r.mean.values()[k] {
                    Some(v) if vals.first() == Some(&v) => Rank::Best,
                    Some(v) if vals.get(1) == Some(&v) => Rank::Second,
                    _ => Rank::Other,
                };
            }
        }
        start = end;
    }
}

impl CompareTable {
    pub fn render_text(&self) -> String {
        let mut header = vec!["region".to_string(), "run".to_string(), "seeds".to_string()];
        header.extend(METRICS.iter().map(|m| m.to_string()));
        let body: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut line = vec![r.region.clone(), r.run_id.clone(), r.seeds.to_string()];
                line.extend((0..4).map(|k| r.cell(k)));
                line
            })
            .collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|c| body.iter().map(|l| l[c].len()).chain([header[c].len()]).max().unwrap_or(0))
            .collect();
        let mut s = String::new();
        for line in std::iter::once(&header).chain(&body) {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(s, "{}", cells.join("  ").trim_end());
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
        let mut header = vec!["region", "run_id", "seeds"];
        header.extend(METRICS);
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.region.clone(), r.run_id.clone(), r.seeds.to_string()];
            rec.extend((0..4).map(|k| r.cell(k)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
