// SPDX-License-Identifier: MIT OR Apache-2.0

//! Columnar sweep results and the grids derived from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{Condition, TokenClass};
use crate::error::{Error, Result};
use crate::patch::Component;

/// Column header of the results table.
pub const RESULTS_HEADER: &str =
    "pair_id\tcondition\tlayer\thead\tcomponent\tclass\tposition\tlog_effect_dir_AB\tlog_effect_dir_BA\tlog_effect";

/// One line of the results table: either a single token (`position` set)
/// or a class aggregate (`position` absent).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub pair_id: String,
    pub condition: Condition,
    pub layer: usize,
    /// Absent for residual-stream and all-head interventions.
    pub head: Option<usize>,
    pub component: Component,
    pub class: TokenClass,
    pub position: Option<usize>,
    pub log_effect_dir_ab: f64,
    pub log_effect_dir_ba: f64,
    pub log_effect: f64,
}

/// Address of an aggregate cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub component: Component,
    pub head: Option<usize>,
    pub layer: usize,
    pub class: TokenClass,
}

impl SweepRow {
    pub fn key(&self) -> CellKey {
        CellKey {
            component: self.component,
            head: self.head,
            layer: self.layer,
            class: self.class,
        }
    }
}

/// Per-pair class aggregates: one value per evaluated pair in every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepGrid {
    pairs: Vec<(String, Condition)>,
    cells: BTreeMap<CellKey, Vec<f64>>,
}

impl SweepGrid {
    /// Aggregate rows into cells. Token rows are averaged per
    /// `(pair, cell)`, skipping excluded tokens; class rows are taken as is.
    pub fn from_rows(rows: &[SweepRow]) -> Result<Self> {
        let mut pairs: Vec<(String, Condition)> = Vec::new();
        let mut index = BTreeMap::new();
        let mut sums: BTreeMap<(CellKey, usize), (f64, usize)> = BTreeMap::new();
        for row in rows {
            let pair_key = (row.pair_id.clone(), row.condition);
            let p = *index.entry(pair_key.clone()).or_insert_with(|| {
                pairs.push(pair_key);
                pairs.len() - 1
            });
            if row.class == TokenClass::Excluded {
                continue;
            }
            let slot = sums.entry((row.key(), p)).or_insert((0.0, 0));
            slot.0 += row.log_effect;
            slot.1 += 1;
        }
        let mut cells: BTreeMap<CellKey, Vec<Option<f64>>> = BTreeMap::new();
        for ((key, p), (sum, n)) in sums {
            cells.entry(key).or_insert_with(|| vec![None; pairs.len()])[p] = Some(sum / n as f64);
        }
        let cells = cells
            .into_iter()
            .map(|(key, values)| {
                let values: Option<Vec<f64>> = values.into_iter().collect();
                values.map(|v| (key, v)).ok_or_else(|| {
                    Error::AxisMismatch(format!("cell {key:?} is missing for some pairs"))
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { pairs, cells })
    }

    pub fn pairs(&self) -> &[(String, Condition)] {
        &self.pairs
    }

    pub fn cells(&self) -> &BTreeMap<CellKey, Vec<f64>> {
        &self.cells
    }

    pub fn cell(&self, key: &CellKey) -> Option<&[f64]> {
        self.cells.get(key).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub(crate) fn fmt_opt(v: Option<usize>) -> String {
    v.map_or_else(|| "-1".to_string(), |v| v.to_string())
}

fn parse_opt(s: &str, line: usize) -> Result<Option<usize>> {
    if s == "-1" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Parse {
        line,
        message: format!("bad index `{s}`"),
    })
}

/// Render rows as tab-separated text with a header line.
pub fn format_results(rows: &[SweepRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.pair_id,
            r.condition,
            r.layer,
            fmt_opt(r.head),
            r.component,
            r.class,
            fmt_opt(r.position),
            r.log_effect_dir_ab,
            r.log_effect_dir_ba,
            r.log_effect
        );
    }
    out
}

/// Inverse of [`format_results`].
pub fn parse_results(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == RESULTS_HEADER => {}
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "missing results header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let bad = |message: String| Error::Parse {
            line: line_no,
            message,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 10 {
            return Err(bad(format!("expected 10 columns, got {}", f.len())));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
        rows.push(SweepRow {
            pair_id: f[0].to_string(),
            condition: f[1].parse()?,
            layer: f[2].parse().map_err(|_| bad(format!("bad layer `{}`", f[2])))?,
            head: parse_opt(f[3], line_no)?,
            component: f[4].parse()?,
            class: f[5].parse()?,
            position: parse_opt(f[6], line_no)?,
            log_effect_dir_ab: float(f[7])?,
            log_effect_dir_ba: float(f[8])?,
            log_effect: float(f[9])?,
        });
    }
    Ok(rows)
}

/// A named plot-data file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridFile {
    /// Relative path, `/`-separated.
    pub path: String,
    pub contents: String,
}

/// Heatmap-ready grids, computed only from `rows`.
///
/// * `grid.tsv`: one line per `(component, head, layer)`, one column per
///   class, holding the mean over pairs of the class aggregate.
/// * `token_grids/<pair>__<condition>.tsv`: for token-level rows, one line
///   per layer and one column per position.
pub fn grids_from_rows(rows: &[SweepRow]) -> Result<Vec<GridFile>> {
    let grid = SweepGrid::from_rows(rows)?;
    let mut out = Vec::new();

    let mut wide = String::from("component\thead\tlayer");
    for class in TokenClass::AGGREGATED {
        wide.push('\t');
        wide.push_str(class.as_str());
    }
    wide.push('\n');
    let mut lines: BTreeMap<(Component, Option<usize>, usize), BTreeMap<TokenClass, f64>> = BTreeMap::new();
    for (key, values) in grid.cells() {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        lines
            .entry((key.component, key.head, key.layer))
            .or_default()
            .insert(key.class, mean);
    }
    for ((component, head, layer), by_class) in lines {
        let _ = write!(wide, "{component}\t{}\t{layer}", fmt_opt(head));
        for class in TokenClass::AGGREGATED {
            match by_class.get(&class) {
                Some(v) => {
                    let _ = write!(wide, "\t{v}");
                }
                None => wide.push_str("\tNA"),
            }
        }
        wide.push('\n');
    }
    out.push(GridFile {
        path: "grid.tsv".into(),
        contents: wide,
    });

    let mut per_pair: BTreeMap<(String, Condition), BTreeMap<usize, BTreeMap<usize, f64>>> = BTreeMap::new();
    for row in rows {
        if let Some(position) = row.position {
            per_pair
                .entry((row.pair_id.clone(), row.condition))
                .or_default()
                .entry(row.layer)
                .or_default()
                .insert(position, row.log_effect);
        }
    }
    for ((pair_id, condition), layers) in per_pair {
        let width = layers.values().filter_map(|m| m.keys().max()).max().map_or(0, |m| m + 1);
        let mut text = String::from("layer");
        for p in 0..width {
            let _ = write!(text, "\tt{p}");
        }
        text.push('\n');
        for (layer, positions) in layers {
            let _ = write!(text, "{layer}");
            for p in 0..width {
                match positions.get(&p) {
                    Some(v) => {
                        let _ = write!(text, "\t{v}");
                    }
                    None => text.push_str("\tNA"),
                }
            }
            text.push('\n');
        }
        out.push(GridFile {
            path: format!("token_grids/{}__{condition}.tsv", sanitize(&pair_id)),
            contents: text,
        });
    }
    Ok(out)
}

/// Keep `[A-Za-z0-9._-]`, replace everything else with `_`.
pub fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}
