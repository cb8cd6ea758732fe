// SPDX-License-Identifier: MIT OR Apache-2.0

//! Bootstrap intervals, t-tests, Bonferroni correction and the
//! context-versus-syntax specificity map.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::dataset::TokenClass;
use crate::engine::{CellKey, SweepGrid};
use crate::error::{Error, Result};
use crate::patch::Component;

/// Percentile bootstrap interval of the mean.
///
/// Quantiles of the sorted resampled means use linear interpolation
/// between order statistics.
pub fn bootstrap_ci(samples: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::NotEnoughSamples { needed: 1, got: 0 });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidLevel(level));
    }
    if resamples == 0 {
        return Err(Error::InvalidArgument("resamples must be positive".into()));
    }
    if let Some(c) = constant(samples) {
        return Ok((c, c));
    }
    let means = resampled_means(samples, resamples, seed);
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(&means, tail), quantile(&means, 1.0 - tail)))
}

/// The common value of constant samples. Summing and dividing would not
/// return it bit-exactly.
fn constant(samples: &[f64]) -> Option<f64> {
    let first = *samples.first()?;
    samples.iter().all(|&v| v == first).then_some(first)
}

fn mean(samples: &[f64]) -> f64 {
    constant(samples).unwrap_or_else(|| samples.iter().sum::<f64>() / samples.len() as f64)
}

fn resampled_means(samples: &[f64], resamples: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = samples.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    means
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    // clamp keeps constant data exactly constant
    (sorted[lo] + (sorted[hi] - sorted[lo]) * frac).clamp(sorted[lo], sorted[hi])
}

/// Result of a t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// Two-sided.
    pub p: f64,
}

/// One-sample, two-sided t-test against a mean of zero.
pub fn one_sample_t(samples: &[f64]) -> Result<TTest> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::NotEnoughSamples { needed: 2, got: n });
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let p = (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0);
    Ok(TTest { t, df, p })
}

/// Paired-difference t-test: one-sample test on `a[i] - b[i]`.
///
/// Useful for comparing two classes across the same pairs; it is a
/// distinct procedure from the per-cell test and is labelled as such.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    one_sample_t(&diffs)
}

/// Bonferroni threshold for a family of `family_size` tests.
pub fn bonferroni_threshold(alpha: f64, family_size: usize) -> f64 {
    alpha / family_size.max(1) as f64
}

/// `p_i < alpha / m` with `m = p_values.len()`. Equality is not significant.
pub fn correct_multiple(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let threshold = bonferroni_threshold(alpha, p_values.len());
    p_values.iter().map(|&p| p < threshold).collect()
}

/// Summary of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub n: usize,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Absent when the test is undefined (fewer than two samples or zero
    /// variance).
    pub t_stat: Option<f64>,
    pub df: usize,
    pub p_value: Option<f64>,
    pub significant: bool,
}

/// Settings for [`analyze_grid`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatsConfig {
    pub resamples: usize,
    pub level: f64,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self {
            resamples: 10_000,
            level: 0.95,
            alpha: 0.05,
            seed: 0,
        }
    }
}

/// Statistics for every cell of a grid, keyed like the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridStats {
    pub cells: BTreeMap<CellKey, CellStats>,
    /// Bonferroni family size: the number of cells in the grid.
    pub family_size: usize,
    pub alpha: f64,
}

/// Bootstrap, t-test and Bonferroni-correct every cell. Cell `i` (in key
/// order) bootstraps with a seed derived from the root seed and `i`, so
/// results do not depend on evaluation order.
pub fn analyze_grid(grid: &SweepGrid, config: &StatsConfig) -> Result<GridStats> {
    let family_size = grid.len();
    let threshold = bonferroni_threshold(config.alpha, family_size);
    let mut cells = BTreeMap::new();
    for (i, (key, samples)) in grid.cells().iter().enumerate() {
        let n = samples.len();
        let mean = mean(samples);
        let seed = crate::splitmix64(config.seed ^ crate::splitmix64(i as u64));
        let (ci_low, ci_high) = bootstrap_ci(samples, config.resamples, config.level, seed)?;
        let test = one_sample_t(samples).ok();
        cells.insert(
            *key,
            CellStats {
                n,
                mean,
                ci_low,
                ci_high,
                t_stat: test.map(|t| t.t),
                df: n.saturating_sub(1),
                p_value: test.map(|t| t.p),
                significant: test.is_some_and(|t| t.p < threshold),
            },
        );
    }
    Ok(GridStats {
        cells,
        family_size,
        alpha: config.alpha,
    })
}

pub const STATS_HEADER: &str =
    "component\thead\tlayer\tclass\tn\tmean\tci_low\tci_high\tt_stat\tdf\tp_value\tsignificant\tfamily_size";

fn fmt_opt_f(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| v.to_string())
}

/// Tab-separated stats table, one row per cell.
pub fn format_stats(stats: &GridStats) -> String {
    let mut out = String::from(STATS_HEADER);
    out.push('\n');
    for (k, s) in &stats.cells {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            k.component,
            k.head.map_or(-1, |h| h as i64),
            k.layer,
            k.class,
            s.n,
            s.mean,
            s.ci_low,
            s.ci_high,
            fmt_opt_f(s.t_stat),
            s.df,
            fmt_opt_f(s.p_value),
            s.significant,
            stats.family_size
        );
    }
    out
}

/// Inverse of [`format_stats`]; `alpha` is not stored in the table.
pub fn parse_stats(text: &str, alpha: f64) -> Result<GridStats> {
    let mut lines = text.lines().enumerate();
    if lines.next().map(|(_, h)| h) != Some(STATS_HEADER) {
        return Err(Error::Parse {
            line: 1,
            message: "missing stats header".into(),
        });
    }
    let mut cells = BTreeMap::new();
    let mut family_size = 0;
    for (idx, line) in lines {
        let bad = |m: String| Error::Parse {
            line: idx + 1,
            message: m,
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 13 {
            return Err(bad(format!("expected 13 columns, got {}", f.len())));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(format!("bad integer `{s}`")));
        let float = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number `{s}`")));
        let opt = |s: &str| if s == "NA" { Ok(None) } else { float(s).map(Some) };
        let key = CellKey {
            component: f[0].parse::<Component>()?,
            head: if f[1] == "-1" { None } else { Some(int(f[1])?) },
            layer: int(f[2])?,
            class: f[3].parse::<TokenClass>()?,
        };
        cells.insert(
            key,
            CellStats {
                n: int(f[4])?,
                mean: float(f[5])?,
                ci_low: float(f[6])?,
                ci_high: float(f[7])?,
                t_stat: opt(f[8])?,
                df: int(f[9])?,
                p_value: opt(f[10])?,
                significant: f[11] == "true",
            },
        );
        family_size = int(f[12])?;
    }
    Ok(GridStats {
        cells,
        family_size,
        alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Specificity {
    ContextOnly,
    SyntaxOnly,
    Both,
    Neither,
}

impl Specificity {
    pub fn from_flags(context: bool, syntax: bool) -> Self {
        match (context, syntax) {
            (true, false) => Specificity::ContextOnly,
            (false, true) => Specificity::SyntaxOnly,
            (true, true) => Specificity::Both,
            (false, false) => Specificity::Neither,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Specificity::ContextOnly => "context_only",
            Specificity::SyntaxOnly => "syntax_only",
            Specificity::Both => "both",
            Specificity::Neither => "neither",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecificityCell {
    pub head: Option<usize>,
    pub layer: usize,
    pub component: Component,
    pub class: TokenClass,
    pub label: Specificity,
}

/// Label each cell by where it is significant. Heads are ordered by the
/// earliest layer with a context-only cell (heads without one last), then
/// by head index, layer and class.
pub fn specificity_map(context: &GridStats, syntax: &GridStats) -> Result<Vec<SpecificityCell>> {
    if context.cells.len() != syntax.cells.len() || context.cells.keys().zip(syntax.cells.keys()).any(|(a, b)| a != b) {
        return Err(Error::AxisMismatch("context and syntax grids cover different cells".into()));
    }
    let mut cells: Vec<SpecificityCell> = context
        .cells
        .iter()
        .map(|(k, c)| SpecificityCell {
            head: k.head,
            layer: k.layer,
            component: k.component,
            class: k.class,
            label: Specificity::from_flags(c.significant, syntax.cells[k].significant),
        })
        .collect();
    let mut earliest: BTreeMap<(Component, Option<usize>), usize> = BTreeMap::new();
    for c in cells.iter().filter(|c| c.label == Specificity::ContextOnly) {
        let e = earliest.entry((c.component, c.head)).or_insert(c.layer);
        *e = (*e).min(c.layer);
    }
    cells.sort_by_key(|c| {
        (
            c.component,
            earliest.get(&(c.component, c.head)).copied().unwrap_or(usize::MAX),
            c.head,
            c.layer,
            c.class,
        )
    });
    Ok(cells)
}

/// Tab-separated specificity table.
pub fn format_specificity(cells: &[SpecificityCell]) -> String {
    let mut out = String::from("component\thead\tlayer\tclass\tlabel\n");
    for c in cells {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            c.component,
            c.head.map_or(-1, |h| h as i64),
            c.layer,
            c.class,
            c.label.as_str()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_on_one_to_five() {
        // mean 3, sd = sqrt(2.5) = 1.5811, t = 3 / (1.5811 / sqrt 5)
        let t = one_sample_t(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert!((t.t - 4.2426).abs() < 1e-3, "{}", t.t);
        assert_eq!(t.df, 4);
        assert!(t.p > 0.0 && t.p < 0.05);
    }

    #[test]
    fn t_rejects_zero_variance() {
        assert!(matches!(one_sample_t(&[0.0; 6]), Err(Error::DegenerateVariance)));
        assert!(matches!(one_sample_t(&[1.0]), Err(Error::NotEnoughSamples { .. })));
    }

    #[test]
    fn df_for_58_pairs() {
        let samples: Vec<f64> = (0..58).map(|i| (i as f64 * 0.7).sin()).collect();
        assert_eq!(one_sample_t(&samples).unwrap().df, 57);
    }

    #[test]
    fn bonferroni_edges() {
        assert_eq!(correct_multiple(&[0.04], 0.05), vec![true]);
        assert_eq!(correct_multiple(&[0.025, 0.0249], 0.05), vec![false, true]);
        assert_eq!(bonferroni_threshold(0.005, 64 * 12 * 5), 0.005 / 3840.0);
    }

    #[test]
    fn bootstrap_constant_and_binary() {
        assert_eq!(bootstrap_ci(&[2.5; 7], 1000, 0.95, 3).unwrap(), (2.5, 2.5));
        let (lo, hi) = bootstrap_ci(&[0.0, 1.0], 10_000, 0.95, 1).unwrap();
        assert!((0.0..=0.5).contains(&lo) && (0.5..=1.0).contains(&hi));
        assert!(bootstrap_ci(&[], 10, 0.95, 1).is_err());
        assert!(bootstrap_ci(&[1.0], 10, 1.0, 1).is_err());
    }

    #[test]
    fn specificity_labels() {
        assert_eq!(Specificity::from_flags(true, true), Specificity::Both);
        assert_eq!(Specificity::from_flags(true, false), Specificity::ContextOnly);
        assert_eq!(Specificity::from_flags(false, true), Specificity::SyntaxOnly);
        assert_eq!(Specificity::from_flags(false, false), Specificity::Neither);
    }
}
