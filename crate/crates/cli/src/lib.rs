// SPDX-License-Identifier: MIT OR Apache-2.0

//! Batch commands behind the `interchange` binary.
//!
//! Every analysis command writes its tables into `--out` together with a
//! `manifest.json` describing the inputs. Given the same manifest inputs
//! (including `--timestamp`) the output files are byte-identical.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::json;

use interchange_core::dataset::{parse_dataset, serialize_dataset, toy_dataset, Condition, SpecialTokens, Vocab, WinogradPair};
use interchange_core::engine::{format_results, grids_from_rows, run_sweep, SweepFilters, SweepGrid, SweepKind, SweepSpec};
use interchange_core::manifest::{sha256_hex, RunManifest};
use interchange_core::model::{archive_bytes, generate_toy_model, load_model, toy_config, Activation, LayerSharing, ModelBundle};
use interchange_core::patch::Component;
use interchange_core::scoring::{embedding_bias_predict, score_pair, strict_metric, weak_metric, OptionChoice, PairScores, SimilarityMeasure};
use interchange_core::stats::{analyze_grid, format_specificity, format_stats, paired_t, parse_stats, specificity_map, StatsConfig};
use interchange_core::TokenId;

#[derive(Debug, Parser)]
#[command(name = "interchange", version, about = "Interchange interventions on Winograd pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Zero-shot strict/weak accuracy and per-pair scores.
    Evaluate(EvaluateArgs),
    /// Interchange sweep with statistics and grid files.
    Sweep(SweepArgs),
    /// Word-embedding similarity predictor.
    BiasCheck(BiasArgs),
    /// Combine context and syntax stats tables into specificity labels.
    Specificity(SpecificityArgs),
    /// Write a seeded random model archive.
    ToyModel(ToyModelArgs),
    /// Write a seeded toy dataset for a model.
    ToyDataset(ToyDatasetArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Keep only pairs of this condition.
    #[arg(long)]
    pub condition: Option<Condition>,
    /// Comma-separated pair ids to keep.
    #[arg(long, value_delimiter = ',')]
    pub pairs: Option<Vec<String>>,
    #[arg(long)]
    pub max_pairs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Manifest timestamp (seconds); falls back to SOURCE_DATE_EPOCH, then
    /// the current time.
    #[arg(long)]
    pub timestamp: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Selection {
    Strict,
    Weak,
    All,
}

impl Selection {
    fn as_str(self) -> &'static str {
        match self {
            Selection::Strict => "strict",
            Selection::Weak => "weak",
            Selection::All => "all",
        }
    }

    fn accepts(self, scores: &PairScores) -> bool {
        match self {
            Selection::Strict => strict_metric(scores),
            Selection::Weak => weak_metric(scores),
            Selection::All => true,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long)]
    pub kind: SweepKind,
    /// Head components (`query,key,value,transformation`) or `all`.
    #[arg(long, value_delimiter = ',')]
    pub components: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub heads: Option<Vec<usize>>,
    /// Token ids left out of class aggregates.
    #[arg(long, value_delimiter = ',')]
    pub special_tokens: Option<Vec<TokenId>>,
    /// Which pairs enter the sweep, judged by the model's own scores.
    #[arg(long, value_enum, default_value_t = Selection::Strict)]
    pub selection: Selection,
    /// Same pairs under another condition; a pair is kept only if its
    /// partner also passes the selection.
    #[arg(long)]
    pub partner_dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub resamples: usize,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Debug, Clone, Args)]
pub struct BiasArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub output: OutputArgs,
    #[arg(long, default_value = "correlation")]
    pub measure: SimilarityMeasure,
}

#[derive(Debug, Clone, Args)]
pub struct SpecificityArgs {
    /// stats.tsv from the context-condition sweep.
    #[arg(long)]
    pub context: PathBuf,
    /// stats.tsv from the syntax-only sweep.
    #[arg(long)]
    pub syntax: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ToyModelArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 16)]
    pub hidden: usize,
    /// One parameter set per layer instead of a shared one.
    #[arg(long)]
    pub untied: bool,
    /// Use exact GELU instead of the tanh approximation.
    #[arg(long)]
    pub exact_gelu: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ToyDatasetArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "context")]
    pub condition: Condition,
    /// Tokens per option noun phrase.
    #[arg(long, default_value_t = 1)]
    pub np_len: usize,
    /// Make both sentences token-identical (synonym control fixtures).
    #[arg(long)]
    pub identical: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// One surface form per line, indexed by token id.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
    #[arg(long, default_value_t = interchange_server::DEFAULT_CELL_BUDGET)]
    pub cell_budget: usize,
    #[arg(long, default_value_t = 256)]
    pub cache: usize,
    #[arg(long)]
    pub timestamp: Option<u64>,
}

/// Failure that did not come from the core library.
#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl CliError {
    fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// `{"error": {"kind", "message"}}` for `err`.
pub fn error_record(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| {
            if let Some(core) = e.downcast_ref::<interchange_core::Error>() {
                Some(core.kind())
            } else if let Some(cli) = e.downcast_ref::<CliError>() {
                Some(cli.kind)
            } else if e.is::<std::io::Error>() {
                Some("io")
            } else {
                None
            }
        })
        .unwrap_or("cli");
    json!({"error": {"kind": kind, "message": format!("{err:#}")}}).to_string()
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Evaluate(args) => cmd_evaluate(&args).map(|_| ()),
        Command::Sweep(args) => cmd_sweep(&args).map(|_| ()),
        Command::BiasCheck(args) => cmd_bias_check(&args).map(|_| ()),
        Command::Specificity(args) => cmd_specificity(&args),
        Command::ToyModel(args) => cmd_toy_model(&args),
        Command::ToyDataset(args) => cmd_toy_dataset(&args),
        Command::Serve(args) => cmd_serve(&args),
    }
}

fn timestamp(flag: Option<u64>) -> Result<u64> {
    if let Some(t) = flag {
        return Ok(t);
    }
    if let Ok(v) = std::env::var("SOURCE_DATE_EPOCH") {
        return v
            .parse()
            .map_err(|_| CliError::new("invalid_argument", format!("SOURCE_DATE_EPOCH `{v}` is not an integer")).into());
    }
    Ok(std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn write(out: &Path, rel: &str, contents: &str) -> Result<()> {
    let path = out.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Model, dataset and their raw bytes (for digests).
struct Loaded {
    model: ModelBundle,
    model_bytes: Vec<u8>,
    pairs: Vec<WinogradPair>,
    dataset_bytes: Vec<u8>,
}

fn load_pairs(bytes: &[u8], path: &Path, mask: TokenId) -> Result<Vec<WinogradPair>> {
    let text = std::str::from_utf8(bytes).map_err(|_| CliError::new("parse", format!("{} is not UTF-8", path.display())))?;
    parse_dataset(text, mask)
        .into_result()
        .with_context(|| format!("loading {}", path.display()))
}

fn load_inputs(input: &InputArgs) -> Result<Loaded> {
    let model_bytes = read(&input.model)?;
    let model = load_model(&model_bytes).with_context(|| format!("loading {}", input.model.display()))?;
    let dataset_bytes = read(&input.dataset)?;
    let mut pairs = load_pairs(&dataset_bytes, &input.dataset, model.config().mask_token_id)?;
    if let Some(c) = input.condition {
        pairs.retain(|p| p.condition == c);
    }
    if let Some(ids) = &input.pairs {
        if let Some(missing) = ids.iter().find(|id| !pairs.iter().any(|p| &p.pair_id == *id)) {
            return Err(interchange_core::Error::UnknownPair(missing.clone()).into());
        }
        pairs.retain(|p| ids.contains(&p.pair_id));
    }
    Ok(Loaded {
        model,
        model_bytes,
        pairs,
        dataset_bytes,
    })
}

fn truncate(pairs: &mut Vec<WinogradPair>, max: Option<usize>) {
    if let Some(max) = max {
        pairs.truncate(max);
    }
}

fn manifest(command: &str, loaded: &Loaded, output: &OutputArgs, input: &InputArgs) -> Result<RunManifest> {
    let mut m = RunManifest::new(command, &loaded.model_bytes, &loaded.dataset_bytes, timestamp(output.timestamp)?);
    m.settings.insert("condition".into(), json!(input.condition.map(|c| c.as_str())));
    m.settings.insert("max_pairs".into(), json!(input.max_pairs));
    m.settings.insert(
        "pairs".into(),
        json!(loaded.pairs.iter().map(|p| format!("{}/{}", p.pair_id, p.condition)).collect::<Vec<_>>()),
    );
    Ok(m)
}

fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Per-pair scores and metrics from `evaluate`.
#[derive(Debug, Clone)]
pub struct EvaluateReport {
    pub rows: Vec<(WinogradPair, PairScores)>,
    pub scores_tsv: String,
    pub metrics_tsv: String,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluateReport> {
    let mut loaded = load_inputs(&args.input)?;
    truncate(&mut loaded.pairs, args.input.max_pairs);
    let scores = loaded
        .pairs
        .par_iter()
        .map(|p| score_pair(&loaded.model, p))
        .collect::<interchange_core::Result<Vec<_>>>()?;

    let mut scores_tsv = String::from("pair_id\tcondition\tlogp_NA_sA\tlogp_NB_sA\tlogp_NA_sB\tlogp_NB_sB\tstrict\tweak\n");
    let mut tally: BTreeMap<Condition, (usize, usize, usize)> = BTreeMap::new();
    for (p, s) in loaded.pairs.iter().zip(&scores) {
        let (strict, weak) = (strict_metric(s), weak_metric(s));
        let _ = writeln!(
            scores_tsv,
            "{}\t{}\t{}\t{}\t{}\t{}\t{strict}\t{weak}",
            p.pair_id, p.condition, s.logp_na_sa, s.logp_nb_sa, s.logp_na_sb, s.logp_nb_sb
        );
        let t = tally.entry(p.condition).or_default();
        t.0 += 1;
        t.1 += usize::from(strict);
        t.2 += usize::from(weak);
    }
    let mut metrics_tsv = String::from("condition\tn\tstrict_correct\tweak_correct\tstrict_pct\tweak_pct\n");
    for (c, (n, strict, weak)) in &tally {
        let _ = writeln!(
            metrics_tsv,
            "{c}\t{n}\t{strict}\t{weak}\t{:.2}\t{:.2}",
            percent(*strict, *n),
            percent(*weak, *n)
        );
    }

    let out = &args.output.out;
    write(out, "scores.tsv", &scores_tsv)?;
    write(out, "metrics.tsv", &metrics_tsv)?;
    let m = manifest("evaluate", &loaded, &args.output, &args.input)?;
    write(out, "manifest.json", &m.to_json())?;
    Ok(EvaluateReport {
        rows: loaded.pairs.into_iter().zip(scores).collect(),
        scores_tsv,
        metrics_tsv,
    })
}

/// Everything `sweep` wrote, keyed by relative path.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub selected: Vec<WinogradPair>,
    pub files: BTreeMap<String, String>,
}

fn parse_components(list: &Option<Vec<String>>) -> Result<Option<Vec<Component>>> {
    match list {
        None => Ok(None),
        Some(items) if items.iter().any(|c| c == "all") => Ok(None),
        Some(items) => Ok(Some(
            items
                .iter()
                .map(|c| c.parse::<Component>())
                .collect::<interchange_core::Result<Vec<_>>>()?,
        )),
    }
}

/// Keep pairs passing `selection`, judged on the pair itself (except for
/// synonym pairs, which have no correct answer) and on every partner with
/// the same id.
fn select_pairs(
    model: &ModelBundle,
    pairs: Vec<WinogradPair>,
    partners: Option<&[WinogradPair]>,
    selection: Selection,
    kind: SweepKind,
) -> Result<Vec<WinogradPair>> {
    if selection == Selection::All {
        return Ok(pairs);
    }
    let judge_self = kind != SweepKind::Synonym;
    if !judge_self && partners.is_none() {
        return Err(CliError::new(
            "invalid_argument",
            "synonym pairs have no correct answer; pass --partner-dataset or --selection all",
        )
        .into());
    }
    let keep = pairs
        .par_iter()
        .map(|p| -> interchange_core::Result<bool> {
            if judge_self && !selection.accepts(&score_pair(model, p)?) {
                return Ok(false);
            }
            if let Some(partners) = partners {
                let mut found = false;
                for q in partners.iter().filter(|q| q.pair_id == p.pair_id) {
                    found = true;
                    if !selection.accepts(&score_pair(model, q)?) {
                        return Ok(false);
                    }
                }
                return Ok(found);
            }
            Ok(true)
        })
        .collect::<interchange_core::Result<Vec<_>>>()?;
    Ok(pairs.into_iter().zip(keep).filter_map(|(p, k)| k.then_some(p)).collect())
}

/// Paired options-minus-mask differences per `(component, head, layer)`.
fn format_contrasts(grid: &SweepGrid) -> String {
    use interchange_core::dataset::TokenClass;
    let mut out = String::from("component\thead\tlayer\tcontrast\tn\tmean_diff\tt_stat\tdf\tp_value\n");
    for (key, options) in grid.cells().iter().filter(|(k, _)| k.class == TokenClass::Options) {
        let mask_key = interchange_core::engine::CellKey {
            class: TokenClass::Mask,
            ..*key
        };
        let Some(mask) = grid.cell(&mask_key) else { continue };
        let n = options.len();
        let mean = options.iter().zip(mask).map(|(a, b)| a - b).sum::<f64>() / n as f64;
        let (t, df, p) = match paired_t(options, mask) {
            Ok(test) => (test.t.to_string(), test.df.to_string(), test.p.to_string()),
            Err(_) => ("NA".into(), n.saturating_sub(1).to_string(), "NA".into()),
        };
        let _ = writeln!(
            out,
            "{}\t{}\t{}\tpaired_diff_options_minus_mask\t{n}\t{mean}\t{t}\t{df}\t{p}",
            key.component,
            key.head.map_or(-1, |h| h as i64),
            key.layer
        );
    }
    out
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<SweepReport> {
    let loaded = load_inputs(&args.input)?;
    let filters = SweepFilters {
        layers: args.layers.clone(),
        heads: args.heads.clone(),
        components: parse_components(&args.components)?,
    };
    let spec = SweepSpec {
        kind: args.kind,
        filters,
        specials: args.special_tokens.clone().map(SpecialTokens::new),
    };
    // reject bad filters before any scoring
    spec.rows_per_pair(&loaded.model, 1)?;

    let partner_bytes = args.partner_dataset.as_deref().map(read).transpose()?;
    let partners = match (&partner_bytes, &args.partner_dataset) {
        (Some(bytes), Some(path)) => Some(load_pairs(bytes, path, loaded.model.config().mask_token_id)?),
        _ => None,
    };
    let mut selected = select_pairs(&loaded.model, loaded.pairs.clone(), partners.as_deref(), args.selection, args.kind)?;
    truncate(&mut selected, args.input.max_pairs);
    if selected.is_empty() {
        return Err(CliError::new(
            "no_pairs",
            format!("no pairs pass the `{}` selection", args.selection.as_str()),
        )
        .into());
    }

    let rows = run_sweep(&loaded.model, &selected, &spec)?;
    let grid = SweepGrid::from_rows(&rows)?;
    let config = StatsConfig {
        resamples: args.resamples,
        level: args.level,
        alpha: args.alpha,
        seed: args.seed,
    };
    let stats = analyze_grid(&grid, &config)?;

    let mut files = BTreeMap::new();
    files.insert("results.tsv".to_string(), format_results(&rows));
    for g in grids_from_rows(&rows)? {
        files.insert(g.path, g.contents);
    }
    files.insert("stats.tsv".to_string(), format_stats(&stats));
    files.insert("contrasts.tsv".to_string(), format_contrasts(&grid));

    let mut m = manifest("sweep", &loaded, &args.output, &args.input)?;
    m.seeds.insert("bootstrap".into(), args.seed);
    m.selection = args.selection.as_str().into();
    m.settings.insert(
        "pairs".into(),
        json!(selected.iter().map(|p| format!("{}/{}", p.pair_id, p.condition)).collect::<Vec<_>>()),
    );
    m.settings.insert("spec".into(), serde_json::to_value(&spec)?);
    m.settings.insert("resamples".into(), json!(args.resamples));
    m.settings.insert("level".into(), json!(args.level));
    m.settings.insert("alpha".into(), json!(args.alpha));
    m.settings.insert("family_size".into(), json!(stats.family_size));
    m.settings.insert(
        "partner_dataset_digest".into(),
        json!(partner_bytes.as_deref().map(sha256_hex)),
    );
    files.insert("manifest.json".to_string(), m.to_json());

    for (rel, contents) in &files {
        write(&args.output.out, rel, contents)?;
    }
    Ok(SweepReport { selected, files })
}

fn choice(c: OptionChoice) -> &'static str {
    match c {
        OptionChoice::Option1 => "option1",
        OptionChoice::Option2 => "option2",
        OptionChoice::Tie => "tie",
    }
}

/// Bias-check tallies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiasSummary {
    pub pairs: usize,
    pub bias_correct: usize,
    pub strict_correct: usize,
    /// Pairs both strictly correct and resolved by the embedding predictor.
    pub overlap: usize,
}

pub fn cmd_bias_check(args: &BiasArgs) -> Result<BiasSummary> {
    let mut loaded = load_inputs(&args.input)?;
    truncate(&mut loaded.pairs, args.input.max_pairs);
    let results = loaded
        .pairs
        .par_iter()
        .map(|p| -> interchange_core::Result<_> {
            Ok((embedding_bias_predict(&loaded.model, p, args.measure)?, strict_metric(&score_pair(&loaded.model, p)?)))
        })
        .collect::<interchange_core::Result<Vec<_>>>()?;

    let mut table = String::from("pair_id\tcondition\tsentence_A\tsentence_B\tcorrect_A\tpair_correct\taveraged_spans\tstrict_correct\n");
    let mut summary = BiasSummary {
        pairs: results.len(),
        bias_correct: 0,
        strict_correct: 0,
        overlap: 0,
    };
    for (p, (b, strict)) in loaded.pairs.iter().zip(&results) {
        let _ = writeln!(
            table,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{strict}",
            p.pair_id,
            p.condition,
            choice(b.sentence_a),
            choice(b.sentence_b),
            choice(b.correct_a),
            b.pair_correct,
            b.averaged_spans
        );
        summary.bias_correct += usize::from(b.pair_correct);
        summary.strict_correct += usize::from(*strict);
        summary.overlap += usize::from(b.pair_correct && *strict);
    }
    let measure = match args.measure {
        SimilarityMeasure::Correlation => "correlation",
        SimilarityMeasure::Euclidean => "euclidean",
    };
    let report = format!(
        "measure\t{measure}\npairs\t{}\nbias_correct\t{}\nbias_accuracy_pct\t{:.2}\nstrict_correct\t{}\nstrict_and_bias_correct\t{}\n",
        summary.pairs,
        summary.bias_correct,
        percent(summary.bias_correct, summary.pairs),
        summary.strict_correct,
        summary.overlap
    );
    let out = &args.output.out;
    write(out, "bias.tsv", &table)?;
    write(out, "summary.tsv", &report)?;
    let mut m = manifest("bias-check", &loaded, &args.output, &args.input)?;
    m.settings.insert("measure".into(), json!(measure));
    write(out, "manifest.json", &m.to_json())?;
    print!("{report}");
    Ok(summary)
}

pub fn cmd_specificity(args: &SpecificityArgs) -> Result<()> {
    let context_bytes = read(&args.context)?;
    let syntax_bytes = read(&args.syntax)?;
    let text = |bytes: &[u8], path: &Path| -> Result<String> {
        String::from_utf8(bytes.to_vec())
            .map_err(|_| CliError::new("parse", format!("{} is not UTF-8", path.display())).into())
    };
    let context = parse_stats(&text(&context_bytes, &args.context)?, args.alpha)
        .with_context(|| format!("reading {}", args.context.display()))?;
    let syntax = parse_stats(&text(&syntax_bytes, &args.syntax)?, args.alpha)
        .with_context(|| format!("reading {}", args.syntax.display()))?;
    let cells = specificity_map(&context, &syntax)?;
    let out = &args.output.out;
    write(out, "specificity.tsv", &format_specificity(&cells))?;

    let mut m = RunManifest::new("specificity", &[], &[], timestamp(args.output.timestamp)?);
    m.model_digest = "NA".into();
    m.dataset_digest = "NA".into();
    m.settings.insert("context_stats_digest".into(), json!(sha256_hex(&context_bytes)));
    m.settings.insert("syntax_stats_digest".into(), json!(sha256_hex(&syntax_bytes)));
    m.settings.insert("alpha".into(), json!(args.alpha));
    write(out, "manifest.json", &m.to_json())
}

pub fn cmd_toy_model(args: &ToyModelArgs) -> Result<()> {
    let mut cfg = toy_config(args.layers, args.heads, args.hidden);
    if args.untied {
        cfg.layer_sharing = LayerSharing::Untied;
    }
    if args.exact_gelu {
        cfg.activation = Activation::Gelu;
    }
    let model = generate_toy_model(args.seed, &cfg)?;
    fs::write(&args.out, archive_bytes(&model)).with_context(|| format!("writing {}", args.out.display()))
}

pub fn cmd_toy_dataset(args: &ToyDatasetArgs) -> Result<()> {
    let model = load_model(&read(&args.model)?)?;
    let mut pairs = toy_dataset(args.seed, args.count, model.config(), args.condition, args.np_len);
    if args.identical {
        if args.condition != Condition::Synonym {
            return Err(CliError::new("invalid_argument", "--identical only applies to --condition synonym").into());
        }
        for p in &mut pairs {
            p.tokens_b = p.tokens_a.clone();
        }
    }
    fs::write(&args.out, serialize_dataset(&pairs)).with_context(|| format!("writing {}", args.out.display()))
}

pub fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let model_bytes = read(&args.model)?;
    let model = load_model(&model_bytes)?;
    let dataset_bytes = read(&args.dataset)?;
    let pairs = load_pairs(&dataset_bytes, &args.dataset, model.config().mask_token_id)?;
    let vocab = match &args.vocab {
        Some(path) => Vocab::load(path)?,
        None => Vocab::default(),
    };
    let mut m = RunManifest::new("serve", &model_bytes, &dataset_bytes, timestamp(args.timestamp)?);
    m.settings.insert("cell_budget".into(), json!(args.cell_budget));
    let state = Arc::new(
        interchange_server::AppState::new(model, pairs, vocab, m)
            .with_cell_budget(args.cell_budget)
            .with_cache_capacity(args.cache),
    );
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&args.bind)
            .await
            .with_context(|| format!("binding {}", args.bind))?;
        eprintln!("listening on {}", listener.local_addr()?);
        interchange_server::serve(listener, state).await?;
        Ok(())
    })
}
