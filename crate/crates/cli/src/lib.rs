//! Command-line surface: `analyze`, `classify`, `synth` and `oracle`.
//!
//! Exit codes: 0 success (whatever the verdicts), 1 oracle counterexamples,
//! 2 input or usage error, 3 simplex pivot budget exhausted.

pub mod config;
pub mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use compositionality::classify::{classify, ClassifyError};
use compositionality::ingest::{aggregate, parse_trials, parse_truth, table_from_value, write_trials};
use compositionality::inequalities::MarginalPolicy;
use compositionality::jdc::{check, JdcConfig, JdcError, JdcResult};
use compositionality::oracle::{run_with, OracleConfig, Suite};
use compositionality::selectivity::MsMode;
use compositionality::synth::{sample_trials, TruthKind, GENERATOR};
use compositionality::CombinationTable;
use indexmap::IndexMap;
use serde_json::json;

use crate::config::{merge, AnalysisFlags, FileConfig, InputFormat, OutputFormat};
use crate::report::{classify_line, render_text, CombinationReport, Report, ReportError, SCHEMA_VERSION};

pub const EXIT_OK: u8 = 0;
pub const EXIT_COUNTEREXAMPLE: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "compositionality", version, about = "Compositionality analysis of two-concept combinations")]
pub struct Cli {
    /// TOML config file; defaults to $CONTEXTUALITY_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Full report per combination.
    Analyze(AnalyzeArgs),
    /// One line per combination: name, verdict, max |CHSH|.
    Classify(InputArgs),
    /// Draw a trials CSV from a ground-truth model.
    Synth(SynthArgs),
    /// Randomized equivalence checks between the inequalities and the JDC.
    Oracle(OracleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MsArg {
    Strict,
    Statistical,
    Auto,
}

impl From<MsArg> for MsMode {
    fn from(m: MsArg) -> Self {
        match m {
            MsArg::Strict => MsMode::Strict,
            MsArg::Statistical => MsMode::Statistical,
            MsArg::Auto => MsMode::Auto,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct AnalysisArgs {
    /// Significance level of the marginal selectivity test.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Chi-square critical value; derived from --alpha when omitted.
    #[arg(long)]
    pub critical_value: Option<f64>,
    /// Yates continuity correction.
    #[arg(long)]
    pub yates: bool,
    /// Marginal selectivity mode.
    #[arg(long, value_enum)]
    pub ms: Option<MsArg>,
    /// Treat these combinations as passing marginal selectivity (all when no names are given).
    #[arg(long, num_args = 0.., value_delimiter = ',', value_name = "NAMES")]
    pub override_ms: Option<Vec<String>>,
    /// `average`, `a1b1`..`a2b2` or `condition(i,j)`.
    #[arg(long)]
    pub marginal_policy: Option<MarginalPolicy>,
    #[arg(long)]
    pub chsh_tolerance: Option<f64>,
    #[arg(long)]
    pub bellch_tolerance: Option<f64>,
    #[arg(long)]
    pub lp_tolerance: Option<f64>,
    #[arg(long)]
    pub pivot_budget: Option<usize>,
}

impl AnalysisArgs {
    fn flags(&self) -> AnalysisFlags {
        AnalysisFlags {
            alpha: self.alpha,
            critical_value: self.critical_value,
            yates: self.yates,
            ms: self.ms.map(MsMode::from),
            override_ms: self.override_ms.clone(),
            marginal_policy: self.marginal_policy,
            chsh_tolerance: self.chsh_tolerance,
            bellch_tolerance: self.bellch_tolerance,
            lp_tolerance: self.lp_tolerance,
            pivot_budget: self.pivot_budget,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Trials CSV, table JSON, or a directory of table JSON files.
    pub input: PathBuf,
    /// Input format; inferred from the path when omitted.
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    #[command(flatten)]
    pub analysis: AnalysisArgs,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, conflicts_with = "text")]
    pub json: bool,
    #[arg(long)]
    pub text: bool,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Ground truth: a 16-array joint, `{"joint": [...]}`, or a table JSON.
    #[arg(long)]
    pub truth: PathBuf,
    /// Trials per condition.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub n: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; a `.meta.json` sidecar is written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
    pub trials: u64,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub lp_tolerance: Option<f64>,
    #[arg(long)]
    pub json: bool,
    /// Directory for counterexample tables.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Error with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl Failure {
    fn input(error: anyhow::Error) -> Self {
        Failure { code: EXIT_INPUT, error }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure::input(error)
    }
}

/// Runs a parsed command line with the library's own JDC solver.
pub fn run(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8 {
    run_with_solver(cli, check, stdout, stderr)
}

/// As [`run`], with `solver` used by `oracle` in place of the JDC.
pub fn run_with_solver<F>(cli: &Cli, solver: F, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    F: Fn(&CombinationTable, &JdcConfig) -> Result<JdcResult, JdcError>,
{
    let file = match FileConfig::discover(cli.config.as_deref()) {
        Ok(f) => f,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e:#}");
            return EXIT_INPUT;
        }
    };
    let outcome = match &cli.command {
        Command::Analyze(args) => cmd_analyze(args, &file, stdout, stderr),
        Command::Classify(args) => cmd_classify(args, &file, stdout, stderr),
        Command::Synth(args) => cmd_synth(args, &file, stdout),
        Command::Oracle(args) => cmd_oracle(args, &file, solver, stdout, stderr),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(stderr, "error: {:#}", f.error);
            f.code
        }
    }
}

fn infer_format(path: &Path) -> InputFormat {
    if path.is_dir() {
        InputFormat::Tabledir
    } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        InputFormat::Table
    } else {
        InputFormat::Trials
    }
}

fn read_table(path: &Path) -> Result<CombinationTable> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("{}: invalid JSON", path.display()))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("unnamed");
    table_from_value(&value, stem).with_context(|| path.display().to_string())
}

/// Tables in input order. Errors on individual files of a directory are
/// collected in `errors`; anything else fails the whole run.
fn load_tables(
    input: &InputArgs,
    file: &FileConfig,
    errors: &mut Vec<ReportError>,
) -> Result<IndexMap<String, CombinationTable>, Failure> {
    let format = input.format.or(file.format).unwrap_or_else(|| infer_format(&input.input));
    let path = &input.input;
    let mut tables = IndexMap::new();
    match format {
        InputFormat::Table => {
            let t = read_table(path)?;
            tables.insert(t.name().to_owned(), t);
        }
        InputFormat::Tabledir => {
            let entries = fs::read_dir(path).with_context(|| format!("reading directory {}", path.display()))?;
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")))
                .collect();
            files.sort();
            for f in files {
                match read_table(&f) {
                    Ok(t) if tables.contains_key(t.name()) => errors.push(ReportError {
                        name: f.display().to_string(),
                        message: format!("duplicate combination name '{}'", t.name()),
                    }),
                    Ok(t) => {
                        tables.insert(t.name().to_owned(), t);
                    }
                    Err(e) => errors.push(ReportError {
                        name: f.display().to_string(),
                        message: format!("{e:#}"),
                    }),
                }
            }
        }
        InputFormat::Trials => {
            let reader = fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
            let records = parse_trials(reader).with_context(|| path.display().to_string())?;
            tables = aggregate(&records).with_context(|| path.display().to_string())?;
        }
    }
    Ok(tables)
}

/// Classifies every table, collecting per-table errors; returns the worst
/// exit code seen.
fn analyze_all(
    input: &InputArgs,
    file: &FileConfig,
    stderr: &mut dyn Write,
) -> Result<(Report, u8), Failure> {
    let config = merge(&input.analysis.flags(), file)?;
    let mut errors = Vec::new();
    let tables = load_tables(input, file, &mut errors)?;
    let mut code = if errors.is_empty() { EXIT_OK } else { EXIT_INPUT };
    let mut combinations = Vec::new();
    for (name, table) in &tables {
        match classify(table, &config) {
            Ok(c) => combinations.push(CombinationReport::new(table, c)),
            Err(e) => {
                code = code.max(match e {
                    ClassifyError::Jdc(_) => EXIT_INTERNAL,
                    ClassifyError::Selectivity(_) => EXIT_INPUT,
                });
                errors.push(ReportError {
                    name: name.clone(),
                    message: e.to_string(),
                });
            }
        }
    }
    for e in &errors {
        let _ = writeln!(stderr, "error: {}: {}", e.name, e.message);
    }
    Ok((
        Report {
            schema_version: SCHEMA_VERSION,
            config,
            combinations,
            errors,
        },
        code,
    ))
}

fn emit(out_path: Option<&Path>, text: &str, stdout: &mut dyn Write) -> Result<(), Failure> {
    match out_path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => {
            let _ = stdout.write_all(text.as_bytes());
        }
    }
    Ok(())
}

fn cmd_analyze(
    args: &AnalyzeArgs,
    file: &FileConfig,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<u8, Failure> {
    let (report, code) = analyze_all(&args.input, file, stderr)?;
    let output = if args.text {
        OutputFormat::Text
    } else if args.json {
        OutputFormat::Json
    } else {
        file.output.unwrap_or(OutputFormat::Json)
    };
    let text = match output {
        OutputFormat::Json => {
            let mut s = serde_json::to_string_pretty(&report).context("serializing report")?;
            s.push('\n');
            s
        }
        OutputFormat::Text => render_text(&report),
    };
    emit(args.out.as_deref(), &text, stdout)?;
    Ok(code)
}

fn cmd_classify(
    args: &InputArgs,
    file: &FileConfig,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<u8, Failure> {
    let (report, code) = analyze_all(args, file, stderr)?;
    for r in &report.combinations {
        let _ = writeln!(stdout, "{}", classify_line(r));
    }
    Ok(code)
}

fn cmd_synth(args: &SynthArgs, file: &FileConfig, stdout: &mut dyn Write) -> Result<u8, Failure> {
    let reader = fs::File::open(&args.truth).with_context(|| format!("reading {}", args.truth.display()))?;
    let truth = parse_truth(reader).with_context(|| args.truth.display().to_string())?;
    let seed = args.seed.or(file.seed).unwrap_or(0);
    let records = sample_trials(&truth, args.n, seed);
    let csv = write_trials(&records);
    emit(args.out.as_deref(), &csv, stdout)?;
    if let Some(out) = &args.out {
        let kind = match truth.kind {
            TruthKind::Joint(_) => "joint",
            TruthKind::PerCondition(_) => "per-condition",
        };
        let meta = json!({
            "generator": GENERATOR,
            "seed": seed,
            "n_per_condition": args.n,
            "records": records.len(),
            "truth": args.truth.display().to_string(),
            "truth_name": truth.name,
            "truth_kind": kind,
        });
        let mut meta_path = out.clone().into_os_string();
        meta_path.push(".meta.json");
        let text = serde_json::to_string_pretty(&meta).context("serializing metadata")? + "\n";
        fs::write(&meta_path, text).with_context(|| format!("writing {}", Path::new(&meta_path).display()))?;
    }
    Ok(EXIT_OK)
}

fn cmd_oracle<F>(
    args: &OracleArgs,
    file: &FileConfig,
    solver: F,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> Result<u8, Failure>
where
    F: Fn(&CombinationTable, &JdcConfig) -> Result<JdcResult, JdcError>,
{
    let defaults = OracleConfig::default();
    let config = OracleConfig {
        trials: usize::try_from(args.trials).context("--trials too large")?,
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        jdc: JdcConfig {
            tolerance: args.lp_tolerance.or(file.lp_tolerance).unwrap_or(defaults.jdc.tolerance),
            pivot_budget: file.pivot_budget.unwrap_or(defaults.jdc.pivot_budget),
        },
        ..defaults
    };
    let report = match run_with(&config, solver) {
        Ok(r) => r,
        Err(e) => {
            return Err(Failure {
                code: EXIT_INTERNAL,
                error: anyhow::Error::new(e),
            })
        }
    };
    if args.json {
        let s = serde_json::to_string_pretty(&report).context("serializing oracle report")?;
        let _ = writeln!(stdout, "{s}");
    } else {
        for suite in Suite::ALL {
            let s = report.suite(suite);
            let _ = writeln!(
                stdout,
                "{}: {} instances, {} skipped, {} counterexamples",
                suite.label(),
                s.instances,
                s.skipped,
                s.counterexamples
            );
        }
        let _ = writeln!(stdout, "{} counterexamples", report.total_counterexamples());
    }
    if report.counterexamples.is_empty() {
        return Ok(EXIT_OK);
    }
    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (i, c) in report.counterexamples.iter().enumerate() {
                let path = dir.join(format!("counterexample-{i:04}.json"));
                let text = serde_json::to_string_pretty(c).context("serializing counterexample")? + "\n";
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            let _ = writeln!(stderr, "counterexamples written to {}", dir.display());
        }
        None => {
            for c in &report.counterexamples {
                let _ = writeln!(stderr, "{}", serde_json::to_string(c).unwrap_or_default());
            }
        }
    }
    Ok(EXIT_COUNTEREXAMPLE)
}
