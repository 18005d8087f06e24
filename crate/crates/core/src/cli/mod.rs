//! The `oscnet` command line.
//!
//! Exit status: 0 when every requested level converged, 1 when some level
//! did not (or the run failed), 2 for an invalid configuration.

pub mod config;
pub mod output;
pub mod tables;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, IsTerminal, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::ansatz::{self, CollocationGrid};
use crate::error::Result;
use crate::format::{round_sig, sig};
use crate::operators::{harmonic_exact_level, PotentialSpec};
use crate::oracle::{self, ReferenceRow, DEFAULT_ORACLE_POINTS};
use crate::trainer::{solve_spectrum, NnSpectrum, TrainingConfig};

use config::{parse_config, Command, ConfigError, OutputFormat, RunConfig, Settings};
use output::{write_csv_rows, write_json_envelope, SpectrumResult, SpectrumRow};
use tables::{Table1Row, Table2Row, Table3Row};

const CONFIG_HELP: &str = "\
Config file (--config): one `key = value` per line, `#` starts a comment.
Keys: lambda, levels, seed, grid_n, grid_l, hidden, max_iters, tol, accept_tol,
learning_rate, norm_weight, ortho_weight, pretrain_energy, format, output,
table, dump_dir, no_timestamp. Command-line flags override the file.

Defaults: lambda 0.1; levels 4 for `spectrum`, 1 otherwise; seed 7; hidden 10;
max_iters 20000; tol 1e-9; accept_tol 2e-2; learning_rate 1e-2;
norm_weight 10; ortho_weight 10; format csv; output stdout.
Training grid: 401 points on a potential-dependent half width.
Oracle grid: 4001 points, half width sized so the top level has decayed.
The ground state starts from the Rayleigh quotient of the initial network
unless pretrain_energy is set; `spectrum` starts every level from its WKB
estimate.

Exit status: 0 all levels converged, 1 some level did not, 2 invalid config.";

#[derive(Debug, Parser)]
#[command(
    name = "oscnet",
    version,
    about = "Harmonic and quartic anharmonic oscillator eigenvalues from a trained neural-network wavefunction",
    after_help = CONFIG_HELP
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArg,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Subcommand)]
pub enum CommandArg {
    /// Ground state (or lowest levels) of -½ψ'' + ½x²ψ
    Harmonic,
    /// Ground state of -ψ'' + x²ψ + λx⁴ψ for each λ
    Anharmonic,
    /// Lowest levels of -ψ'' + x²ψ + λx⁴ψ for each λ
    Spectrum,
    /// Finite-difference reference eigenvalues only (no training)
    Oracle,
    /// Recompute one of the published tables next to its transcribed columns
    ReproduceTables {
        #[arg(long, help = "Table number: 1, 2 or 3")]
        table: Option<u8>,
    },
}

#[derive(Debug, Args)]
pub struct Flags {
    #[arg(long, global = true, value_delimiter = ',', allow_negative_numbers = true,
          help = "Quartic couplings, comma separated [default: 0.1]")]
    pub lambda: Option<Vec<f64>>,
    #[arg(long, global = true, help = "Number of levels [default: 4 for spectrum, else 1]")]
    pub levels: Option<usize>,
    #[arg(long, global = true, help = "Network initialization seed [default: 7]")]
    pub seed: Option<u64>,
    #[arg(long, global = true, help = "Grid points (training grid, or oracle grid for `oracle`)")]
    pub grid_n: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true, help = "Grid half width")]
    pub grid_l: Option<f64>,
    #[arg(long, global = true, value_delimiter = ',', help = "Hidden layer widths [default: 10]")]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, global = true, help = "Training iterations per level [default: 20000]")]
    pub max_iters: Option<usize>,
    #[arg(long, global = true, help = "Early-stop loss threshold [default: 1e-9]")]
    pub tol: Option<f64>,
    #[arg(long, global = true, value_parser = ["csv", "json"], help = "Output format [default: csv]")]
    pub format: Option<String>,
    #[arg(long, global = true, help = "Output file [default: stdout]")]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, help = "Config file of `key = value` lines")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, help = "Directory for wavefunction and training-trace CSVs")]
    pub dump_dir: Option<PathBuf>,
    #[arg(long, global = true, help = "Leave the timestamp out of JSON provenance")]
    pub no_timestamp: bool,
}

impl Flags {
    fn settings(&self) -> Settings {
        Settings {
            lambda: self.lambda.clone(),
            levels: self.levels,
            seed: self.seed,
            grid_n: self.grid_n,
            grid_l: self.grid_l,
            hidden: self.hidden.clone(),
            max_iters: self.max_iters,
            tol: self.tol,
            format: self.format.as_deref().map(|f| f.parse().expect("clap checked the value")),
            output: self.output.clone(),
            dump_dir: self.dump_dir.clone(),
            no_timestamp: self.no_timestamp.then_some(true),
            ..Settings::default()
        }
    }
}

/// Parses `args` (program name first), runs, and returns the exit status.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match run(&cfg) {
        Ok(status) => status,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn build_config(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let file = match &cli.flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
                line: None,
                field: "config".into(),
                message: format!("cannot read {}: {e}", path.display()),
            })?;
            parse_config(&text)?
        }
        None => Settings::default(),
    };
    let mut flags = cli.flags.settings();
    let command = match cli.command {
        CommandArg::Harmonic => Command::Harmonic,
        CommandArg::Anharmonic => Command::Anharmonic,
        CommandArg::Spectrum => Command::Spectrum,
        CommandArg::Oracle => Command::Oracle,
        CommandArg::ReproduceTables { table } => {
            flags.table = table;
            Command::ReproduceTables
        }
    };
    RunConfig::resolve(command, flags.over(file))
}

/// Executes a resolved configuration; returns the exit status.
pub fn run(cfg: &RunConfig) -> Result<i32> {
    match cfg.command {
        Command::Oracle => run_oracle(cfg),
        Command::ReproduceTables => run_tables(cfg),
        Command::Harmonic | Command::Anharmonic | Command::Spectrum => run_training(cfg),
    }
}

struct Style {
    color: bool,
}

impl Style {
    fn from_env() -> Self {
        let no_color = std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty());
        Self {
            color: !no_color && io::stderr().is_terminal(),
        }
    }

    fn paint(&self, code: &str, text: &str) -> String {
        if self.color {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    fn status(&self, converged: bool) -> String {
        if converged {
            self.paint("32", "converged")
        } else {
            self.paint("31", "NOT CONVERGED")
        }
    }

    fn warn(&self, msg: &str) {
        eprintln!("{} {msg}", self.paint("33", "warning:"));
    }
}

/// One potential to train on, with its label in the output.
#[derive(Debug, Clone, Copy)]
struct Job {
    lambda: f64,
    spec: PotentialSpec,
    harmonic: bool,
}

impl Job {
    fn harmonic() -> Self {
        Self {
            lambda: 0.0,
            spec: PotentialSpec::harmonic_half(),
            harmonic: true,
        }
    }

    fn anharmonic(lambda: f64) -> Result<Self> {
        Ok(Self {
            lambda,
            spec: PotentialSpec::anharmonic_table(lambda)?,
            harmonic: false,
        })
    }

    fn tag(&self) -> String {
        if self.harmonic {
            "harmonic".into()
        } else {
            format!("lambda{}", sig(self.lambda))
        }
    }
}

struct Solved {
    job: Job,
    nn: NnSpectrum,
    reference: Vec<f64>,
    warnings: Vec<String>,
}

fn training_template(cfg: &RunConfig, spec: PotentialSpec) -> Result<TrainingConfig> {
    let mut t = TrainingConfig::new(spec);
    t.grid = CollocationGrid::new(
        cfg.grid_l.unwrap_or_else(|| ansatz::default_half_width(&spec)),
        cfg.training_grid_points(),
    )?;
    t.seed = cfg.seed;
    t.hidden_sizes = cfg.hidden_sizes.clone();
    t.max_iters = cfg.max_iters;
    t.tol = cfg.tol;
    t.accept_tol = cfg.accept_tol;
    t.learning_rate = cfg.learning_rate;
    t.norm_weight = cfg.norm_weight;
    t.ortho_weight = cfg.ortho_weight;
    t.pretrain_energy = cfg.pretrain_energy.unwrap_or(f64::NAN);
    Ok(t)
}

/// Trains the lowest `n_levels` of `job` and computes their reference
/// values. Excited levels start from their WKB estimates; the ground state
/// does too when `wkb_ground` is set, and otherwise from the configured
/// pretrain energy or the Rayleigh quotient of the initial network.
fn solve_job(cfg: &RunConfig, job: Job, n_levels: usize, wkb_ground: bool) -> Result<Solved> {
    let template = training_template(cfg, job.spec)?;
    let estimates: Vec<f64> = (0..n_levels)
        .map(|n| match (n, cfg.pretrain_energy) {
            (0, Some(e)) => e,
            (0, None) if !wkb_ground => f64::NAN,
            _ => oracle::wkb_energy(&job.spec, n),
        })
        .collect();
    let nn = solve_spectrum(n_levels, &template, Some(&estimates))?;
    let (reference, warnings) = if job.harmonic {
        ((0..n_levels as u32).map(harmonic_exact_level).collect(), Vec::new())
    } else {
        let fd = oracle::reference_levels(&job.spec, n_levels)?;
        (fd.best().to_vec(), fd.warnings)
    };
    Ok(Solved {
        job,
        nn,
        reference,
        warnings,
    })
}

fn solve_all(cfg: &RunConfig, jobs: &[Job], n_levels: usize, wkb_ground: bool) -> Result<Vec<Solved>> {
    // each job is single-threaded and seeded, so results do not depend on
    // scheduling; collect keeps input order
    jobs.par_iter()
        .map(|&job| solve_job(cfg, job, n_levels, wkb_ground))
        .collect()
}

fn open_output(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(match &cfg.output_path {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

/// Normalized wavefunction on the report grid and the training trace of
/// every level.
fn dump(cfg: &RunConfig, solved: &Solved) -> Result<()> {
    let Some(dir) = &cfg.dump_dir else {
        return Ok(());
    };
    std::fs::create_dir_all(dir)?;
    let grid = ansatz::default_report_grid(&solved.job.spec);
    let tag = solved.job.tag();
    for (level, state) in solved.nn.levels.iter().zip(&solved.nn.states) {
        let n = level.level;
        let mut psi = state.clone();
        let norm = psi.norm_squared(&grid).sqrt();
        if norm > 0.0 {
            psi.net_mut().scale_output(norm.recip());
        }
        psi.write_csv(&grid, BufWriter::new(File::create(dir.join(format!("psi_{tag}_n{n}.csv")))?))?;
        level
            .report
            .write_trace_csv(BufWriter::new(File::create(dir.join(format!("trace_{tag}_n{n}.csv")))?))?;
    }
    Ok(())
}

fn spectrum_rows(solved: &Solved) -> Vec<SpectrumRow> {
    solved
        .nn
        .levels
        .iter()
        .zip(&solved.reference)
        .map(|(l, &e_ref)| SpectrumRow::new(solved.job.lambda, l.level, l.report.final_energy, e_ref, l.converged))
        .collect()
}

fn summarize(style: &Style, solved: &[Solved]) {
    for s in solved {
        for w in &s.warnings {
            style.warn(&format!("{} oracle: {w}", s.job.tag()));
        }
        for (l, &e_ref) in s.nn.levels.iter().zip(&s.reference) {
            let r = &l.report;
            eprintln!(
                "{} n={}  E_nn={}  E_ref={}  rel={:.2e}  loss={:.2e}  iters={}  {}",
                s.job.tag(),
                l.level,
                sig(r.final_energy),
                sig(e_ref),
                (r.final_energy - e_ref).abs() / e_ref.abs(),
                r.final_loss,
                r.iterations_used,
                style.status(l.converged),
            );
        }
    }
}

fn report_unconverged(style: &Style, pairs: &[(f64, usize)]) -> i32 {
    if pairs.is_empty() {
        return 0;
    }
    let list: Vec<String> = pairs
        .iter()
        .map(|(l, n)| format!("(lambda={}, n={n})", sig(*l)))
        .collect();
    eprintln!("{} {}", style.paint("31", "unconverged:"), list.join(", "));
    1
}

fn run_training(cfg: &RunConfig) -> Result<i32> {
    let style = Style::from_env();
    let jobs: Vec<Job> = match cfg.command {
        Command::Harmonic => vec![Job::harmonic()],
        _ => cfg
            .lambda_values
            .iter()
            .map(|&l| Job::anharmonic(l))
            .collect::<Result<_>>()?,
    };
    let solved = solve_all(cfg, &jobs, cfg.n_levels, cfg.command == Command::Spectrum)?;
    let result = SpectrumResult {
        rows: solved.iter().flat_map(spectrum_rows).collect(),
    };
    let out = open_output(cfg)?;
    match cfg.output_format {
        OutputFormat::Csv => result.write_csv(out)?,
        OutputFormat::Json => result.write_json(cfg, out)?,
    }
    for s in &solved {
        dump(cfg, s)?;
    }
    summarize(&style, &solved);
    Ok(report_unconverged(&style, &result.unconverged()))
}

fn run_oracle(cfg: &RunConfig) -> Result<i32> {
    let style = Style::from_env();
    let m = cfg.n_levels;
    let spectra: Vec<_> = cfg
        .lambda_values
        .par_iter()
        .map(|&lambda| {
            let spec = PotentialSpec::anharmonic_table(lambda)?;
            let grid = CollocationGrid::new(
                cfg.grid_l.unwrap_or_else(|| oracle::default_oracle_half_width(&spec, m)),
                cfg.grid_n.unwrap_or(DEFAULT_ORACLE_POINTS.max(10 * m + 1)),
            )?;
            oracle::richardson_refine(&spec, &grid, m)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<ReferenceRow> = spectra.iter().flat_map(|s| s.rows()).collect();
    let out = open_output(cfg)?;
    match cfg.output_format {
        OutputFormat::Csv => oracle::write_reference_csv(&rows, out)?,
        OutputFormat::Json => {
            let rounded: Vec<ReferenceRow> = rows
                .iter()
                .map(|r| ReferenceRow {
                    lambda: round_sig(r.lambda),
                    eigenvalue_raw: round_sig(r.eigenvalue_raw),
                    eigenvalue_refined: round_sig(r.eigenvalue_refined),
                    half_width: round_sig(r.half_width),
                    ..r.clone()
                })
                .collect();
            write_json_envelope(cfg, &rounded, out)?
        }
    }
    for s in &spectra {
        for w in &s.warnings {
            style.warn(&format!("lambda{}: {w}", sig(s.spec.lambda())));
        }
    }
    for r in &rows {
        eprintln!(
            "lambda{} n={}  E={}  (raw {}, n={}, L={})",
            sig(r.lambda),
            r.level,
            sig(r.eigenvalue_refined),
            sig(r.eigenvalue_raw),
            r.grid_n,
            sig(r.half_width)
        );
    }
    Ok(0)
}

fn write_table<T: serde::Serialize>(cfg: &RunConfig, rows: &[T]) -> Result<()> {
    let out = open_output(cfg)?;
    match cfg.output_format {
        OutputFormat::Csv => write_csv_rows(rows, out),
        OutputFormat::Json => write_json_envelope(cfg, rows, out),
    }
}

fn run_tables(cfg: &RunConfig) -> Result<i32> {
    let style = Style::from_env();
    let solved = match cfg.table {
        Some(1) => {
            let solved = solve_all(cfg, &[Job::harmonic()], 1, false)?;
            let l = &solved[0].nn.levels[0];
            write_table(cfg, &[Table1Row::new(l.report.final_energy, l.converged)])?;
            solved
        }
        Some(2) => {
            let jobs: Vec<Job> = tables::TABLE2
                .iter()
                .map(|r| Job::anharmonic(r.0))
                .collect::<Result<_>>()?;
            let solved = solve_all(cfg, &jobs, 1, false)?;
            let rows: Vec<Table2Row> = solved
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let l = &s.nn.levels[0];
                    Table2Row::new(i, l.report.final_energy, s.reference[0], l.converged)
                })
                .collect();
            write_table(cfg, &rows)?;
            solved
        }
        Some(3) => {
            let job = Job::anharmonic(tables::TABLE3_LAMBDA)?;
            let solved = solve_all(cfg, &[job], tables::TABLE3.len(), true)?;
            let s = &solved[0];
            let rows: Vec<Table3Row> = s
                .nn
                .levels
                .iter()
                .zip(&s.reference)
                .map(|(l, &e_ref)| Table3Row::new(l.level, l.report.final_energy, e_ref, l.converged))
                .collect();
            write_table(cfg, &rows)?;
            for r in rows.iter().filter(|r| r.references_disagree) {
                let closer = if r.oracle_vs_ref23 < r.oracle_vs_ref31 { "[23]" } else { "[31]" };
                style.warn(&format!(
                    "n={}: published reference columns disagree (Ref. [23] {} vs Ref. [31] {}); oracle {} is closer to Ref. {closer}",
                    r.level, r.ref_23, r.ref_31, r.e_oracle
                ));
            }
            solved
        }
        other => unreachable!("table {other:?} rejected by validation"),
    };
    for s in &solved {
        dump(cfg, s)?;
    }
    summarize(&style, &solved);
    let pairs: Vec<(f64, usize)> = solved
        .iter()
        .flat_map(|s| {
            s.nn.levels
                .iter()
                .filter(|l| !l.converged)
                .map(move |l| (s.job.lambda, l.level))
        })
        .collect();
    Ok(report_unconverged(&style, &pairs))
}
