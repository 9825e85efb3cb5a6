use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qassert_core::assertions::{
    split_at_breakpoints, EnsembleMode, EvalOptions, DEFAULT_ALPHA, DEFAULT_SEED,
};
use qassert_core::bench::{self, BenchError, BENCHMARKS, BUG_IDS};
use qassert_core::program::{emit_truncated, parse, Dialect, Program};
use qassert_core::report::{Format, Report};
use qassert_core::{evaluate, Status};

const THREADS_VAR: &str = "QASSERT_THREADS";

const EXIT_FAIL: u8 = 1;
const EXIT_INDETERMINATE: u8 = 2;
const EXIT_USAGE: u8 = 3;
const EXIT_RESOURCE: u8 = 4;

#[derive(Parser)]
#[command(
    name = "qassert",
    version,
    about = "Statistical assertion checking for quantum programs",
    after_help = "Set QASSERT_THREADS to choose the worker-thread count (default: all cores).\n\
                  Exit status: 0 pass, 1 assertion failure, 2 indeterminate, 3 usage error, 4 resource error."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every assertion of a benchmark or program file
    Run(RunArgs),
    /// List benchmarks and their bug injections
    List,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Benchmark name or path to a program file
    target: String,
    /// Inject a bug before running
    #[arg(long, value_name = "ID")]
    bug: Option<String>,
    /// Shots per assertion (default depends on the assertion kind)
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    shots: Option<u64>,
    #[arg(long, value_name = "S", default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Significance level
    #[arg(long, value_name = "A", default_value_t = DEFAULT_ALPHA, value_parser = parse_alpha)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
    /// Re-simulate the program for every shot instead of sampling once
    #[arg(long)]
    per_shot_rerun: bool,
    /// Write each truncated breakpoint program to DIR
    #[arg(long, value_name = "DIR")]
    emit_breakpoints: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DialectArg::Native, requires = "emit_breakpoints")]
    dialect: DialectArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum DialectArg {
    Native,
    QasmSubset,
}

fn parse_alpha(s: &str) -> Result<f64, String> {
    let a: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if a > 0.0 && a < 1.0 {
        Ok(a)
    } else {
        Err("alpha must lie strictly between 0 and 1".into())
    }
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn resource(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RESOURCE,
            message: message.into(),
        }
    }
}

impl From<BenchError> for CliError {
    fn from(e: BenchError) -> Self {
        match &e {
            BenchError::Engine(inner) if inner.is_resource() => CliError::resource(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(value) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::usage(format!(
                "{THREADS_VAR} must be a positive integer, got `{value}`"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::resource(format!("cannot start {n} worker threads: {e}")))
}

fn load(args: &RunArgs) -> Result<Program, CliError> {
    let program = if let Some(spec) = bench::benchmark(&args.target) {
        if let Some(id) = &args.bug {
            if !BUG_IDS.contains(&id.as_str()) {
                return Err(BenchError::UnknownBug { id: id.clone() }.into());
            }
            if spec.bug(id).is_none() {
                return Err(BenchError::BugNotRegistered {
                    id: id.clone(),
                    target: spec.name.to_string(),
                    available: spec.bugs.iter().map(|b| b.id).collect(),
                }
                .into());
            }
        }
        spec.program()
    } else {
        let path = Path::new(&args.target);
        if !path.exists() {
            let names: Vec<_> = BENCHMARKS.iter().map(|b| b.name).collect();
            return Err(CliError::usage(format!(
                "`{}` is neither a benchmark ({}) nor a file",
                args.target,
                names.join(", ")
            )));
        }
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        parse(&text).map_err(|errs| {
            let lines: Vec<String> = errs
                .iter()
                .map(|e| format!("{}:{e}", path.display()))
                .collect();
            CliError::usage(lines.join("\n"))
        })?
    };
    match &args.bug {
        Some(id) => Ok(bench::inject_bug(&program, id)?),
        None => Ok(program),
    }
}

fn emit(program: &Program, dir: &Path, dialect: Dialect) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::resource(format!("cannot create {}: {e}", dir.display())))?;
    let split = split_at_breakpoints(program);
    for bp in &split.breakpoints {
        let path = dir.join(format!(
            "breakpoint_{:02}.{}",
            bp.index + 1,
            dialect.extension()
        ));
        fs::write(&path, emit_truncated(bp, dialect))
            .map_err(|e| CliError::resource(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<Status, CliError> {
    let program = load(&args)?;
    if let Some(dir) = &args.emit_breakpoints {
        let dialect = match args.dialect {
            DialectArg::Native => Dialect::Native,
            DialectArg::QasmSubset => Dialect::QasmSubset,
        };
        emit(&program, dir, dialect)?;
    }
    let opts = EvalOptions {
        shots: args.shots.map(|s| s as usize),
        seed: args.seed,
        alpha: args.alpha,
        mode: if args.per_shot_rerun {
            EnsembleMode::PerShotRerun
        } else {
            EnsembleMode::Sampled
        },
        ..EvalOptions::default()
    };
    let eval = evaluate(&program, &opts).map_err(|e| {
        if e.is_resource() {
            CliError::resource(e.to_string())
        } else {
            CliError::usage(e.to_string())
        }
    })?;
    let report = Report::new(&args.target, args.bug.as_deref(), &opts, eval);
    let format = match args.format {
        OutputFormat::Text => Format::Text,
        OutputFormat::Json => Format::Json,
    };
    print!("{}", report.render(format));
    Ok(report.status)
}

fn list() {
    for b in BENCHMARKS {
        println!("{:<16} {}", b.name, b.description);
        let program = b.program();
        let assertions: Vec<_> = program.assertions().collect();
        for bug in b.bugs {
            let a = assertions[bug.caught_by];
            println!(
                "  --bug {:<15} type {}: {}; caught at line {} (assert {})",
                bug.id, bug.category, bug.description, a.line, a.kind
            );
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("qassert: {}", e.message);
        return ExitCode::from(e.code);
    }
    match cli.command {
        Command::List => {
            list();
            ExitCode::SUCCESS
        }
        Command::Run(args) => match run(args) {
            Ok(Status::Pass | Status::PassDegenerate) => ExitCode::SUCCESS,
            Ok(Status::Fail) => ExitCode::from(EXIT_FAIL),
            Ok(Status::Indeterminate) => ExitCode::from(EXIT_INDETERMINATE),
            Err(e) => {
                eprintln!("qassert: {}", e.message);
                ExitCode::from(e.code)
            }
        },
    }
}
