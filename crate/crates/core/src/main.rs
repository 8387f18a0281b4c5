use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use conformal_lab::cli::{self, output, plot, JobKind, JobSpec, Suite};
use conformal_lab::Error;

#[derive(Parser)]
#[command(name = "conformal-lab", version, about = "Locate and certify conformal points")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a JSON job.
    Run {
        job: PathBuf,
        /// Report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Run the built-in identity checks.
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: SuiteArg,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the JSON schema of jobs and reports.
    Schema,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum SuiteArg {
    All,
    Commutation,
    Graph,
    Determinant,
    Relations,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::All => Suite::All,
            SuiteArg::Commutation => Suite::Commutation,
            SuiteArg::Graph => Suite::Graph,
            SuiteArg::Determinant => Suite::Determinant,
            SuiteArg::Relations => Suite::Relations,
        }
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("conformal-lab: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn emit(bytes: &[u8], path: Option<&Path>) -> Result<(), Error> {
    match path {
        Some(p) => output::write_atomic(p, bytes),
        None => {
            use std::io::Write;
            std::io::stdout().write_all(bytes).map_err(Error::from)
        }
    }
}

fn execute(job: &JobSpec, seed: u64, out: Option<PathBuf>, svg: Option<PathBuf>, csv: Option<PathBuf>) -> ExitCode {
    let outcome = cli::run(job, seed);
    let mut report = outcome.report;
    if let Some(p) = &svg {
        if let Err(e) = output::write_atomic(p, plot::render(&outcome.panels).as_bytes()) {
            report.warnings.push(e.to_string());
        }
    }
    if let Some(p) = &csv {
        if let Err(e) = output::samples_csv(&outcome.samples).and_then(|b| output::write_atomic(p, &b)) {
            report.warnings.push(e.to_string());
        }
    }
    let written = output::to_json(&report).and_then(|text| emit(text.as_bytes(), out.as_deref()));
    if let Err(e) = written {
        return fail(&e);
    }
    if let Some(e) = &report.error {
        eprintln!("conformal-lab: {}", e.message);
    }
    ExitCode::from(report.exit_code() as u8)
}

fn main() -> ExitCode {
    let args = Args::parse();
    match args.command {
        Command::Run {
            job,
            out,
            plot,
            csv,
            seed,
            threads,
        } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("conformal-lab: {e}");
                    return ExitCode::from(2);
                }
            }
            let spec = std::fs::read_to_string(&job)
                .map_err(|e| Error::Io(format!("{}: {e}", job.display())))
                .and_then(|t| JobSpec::from_json(&t));
            let spec = match spec {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let o = spec.output.clone().unwrap_or_default();
            execute(
                &spec,
                seed.unwrap_or_else(|| spec.seed()),
                out.or(o.report.map(PathBuf::from)),
                plot.or(o.plot.map(PathBuf::from)),
                csv.or(o.csv.map(PathBuf::from)),
            )
        }
        Command::Verify { suite, out, seed } => {
            let spec = JobSpec {
                suite: Some(suite.into()),
                ..JobSpec::of_kind(JobKind::Verify)
            };
            execute(&spec, seed.unwrap_or(0), out, None, None)
        }
        Command::Schema => {
            print!("{}", cli::schema_json());
            ExitCode::SUCCESS
        }
    }
}
