//! `snowlab`: build snowflake meshes, assemble their Laplacians, and export
//! spectra and diagnostics as plain files.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use snowlab_core::lattice::DEFAULT_MAX_LEVEL;
use snowlab_core::{Error, OperatorKind, RunConfig, SolveMethod, Which};

pub const GUARD_ENV: &str = "SNOWLAB_GUARD_LEVEL";

#[derive(Parser)]
#[command(name = "snowlab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build and validate the level-n mesh; writes mesh.json and validation.json.
    Mesh(Common),
    /// Export the operator: stiffness.mtx, mass.csv, operator.json.
    Assemble(Common),
    /// Solve the eigenproblem: eigenvalues.csv, eigenvectors.snwv(.json).
    Eig(Common),
    /// Counting function, multiplicities and the regime report.
    Count(Common),
    /// Landscape vector, closed-form comparison and eigenvector bound check.
    Landscape(Common),
    /// Boundary localization table and a contour export.
    Localize {
        #[command(flatten)]
        common: Common,
        /// 1-based eigenpair to export as contour data (default: the last one).
        #[arg(long)]
        mode: Option<usize>,
    },
    /// Harmonic extension of boundary data with its decay profile.
    Extend {
        #[command(flatten)]
        common: Common,
        /// Boundary data CSV ("boundary_index,value"); overrides --pattern.
        #[arg(long)]
        boundary: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Pattern::Alternating)]
        pattern: Pattern,
    },
    /// Interior and boundary energies of a fixed function for levels 0..=n.
    EnergySeq {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value_t = TestFunction::Bump)]
        function: TestFunction,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Pattern {
    /// +1, −1, +1, … around the boundary cycle.
    Alternating,
    /// Uniform on [−1, 1], drawn from --seed.
    Random,
    /// The x coordinate.
    Linear,
    /// 1 everywhere.
    Constant,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum TestFunction {
    /// The x coordinate.
    Linear,
    /// Cone of radius 1/4 centred inside the base triangle.
    Bump,
}

#[derive(Args, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    level: u32,
    #[arg(long, default_value = "full")]
    kind: OperatorKind,
    #[arg(long, default_value_t = 1.0)]
    c0: f64,
    #[arg(long, default_value = "dense")]
    solver: SolveMethod,
    /// Number of eigenpairs (required by the iterative solver).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "smallest")]
    which: Which,
    /// Contour threshold relative to the max-normalized eigenvector.
    #[arg(long, default_value_t = 0.01)]
    eps: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = snowlab_core::config::DEFAULT_SEED)]
    seed: u64,
}

impl Common {
    fn config(&self) -> RunConfig {
        RunConfig {
            level: self.level,
            kind: self.kind,
            c0: self.c0,
            solver: self.solver,
            k: self.k,
            which: self.which,
            eps: self.eps,
            out: self.out.clone(),
            seed: self.seed,
        }
    }
}

fn guard_level() -> Result<u32, Error> {
    match std::env::var(GUARD_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| Error::Argument(format!("{GUARD_ENV} must be a nonnegative integer, got {s:?}"))),
        Err(_) => Ok(DEFAULT_MAX_LEVEL),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Resource { .. } => 3,
        Error::Numerical(_) | Error::NoConvergence { .. } => 4,
        Error::Io { .. } => 1,
        _ => 2,
    }
}

fn kind_label(e: &Error) -> &'static str {
    match e {
        Error::Argument(_) | Error::IndexOutOfRange { .. } | Error::DimensionMismatch { .. } => "argument",
        Error::Resource { .. } => "resource",
        Error::Numerical(_) | Error::NoConvergence { .. } => "numerical",
        Error::InvalidMesh(_) | Error::Format { .. } | Error::Json(_) => "input",
        Error::Io { .. } => "io",
    }
}

/// `snowlab: error kind=<kind> code=<code>: <message>` on one line.
fn report(kind: &str, code: u8, message: &str) {
    let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("snowlab: error kind={kind} code={code}: {message}");
}

fn run(cli: Cli) -> Result<(), Error> {
    let guard = guard_level()?;
    match cli.command {
        Command::Mesh(c) => commands::mesh(&c.config(), guard),
        Command::Assemble(c) => commands::assemble(&c.config(), guard),
        Command::Eig(c) => commands::eig(&c.config(), guard),
        Command::Count(c) => commands::count(&c.config(), guard),
        Command::Landscape(c) => commands::landscape(&c.config(), guard),
        Command::Localize { common, mode } => commands::localize(&common.config(), guard, mode),
        Command::Extend {
            common,
            boundary,
            pattern,
        } => commands::extend(&common.config(), guard, boundary.as_deref(), pattern),
        Command::EnergySeq { common, function } => commands::energy_seq(&common.config(), guard, function),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments");
            report("argument", 2, first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            report(kind_label(&e), code, &e.to_string());
            ExitCode::from(code)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(exit_code(&Error::Argument("x".into())), 2);
        let guard = Error::Resource {
            what: "mesh level",
            requested: 9,
            limit: 6,
        };
        assert_eq!(exit_code(&guard), 3);
        assert_eq!(exit_code(&Error::Numerical("residual".into())), 4);
        let stalled = Error::NoConvergence {
            iterations: 10,
            worst_residual: 1.0,
            residuals: vec![],
        };
        assert_eq!((exit_code(&stalled), kind_label(&stalled)), (4, "numerical"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
