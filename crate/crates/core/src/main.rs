use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use payload_transport::control::ModelMode;
use payload_transport::sim::{load_scenario, preset, write_outputs, RunLog, Scenario, Simulation};
use payload_transport::suites::{run_suite, Suite};
use payload_transport::Error;

#[derive(Parser)]
#[command(name = "payload-sim", version, about = "Cooperative payload transport by quadrotors on rigid links")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a closed-loop simulation and write its outputs.
    Simulate {
        #[command(flatten)]
        source: Source,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum)]
        model: Option<Model>,
        /// Integration step, s.
        #[arg(long)]
        dt: Option<f64>,
        /// Final time, s.
        #[arg(long)]
        tf: Option<f64>,
    },
    /// Run a verification suite on a scenario.
    Verify {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_enum)]
        suite: SuiteArg,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled scenario name.
    #[arg(long)]
    preset: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Model {
    Simplified,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Energy,
    Allocation,
    Lyapunov,
    Attitude,
}

impl From<SuiteArg> for Suite {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Energy => Suite::Energy,
            SuiteArg::Allocation => Suite::Allocation,
            SuiteArg::Lyapunov => Suite::Lyapunov,
            SuiteArg::Attitude => Suite::Attitude,
        }
    }
}

const EXIT_INVALID: u8 = 2;
const EXIT_FAILED: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Numerical { .. } | Error::SingularMass(_) | Error::Degenerate => EXIT_FAILED,
        _ => EXIT_INVALID,
    }
}

fn load(source: &Source) -> Result<Scenario, Error> {
    match (&source.config, &source.preset) {
        (Some(path), _) => load_scenario(path),
        (None, Some(name)) => preset(name),
        (None, None) => Err(Error::Validation {
            field: "config".into(),
            reason: "pass --config or --preset".into(),
        }),
    }
}

fn simulate(sc: Scenario, out: &PathBuf) -> Result<(), Error> {
    sc.validate()?;
    let mut sim = Simulation::new(sc.clone())?;
    let mut log = RunLog {
        n: sc.params.n(),
        dt: sc.integrator.dt,
        records: Vec::with_capacity(sc.steps()),
    };
    let outcome = loop {
        if sim.finished() {
            break Ok(());
        }
        match sim.step() {
            Ok(info) => log.records.push(info.record),
            Err(e) => break Err(e),
        }
    };
    // a failed run still leaves the log up to the failure
    write_outputs(&log, out)?;
    outcome?;
    println!("{} steps written to {}", log.records.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            source,
            out,
            model,
            dt,
            tf,
        } => load(&source).and_then(|mut sc| {
            if let Some(m) = model {
                sc.mode = match m {
                    Model::Simplified => ModelMode::Simplified,
                    Model::Full => ModelMode::Full,
                };
            }
            if let Some(dt) = dt {
                sc.integrator.dt = dt;
            }
            if let Some(tf) = tf {
                sc.t_final = tf;
            }
            simulate(sc, &out).map(|()| true)
        }),
        Command::Verify { source, suite } => load(&source).and_then(|sc| {
            let report = run_suite(suite.into(), &sc)?;
            print!("{report}");
            Ok(report.passed())
        }),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::from(EXIT_FAILED)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
