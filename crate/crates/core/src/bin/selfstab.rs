use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use selfstab::cli_io::{self, ConfigFile, Experiment, OutputFormat, PurifyDemo, RunManifest, WallClock};
use selfstab::{cramer_rao_bound, qfi, Bloch, Error, PauliAxis, QubitState};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

/// Self-stabilizing estimation of a qubit precession rate under continuous
/// measurement. All rates are in units of kappa.
#[derive(Parser)]
#[command(name = "selfstab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct Common {
    /// Overrides the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Record the start time in the manifest. Output trees then differ
    /// between runs.
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run the protocol once.
    Run {
        /// TOML or JSON configuration.
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run independent protocols in parallel and summarize them.
    Ensemble {
        #[arg(long)]
        config: PathBuf,
        /// Number of trajectories (at least 1).
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        traj: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Quantum Fisher information of a state for the generator G.
    Qfi {
        /// Bloch vector, e.g. 0,0,1.
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true)]
        bloch: [f64; 3],
        /// Generator axis: x, y, z or a vector a,b,c.
        #[arg(long, value_parser = parse_axis, allow_hyphen_values = true)]
        g: [f64; 3],
        /// Number of repetitions for the Cramér-Rao bound.
        #[arg(long)]
        nu: Option<u64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Noiseless closed-loop purification with a known phase.
    PurifyDemo {
        #[arg(long, default_value_t = 1.0)]
        kappa: f64,
        #[arg(long, default_value_t = 0.3)]
        phi: f64,
        #[arg(long, default_value_t = 1e-3)]
        dt: f64,
        #[arg(long, default_value_t = 3000)]
        steps: usize,
        #[arg(long, value_parser = parse_vector, allow_hyphen_values = true, default_value = "0,0,0.8")]
        bloch: [f64; 3],
        #[arg(long, value_parser = parse_axis, allow_hyphen_values = true, default_value = "x")]
        g: [f64; 3],
        #[command(flatten)]
        common: Common,
    },
    /// Regenerate an output tree from its manifest.
    Rerun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Print the default configuration.
    Defaults,
}

fn parse_vector(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got `{s}`"));
    }
    let mut v = [0.0; 3];
    for (slot, p) in v.iter_mut().zip(parts) {
        *slot = p.parse().map_err(|_| format!("`{p}` is not a number"))?;
    }
    Ok(v)
}

fn parse_axis(s: &str) -> Result<[f64; 3], String> {
    match s.to_ascii_lowercase().as_str() {
        "x" => Ok([1.0, 0.0, 0.0]),
        "y" => Ok([0.0, 1.0, 0.0]),
        "z" => Ok([0.0, 0.0, 1.0]),
        _ => parse_vector(s),
    }
}

fn fail(kind: &str, message: &str, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": kind, "message": message, "exit_code": code }));
    ExitCode::from(code)
}

fn fail_with(e: &Error) -> ExitCode {
    let code = if e.is_config_error() { EXIT_CONFIG } else { EXIT_NUMERICAL };
    fail(e.kind(), &e.to_string(), code)
}

fn load(config: &Path, seed: Option<u64>) -> Result<(ConfigFile, u64), Error> {
    let mut cfg = cli_io::parse_config(config)?;
    for w in cfg.validate()? {
        eprintln!("{}", json!({ "warning": w }));
    }
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    let seed = cfg.sim.seed;
    Ok((ConfigFile::from_config(&cfg), seed))
}

fn launch(experiment: Experiment, seed: u64, common: &Common) -> Result<String, Error> {
    let mut manifest = RunManifest::new(experiment, seed, common.format.into());
    if common.wall_clock {
        manifest.wall_clock = Some(WallClock::now());
    }
    cli_io::execute(&manifest, &common.out_dir)
}

fn dispatch(cmd: Command) -> Result<String, Error> {
    match cmd {
        Command::Run { config, common } => {
            let (config, seed) = load(&config, common.seed)?;
            launch(Experiment::Run { config }, seed, &common)
        }
        Command::Ensemble { config, traj, common } => {
            let (config, seed) = load(&config, common.seed)?;
            let n_traj = usize::try_from(traj).map_err(|_| Error::InvalidArgument("--traj too large".into()))?;
            launch(Experiment::Ensemble { config, n_traj }, seed, &common)
        }
        Command::Qfi { bloch, g, nu, format } => {
            let rho = QubitState::from_bloch(Bloch::from(bloch))?;
            let g = PauliAxis::new(Bloch::from(g))?;
            let f = qfi(&rho, &g);
            let bound = nu.map(|n| cramer_rao_bound(f, n)).transpose()?;
            Ok(match format {
                Format::Csv => match bound {
                    Some(b) => format!("{f}\n{b}\n"),
                    None => format!("{f}\n"),
                },
                Format::Json => format!(
                    "{}\n",
                    json!({ "bloch": bloch, "g": <[f64; 3]>::from(g), "qfi": f, "nu": nu, "cramer_rao_bound": bound })
                ),
            })
        }
        Command::PurifyDemo {
            kappa,
            phi,
            dt,
            steps,
            bloch,
            g,
            common,
        } => {
            let demo = PurifyDemo {
                kappa,
                phi,
                dt,
                steps,
                initial_bloch: bloch,
                g_axis: g,
            };
            launch(Experiment::PurifyDemo { demo }, common.seed.unwrap_or(0), &common)
        }
        Command::Rerun { manifest, out_dir } => {
            let mut m = RunManifest::read(&manifest)?;
            m.wall_clock = None;
            cli_io::execute(&m, &out_dir)
        }
        Command::Defaults => Ok(cli_io::DEFAULT_CONFIG_TOML.to_string()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.render().to_string();
            return fail("usage", message.trim_end(), EXIT_CONFIG);
        }
    };
    match dispatch(cli.command) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => fail_with(&e),
    }
}
