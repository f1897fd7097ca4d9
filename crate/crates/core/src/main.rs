use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cvqkd_pon::harness::{
    emit_outputs, output, preset, run_model_scenario, run_sweep, run_waveform_scenario,
    ScenarioConfig, PRESETS,
};
use cvqkd_pon::parallel::Execution;
use cvqkd_pon::Error;

#[derive(Parser)]
#[command(
    name = "cvqkd-pon",
    version,
    about = "CV-QKD access network key-rate simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Key rates from the covariance model.
    Keyrate(RunArgs),
    /// Full waveform simulation with receiver DSP and parameter estimation.
    Simulate(SimArgs),
    /// Key rate against feeder length.
    Sweep(RunArgs),
    /// Built-in scenarios.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    /// Print a preset as a TOML config.
    Show {
        name: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Summary,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV and JSON artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "summary")]
    format: Format,
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    frame_symbols: Option<usize>,
}

impl RunArgs {
    fn scenario(&self) -> Result<ScenarioConfig, Error> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => ScenarioConfig::load(path)?,
            (None, Some(name)) => preset(name)?,
            (None, None) => {
                return Err(Error::Config(
                    "one of --config or --preset is required".into(),
                ))
            }
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn exec(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

fn print(bytes: &[u8]) -> Result<(), Error> {
    std::io::stdout()
        .write_all(bytes)
        .map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Keyrate(args) => {
            let mut cfg = args.scenario()?;
            cfg.model_only = true;
            let table = run_model_scenario(&cfg, args.exec())?;
            if let Some(dir) = &args.out {
                emit_outputs(Some(&table), None, dir)?;
            }
            match args.format {
                Format::Csv => print(&output::users_csv(&table)?),
                Format::Summary => print(&output::summary_json(&table)?),
            }
        }
        Command::Simulate(sim) => {
            let args = &sim.run;
            let mut cfg = args.scenario()?;
            cfg.model_only = false;
            if let Some(n) = sim.frames {
                cfg.n_frames = n;
            }
            if let Some(n) = sim.frame_symbols {
                cfg.frame_symbols = n;
            }
            let table = run_waveform_scenario(&cfg, args.exec())?;
            if let Some(dir) = &args.out {
                emit_outputs(Some(&table), None, dir)?;
            }
            match args.format {
                Format::Csv => print(&output::frames_csv(&table)?),
                Format::Summary => print(&output::summary_json(&table)?),
            }
        }
        Command::Sweep(args) => {
            let cfg = args.scenario()?;
            let points = run_sweep(&cfg, args.exec())?;
            if let Some(dir) = &args.out {
                emit_outputs(None, Some(&points), dir)?;
            }
            match args.format {
                Format::Csv => print(&output::sweep_csv(&points)?),
                Format::Summary => {
                    let mut v = serde_json::to_vec_pretty(&points)
                        .map_err(|e| Error::Config(e.to_string()))?;
                    v.push(b'\n');
                    print(&v)
                }
            }
        }
        Command::Presets { action } => match action {
            PresetAction::List => {
                let mut s = String::from("name,fanout,feeder_km,drop_km,measured_loss_db\n");
                for p in &PRESETS {
                    s.push_str(&format!(
                        "{},{},{},{},{}\n",
                        p.name, p.fanout, p.feeder_km, p.drop_km, p.measured_loss_db
                    ));
                }
                print(s.as_bytes())
            }
            PresetAction::Show { name } => print(preset(&name)?.to_toml()?.as_bytes()),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let frame = match &e {
                Error::Frame { frame, .. } => Some(*frame),
                _ => None,
            };
            let record = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "frame": frame,
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}
