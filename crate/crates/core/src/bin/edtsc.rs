use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use edtsc::config::{ScenarioKind, SimConfig};
use edtsc::error::SimError;
use edtsc::harness::{run_to_dir, SimLog};
use edtsc::metrics::compare;

#[derive(Parser)]
#[command(name = "edtsc", version, about = "Electric-vehicle traction and yaw-stability control simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    Track,
    Dlc,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one scenario and write states.csv and metrics.txt
    Run {
        #[arg(long)]
        scenario: Option<Scenario>,
        #[arg(long = "speed-kmh")]
        speed_kmh: Option<f64>,
        #[arg(long)]
        fis: Option<Switch>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        duration: Option<f64>,
        /// TOML configuration; built-in defaults when absent
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Reductions of run A (controller on) against run B (baseline)
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Run the built-in consistency checks
    Selftest,
}

fn read_log(dir: &Path) -> Result<SimLog, SimError> {
    let f = std::fs::File::open(dir.join("states.csv"))?;
    SimLog::read_csv(std::io::BufReader::new(f)).map_err(|e| SimError::Metrics(format!("{}: {e}", dir.display())))
}

/// `Ok(false)` when the self-test ran but a check failed.
fn run(cmd: Command) -> Result<bool, SimError> {
    match cmd {
        Command::Run { scenario, speed_kmh, fis, dt, duration, config, out } => {
            let mut cfg = match config {
                Some(path) => SimConfig::load(&path)?,
                None => SimConfig::default(),
            };
            if let Some(s) = scenario {
                cfg.sim.scenario = match s {
                    Scenario::Track => ScenarioKind::Track,
                    Scenario::Dlc => ScenarioKind::Dlc,
                };
            }
            if let Some(v) = speed_kmh {
                cfg.sim.speed_kmh = v;
            }
            if let Some(f) = fis {
                cfg.sim.fis = matches!(f, Switch::On);
            }
            if let Some(dt) = dt {
                cfg.sim.dt = dt;
            }
            if let Some(d) = duration {
                cfg.sim.duration = d;
            }
            cfg.validate()?;
            let (_, metrics) = run_to_dir(&cfg, &out)?;
            print!("{}", metrics.to_key_values());
            Ok(true)
        }
        Command::Compare { a, b } => {
            let cmp = compare(&read_log(&a)?, &read_log(&b)?).map_err(SimError::Metrics)?;
            print!("{}", cmp.to_key_values());
            Ok(true)
        }
        Command::Selftest => {
            let results = edtsc::selftest::run_all();
            let mut ok = true;
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
                ok &= r.passed;
            }
            Ok(ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
