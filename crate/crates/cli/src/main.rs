use std::fs;
use std::io::{BufReader, ErrorKind, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use aerotrack::geometry::{CameraModel, PixelPoint};
use aerotrack::harness::{self, ablation, corpus, output, AblationSpec, HarnessError};
use aerotrack::sim::{self, Flight, Scenario};
use aerotrack::tracker::{TrackerConfig, TrackerWeights};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aerotrack", version, about = "Simulate, replay and evaluate the prompt-initialised target tracker and visual-servo controller")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its logs, traces and summary.
    Sim {
        /// Scenario file, or the name of a bundled scenario.
        scenario: String,
        /// Output directory [default: runs/<scenario>-<seed>].
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Use the vertical setpoint exactly as printed (pitch in raw radians).
        #[arg(long)]
        eq11_literal: bool,
        /// Add gravity to the desired force instead of compensating it.
        #[arg(long)]
        eq13_literal: bool,
        /// Disable gyroscope compensation in the tracker EKF.
        #[arg(long)]
        no_gyro_comp: bool,
    },
    /// Replay a detection log through the tracker alone.
    Track {
        log: PathBuf,
        /// Prompt pixel as X,Y.
        #[arg(long, value_parser = parse_pair)]
        prompt: (f64, f64),
        /// Score weights as IOU,EKF,MAP.
        #[arg(long, value_parser = parse_triple)]
        weights: Option<(f64, f64, f64)>,
        /// Camera intrinsics used for gyro compensation as WIDTH,HEIGHT,VFOV.
        #[arg(long, value_parser = parse_triple)]
        camera: Option<(f64, f64, f64)>,
        /// Write the trace here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a weight-ablation grid over a scenario.
    Ablate {
        scenario: String,
        /// Grid file, or `table2` for the four reference rows.
        #[arg(long)]
        grid: String,
        /// Also write ablation.json and ablation.txt here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run rows one after another instead of in parallel.
        #[arg(long)]
        sequential: bool,
    },
    /// Recompute metrics from a run directory.
    Metrics { dir: PathBuf },
    /// Inspect the bundled scenario corpus.
    Scenario {
        #[command(subcommand)]
        action: ScenarioAction,
    },
}

#[derive(Subcommand)]
enum ScenarioAction {
    /// List bundled scenarios.
    Ls,
    /// Print a bundled scenario with all defaults filled in.
    Describe { name: String },
}

fn parse_numbers(s: &str, n: usize) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s.split(',').map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"))).collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers, got {}", v.len()));
    }
    Ok(v)
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let v = parse_numbers(s, 2)?;
    Ok((v[0], v[1]))
}

fn parse_triple(s: &str) -> Result<(f64, f64, f64), String> {
    let v = parse_numbers(s, 3)?;
    Ok((v[0], v[1], v[2]))
}

fn config(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable")
}

fn load_grid(arg: &str) -> Result<AblationSpec, HarnessError> {
    if arg == "table2" {
        return Ok(AblationSpec::table2());
    }
    let text = fs::read_to_string(arg).map_err(|e| config(format!("{arg}: {e}")))?;
    AblationSpec::from_json(&text).map_err(|e| config(format!("{arg}: {e}")))
}

fn emit(text: &str) -> Result<(), HarnessError> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn describe(s: &Scenario) -> String {
    let flight = match s.flight {
        Flight::ClosedLoop => "closed loop",
        Flight::Scripted { .. } => "scripted",
    };
    format!("{:<22} {:>5.1} s  {:<11}  {}", s.name, s.duration, flight, s.description)
}

fn execute(cmd: Command) -> Result<(), HarnessError> {
    match cmd {
        Command::Sim { scenario, out, seed, eq11_literal, eq13_literal, no_gyro_comp } => {
            let mut sc = corpus::resolve(&scenario)?;
            if let Some(seed) = seed {
                sc.seed = seed;
            }
            sc.controller.eq11_literal |= eq11_literal;
            sc.controller.eq13_literal |= eq13_literal;
            if no_gyro_comp {
                sc.tracker.ekf.gyro_compensation = false;
            }
            sc.validate()?;
            let dir = out.unwrap_or_else(|| PathBuf::from(format!("runs/{}-{}", sc.name, sc.seed)));
            let art = sim::run(&sc)?;
            let summary = output::write_run(&dir, &sc, &art)?;
            emit(&(json(&summary) + "\n"))?;
            eprintln!("wrote {}", dir.display());
        }
        Command::Track { log, prompt, weights, camera, out } => {
            let mut cfg = TrackerConfig::default();
            if let Some((a, b, c)) = weights {
                cfg.weights = TrackerWeights::new(a, b, c)?;
            }
            if let Some((w, h, fov)) = camera {
                cfg.ekf.camera = CameraModel::new(w, h, fov).map_err(|e| config(e.to_string()))?;
            }
            let file = fs::File::open(&log).map_err(|e| config(format!("{}: {e}", log.display())))?;
            let trace = harness::track_log(BufReader::new(file), PixelPoint::new(prompt.0, prompt.1), cfg)?;
            let text: String = trace.iter().map(|r| serde_json::to_string(r).expect("serializable") + "\n").collect();
            match out {
                Some(path) => fs::write(path, text)?,
                None => emit(&text)?,
            }
        }
        Command::Ablate { scenario, grid, out, sequential } => {
            let sc = corpus::resolve(&scenario)?;
            let spec = load_grid(&grid)?;
            let table = harness::run_ablation(&sc, &spec, !sequential)?;
            let text = ablation::format_table(&table);
            if let Some(dir) = out {
                fs::create_dir_all(&dir)?;
                fs::write(dir.join("ablation.json"), json(&table) + "\n")?;
                fs::write(dir.join("ablation.txt"), &text)?;
            }
            emit(&text)?;
        }
        Command::Metrics { dir } => {
            let m = harness::metrics_from_dir(&dir)?;
            emit(&(json(&m) + "\n"))?;
        }
        Command::Scenario { action: ScenarioAction::Ls } => {
            let mut text = String::new();
            for name in corpus::names() {
                let s = corpus::bundled(name).expect("bundled")?;
                text += &describe(&s);
                text.push('\n');
            }
            emit(&text)?;
        }
        Command::Scenario { action: ScenarioAction::Describe { name } } => {
            let s = corpus::resolve(&name)?;
            emit(&(s.to_json() + "\n"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(HarnessError::Io(e)) if e.kind() == ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
