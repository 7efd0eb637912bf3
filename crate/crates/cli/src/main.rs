use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use kashin_core::experiment::{
    self, CertifyConfig, Command, CosetConfig, DeviationConfig, EntropyConfig, EntropyMetric, ExperimentConfig, GenConfig,
    PChoice, SplitArgs, Status,
};
use kashin_core::systems::SystemSpec;
use serde_json::{json, Value};

const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));
const WORKERS_ENV: &str = "KASHIN_WORKERS";

#[derive(Parser, Debug)]
#[command(name = "kashin", version = VERSION, about = "Kashin-type splitting experiments on bounded orthonormal systems")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct Output {
    /// Write the JSON envelope here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the CSV table here.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Generate a system, optionally validate it, and emit its table as CSV.
    Gen {
        #[arg(long, default_value = "walsh:4")]
        system: SystemSpec,
        /// Read the system from a CSV table instead.
        #[arg(long)]
        table: Option<PathBuf>,
        #[arg(long)]
        validate: bool,
        #[command(flatten)]
        output: Output,
    },
    /// Randomly split a system and certify both halves.
    Split {
        #[arg(long)]
        system: SystemSpec,
        #[arg(long, default_value = "auto")]
        p: PChoice,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        /// Calibration constant in the theoretical ρ.
        #[arg(long, default_value_t = 1.0)]
        rho_calibration: f64,
        /// Use this ρ instead of the theoretical one.
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 3.0)]
        window_c: f64,
        #[arg(long, default_value_t = 100)]
        max_retries: usize,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 8)]
        ratio_restarts: usize,
        #[arg(long, default_value_t = 200)]
        ratio_iters: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Check the ρ condition and optimality certificate for one sampled operator.
    Certify {
        #[arg(long)]
        system: SystemSpec,
        /// Number of draws (default round(n log 2)).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value = "auto")]
        p: PChoice,
        #[arg(long, default_value_t = 0.5)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        rho_calibration: f64,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long, default_value_t = 8)]
        restarts: usize,
        #[arg(long, default_value_t = 8)]
        ratio_restarts: usize,
        #[arg(long, default_value_t = 200)]
        ratio_iters: usize,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Extract a large coset from a subset of the cube.
    Coset {
        #[arg(long = "N")]
        bits: u32,
        #[arg(long, conflicts_with = "set_file")]
        density: Option<f64>,
        /// Newline-separated hex words.
        #[arg(long)]
        set_file: Option<PathBuf>,
        #[arg(long)]
        emit_witness: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Bernoulli-sup scaling study over a grid of m.
    Deviation {
        #[arg(long, default_value = "walsh:6")]
        system: SystemSpec,
        #[arg(long, default_value_t = 1.5)]
        p: f64,
        /// ρ of the E_p norm.
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, value_delimiter = ',', required = true)]
        m_grid: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 16)]
        restarts: usize,
        /// Also estimate the moment deviation with k samples.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
    /// Packing-number diagnostics of the E_p ball.
    Entropy {
        #[arg(long, default_value = "walsh:4")]
        system: SystemSpec,
        #[arg(long, default_value_t = 1.5)]
        p: f64,
        #[arg(long, default_value_t = 1.0)]
        rho: f64,
        #[arg(long, default_value = "linf_m")]
        metric: EntropyMetric,
        #[arg(long, default_value_t = 8)]
        m: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        eps_grid: Vec<f64>,
        #[arg(long, default_value_t = kashin_core::entropy::DEFAULT_BUDGET)]
        budget: usize,
        #[arg(long)]
        max_centers: Option<usize>,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        output: Output,
    },
}

fn into_config(cmd: Cmd) -> ExperimentConfig {
    let (command, output) = match cmd {
        Cmd::Gen {
            system,
            table,
            validate,
            output,
        } => (Command::Gen(GenConfig { system, table, validate }), output),
        Cmd::Split {
            system,
            p,
            delta,
            rho_calibration,
            rho,
            window_c,
            max_retries,
            restarts,
            ratio_restarts,
            ratio_iters,
            seed,
            output,
        } => (
            Command::Split(SplitArgs {
                system,
                p,
                delta,
                rho_calibration,
                rho,
                window_c,
                max_retries,
                restarts,
                ratio_restarts,
                ratio_iters,
                seed,
            }),
            output,
        ),
        Cmd::Certify {
            system,
            k,
            p,
            delta,
            rho_calibration,
            rho,
            restarts,
            ratio_restarts,
            ratio_iters,
            seed,
            output,
        } => (
            Command::Certify(CertifyConfig {
                system,
                k,
                p,
                delta,
                rho_calibration,
                rho,
                restarts,
                ratio_restarts,
                ratio_iters,
                seed,
            }),
            output,
        ),
        Cmd::Coset {
            bits,
            density,
            set_file,
            emit_witness,
            seed,
            output,
        } => (
            Command::Coset(CosetConfig {
                bits,
                density,
                set_file,
                emit_witness,
                seed,
            }),
            output,
        ),
        Cmd::Deviation {
            system,
            p,
            rho,
            m_grid,
            trials,
            restarts,
            k,
            seed,
            output,
        } => (
            Command::Deviation(DeviationConfig {
                system,
                p,
                rho,
                m_grid,
                trials,
                restarts,
                k,
                seed,
            }),
            output,
        ),
        Cmd::Entropy {
            system,
            p,
            rho,
            metric,
            m,
            eps_grid,
            budget,
            max_centers,
            seed,
            output,
        } => (
            Command::Entropy(EntropyConfig {
                system,
                p,
                rho,
                metric,
                m,
                eps_grid,
                budget,
                max_centers,
                seed,
            }),
            output,
        ),
    };
    ExperimentConfig {
        command,
        json_out: output.out,
        csv_out: output.csv,
    }
}

fn init_workers() -> Result<(), String> {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("{WORKERS_ENV}=`{raw}`: expected a positive integer"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn emit(cfg: &ExperimentConfig, envelope: &Value) -> Result<(), String> {
    let text = serde_json::to_string_pretty(envelope).expect("envelope serializes") + "\n";
    match &cfg.json_out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn config_failure(reason: &str) -> ExitCode {
    let payload = json!({ "kind": "config", "exit_code": Status::Config.code(), "message": reason });
    eprintln!("{}", json!({ "version": VERSION, "error": payload }));
    ExitCode::from(Status::Config.code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return config_failure(&e.kind().to_string());
        }
    };
    if let Err(reason) = init_workers() {
        return config_failure(&reason);
    }
    let cfg = into_config(cli.command);
    let start = Instant::now();
    let result = experiment::run(&cfg);
    let wall_time_s = start.elapsed().as_secs_f64();
    let mut envelope = json!({
        "command": cfg.command.name(),
        "config": cfg,
        "version": VERSION,
        "wall_time_s": wall_time_s,
    });
    let status = match result {
        Ok(out) => {
            if let (Some(path), Some(csv)) = (&cfg.csv_out, &out.csv) {
                if let Err(e) = std::fs::write(path, csv) {
                    return config_failure(&format!("{}: {e}", path.display()));
                }
            }
            envelope["status"] = json!(out.status);
            envelope["results"] = out.results;
            out.status
        }
        Err(e) => {
            let status = Status::of_error(&e);
            let payload = experiment::error_payload(&e);
            eprintln!("{}", json!({ "version": VERSION, "error": payload }));
            envelope["status"] = json!(status);
            envelope["error"] = payload;
            status
        }
    };
    if let Err(reason) = emit(&cfg, &envelope) {
        return config_failure(&reason);
    }
    ExitCode::from(status.code() as u8)
}
