use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qac::config::{ConfigMode, RawConfig};
use qac::error::Error;
use qac::io::write_dataset_csv;
use qac::runner::{oracle_check, run_command};
use qac::synth::generate_blobs;

/// Annealed Gibbs samplers for clustering assignment optimization.
#[derive(Parser)]
#[command(name = "qac", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single annealing process (mode sa or qast).
    Run(ConfigArgs),
    /// Equal-budget comparison: one replica ring vs independent chains.
    Compare(ConfigArgs),
    /// Numeric verification of the dense-oracle identities.
    OracleCheck(OracleArgs),
    /// Generate a synthetic 2-D Gaussian blob dataset.
    GenSynthetic(SynthArgs),
}

/// Configuration flags mirror the dotted config keys; values use the same
/// grammar as the config file (`auto` where applicable).
#[derive(Args)]
struct ConfigArgs {
    /// Configuration file: flat `key = value` lines or the JSON form.
    #[arg(long)]
    config: Option<PathBuf>,

    #[arg(long = "data.path", value_name = "PATH")]
    data_path: Option<String>,
    #[arg(long = "data.format", value_name = "FMT")]
    data_format: Option<String>,
    #[arg(long = "model.type", value_name = "mog_niw|sq_loss")]
    model_type: Option<String>,
    #[arg(long = "model.alpha", value_name = "X")]
    model_alpha: Option<String>,
    #[arg(long = "model.kappa0", value_name = "X")]
    model_kappa0: Option<String>,
    #[arg(long = "model.nu0", value_name = "X|auto")]
    model_nu0: Option<String>,
    #[arg(long = "model.mu0", value_name = "V,..|auto")]
    model_mu0: Option<String>,
    #[arg(long = "model.lambda0", value_name = "V,..|auto")]
    model_lambda0: Option<String>,
    #[arg(long, value_name = "K")]
    k: Option<String>,
    /// sa | qast (run subcommand only).
    #[arg(long, value_name = "MODE")]
    mode: Option<String>,
    #[arg(long, value_name = "M")]
    m: Option<String>,
    #[arg(long, value_name = "SEED")]
    seed: Option<String>,
    /// Comma-separated seed list (compare mode).
    #[arg(long, value_name = "S,S,..")]
    seeds: Option<String>,
    #[arg(long = "schedule.beta0", value_name = "X|auto")]
    schedule_beta0: Option<String>,
    #[arg(long = "schedule.r_beta", value_name = "X")]
    schedule_r_beta: Option<String>,
    #[arg(long = "schedule.gamma0", value_name = "X|auto")]
    schedule_gamma0: Option<String>,
    #[arg(long = "schedule.r_gamma", value_name = "X|auto")]
    schedule_r_gamma: Option<String>,
    #[arg(long = "schedule.beta_hold_target", value_name = "X|auto")]
    schedule_beta_hold_target: Option<String>,
    #[arg(long = "max_iters", value_name = "N")]
    max_iters: Option<String>,
    #[arg(long = "convergence.tol", value_name = "X")]
    convergence_tol: Option<String>,
    #[arg(long = "convergence.window", value_name = "N")]
    convergence_window: Option<String>,
    #[arg(long = "output.dir", value_name = "DIR")]
    output_dir: Option<String>,
}

impl ConfigArgs {
    fn into_raw(self, errors: &mut Vec<String>) -> RawConfig {
        let mut raw = RawConfig::default();
        if let Some(path) = &self.config {
            raw.apply_config_file(path, errors);
        }
        let overrides = [
            ("data.path", self.data_path),
            ("data.format", self.data_format),
            ("model.type", self.model_type),
            ("model.alpha", self.model_alpha),
            ("model.kappa0", self.model_kappa0),
            ("model.nu0", self.model_nu0),
            ("model.mu0", self.model_mu0),
            ("model.lambda0", self.model_lambda0),
            ("k", self.k),
            ("mode", self.mode),
            ("m", self.m),
            ("seed", self.seed),
            ("seeds", self.seeds),
            ("schedule.beta0", self.schedule_beta0),
            ("schedule.r_beta", self.schedule_r_beta),
            ("schedule.gamma0", self.schedule_gamma0),
            ("schedule.r_gamma", self.schedule_r_gamma),
            ("schedule.beta_hold_target", self.schedule_beta_hold_target),
            ("max_iters", self.max_iters),
            ("convergence.tol", self.convergence_tol),
            ("convergence.window", self.convergence_window),
            ("output.dir", self.output_dir),
        ];
        for (key, value) in overrides {
            if let Some(value) = value {
                raw.apply_key(key, &value, errors);
            }
        }
        raw
    }
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 12345)]
    seed: u64,
    /// Number of random parameter draws per identity.
    #[arg(long, default_value_t = 100)]
    draws: usize,
    /// Gate on the worst deviation.
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    blobs: usize,
    #[arg(long = "points-per-blob", default_value_t = 100)]
    points_per_blob: usize,
    /// Distance between adjacent blob centers (within-blob variance is 1).
    #[arg(long, default_value_t = 8.0)]
    separation: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Run(args) => {
            let mut errors = Vec::new();
            let raw = args.into_raw(&mut errors);
            if !errors.is_empty() {
                return Err(Error::Config(errors));
            }
            let cfg = raw.into_run_config(None)?;
            if !matches!(cfg.mode, ConfigMode::Sa | ConfigMode::Qast) {
                return Err(Error::Config(vec![format!(
                    "mode: the run subcommand accepts sa | qast, got {:?} (use the {} subcommand)",
                    cfg.mode.as_str(),
                    cfg.mode.as_str()
                )]));
            }
            let outcome = run_command(&cfg)?;
            println!("{}", outcome.summary);
            Ok(outcome.exit_code)
        }
        Command::Compare(args) => {
            let mut errors = Vec::new();
            let raw = args.into_raw(&mut errors);
            if !errors.is_empty() {
                return Err(Error::Config(errors));
            }
            let cfg = raw.into_run_config(Some(ConfigMode::Compare))?;
            let outcome = run_command(&cfg)?;
            println!("{}", outcome.summary);
            Ok(outcome.exit_code)
        }
        Command::OracleCheck(args) => {
            let outcome = oracle_check(args.seed, args.draws, args.tol)?;
            println!("{}", outcome.summary);
            Ok(outcome.exit_code)
        }
        Command::GenSynthetic(args) => {
            let data =
                generate_blobs(args.blobs, args.points_per_blob, args.separation, args.seed)?;
            write_dataset_csv(&args.out, &data)?;
            println!(
                "wrote {} points in {} blobs to {} (seed {})",
                data.n(),
                args.blobs,
                args.out.display(),
                args.seed
            );
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
