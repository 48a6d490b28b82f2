use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use uplift_cli::commands;
use uplift_cli::{CliError, ExperimentConfig, Result};
use uplift_core::dataset::ColumnRoles;
use uplift_core::SynthConfig;

#[derive(Parser)]
#[command(name = "uplift", version, about = "Outcome-transformation uplift modeling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground-truth effects.
    Synth(SynthArgs),
    /// Run a configured comparison of transforms.
    Run(RunArgs),
    /// Score a dataset with a saved model.
    Score(ScoreArgs),
    /// Evaluate scores against a labelled dataset.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Named preset: table3-high, table3-low or null-effect.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// TOML file with generator settings.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_per_arm: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a scalar config key, e.g. `--set learner.n_trees=50`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set output_dir=...`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Roles {
    #[arg(long, default_value = "treatment")]
    treatment_col: String,
    #[arg(long, default_value = "outcome")]
    outcome_col: String,
    /// Column to exclude from features as propensity scores.
    #[arg(long)]
    propensity_col: Option<String>,
}

impl Roles {
    fn to_roles(&self) -> ColumnRoles {
        ColumnRoles {
            treatment: self.treatment_col.clone(),
            outcome: self.outcome_col.clone(),
            features: None,
            propensity: self.propensity_col.clone(),
        }
    }
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    roles: Roles,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Column of the scores file to rank by (`tau` for a ground-truth file).
    #[arg(long, default_value = "score")]
    score_column: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = uplift_core::metrics::DEFAULT_BINS)]
    n_bins: usize,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    roles: Roles,
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut config = match (&args.preset, &args.config) {
        (Some(name), None) => SynthConfig::preset(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown preset `{name}` (available: {})",
                SynthConfig::PRESETS.join(", ")
            ))
        })?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?
        }
        _ => return Err(CliError::Config("pass exactly one of --preset or --config".into())),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(n) = args.n_per_arm {
        config.n_per_arm = n;
    }
    let manifest = commands::cmd_synth(&config, &args.out)?;
    let stats = &manifest.stats.arm_stats;
    println!("wrote {} rows to {}", manifest.stats.n_rows, manifest.dataset_path.display());
    println!(
        "control rate {:.4}  treated rate {:.4}  phi(Z, W) {}",
        stats.control_rate().unwrap_or(f64::NAN),
        stats.treated_rate().unwrap_or(f64::NAN),
        manifest.stats.phi_z_w.map_or("undefined".into(), |p| format!("{p:.4}")),
    );
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut overrides = args.overrides;
    if let Some(out) = args.out {
        overrides.push(format!("output_dir={:?}", out.display().to_string()));
    }
    let config = ExperimentConfig::load(&args.config, &overrides)?;
    let output = uplift_cli::run(&config)?;
    println!("{:<50} {:>6} {:>10} {:>10} {:>10}", "approach", "ok", "qini med", "qini min", "qini max");
    for row in &output.manifest.comparison {
        let (med, min, max) = row
            .qini_coefficient
            .as_ref()
            .map_or((f64::NAN, f64::NAN, f64::NAN), |s| (s.median, s.min, s.max));
        println!(
            "{:<50} {:>6} {med:>10.4} {min:>10.4} {max:>10.4}",
            row.label,
            format!("{}/{}", row.n_ok, row.n_ok + row.n_failed)
        );
    }
    println!("manifest: {}", config.output_dir.join("manifest.json").display());
    Ok(())
}

fn score(args: ScoreArgs) -> Result<()> {
    let n = commands::cmd_score(&args.model, &args.data, &args.roles.to_roles(), &args.out)?;
    println!("scored {n} rows into {}", args.out.display());
    Ok(())
}

fn evaluate(args: EvaluateArgs) -> Result<()> {
    let report = commands::cmd_evaluate(
        &args.scores,
        &args.score_column,
        &args.data,
        &args.roles.to_roles(),
        args.n_bins,
        &args.out,
    )?;
    println!("{:<10} {:>12} {:>12}", "rows", "AUUC", "Qini");
    println!(
        "{:<10} {:>12.6} {:>12}",
        report.n_rows,
        report.auuc,
        report.qini_coefficient.map_or("undefined".into(), |q| format!("{q:.6}"))
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Run(a) => run(a),
        Command::Score(a) => score(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
