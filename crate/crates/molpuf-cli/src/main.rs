//! Command-line entry point. Exit codes: 0 on success, 1 on runtime or
//! per-task failures (partial results are still flushed), 2 on
//! configuration errors (nothing is written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use molpuf::puf::Challenge;
use molpuf_cli::config::{ConfigError, ExperimentConfig};
use molpuf_cli::experiments::{self, TaskFailure};
use molpuf_cli::manifest::ManifestBuilder;
use molpuf_cli::{csvout, svg};

#[derive(Parser)]
#[command(
    name = "molpuf-cli",
    version,
    about = "Reproducible reliability/uniqueness experiments on molecular multiplexer PUFs"
)]
struct Cli {
    /// Flat key=value configuration file (later command-line flags win).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Stage count, or a comma-separated list for `sweep`.
    /// A single value also sets the per-device stage count.
    #[arg(long, global = true)]
    stages: Option<String>,

    /// Output directory for artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (never affects output bytes).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Simulation backend: crn or delay-model.
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Validate the configuration and record it in a manifest without
    /// running any tasks.
    #[arg(long, global = true)]
    dry_run: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one device instance and write its reaction network.
    Synth {
        /// Print the network to stdout instead of writing device.crn.txt.
        #[arg(long)]
        stdout: bool,
    },
    /// Simulate one authentication and plot the output race.
    Simulate {
        /// Bundled device (ref8a, ref8b, ref16a, ref16b) or "seeded" to
        /// draw one from the configured seed.
        #[arg(long, default_value = "ref8a")]
        device: String,
        /// Challenge bit string (most significant stage first); defaults
        /// to the bundled challenge, or a seeded draw for seeded devices.
        #[arg(long)]
        challenge: Option<String>,
    },
    /// Re-authenticate one device across environment conditions.
    Reliability,
    /// Compare signatures across a population of devices.
    Uniqueness,
    /// Repeat the population study across stage counts.
    Sweep,
    /// Run the delay-abstraction population study (devices x conditions).
    DelayModel,
}

enum AppError {
    Config(ConfigError),
    Runtime(String),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e)
    }
}

fn runtime(context: &str, e: impl std::fmt::Display) -> AppError {
    AppError::Runtime(format!("{context}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(AppError::Config(e)) => {
            eprintln!("configuration error: {e}");
            ExitCode::from(2)
        }
        Err(AppError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, AppError> {
    let mut overrides: Vec<(String, String)> = Vec::new();
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    if let Some(stages) = &cli.stages {
        overrides.push(("stages".into(), stages.clone()));
        if !stages.contains(',') {
            overrides.push(("n_stages".into(), stages.clone()));
        }
    }
    if let Some(out) = &cli.out {
        overrides.push(("output_dir".into(), out.display().to_string()));
    }
    if let Some(jobs) = cli.jobs {
        overrides.push(("jobs".into(), jobs.to_string()));
    }
    if let Some(mode) = &cli.mode {
        overrides.push(("mode".into(), mode.clone()));
    }
    let config = ExperimentConfig::from_sources(cli.config.as_deref(), &overrides)?;

    let command_name = match &cli.command {
        Command::Synth { .. } => "synth",
        Command::Simulate { .. } => "simulate",
        Command::Reliability => "reliability",
        Command::Uniqueness => "uniqueness",
        Command::Sweep => "sweep",
        Command::DelayModel => "delay-model",
    };

    if cli.dry_run {
        ensure_out_dir(&config)?;
        ManifestBuilder::new(command_name, &config)
            .write(&config.output_dir)
            .map_err(|e| runtime("writing manifest", e))?;
        println!(
            "dry run: configuration validated and recorded in {}",
            config.output_dir.join("manifest.txt").display()
        );
        return Ok(ExitCode::SUCCESS);
    }

    match cli.command {
        Command::Synth { stdout } => run_synth(&config, stdout),
        Command::Simulate { device, challenge } => {
            run_simulate(&config, &device, challenge.as_deref())
        }
        Command::Reliability => run_reliability_cmd(&config),
        Command::Uniqueness => run_uniqueness_cmd(&config),
        Command::Sweep => run_sweep_cmd(&config),
        Command::DelayModel => run_delay_model_cmd(&config),
    }
}

fn ensure_out_dir(config: &ExperimentConfig) -> Result<(), AppError> {
    std::fs::create_dir_all(&config.output_dir)
        .map_err(|e| runtime(&format!("creating {}", config.output_dir.display()), e))
}

fn write_artifact(dir: &Path, name: &str, content: &str) -> Result<(), AppError> {
    std::fs::write(dir.join(name), content)
        .map_err(|e| runtime(&format!("writing {}", dir.join(name).display()), e))
}

/// Flushes the manifest and reports per-task failures; returns the
/// process exit code (1 if any task failed).
fn finish(
    config: &ExperimentConfig,
    builder: &mut ManifestBuilder,
    failures: &[TaskFailure],
) -> Result<ExitCode, AppError> {
    builder.artifact("manifest.txt");
    builder
        .write(&config.output_dir)
        .map_err(|e| runtime("writing manifest", e))?;
    if failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for failure in failures {
            eprintln!("task {} failed: {}", failure.task, failure.message);
        }
        eprintln!(
            "{} task(s) failed; partial results were written to {}",
            failures.len(),
            config.output_dir.display()
        );
        Ok(ExitCode::from(1))
    }
}

fn run_synth(config: &ExperimentConfig, to_stdout: bool) -> Result<ExitCode, AppError> {
    let t0 = Instant::now();
    let (device_seed, _, instance) =
        experiments::device_from_seed(config, 0).map_err(|e| runtime("synthesizing device", e))?;
    let text = format!(
        "{}{}",
        csvout::provenance_line(config),
        instance.to_text_with_header(Some(config.seed))
    );
    if to_stdout {
        print!("{text}");
        return Ok(ExitCode::SUCCESS);
    }
    ensure_out_dir(config)?;
    write_artifact(&config.output_dir, "device.crn.txt", &text)?;
    let mut builder = ManifestBuilder::new("synth", config);
    builder
        .seeds(&[("device/0".into(), device_seed)])
        .artifact("device.crn.txt")
        .timing("total", t0.elapsed());
    println!(
        "wrote {} ({} stages, {} reactions, {} species)",
        config.output_dir.join("device.crn.txt").display(),
        instance.n_stages(),
        instance.crn().reaction_count(),
        instance.crn().species_count()
    );
    finish(config, &mut builder, &[])
}

fn run_simulate(
    config: &ExperimentConfig,
    device_name: &str,
    challenge_bits: Option<&str>,
) -> Result<ExitCode, AppError> {
    use molpuf::bundled;
    let t0 = Instant::now();
    let mut seeds: Vec<(String, u64)> = Vec::new();
    let (label, instance, default_challenge) = match device_name {
        "ref8a" | "ref8b" | "ref16a" | "ref16b" => {
            let device = bundled::reference_devices()
                .into_iter()
                .find(|d| d.name == device_name)
                .expect("names enumerated above");
            let instance = device
                .instance()
                .map_err(|e| runtime("building bundled device", e))?;
            (device_name.to_owned(), instance, device.challenge())
        }
        "seeded" => {
            let (device_seed, _, instance) = experiments::device_from_seed(config, 0)
                .map_err(|e| runtime("synthesizing device", e))?;
            seeds.push(("device/0".into(), device_seed));
            let challenge_seed =
                molpuf_cli::seeds::task_seed(config.seed, "challenges", 0);
            seeds.push(("challenges".into(), challenge_seed));
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(
                challenge_seed,
            );
            let challenge = experiments::random_challenges(config.n_stages, 1, &mut rng)
                .pop()
                .expect("one challenge requested");
            ("seeded".to_owned(), instance, challenge)
        }
        other => {
            return Err(AppError::Config(ConfigError::Invalid(format!(
                "unknown device {other:?}; expected ref8a, ref8b, ref16a, ref16b, or seeded"
            ))))
        }
    };
    let challenge = match challenge_bits {
        Some(bits) => Challenge::from_bit_str(bits).map_err(|e| runtime("parsing challenge", e))?,
        None => default_challenge,
    };

    let trace = experiments::run_trace(config, &instance, &label, &challenge)
        .map_err(|e| runtime("simulating", e))?;
    let evaluate = t0.elapsed();

    ensure_out_dir(config)?;
    write_artifact(&config.output_dir, "trace.csv", &csvout::trace_csv(config, &trace))?;
    write_artifact(&config.output_dir, "trace.svg", &svg::trace_svg(config, &trace))?;
    let mut builder = ManifestBuilder::new("simulate", config);
    builder
        .seeds(&seeds)
        .artifact("trace.csv")
        .artifact("trace.svg")
        .timing("evaluate", evaluate)
        .timing("total", t0.elapsed());
    let fmt_time = |t: Option<f64>| match t {
        Some(t) => format!("{t:.4} s"),
        None => "censored".to_owned(),
    };
    println!(
        "device {label} · challenge {} → R = {} (t_top {}, t_bottom {})",
        trace.challenge_bits,
        u8::from(trace.response),
        fmt_time(trace.t_top),
        fmt_time(trace.t_bottom)
    );
    finish(config, &mut builder, &[])
}

fn run_reliability_cmd(config: &ExperimentConfig) -> Result<ExitCode, AppError> {
    let t0 = Instant::now();
    let outcome =
        experiments::run_reliability(config).map_err(|e| runtime("reliability study", e))?;
    let evaluate = t0.elapsed();

    ensure_out_dir(config)?;
    write_artifact(
        &config.output_dir,
        "reliability_metrics.csv",
        &csvout::reliability_metrics_csv(config, &outcome),
    )?;
    write_artifact(
        &config.output_dir,
        "reliability_distances.csv",
        &csvout::reliability_distances_csv(config, &outcome),
    )?;
    write_artifact(
        &config.output_dir,
        "reliability_responses.csv",
        &csvout::reliability_responses_csv(config, &outcome),
    )?;
    let mut builder = ManifestBuilder::new("reliability", config);
    builder
        .seeds(&outcome.task_seeds)
        .artifact("reliability_metrics.csv")
        .artifact("reliability_distances.csv")
        .artifact("reliability_responses.csv")
        .timing("evaluate", evaluate)
        .timing("total", t0.elapsed());
    builder.failures(&outcome.failures);
    println!(
        "reliability: p_intra = {} → reliability = {} ({} conditions × {} challenges, {} stages)",
        outcome.p_intra,
        outcome.reliability,
        outcome.evaluated_conditions,
        outcome.challenges,
        outcome.n_stages
    );
    finish(config, &mut builder, &outcome.failures)
}

fn run_uniqueness_cmd(config: &ExperimentConfig) -> Result<ExitCode, AppError> {
    let t0 = Instant::now();
    let outcome =
        experiments::run_uniqueness(config).map_err(|e| runtime("uniqueness study", e))?;
    let evaluate = t0.elapsed();

    ensure_out_dir(config)?;
    write_artifact(
        &config.output_dir,
        "uniqueness_metrics.csv",
        &csvout::uniqueness_metrics_csv(config, &outcome),
    )?;
    write_artifact(
        &config.output_dir,
        "uniqueness_pairs.csv",
        &csvout::uniqueness_pairs_csv(config, &outcome),
    )?;
    write_artifact(
        &config.output_dir,
        "uniqueness_responses.csv",
        &csvout::uniqueness_responses_csv(config, &outcome),
    )?;
    let title = format!(
        "pairwise signature distances · {} devices · {} challenges · {} stages",
        outcome.evaluated_devices, outcome.challenges, outcome.n_stages
    );
    write_artifact(
        &config.output_dir,
        "uniqueness_histogram.svg",
        &svg::histogram_svg(config, &outcome.pair_fractions, &outcome.inter_fit, &title),
    )?;
    let mut builder = ManifestBuilder::new("uniqueness", config);
    builder
        .seeds(&outcome.task_seeds)
        .artifact("uniqueness_metrics.csv")
        .artifact("uniqueness_pairs.csv")
        .artifact("uniqueness_responses.csv")
        .artifact("uniqueness_histogram.svg")
        .timing("evaluate", evaluate)
        .timing("total", t0.elapsed());
    builder.failures(&outcome.failures);
    println!(
        "uniqueness: p_inter = {} → uniqueness = {} ({} devices × {} challenges, {} stages)",
        outcome.p_inter,
        outcome.uniqueness,
        outcome.evaluated_devices,
        outcome.challenges,
        outcome.n_stages
    );
    finish(config, &mut builder, &outcome.failures)
}

fn run_sweep_cmd(config: &ExperimentConfig) -> Result<ExitCode, AppError> {
    let t0 = Instant::now();
    let (rows, seeds, failures) =
        experiments::run_sweep(config).map_err(|e| runtime("sweep", e))?;
    let evaluate = t0.elapsed();

    ensure_out_dir(config)?;
    write_artifact(&config.output_dir, "sweep.csv", &csvout::sweep_csv(config, &rows))?;
    let mut builder = ManifestBuilder::new("sweep", config);
    builder
        .seeds(&seeds)
        .artifact("sweep.csv")
        .timing("evaluate", evaluate)
        .timing("total", t0.elapsed());
    builder.failures(&failures);
    for row in &rows {
        println!(
            "N = {}: reliability = {}, uniqueness = {}, inter [{}, {}]%, feasible = {}",
            row.n_stages,
            row.reliability,
            row.uniqueness,
            row.inter.min_percent,
            row.inter.max_percent,
            row.feasible
        );
    }
    finish(config, &mut builder, &failures)
}

fn run_delay_model_cmd(config: &ExperimentConfig) -> Result<ExitCode, AppError> {
    let t0 = Instant::now();
    let (metrics, seeds) =
        experiments::run_delay_model(config).map_err(|e| runtime("delay-model study", e))?;
    let evaluate = t0.elapsed();

    ensure_out_dir(config)?;
    write_artifact(
        &config.output_dir,
        "delay_metrics.csv",
        &csvout::delay_metrics_csv(config, &metrics),
    )?;
    let mut builder = ManifestBuilder::new("delay-model", config);
    builder
        .seeds(&seeds)
        .artifact("delay_metrics.csv")
        .timing("evaluate", evaluate)
        .timing("total", t0.elapsed());
    println!(
        "delay model: p_intra = {}, p_inter = {}, reliability = {}, uniqueness = {}, feasible = {}",
        metrics.p_intra, metrics.p_inter, metrics.reliability, metrics.uniqueness, metrics.feasible
    );
    finish(config, &mut builder, &[])
}
