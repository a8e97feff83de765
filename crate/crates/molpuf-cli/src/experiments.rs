//! The experiment drivers behind each subcommand. Every driver derives
//! all randomness from per-task seeds computed up front, evaluates tasks
//! as pure functions of those seeds (optionally in parallel), and
//! reduces to the standard quality metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use molpuf::arbiter::{generate_signature, ArbiterError, ResponseSignature};
use molpuf::delay::{monte_carlo_metrics, DelayError, DelayPuf, MonteCarloMetrics};
use molpuf::kinetics::{
    integrate, IntegratorConfig, SampleRetention, StopPolicy, Watch,
};
use molpuf::metrics::{
    feasible, gaussian_fit, p_inter, p_intra, pairwise_hd_fractions, reference_hd_fractions,
    reliability, uniqueness, variation_stats, GaussianFit, IntraDivisor, IntraDivisor::Comparisons,
    MetricsError, VariationStats,
};
use molpuf::puf::{
    sample_condition, sample_rates, synthesize_puf, Challenge, PufError, PufInstance, StageMatrix,
};

use crate::config::{ExperimentConfig, Mode};
use crate::runner::run_indexed;
use crate::seeds::task_seed;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Puf(#[from] PufError),
    #[error(transparent)]
    Arbiter(#[from] ArbiterError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Kinetics(#[from] molpuf::kinetics::KineticsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{context}: {message}")]
    Failed { context: String, message: String },
}

impl ExperimentError {
    fn failed(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        ExperimentError::Failed {
            context: context.into(),
            message: message.to_string(),
        }
    }
}

/// One task that could not be evaluated; the experiment continues and
/// reports these alongside the surviving results.
#[derive(Debug, Clone)]
pub struct TaskFailure {
    /// Task label, e.g. `condition/3` or `device/12`.
    pub task: String,
    pub message: String,
}

/// A derived seed, labelled for the run manifest.
pub type LabelledSeed = (String, u64);

fn seed_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws `count` uniform challenges of `n_stages` bits.
pub fn random_challenges<R: Rng>(n_stages: usize, count: usize, rng: &mut R) -> Vec<Challenge> {
    (0..count)
        .map(|_| Challenge::new((0..n_stages).map(|_| rng.gen::<bool>()).collect()))
        .collect()
}

/// Builds device `index` of the run's population: its rate matrix is a
/// pure function of the config seed, so any command (synth, simulate,
/// uniqueness) reconstructs the identical instance.
pub fn device_from_seed(
    config: &ExperimentConfig,
    index: u64,
) -> Result<(u64, StageMatrix, PufInstance), ExperimentError> {
    let seed = task_seed(config.seed, "device", index);
    let mut rng = seed_rng(seed);
    let rates = sample_rates(config.n_stages, config.mu, config.sigma, &mut rng)?;
    let instance = synthesize_puf(&rates)?;
    Ok((seed, rates, instance))
}

// ---------------------------------------------------------------------
// Reliability: one device, m environment conditions, L challenges.
// ---------------------------------------------------------------------

#[derive(Debug)]
pub struct ReliabilityOutcome {
    pub n_stages: usize,
    /// Conditions that evaluated successfully (reference first).
    pub evaluated_conditions: usize,
    pub challenges: usize,
    pub p_intra: f64,
    pub reliability: f64,
    pub intra: VariationStats,
    /// Reference-condition Hamming fractions, one per surviving
    /// non-reference condition, in condition order.
    pub fractions: Vec<f64>,
    /// `(condition_id, signature)` for each surviving condition.
    pub signatures: Vec<(u64, ResponseSignature)>,
    pub failures: Vec<TaskFailure>,
    pub task_seeds: Vec<LabelledSeed>,
}

/// Runs the reliability study described by `config`: a single device
/// re-authenticated under `conditions` fresh environment draws (the
/// reference included), scored against the first condition's signature.
pub fn run_reliability(config: &ExperimentConfig) -> Result<ReliabilityOutcome, ExperimentError> {
    let challenge_seed = task_seed(config.seed, "challenges", 0);
    let challenges = random_challenges(
        config.n_stages,
        config.challenges,
        &mut seed_rng(challenge_seed),
    );
    let (device_seed, _, device) = device_from_seed(config, 0)?;
    let condition_seeds: Vec<u64> = (0..config.conditions as u64)
        .map(|j| task_seed(config.seed, "condition", j))
        .collect();

    let mut task_seeds = vec![
        ("challenges".to_owned(), challenge_seed),
        ("device/0".to_owned(), device_seed),
    ];
    for (j, &s) in condition_seeds.iter().enumerate() {
        task_seeds.push((format!("condition/{j}"), s));
    }

    let results: Vec<Result<ResponseSignature, ExperimentError>> = match config.mode {
        Mode::Crn => {
            let arbiter = config.arbiter_config();
            run_indexed(config.conditions, config.jobs, |j| {
                let mut rng = seed_rng(condition_seeds[j]);
                let condition = sample_condition(
                    config.n_stages,
                    config.sigma_s,
                    config.noise.into(),
                    j as u64,
                    &mut rng,
                );
                let perturbed = device.perturb(&condition, config.perturbation.into())?;
                Ok(generate_signature(&perturbed, &challenges, &arbiter)?)
            })
        }
        Mode::DelayModel => {
            let delay_device = DelayPuf::sample(
                config.n_stages,
                config.sigma,
                &mut seed_rng(device_seed),
            );
            run_indexed(config.conditions, config.jobs, |j| {
                let mut rng = seed_rng(condition_seeds[j]);
                let dist = Normal::new(0.0, config.sigma_s)
                    .map_err(|e| ExperimentError::failed(format!("condition/{j}"), e))?;
                let noise: Vec<f64> =
                    (0..config.n_stages).map(|_| dist.sample(&mut rng)).collect();
                let bits = challenges
                    .iter()
                    .map(|c| delay_device.response(c, Some(&noise)))
                    .collect::<Result<Vec<bool>, _>>()?;
                Ok(synthetic_signature(bits))
            })
        }
    };

    let mut signatures: Vec<(u64, ResponseSignature)> = Vec::new();
    let mut failures = Vec::new();
    for (j, result) in results.into_iter().enumerate() {
        match result {
            Ok(sig) => signatures.push((j as u64, sig)),
            Err(e) => failures.push(TaskFailure {
                task: format!("condition/{j}"),
                message: e.to_string(),
            }),
        }
    }
    if signatures.first().map(|(id, _)| *id) != Some(0) {
        return Err(ExperimentError::failed(
            "reliability",
            "the reference condition (condition/0) failed; no baseline to score against",
        ));
    }
    if signatures.len() < 2 {
        return Err(ExperimentError::failed(
            "reliability",
            "fewer than two conditions survived; intra-device variation is undefined",
        ));
    }

    let bit_sets: Vec<&[bool]> = signatures.iter().map(|(_, s)| s.bits.as_slice()).collect();
    let fractions = reference_hd_fractions(&bit_sets)?;
    let p_intra_value = p_intra(&bit_sets, Comparisons)?;
    Ok(ReliabilityOutcome {
        n_stages: config.n_stages,
        evaluated_conditions: signatures.len(),
        challenges: config.challenges,
        p_intra: p_intra_value,
        reliability: reliability(p_intra_value)?,
        intra: variation_stats(&fractions)?,
        fractions,
        signatures,
        failures,
        task_seeds,
    })
}

/// Wraps plain bits in a [`ResponseSignature`] with empty diagnostics so
/// the delay model flows through the same reporting paths as the full
/// simulation. Timing columns render as `censored`.
fn synthetic_signature(bits: Vec<bool>) -> ResponseSignature {
    use molpuf::arbiter::{Arrival, ResponseDiagnostics};
    let diagnostics = bits
        .iter()
        .map(|_| ResponseDiagnostics {
            t_top: Arrival::Censored(0.0),
            t_bottom: Arrival::Censored(0.0),
            final_top: f64::NAN,
            final_bottom: f64::NAN,
        })
        .collect();
    ResponseSignature { bits, diagnostics }
}

// ---------------------------------------------------------------------
// Uniqueness: K devices, one (reference) evaluation each, L challenges.
// ---------------------------------------------------------------------

#[derive(Debug)]
pub struct UniquenessOutcome {
    pub n_stages: usize,
    pub evaluated_devices: usize,
    pub challenges: usize,
    pub p_inter: f64,
    pub uniqueness: f64,
    pub inter: VariationStats,
    pub inter_fit: GaussianFit,
    /// All pairwise Hamming fractions in (i, j) lexicographic order over
    /// the surviving devices.
    pub pair_fractions: Vec<f64>,
    /// `(device_id, signature)` for each surviving device.
    pub signatures: Vec<(u64, ResponseSignature)>,
    pub failures: Vec<TaskFailure>,
    pub task_seeds: Vec<LabelledSeed>,
}

/// Runs the uniqueness study described by `config`: `devices`
/// independently manufactured instances answer one shared challenge
/// set at nominal conditions; signatures are compared pairwise.
pub fn run_uniqueness(config: &ExperimentConfig) -> Result<UniquenessOutcome, ExperimentError> {
    let challenge_seed = task_seed(config.seed, "challenges", 0);
    let challenges = random_challenges(
        config.n_stages,
        config.challenges,
        &mut seed_rng(challenge_seed),
    );
    let device_seeds: Vec<u64> = (0..config.devices as u64)
        .map(|i| task_seed(config.seed, "device", i))
        .collect();

    let mut task_seeds = vec![("challenges".to_owned(), challenge_seed)];
    for (i, &s) in device_seeds.iter().enumerate() {
        task_seeds.push((format!("device/{i}"), s));
    }

    let results: Vec<Result<ResponseSignature, ExperimentError>> = match config.mode {
        Mode::Crn => {
            let arbiter = config.arbiter_config();
            run_indexed(config.devices, config.jobs, |i| {
                let mut rng = seed_rng(device_seeds[i]);
                let rates = sample_rates(config.n_stages, config.mu, config.sigma, &mut rng)?;
                let device = synthesize_puf(&rates)?;
                Ok(generate_signature(&device, &challenges, &arbiter)?)
            })
        }
        Mode::DelayModel => run_indexed(config.devices, config.jobs, |i| {
            let device = DelayPuf::sample(
                config.n_stages,
                config.sigma,
                &mut seed_rng(device_seeds[i]),
            );
            let bits = challenges
                .iter()
                .map(|c| device.response(c, None))
                .collect::<Result<Vec<bool>, _>>()?;
            Ok(synthetic_signature(bits))
        }),
    };

    let mut signatures: Vec<(u64, ResponseSignature)> = Vec::new();
    let mut failures = Vec::new();
    for (i, result) in results.into_iter().enumerate() {
        match result {
            Ok(sig) => signatures.push((i as u64, sig)),
            Err(e) => failures.push(TaskFailure {
                task: format!("device/{i}"),
                message: e.to_string(),
            }),
        }
    }
    if signatures.len() < 2 {
        return Err(ExperimentError::failed(
            "uniqueness",
            "fewer than two devices survived; inter-device variation is undefined",
        ));
    }

    let bit_sets: Vec<&[bool]> = signatures.iter().map(|(_, s)| s.bits.as_slice()).collect();
    let pair_fractions = pairwise_hd_fractions(&bit_sets)?;
    let p_inter_value = p_inter(&bit_sets)?;
    Ok(UniquenessOutcome {
        n_stages: config.n_stages,
        evaluated_devices: signatures.len(),
        challenges: config.challenges,
        p_inter: p_inter_value,
        uniqueness: uniqueness(p_inter_value)?,
        inter: variation_stats(&pair_fractions)?,
        inter_fit: gaussian_fit(&pair_fractions)?,
        pair_fractions,
        signatures,
        failures,
        task_seeds,
    })
}

// ---------------------------------------------------------------------
// Delay-model population study: K × m × L in one call.
// ---------------------------------------------------------------------

/// Runs the full population study (devices × conditions × challenges)
/// under the delay abstraction and returns all quality metrics at once.
pub fn run_delay_model(
    config: &ExperimentConfig,
) -> Result<(MonteCarloMetrics, Vec<LabelledSeed>), ExperimentError> {
    let seed = task_seed(config.seed, "delay-model", 0);
    let metrics = monte_carlo_metrics(
        config.n_stages,
        config.sigma,
        config.sigma_s,
        config.devices,
        config.conditions,
        config.challenges,
        &mut seed_rng(seed),
    )?;
    Ok((metrics, vec![("delay-model".to_owned(), seed)]))
}

// ---------------------------------------------------------------------
// Sweep: the population study repeated across stage counts.
// ---------------------------------------------------------------------

/// One stage count's worth of population metrics.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub n_stages: usize,
    pub devices: usize,
    pub conditions: usize,
    pub challenges: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub reliability: f64,
    pub uniqueness: f64,
    pub intra: VariationStats,
    pub inter: VariationStats,
    pub inter_fit: GaussianFit,
    pub feasible: bool,
}

/// Runs the population study once per entry of `config.stages` and
/// returns one row per stage count, in the configured order.
pub fn run_sweep(
    config: &ExperimentConfig,
) -> Result<(Vec<SweepRow>, Vec<LabelledSeed>, Vec<TaskFailure>), ExperimentError> {
    let mut rows = Vec::with_capacity(config.stages.len());
    let mut seeds = Vec::new();
    let mut failures = Vec::new();
    for &n in &config.stages {
        match config.mode {
            Mode::DelayModel => {
                let seed = task_seed(config.seed, &format!("delay-model/n{n}"), 0);
                seeds.push((format!("delay-model/n{n}"), seed));
                let m = monte_carlo_metrics(
                    n,
                    config.sigma,
                    config.sigma_s,
                    config.devices,
                    config.conditions,
                    config.challenges,
                    &mut seed_rng(seed),
                )?;
                rows.push(SweepRow {
                    n_stages: n,
                    devices: config.devices,
                    conditions: config.conditions,
                    challenges: config.challenges,
                    p_intra: m.p_intra,
                    p_inter: m.p_inter,
                    reliability: m.reliability,
                    uniqueness: m.uniqueness,
                    intra: m.intra,
                    inter: m.inter,
                    inter_fit: m.inter_fit,
                    feasible: m.feasible,
                });
            }
            Mode::Crn => {
                let (row, mut n_seeds, mut n_failures) = crn_population_row(config, n)?;
                rows.push(row);
                seeds.append(&mut n_seeds);
                failures.append(&mut n_failures);
            }
        }
    }
    Ok((rows, seeds, failures))
}

/// Full-simulation population study for one stage count: every device is
/// evaluated under every condition (fresh draws, the reference included),
/// intra-device statistics score conditions against each device's
/// reference, and inter-device statistics compare reference signatures.
fn crn_population_row(
    config: &ExperimentConfig,
    n: usize,
) -> Result<(SweepRow, Vec<LabelledSeed>, Vec<TaskFailure>), ExperimentError> {
    let challenge_label = format!("challenges/n{n}");
    let challenge_seed = task_seed(config.seed, &challenge_label, 0);
    let challenges = random_challenges(n, config.challenges, &mut seed_rng(challenge_seed));

    let mut seeds = vec![(challenge_label, challenge_seed)];
    let mut devices = Vec::with_capacity(config.devices);
    let device_purpose = format!("device/n{n}");
    for i in 0..config.devices as u64 {
        let seed = task_seed(config.seed, &device_purpose, i);
        seeds.push((format!("device/n{n}/{i}"), seed));
        let mut rng = seed_rng(seed);
        let rates = sample_rates(n, config.mu, config.sigma, &mut rng)?;
        devices.push(synthesize_puf(&rates)?);
    }

    let k = config.devices;
    let m = config.conditions;
    let condition_purpose = format!("condition/n{n}");
    let condition_seeds: Vec<u64> = (0..(k * m) as u64)
        .map(|t| task_seed(config.seed, &condition_purpose, t))
        .collect();
    for (t, &s) in condition_seeds.iter().enumerate() {
        seeds.push((format!("condition/n{n}/{}/{}", t / m, t % m), s));
    }

    let arbiter = config.arbiter_config();
    let results: Vec<Result<ResponseSignature, ExperimentError>> =
        run_indexed(k * m, config.jobs, |t| {
            let (i, j) = (t / m, t % m);
            let mut rng = seed_rng(condition_seeds[t]);
            let condition =
                sample_condition(n, config.sigma_s, config.noise.into(), j as u64, &mut rng);
            let perturbed = devices[i].perturb(&condition, config.perturbation.into())?;
            Ok(generate_signature(&perturbed, &challenges, &arbiter)?)
        });

    let mut failures = Vec::new();
    let mut per_device: Vec<Vec<Vec<bool>>> = vec![Vec::new(); k];
    let mut device_complete = vec![true; k];
    for (t, result) in results.into_iter().enumerate() {
        let (i, j) = (t / m, t % m);
        match result {
            Ok(sig) => per_device[i].push(sig.bits),
            Err(e) => {
                device_complete[i] = false;
                failures.push(TaskFailure {
                    task: format!("n{n}/device/{i}/condition/{j}"),
                    message: e.to_string(),
                });
            }
        }
    }

    // A device missing any condition is dropped whole: mixing partial
    // condition sets would silently change what p_intra averages over.
    let mut reference_signatures: Vec<Vec<bool>> = Vec::new();
    let mut intra_fractions: Vec<f64> = Vec::new();
    let mut p_intra_sum = 0.0;
    let mut survivors = 0usize;
    for i in 0..k {
        if !device_complete[i] {
            continue;
        }
        let sigs = &per_device[i];
        p_intra_sum += p_intra(sigs, IntraDivisor::Comparisons)?;
        intra_fractions.extend(reference_hd_fractions(sigs)?);
        reference_signatures.push(sigs[0].clone());
        survivors += 1;
    }
    if survivors < 2 {
        return Err(ExperimentError::failed(
            format!("sweep n={n}"),
            "fewer than two devices completed all conditions",
        ));
    }

    let p_intra_mean = p_intra_sum / survivors as f64;
    let p_inter_value = p_inter(&reference_signatures)?;
    let inter_fractions = pairwise_hd_fractions(&reference_signatures)?;
    let intra = variation_stats(&intra_fractions)?;
    let inter = variation_stats(&inter_fractions)?;
    let row = SweepRow {
        n_stages: n,
        devices: survivors,
        conditions: m,
        challenges: config.challenges,
        p_intra: p_intra_mean,
        p_inter: p_inter_value,
        reliability: reliability(p_intra_mean)?,
        uniqueness: uniqueness(p_inter_value)?,
        intra,
        inter,
        inter_fit: gaussian_fit(&inter_fractions)?,
        feasible: feasible(&intra, &inter),
    };
    Ok((row, seeds, failures))
}

// ---------------------------------------------------------------------
// Trace: one device, one challenge, full trajectories for plotting.
// ---------------------------------------------------------------------

#[derive(Debug)]
pub struct TraceOutcome {
    pub device_label: String,
    pub challenge_bits: String,
    pub response: bool,
    pub t_top: Option<f64>,
    pub t_bottom: Option<f64>,
    pub threshold: f64,
    /// `(time, top logic-1 rail, bottom logic-1 rail)` samples covering
    /// the race and its aftermath.
    pub samples: Vec<(f64, f64, f64)>,
}

/// Simulates one authentication and retains the two output trajectories
/// densely enough to plot: first the race is arbitrated exactly as in
/// the experiments, then the system is re-integrated with full retention
/// to twice the later crossing time.
pub fn run_trace(
    config: &ExperimentConfig,
    device: &PufInstance,
    device_label: &str,
    challenge: &Challenge,
) -> Result<TraceOutcome, ExperimentError> {
    let arbiter = config.arbiter_config();
    let (response, diag) = molpuf::arbiter::evaluate_response(device, challenge, &arbiter)?;
    let t_top = diag.t_top.time();
    let t_bottom = diag.t_bottom.time();

    let race_end = t_top
        .into_iter()
        .chain(t_bottom)
        .fold(0.0_f64, f64::max);
    let horizon = if race_end > 0.0 {
        2.0 * race_end
    } else {
        arbiter.horizon.unwrap_or_else(|| molpuf::arbiter::default_horizon(device))
    };

    let init = device.apply_challenge(challenge)?;
    let (_, top1) = device.final_top_rails();
    let (_, bot1) = device.final_bottom_rails();
    let iconfig = IntegratorConfig {
        horizon,
        retention: SampleRetention::Full,
        ..config.integrator_config()
    };
    let traj = integrate(device.crn(), &init, &iconfig, &[] as &[Watch], StopPolicy::Horizon)?;
    let samples = traj
        .samples
        .iter()
        .map(|s| (s.time, s.conc[top1.index()], s.conc[bot1.index()]))
        .collect();

    Ok(TraceOutcome {
        device_label: device_label.to_owned(),
        challenge_bits: challenge
            .bits()
            .iter()
            .map(|&b| if b { '1' } else { '0' })
            .collect(),
        response,
        t_top,
        t_bottom,
        threshold: arbiter.threshold,
        samples,
    })
}

/// Back-compat alias used by the command layer.
pub use run_trace as run_traces;
