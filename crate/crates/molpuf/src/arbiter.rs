//! Response arbitration: turning a challenged device simulation into one
//! bit, and chaining bits into signatures.
//!
//! After the clock is asserted, logic 1 propagates down both gate chains;
//! each final output's logic-1 rail rises from 0 toward 100 nM. The
//! arbiter watches both rails against a threshold (default 50 nM, the
//! dual-rail midpoint) and answers 1 exactly when the top path arrives
//! no later than the bottom path.
//!
//! Two decision modes are provided. `Race` (the default) compares the
//! two refined threshold-crossing times directly. `Difference` stops at
//! the first crossing and reads the sign of `Z1_top − Z1_bottom` there —
//! the form convenient in ODE post-processing. On any margin wider than
//! the crossing-refinement tolerance the two agree; they can differ only
//! on near-exact ties.

use crate::kinetics::{
    integrate, IntegratorConfig, KineticsError, SampleRetention, StopPolicy, Watch,
};
use crate::puf::{Challenge, PufError, PufInstance};

use std::fmt;
use thiserror::Error;

/// Decision rule applied to the pair of output trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArbiterMode {
    /// Compare threshold-crossing times of the two logic-1 rails.
    Race,
    /// Read the sign of the rail difference at the first crossing.
    Difference,
}

/// Arbitration parameters.
#[derive(Debug, Clone)]
pub struct ArbiterConfig {
    pub mode: ArbiterMode,
    /// Crossing threshold in nM; must lie strictly inside (0, 100).
    pub threshold: f64,
    /// Simulation horizon in seconds; `None` picks `50·N / min(rate)`,
    /// a generous linear-in-stages settling allowance.
    pub horizon: Option<f64>,
    /// Two crossings closer than this (seconds, floored by the crossing
    /// refinement tolerance) count as a tie, and ties answer 1. Keeps
    /// the bit well-defined for exactly symmetric devices, where
    /// elimination-order roundoff would otherwise pick the winner.
    pub tie_window: f64,
    /// Tolerances handed to the integrator (its horizon/retention are
    /// overridden per evaluation).
    pub integrator: IntegratorConfig,
}

impl Default for ArbiterConfig {
    fn default() -> Self {
        ArbiterConfig {
            mode: ArbiterMode::Race,
            threshold: 50.0,
            horizon: None,
            tie_window: 1e-6,
            integrator: IntegratorConfig::default(),
        }
    }
}

/// Arrival of one output rail at the threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arrival {
    /// Crossed at this time (seconds).
    Crossed(f64),
    /// Had not crossed when integration stopped at this time.
    Censored(f64),
}

impl Arrival {
    pub fn time(&self) -> Option<f64> {
        match self {
            Arrival::Crossed(t) => Some(*t),
            Arrival::Censored(_) => None,
        }
    }
}

impl fmt::Display for Arrival {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arrival::Crossed(t) => write!(f, "{t}"),
            Arrival::Censored(_) => write!(f, "censored"),
        }
    }
}

/// Everything observable about one arbitration besides the bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseDiagnostics {
    pub t_top: Arrival,
    pub t_bottom: Arrival,
    /// Logic-1 rail concentrations when integration stopped.
    pub final_top: f64,
    pub final_bottom: f64,
}

impl ResponseDiagnostics {
    /// |t_top − t_bottom| when both rails crossed.
    pub fn margin(&self) -> Option<f64> {
        Some((self.t_top.time()? - self.t_bottom.time()?).abs())
    }
}

/// An ordered list of response bits with their diagnostics.
#[derive(Debug, Clone)]
pub struct ResponseSignature {
    pub bits: Vec<bool>,
    pub diagnostics: Vec<ResponseDiagnostics>,
}

impl ResponseSignature {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum ArbiterError {
    #[error("threshold {0} nM is outside the open interval (0, 100)")]
    BadThreshold(f64),
    #[error(
        "neither output crossed within the {horizon} s horizon \
         (top rail at {final_top:.3} nM, bottom at {final_bottom:.3} nM)"
    )]
    NoCrossing {
        horizon: f64,
        final_top: f64,
        final_bottom: f64,
    },
    #[error("challenge {index}: {source}")]
    SignatureAt {
        index: usize,
        #[source]
        source: Box<ArbiterError>,
    },
    #[error(transparent)]
    Puf(#[from] PufError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
}

/// Default settling allowance: `50·N / min(rate)` seconds.
pub fn default_horizon(puf: &PufInstance) -> f64 {
    let min_rate = puf
        .rates()
        .row(crate::mux::Path::Top)
        .iter()
        .chain(puf.rates().row(crate::mux::Path::Bottom))
        .fold(f64::INFINITY, |a, &b| a.min(b));
    50.0 * puf.n_stages() as f64 / min_rate
}

/// Applies the challenge, races the clock through the device, and
/// arbitrates. The device is evaluated exactly as given — apply
/// [`PufInstance::perturb`] first to model an environment.
pub fn evaluate_response(
    puf: &PufInstance,
    challenge: &Challenge,
    config: &ArbiterConfig,
) -> Result<(bool, ResponseDiagnostics), ArbiterError> {
    if !(config.threshold > 0.0 && config.threshold < 100.0) {
        return Err(ArbiterError::BadThreshold(config.threshold));
    }
    let init = puf.apply_challenge(challenge)?;
    let (_, top1) = puf.final_top_rails();
    let (_, bot1) = puf.final_bottom_rails();

    let horizon = config.horizon.unwrap_or_else(|| default_horizon(puf));
    let iconfig = IntegratorConfig {
        horizon,
        retention: SampleRetention::Sparse,
        ..config.integrator.clone()
    };
    let watches = [
        Watch {
            species: top1,
            threshold: config.threshold,
        },
        Watch {
            species: bot1,
            threshold: config.threshold,
        },
    ];
    let stop = match config.mode {
        ArbiterMode::Race => StopPolicy::AllCrossed,
        ArbiterMode::Difference => StopPolicy::FirstCrossing,
    };
    let traj = integrate(puf.crn(), &init, &iconfig, &watches, stop)?;

    let stop_time = traj.final_state.time;
    let crossing = |species| {
        traj.events
            .iter()
            .find(|e| e.species == species)
            .map(|e| e.time)
    };
    let t_top = crossing(top1).map_or(Arrival::Censored(stop_time), Arrival::Crossed);
    let t_bottom = crossing(bot1).map_or(Arrival::Censored(stop_time), Arrival::Crossed);
    let diagnostics = ResponseDiagnostics {
        t_top,
        t_bottom,
        final_top: traj.final_state.conc[top1.index()],
        final_bottom: traj.final_state.conc[bot1.index()],
    };

    let bit = match config.mode {
        ArbiterMode::Race => match (t_top, t_bottom) {
            (Arrival::Crossed(tt), Arrival::Crossed(tb)) => {
                let tol = config
                    .tie_window
                    .max(1e-6 * tt.abs().max(tb.abs()));
                tt <= tb + tol
            }
            (Arrival::Crossed(_), Arrival::Censored(_)) => true,
            (Arrival::Censored(_), Arrival::Crossed(_)) => false,
            (Arrival::Censored(_), Arrival::Censored(_)) => {
                return Err(ArbiterError::NoCrossing {
                    horizon,
                    final_top: diagnostics.final_top,
                    final_bottom: diagnostics.final_bottom,
                })
            }
        },
        ArbiterMode::Difference => diagnostics.final_top - diagnostics.final_bottom >= 0.0,
    };
    Ok((bit, diagnostics))
}

/// Evaluates one challenge per signature bit, re-initializing the device
/// state for every authentication. Order is preserved; an error names the
/// offending challenge index.
pub fn generate_signature(
    puf: &PufInstance,
    challenges: &[Challenge],
    config: &ArbiterConfig,
) -> Result<ResponseSignature, ArbiterError> {
    let mut bits = Vec::with_capacity(challenges.len());
    let mut diagnostics = Vec::with_capacity(challenges.len());
    for (index, challenge) in challenges.iter().enumerate() {
        let (bit, diag) =
            evaluate_response(puf, challenge, config).map_err(|e| ArbiterError::SignatureAt {
                index,
                source: Box::new(e),
            })?;
        bits.push(bit);
        diagnostics.push(diag);
    }
    Ok(ResponseSignature { bits, diagnostics })
}

/// Renders a signature as CSV rows
/// `puf_id,condition_id,challenge_index,response,t_top,t_bottom`
/// (censored arrivals print as `censored`).
pub fn signature_csv(puf_id: &str, condition_id: u64, signature: &ResponseSignature) -> String {
    let mut out = String::from("puf_id,condition_id,challenge_index,response,t_top,t_bottom\n");
    for (i, (bit, diag)) in signature.bits.iter().zip(&signature.diagnostics).enumerate() {
        out.push_str(&format!(
            "{puf_id},{condition_id},{i},{},{},{}\n",
            u8::from(*bit),
            diag.t_top,
            diag.t_bottom
        ));
    }
    out
}
