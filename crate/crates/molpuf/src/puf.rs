//! N-stage multiplexer PUF synthesis.
//!
//! A device is two parallel chains of multiplexers (a top and a bottom
//! path) sharing one select signal per stage. Stage i's top gate reads
//! `A` from the previous top output and `B` from the previous bottom
//! output; the bottom gate reads them swapped. With the stage select at
//! logic 0 both signals pass straight through; at logic 1 they swap
//! paths. Both data inputs of stage 1 alias a single clock signal, so a
//! rising clock races itself down both paths and the only thing
//! distinguishing the two arrivals is the accumulated kinetics of the
//! gates along each route — the manufacturing fingerprint.
//!
//! Per-gate rate constants are drawn from N(16, 1) (nonpositive draws
//! are redrawn); environmental conditions perturb them with N(0, σ_s²)
//! offsets, σ_s = 0.05 by default. An N-stage device compiles to exactly
//! 32·N reactions over 18·N + 2 species.
//!
//! Stage indices are 0-based in every API; species names carry the
//! conventional 1-based stage numbers (`S@s1`, `Z1@s3t`, `R2@s12b`).

use crate::crn::{rail_name, Crn, CrnError, SpeciesId};
use crate::kinetics::State;
use crate::mux::{
    initial_output_state, set_signal, synthesize_mux, MuxError, MuxId, MuxPorts, MuxSpec, Path,
    LOGIC_LEVEL_NM,
};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Mean of the per-gate rate distribution.
pub const RATE_MEAN: f64 = 16.0;
/// Standard deviation of the per-gate rate distribution.
pub const RATE_STD: f64 = 1.0;
/// Default standard deviation of environmental rate offsets.
pub const NOISE_STD: f64 = 0.05;

/// One value per gate: two paths × N stages. Used both for rate
/// constants and for perturbation offsets (offsets may be negative).
#[derive(Debug, Clone, PartialEq)]
pub struct StageMatrix {
    top: Vec<f64>,
    bottom: Vec<f64>,
}

impl StageMatrix {
    pub fn from_rows(top: Vec<f64>, bottom: Vec<f64>) -> Result<Self, PufError> {
        if top.len() != bottom.len() {
            return Err(PufError::RowLengthMismatch {
                top: top.len(),
                bottom: bottom.len(),
            });
        }
        if top.is_empty() {
            return Err(PufError::EmptyDevice);
        }
        Ok(StageMatrix { top, bottom })
    }

    pub fn n_stages(&self) -> usize {
        self.top.len()
    }

    pub fn get(&self, path: Path, stage: usize) -> f64 {
        match path {
            Path::Top => self.top[stage],
            Path::Bottom => self.bottom[stage],
        }
    }

    pub fn row(&self, path: Path) -> &[f64] {
        match path {
            Path::Top => &self.top,
            Path::Bottom => &self.bottom,
        }
    }
}

/// An N-bit challenge; bit i configures stage i's select.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Challenge {
    bits: Vec<bool>,
}

impl Challenge {
    pub fn new(bits: Vec<bool>) -> Self {
        Challenge { bits }
    }

    /// Parses a string of `0`/`1` characters, most significant stage
    /// first (`"11101010"` ⇒ C_1 = 1, C_2 = 1, ... C_8 = 0).
    pub fn from_bit_str(s: &str) -> Result<Self, PufError> {
        let mut bits = Vec::with_capacity(s.len());
        for (i, ch) in s.chars().enumerate() {
            match ch {
                '0' => bits.push(false),
                '1' => bits.push(true),
                _ => return Err(PufError::BadChallengeChar { position: i, ch }),
            }
        }
        Ok(Challenge { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, stage: usize) -> bool {
        self.bits[stage]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }
}

/// How environment offsets are drawn across the gates of one condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseStructure {
    /// Every gate gets an independent offset draw.
    Independent,
    /// One offset draw is shared by all gates of the device (a global
    /// environment shift, e.g. temperature moving all kinetics together).
    Common,
}

/// How offsets combine with base rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbationMode {
    /// rate + offset (offsets in absolute rate units).
    Additive,
    /// rate · (1 + offset) (offsets as fractions).
    Relative,
}

/// One sampled environment: an offset per gate.
#[derive(Debug, Clone)]
pub struct EnvironmentCondition {
    pub condition_id: u64,
    pub offsets: StageMatrix,
}

impl EnvironmentCondition {
    /// The unperturbed reference environment (all offsets zero).
    pub fn nominal(n_stages: usize, condition_id: u64) -> Self {
        EnvironmentCondition {
            condition_id,
            offsets: StageMatrix {
                top: vec![0.0; n_stages],
                bottom: vec![0.0; n_stages],
            },
        }
    }
}

/// Boundary signal names of a synthesized device.
#[derive(Debug, Clone)]
pub struct PufPorts {
    pub clock: String,
    /// Select signal per stage, index 0 = stage 1.
    pub selects: Vec<String>,
    /// Top-path output signal per stage.
    pub top_outputs: Vec<String>,
    /// Bottom-path output signal per stage.
    pub bottom_outputs: Vec<String>,
}

/// A synthesized device: its reaction network plus the port map and the
/// rate matrix it was built from. Instances are immutable; perturbation
/// returns a fresh instance.
#[derive(Debug, Clone)]
pub struct PufInstance {
    n_stages: usize,
    rates: StageMatrix,
    crn: Crn,
    ports: PufPorts,
}

/// One linear conservation law of a synthesized network: the weighted
/// concentration sum over `terms` equals `total` at the start of every
/// authentication and is preserved exactly by the stoichiometry, so any
/// numerical drift is integrator error.
#[derive(Debug, Clone)]
pub struct ConservationPool {
    /// The boundary signal the pool belongs to (port name), or `clock`.
    pub label: String,
    /// (species, multiplicity) pairs; the multiplicity counts how many
    /// pool members one molecule of the species carries (binding
    /// complexes of the first stage hold two clock molecules).
    pub terms: Vec<(SpeciesId, f64)>,
    /// The conserved value in nM.
    pub total: f64,
}

impl ConservationPool {
    /// Weighted concentration sum at one state vector.
    pub fn evaluate(&self, conc: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(id, w)| w * conc[id.index()])
            .sum()
    }

    /// Absolute drift from the conserved value.
    pub fn deviation(&self, conc: &[f64]) -> f64 {
        (self.evaluate(conc) - self.total).abs()
    }
}

#[derive(Debug, Error)]
pub enum PufError {
    #[error("device must have at least one stage")]
    EmptyDevice,
    #[error("rate rows differ in length (top {top}, bottom {bottom})")]
    RowLengthMismatch { top: usize, bottom: usize },
    #[error("stage {stage} {path:?} rate must be positive, got {value}")]
    NonpositiveRate { stage: usize, path: Path, value: f64 },
    #[error("challenge has {got} bits but the device has {expected} stages")]
    ChallengeLength { expected: usize, got: usize },
    #[error("challenge contains {ch:?} at position {position}; only 0/1 allowed")]
    BadChallengeChar { position: usize, ch: char },
    #[error("offsets are shaped for {got} stages but the device has {expected}")]
    OffsetShape { expected: usize, got: usize },
    #[error("header: {0}")]
    Header(String),
    #[error("serialized reactions do not match the header's rate matrix")]
    BodyMismatch,
    #[error(transparent)]
    Mux(#[from] MuxError),
    #[error(transparent)]
    Crn(#[from] CrnError),
}

/// Draws the 2×N rate matrix: independent N(mu, sigma²) per gate,
/// redrawing any nonpositive sample. Draw order is stage-major, top
/// before bottom, so a seeded generator reproduces the same device.
pub fn sample_rates<R: Rng>(
    n_stages: usize,
    mu: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<StageMatrix, PufError> {
    if n_stages == 0 {
        return Err(PufError::EmptyDevice);
    }
    let mut top = Vec::with_capacity(n_stages);
    let mut bottom = Vec::with_capacity(n_stages);
    let dist = Normal::new(mu, sigma).expect("finite mean and non-negative sigma");
    let mut draw = || loop {
        let v: f64 = dist.sample(rng);
        if v > 0.0 {
            return v;
        }
    };
    for _ in 0..n_stages {
        top.push(draw());
        bottom.push(draw());
    }
    Ok(StageMatrix { top, bottom })
}

/// Draws one environment condition. `Independent` uses the same
/// stage-major, top-before-bottom order as [`sample_rates`]; `Common`
/// consumes a single draw shared by every gate.
pub fn sample_condition<R: Rng>(
    n_stages: usize,
    sigma_s: f64,
    structure: NoiseStructure,
    condition_id: u64,
    rng: &mut R,
) -> EnvironmentCondition {
    let dist = Normal::new(0.0, sigma_s).expect("finite sigma");
    let (top, bottom) = match structure {
        NoiseStructure::Independent => {
            let mut top = Vec::with_capacity(n_stages);
            let mut bottom = Vec::with_capacity(n_stages);
            for _ in 0..n_stages {
                top.push(dist.sample(rng));
                bottom.push(dist.sample(rng));
            }
            (top, bottom)
        }
        NoiseStructure::Common => {
            let shared: f64 = dist.sample(rng);
            (vec![shared; n_stages], vec![shared; n_stages])
        }
    };
    EnvironmentCondition {
        condition_id,
        offsets: StageMatrix { top, bottom },
    }
}

fn select_signal(stage: usize) -> String {
    format!("S@s{}", stage + 1)
}

fn output_signal(stage: usize, path: Path) -> String {
    let p = match path {
        Path::Top => 't',
        Path::Bottom => 'b',
    };
    format!("Z@s{}{p}", stage + 1)
}

/// Builds the reaction network for a 2×N rate matrix.
pub fn synthesize_puf(rates: &StageMatrix) -> Result<PufInstance, PufError> {
    let n = rates.n_stages();
    for stage in 0..n {
        for path in [Path::Top, Path::Bottom] {
            let value = rates.get(path, stage);
            if !(value.is_finite() && value > 0.0) {
                return Err(PufError::NonpositiveRate { stage, path, value });
            }
        }
    }

    let mut crn = Crn::new();
    let clock = "CLK".to_owned();
    let mut selects: Vec<String> = Vec::with_capacity(n);
    let mut top_outputs: Vec<String> = Vec::with_capacity(n);
    let mut bottom_outputs: Vec<String> = Vec::with_capacity(n);

    for stage in 0..n {
        let s = select_signal(stage);
        crn.declare_rail_pair(&s)?;

        // Stage 1 reads the clock on both data inputs; later stages read
        // the previous outputs, crossed on the bottom path.
        let (top_a, top_b) = if stage == 0 {
            (clock.clone(), clock.clone())
        } else {
            (top_outputs[stage - 1].clone(), bottom_outputs[stage - 1].clone())
        };
        let (bot_a, bot_b) = if stage == 0 {
            (clock.clone(), clock.clone())
        } else {
            (bottom_outputs[stage - 1].clone(), top_outputs[stage - 1].clone())
        };

        let z_top = output_signal(stage, Path::Top);
        let z_bot = output_signal(stage, Path::Bottom);

        synthesize_mux(
            &mut crn,
            &MuxSpec::new(MuxId::new(stage as u32 + 1, Path::Top), rates.get(Path::Top, stage)),
            &MuxPorts {
                a: top_a,
                b: top_b,
                s: s.clone(),
                z: z_top.clone(),
            },
        )?;
        synthesize_mux(
            &mut crn,
            &MuxSpec::new(
                MuxId::new(stage as u32 + 1, Path::Bottom),
                rates.get(Path::Bottom, stage),
            ),
            &MuxPorts {
                a: bot_a,
                b: bot_b,
                s: s.clone(),
                z: z_bot.clone(),
            },
        )?;

        selects.push(s);
        top_outputs.push(z_top);
        bottom_outputs.push(z_bot);
    }

    Ok(PufInstance {
        n_stages: n,
        rates: rates.clone(),
        crn,
        ports: PufPorts {
            clock,
            selects,
            top_outputs,
            bottom_outputs,
        },
    })
}

impl PufInstance {
    pub fn n_stages(&self) -> usize {
        self.n_stages
    }

    pub fn rates(&self) -> &StageMatrix {
        &self.rates
    }

    pub fn crn(&self) -> &Crn {
        &self.crn
    }

    pub fn ports(&self) -> &PufPorts {
        &self.ports
    }

    /// Rail species of the final top-path output (logic-0 rail, logic-1
    /// rail).
    pub fn final_top_rails(&self) -> (SpeciesId, SpeciesId) {
        self.signal_rails(&self.ports.top_outputs[self.n_stages - 1])
    }

    /// Rail species of the final bottom-path output.
    pub fn final_bottom_rails(&self) -> (SpeciesId, SpeciesId) {
        self.signal_rails(&self.ports.bottom_outputs[self.n_stages - 1])
    }

    fn signal_rails(&self, signal: &str) -> (SpeciesId, SpeciesId) {
        let lo = self.crn.species_id(&rail_name(signal, 0)).expect("rail exists");
        let hi = self.crn.species_id(&rail_name(signal, 1)).expect("rail exists");
        (lo, hi)
    }

    /// Every linear conservation law the wiring guarantees: one pool per
    /// boundary signal (clock, selects, gate outputs), each summing to
    /// the logic level. Output pools of non-final stages include the
    /// binding complexes of the next stage's two gates, which hold one
    /// molecule of each routed signal; the clock pool counts the first
    /// stage's complexes twice because that stage binds the clock with
    /// itself.
    pub fn conservation_pools(&self) -> Vec<ConservationPool> {
        let id = |name: String| -> SpeciesId {
            self.crn
                .species_id(&name)
                .expect("synthesized networks contain their own species")
        };
        let stage_complexes = |stage: usize| -> Vec<SpeciesId> {
            let mut v = Vec::with_capacity(8);
            for path in ['t', 'b'] {
                for j in 1..=4 {
                    v.push(id(format!("R{j}@s{stage}{path}")));
                }
            }
            v
        };

        let mut pools = Vec::with_capacity(1 + 3 * self.n_stages);

        let (clk_lo, clk_hi) = self.signal_rails(&self.ports.clock);
        let mut clock_terms = vec![(clk_lo, 1.0), (clk_hi, 1.0)];
        clock_terms.extend(stage_complexes(1).into_iter().map(|s| (s, 2.0)));
        pools.push(ConservationPool {
            label: self.ports.clock.clone(),
            terms: clock_terms,
            total: LOGIC_LEVEL_NM,
        });

        for select in &self.ports.selects {
            let (lo, hi) = self.signal_rails(select);
            pools.push(ConservationPool {
                label: select.clone(),
                terms: vec![(lo, 1.0), (hi, 1.0)],
                total: LOGIC_LEVEL_NM,
            });
        }

        for stage in 1..=self.n_stages {
            for outputs in [&self.ports.top_outputs, &self.ports.bottom_outputs] {
                let signal = &outputs[stage - 1];
                let (lo, hi) = self.signal_rails(signal);
                let mut terms = vec![(lo, 1.0), (hi, 1.0)];
                if stage < self.n_stages {
                    terms.extend(stage_complexes(stage + 1).into_iter().map(|s| (s, 1.0)));
                }
                pools.push(ConservationPool {
                    label: signal.clone(),
                    terms,
                    total: LOGIC_LEVEL_NM,
                });
            }
        }
        pools
    }

    /// Initial concentrations for one authentication: selects encode the
    /// challenge, the clock is asserted at logic 1, every gate output
    /// rests at logic 0 and every internal at zero.
    pub fn apply_challenge(&self, challenge: &Challenge) -> Result<State, PufError> {
        self.apply_challenge_with_clock(challenge, true)
    }

    /// [`PufInstance::apply_challenge`] with an explicit clock value
    /// (logic 0 keeps the device at rest; useful for settling studies).
    pub fn apply_challenge_with_clock(
        &self,
        challenge: &Challenge,
        clock: bool,
    ) -> Result<State, PufError> {
        if challenge.len() != self.n_stages {
            return Err(PufError::ChallengeLength {
                expected: self.n_stages,
                got: challenge.len(),
            });
        }
        let mut conc = vec![0.0; self.crn.species_count()];
        set_signal(&self.crn, &self.ports.clock, clock, &mut conc)?;
        for stage in 0..self.n_stages {
            set_signal(&self.crn, &self.ports.selects[stage], challenge.bit(stage), &mut conc)?;
            initial_output_state(&self.crn, &self.ports.top_outputs[stage], &mut conc)?;
            initial_output_state(&self.crn, &self.ports.bottom_outputs[stage], &mut conc)?;
        }
        Ok(State::new(0.0, conc))
    }

    /// A new instance with rates shifted by the condition's offsets.
    /// Structure (species, reactions, ordering) is bit-identical; only
    /// forward rate constants move. Reverse rates stay at 1e5.
    pub fn perturb(
        &self,
        condition: &EnvironmentCondition,
        mode: PerturbationMode,
    ) -> Result<PufInstance, PufError> {
        if condition.offsets.n_stages() != self.n_stages {
            return Err(PufError::OffsetShape {
                expected: self.n_stages,
                got: condition.offsets.n_stages(),
            });
        }
        let shift = |base: f64, off: f64| match mode {
            PerturbationMode::Additive => base + off,
            PerturbationMode::Relative => base * (1.0 + off),
        };
        let top: Vec<f64> = self
            .rates
            .top
            .iter()
            .zip(&condition.offsets.top)
            .map(|(&r, &o)| shift(r, o))
            .collect();
        let bottom: Vec<f64> = self
            .rates
            .bottom
            .iter()
            .zip(&condition.offsets.bottom)
            .map(|(&r, &o)| shift(r, o))
            .collect();
        synthesize_puf(&StageMatrix { top, bottom })
    }

    /// Serializes the device: a comment header (stage count, rate matrix,
    /// optional seed) followed by the reaction list. The header alone
    /// reproduces the instance exactly.
    pub fn to_text_with_header(&self, seed: Option<u64>) -> String {
        let mut out = String::new();
        out.push_str(&format!("# n_stages={}\n", self.n_stages));
        out.push_str(&format!("# rates_top={}\n", join_rates(&self.rates.top)));
        out.push_str(&format!("# rates_bottom={}\n", join_rates(&self.rates.bottom)));
        if let Some(seed) = seed {
            out.push_str(&format!("# seed={seed}\n"));
        }
        out.push_str(&self.crn.to_text());
        out
    }

    /// Rebuilds a device from [`PufInstance::to_text_with_header`] output
    /// and cross-checks the reaction body against the header. Returns the
    /// instance and the recorded seed, if any.
    pub fn from_text_with_header(text: &str) -> Result<(PufInstance, Option<u64>), PufError> {
        let mut n_stages: Option<usize> = None;
        let mut top: Option<Vec<f64>> = None;
        let mut bottom: Option<Vec<f64>> = None;
        let mut seed: Option<u64> = None;
        for line in text.lines() {
            let Some(rest) = line.strip_prefix("# ") else { continue };
            if let Some(v) = rest.strip_prefix("n_stages=") {
                n_stages = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| PufError::Header(format!("bad n_stages {v:?}")))?,
                );
            } else if let Some(v) = rest.strip_prefix("rates_top=") {
                top = Some(parse_rates(v)?);
            } else if let Some(v) = rest.strip_prefix("rates_bottom=") {
                bottom = Some(parse_rates(v)?);
            } else if let Some(v) = rest.strip_prefix("seed=") {
                seed = Some(
                    v.trim()
                        .parse()
                        .map_err(|_| PufError::Header(format!("bad seed {v:?}")))?,
                );
            }
        }
        let n = n_stages.ok_or_else(|| PufError::Header("missing n_stages".into()))?;
        let top = top.ok_or_else(|| PufError::Header("missing rates_top".into()))?;
        let bottom = bottom.ok_or_else(|| PufError::Header("missing rates_bottom".into()))?;
        if top.len() != n || bottom.len() != n {
            return Err(PufError::Header(format!(
                "rate rows ({}, {}) do not match n_stages={n}",
                top.len(),
                bottom.len()
            )));
        }
        let instance = synthesize_puf(&StageMatrix::from_rows(top, bottom)?)?;
        let body = Crn::from_text(text)
            .map_err(|e| PufError::Header(format!("reaction body: {e}")))?;
        if !instance.crn.same_structure(&body) {
            return Err(PufError::BodyMismatch);
        }
        Ok((instance, seed))
    }
}

fn join_rates(row: &[f64]) -> String {
    row.iter()
        .map(|r| format!("{r}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn parse_rates(s: &str) -> Result<Vec<f64>, PufError> {
    s.trim()
        .split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .map_err(|_| PufError::Header(format!("bad rate value {tok:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{integrate, IntegratorConfig, StopPolicy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_rates(n: usize, value: f64) -> StageMatrix {
        StageMatrix::from_rows(vec![value; n], vec![value; n]).unwrap()
    }

    #[test]
    fn reaction_and_species_counts_scale_with_stages() {
        for n in [1usize, 8, 16, 64] {
            let puf = synthesize_puf(&uniform_rates(n, 16.0)).unwrap();
            assert_eq!(puf.crn().reaction_count(), 32 * n, "N = {n}");
            assert_eq!(puf.crn().species_count(), 18 * n + 2, "N = {n}");
        }
    }

    #[test]
    fn synthesized_network_validates_cleanly() {
        let puf = synthesize_puf(&uniform_rates(8, 16.0)).unwrap();
        let report = puf.crn().validate();
        assert!(report.is_ok(), "{report}");
    }

    #[test]
    fn degenerate_sigma_gives_exact_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rates = sample_rates(5, 16.0, 0.0, &mut rng).unwrap();
        assert!(rates.row(Path::Top).iter().all(|&r| r == 16.0));
        assert!(rates.row(Path::Bottom).iter().all(|&r| r == 16.0));
    }

    #[test]
    fn sample_mean_approaches_the_distribution_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rates = sample_rates(5000, 16.0, 1.0, &mut rng).unwrap();
        let sum: f64 =
            rates.row(Path::Top).iter().sum::<f64>() + rates.row(Path::Bottom).iter().sum::<f64>();
        let mean = sum / 10_000.0;
        assert!((mean - 16.0).abs() < 0.05, "sample mean {mean}");
    }

    #[test]
    fn challenge_encoding_sets_select_rails() {
        let puf = synthesize_puf(&uniform_rates(8, 16.0)).unwrap();
        let challenge = Challenge::from_bit_str("11101010").unwrap();
        let state = puf.apply_challenge(&challenge).unwrap();
        for (stage, &bit) in challenge.bits().iter().enumerate() {
            let s0 = puf.crn().species_id(&rail_name(&select_signal(stage), 0)).unwrap();
            let s1 = puf.crn().species_id(&rail_name(&select_signal(stage), 1)).unwrap();
            let (want0, want1) = if bit { (0.0, 100.0) } else { (100.0, 0.0) };
            assert_eq!(state.conc[s0.index()], want0, "stage {stage}");
            assert_eq!(state.conc[s1.index()], want1, "stage {stage}");
        }
    }

    #[test]
    fn every_dual_rail_pair_starts_at_full_level() {
        let puf = synthesize_puf(&uniform_rates(4, 16.0)).unwrap();
        let state = puf
            .apply_challenge(&Challenge::new(vec![true, false, true, true]))
            .unwrap();
        for (signal, (lo, hi)) in puf.crn().rail_pairs() {
            let total = state.conc[lo.index()] + state.conc[hi.index()];
            assert_eq!(total, 100.0, "signal {signal}");
        }
    }

    #[test]
    fn challenge_length_is_enforced() {
        let puf = synthesize_puf(&uniform_rates(4, 16.0)).unwrap();
        let err = puf.apply_challenge(&Challenge::new(vec![true; 5])).unwrap_err();
        assert!(matches!(err, PufError::ChallengeLength { expected: 4, got: 5 }));
    }

    #[test]
    fn structure_is_deterministic() {
        let rates = uniform_rates(6, 15.5);
        let a = synthesize_puf(&rates).unwrap();
        let b = synthesize_puf(&rates).unwrap();
        assert_eq!(a.crn().to_text(), b.crn().to_text());
    }

    #[test]
    fn perturbation_changes_only_forward_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rates = sample_rates(8, 16.0, 1.0, &mut rng).unwrap();
        let base = synthesize_puf(&rates).unwrap();
        let condition = sample_condition(8, 0.05, NoiseStructure::Independent, 2, &mut rng);
        let shifted = base.perturb(&condition, PerturbationMode::Additive).unwrap();

        let before = base.crn().to_text();
        let after = shifted.crn().to_text();
        let (b_lines, a_lines): (Vec<_>, Vec<_>) = (before.lines().collect(), after.lines().collect());
        assert_eq!(b_lines.len(), a_lines.len());
        for (b, a) in b_lines.iter().zip(&a_lines) {
            // Strip the forward rate field; everything else must agree.
            let strip = |line: &str| -> String {
                line.split(';')
                    .enumerate()
                    .filter(|(_, field)| !field.trim().starts_with("kf="))
                    .map(|(_, f)| f)
                    .collect::<Vec<_>>()
                    .join(";")
            };
            assert_eq!(strip(b), strip(a), "structure drifted: {b} vs {a}");
        }
        assert_ne!(before, after, "perturbation had no effect on rates");
    }

    #[test]
    fn zero_offsets_reproduce_the_instance() {
        let rates = uniform_rates(5, 16.0);
        let base = synthesize_puf(&rates).unwrap();
        let same = base
            .perturb(&EnvironmentCondition::nominal(5, 1), PerturbationMode::Additive)
            .unwrap();
        assert_eq!(base.crn().to_text(), same.crn().to_text());
    }

    #[test]
    fn perturbation_to_nonpositive_rate_is_rejected() {
        let base = synthesize_puf(&uniform_rates(2, 16.0)).unwrap();
        let condition = EnvironmentCondition {
            condition_id: 9,
            offsets: StageMatrix::from_rows(vec![-16.0, 0.0], vec![0.0, 0.0]).unwrap(),
        };
        let err = base.perturb(&condition, PerturbationMode::Additive).unwrap_err();
        assert!(matches!(err, PufError::NonpositiveRate { stage: 0, path: Path::Top, .. }));
    }

    #[test]
    fn header_round_trip_reproduces_rates_and_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rates = sample_rates(8, 16.0, 1.0, &mut rng).unwrap();
        let puf = synthesize_puf(&rates).unwrap();
        let text = puf.to_text_with_header(Some(21));
        let (back, seed) = PufInstance::from_text_with_header(&text).unwrap();
        assert_eq!(seed, Some(21));
        assert_eq!(back.rates(), puf.rates());
        assert!(back.crn().same_structure(puf.crn()));
    }

    #[test]
    fn tampered_body_is_detected() {
        let puf = synthesize_puf(&uniform_rates(2, 16.0)).unwrap();
        let text = puf.to_text_with_header(None);
        // Swap one rate in the body only.
        let tampered = text.replacen("kf=16", "kf=17", 1);
        let err = PufInstance::from_text_with_header(&tampered).unwrap_err();
        assert!(matches!(err, PufError::BodyMismatch));
    }

    #[test]
    fn common_noise_shares_one_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = sample_condition(6, 0.05, NoiseStructure::Common, 1, &mut rng);
        let first = c.offsets.get(Path::Top, 0);
        for stage in 0..6 {
            assert_eq!(c.offsets.get(Path::Top, stage), first);
            assert_eq!(c.offsets.get(Path::Bottom, stage), first);
        }
    }

    #[test]
    fn conservation_pools_start_exactly_at_logic_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let rates = sample_rates(8, 16.0, 1.0, &mut rng).unwrap();
        let puf = synthesize_puf(&rates).unwrap();
        let pools = puf.conservation_pools();
        // clock + one select per stage + two outputs per stage.
        assert_eq!(pools.len(), 1 + 8 + 16);
        let clock = &pools[0];
        assert_eq!(clock.terms.len(), 2 + 8);
        assert!(clock.terms.iter().filter(|(_, w)| *w == 2.0).count() == 8);

        let state = puf
            .apply_challenge(&Challenge::from_bit_str("10110100").unwrap())
            .unwrap();
        for pool in &pools {
            // All complexes are empty initially, so the sums are exact.
            assert_eq!(
                pool.evaluate(&state.conc),
                LOGIC_LEVEL_NM,
                "pool {} off at the initial state",
                pool.label
            );
        }
    }

    #[test]
    fn straight_wiring_propagates_logic_one_to_both_outputs() {
        // One stage, select 0: both gates pass their A input (the clock,
        // at logic 1), so both outputs must settle high.
        let puf = synthesize_puf(&uniform_rates(1, 16.0)).unwrap();
        let state = puf.apply_challenge(&Challenge::new(vec![false])).unwrap();
        let config = IntegratorConfig {
            horizon: 5.0,
            ..Default::default()
        };
        let traj = integrate(puf.crn(), &state, &config, &[], StopPolicy::Horizon).unwrap();
        let (_, top1) = puf.final_top_rails();
        let (_, bot1) = puf.final_bottom_rails();
        assert!(traj.final_state.conc[top1.index()] > 90.0);
        assert!(traj.final_state.conc[bot1.index()] > 90.0);
    }
}
