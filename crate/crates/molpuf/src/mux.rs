//! The dual-rail 2-to-1 multiplexer reaction motif.
//!
//! One multiplexer computes `Z = A·S̄ + B·S` over dual-rail signals using
//! sixteen reactions that share a single characteristic rate constant:
//!
//! - four reversible bindings pair the data rails into complexes
//!   `R1..R4` (forward = rate, reverse = 1e5/s),
//! - eight catalytic reactions let a select rail decompose each complex
//!   back into its inputs plus a pending-output token `Z'0` or `Z'1`
//!   (inputs are regenerated, so select and data species are never
//!   depleted by fan-out),
//! - four transfer reactions let each pending token convert one output
//!   molecule to the token's rail, conserving `Z0 + Z1` exactly.
//!
//! Nothing in the motif is bistable: the output tracks the inputs
//! continuously, so a fast input edge races through a chain of gates
//! instead of waiting for upstream settling — the property the PUF
//! construction depends on.
//!
//! Signals are referred to by base name (`"A"`, `"Z@s3t"`); rails get the
//! digit spliced in front of any `@` suffix (`A0`, `Z1@s3t`). Internals
//! are suffixed with the owning instance id so instances never collide.

use crate::crn::{rail_name, Crn, CrnError, SpeciesId};
use crate::kinetics::{
    integrate, IntegratorConfig, KineticsError, SampleRetention, State, StopPolicy,
};

use thiserror::Error;

/// Concentration (nM) representing an asserted logic rail.
pub const LOGIC_LEVEL_NM: f64 = 100.0;

/// Reactions contributed by one multiplexer instance.
pub const REACTIONS_PER_MUX: usize = 16;

/// Reverse rate of the binding reactions, per second.
pub const DEFAULT_REVERSE_RATE: f64 = 1e5;

/// Which half of a stage a multiplexer occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Path {
    Top,
    Bottom,
}

impl Path {
    fn letter(self) -> char {
        match self {
            Path::Top => 't',
            Path::Bottom => 'b',
        }
    }
}

/// Identity of one multiplexer within a device: stage number (1-based)
/// and top/bottom path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct MuxId {
    pub stage: u32,
    pub path: Path,
}

impl MuxId {
    pub fn new(stage: u32, path: Path) -> Self {
        MuxId { stage, path }
    }

    /// Suffix appended to this instance's private species: `s3t`, `s12b`.
    pub fn suffix(&self) -> String {
        format!("s{}{}", self.stage, self.path.letter())
    }
}

/// Rate parameters of one multiplexer. All sixteen forward rates share
/// `rate`; only the four bindings carry the reverse rate.
#[derive(Debug, Clone, Copy)]
pub struct MuxSpec {
    pub id: MuxId,
    pub rate: f64,
    pub reverse_rate: f64,
}

impl MuxSpec {
    pub fn new(id: MuxId, rate: f64) -> Self {
        MuxSpec {
            id,
            rate,
            reverse_rate: DEFAULT_REVERSE_RATE,
        }
    }
}

/// Boundary signal names of one multiplexer. These may alias other
/// instances' ports; internals never do.
#[derive(Debug, Clone)]
pub struct MuxPorts {
    /// Data input selected when S = 0.
    pub a: String,
    /// Data input selected when S = 1.
    pub b: String,
    /// Select signal.
    pub s: String,
    /// Output signal.
    pub z: String,
}

#[derive(Debug, Error)]
pub enum MuxError {
    #[error("multiplexer rate must be positive, got {0}")]
    NonpositiveRate(f64),
    #[error("internal species {name} already exists; instance suffix collides")]
    InternalCollision { name: String },
    #[error("signal {0:?} has no registered rails in this network")]
    UnknownSignal(String),
    #[error(transparent)]
    Crn(#[from] CrnError),
    #[error(transparent)]
    Kinetics(#[from] KineticsError),
    #[error("output rails did not settle past the 90 nM margin (Z0 = {z0:.3}, Z1 = {z1:.3})")]
    NotSettled { z0: f64, z1: f64 },
}

/// Appends one multiplexer's sixteen reactions to `crn`. Boundary rails
/// are declared on demand (aliasing is fine); the instance's internal
/// species must be fresh.
pub fn synthesize_mux(crn: &mut Crn, spec: &MuxSpec, ports: &MuxPorts) -> Result<(), MuxError> {
    if !(spec.rate.is_finite() && spec.rate > 0.0) {
        return Err(MuxError::NonpositiveRate(spec.rate));
    }
    let (a0, a1) = crn.declare_rail_pair(&ports.a)?;
    let (b0, b1) = crn.declare_rail_pair(&ports.b)?;
    let (s0, s1) = crn.declare_rail_pair(&ports.s)?;
    let (z0, z1) = crn.declare_rail_pair(&ports.z)?;

    let sfx = spec.id.suffix();
    let mut fresh = |name: String| -> Result<SpeciesId, MuxError> {
        if crn.species_id(&name).is_some() {
            return Err(MuxError::InternalCollision { name });
        }
        Ok(crn.add_species(&name)?)
    };
    let r1 = fresh(format!("R1@{sfx}"))?;
    let r2 = fresh(format!("R2@{sfx}"))?;
    let r3 = fresh(format!("R3@{sfx}"))?;
    let r4 = fresh(format!("R4@{sfx}"))?;
    let zp0 = fresh(format!("Z'0@{sfx}"))?;
    let zp1 = fresh(format!("Z'1@{sfx}"))?;

    let k = spec.rate;
    let rev = Some(spec.reverse_rate);

    // Bindings: data rails pair into complexes.
    crn.add_reaction(&[(a0, 1), (b0, 1)], &[(r1, 1)], k, rev)?;
    crn.add_reaction(&[(a0, 1), (b1, 1)], &[(r2, 1)], k, rev)?;
    crn.add_reaction(&[(a1, 1), (b0, 1)], &[(r3, 1)], k, rev)?;
    crn.add_reaction(&[(a1, 1), (b1, 1)], &[(r4, 1)], k, rev)?;

    // Select-catalyzed decomposition: inputs come back out, plus the
    // pending output matching the selected data rail.
    crn.add_reaction(&[(s0, 1), (r1, 1)], &[(s0, 1), (a0, 1), (b0, 1), (zp0, 1)], k, None)?;
    crn.add_reaction(&[(s0, 1), (r2, 1)], &[(s0, 1), (a0, 1), (b1, 1), (zp0, 1)], k, None)?;
    crn.add_reaction(&[(s0, 1), (r3, 1)], &[(s0, 1), (a1, 1), (b0, 1), (zp1, 1)], k, None)?;
    crn.add_reaction(&[(s0, 1), (r4, 1)], &[(s0, 1), (a1, 1), (b1, 1), (zp1, 1)], k, None)?;
    crn.add_reaction(&[(s1, 1), (r1, 1)], &[(s1, 1), (a0, 1), (b0, 1), (zp0, 1)], k, None)?;
    crn.add_reaction(&[(s1, 1), (r2, 1)], &[(s1, 1), (a0, 1), (b1, 1), (zp1, 1)], k, None)?;
    crn.add_reaction(&[(s1, 1), (r3, 1)], &[(s1, 1), (a1, 1), (b0, 1), (zp0, 1)], k, None)?;
    crn.add_reaction(&[(s1, 1), (r4, 1)], &[(s1, 1), (a1, 1), (b1, 1), (zp1, 1)], k, None)?;

    // Transfers: each pending token converts one output molecule to its
    // rail and is consumed, keeping Z0 + Z1 constant.
    crn.add_reaction(&[(zp0, 1), (z1, 1)], &[(z0, 1)], k, None)?;
    crn.add_reaction(&[(zp0, 1), (z0, 1)], &[(z0, 1)], k, None)?;
    crn.add_reaction(&[(zp1, 1), (z1, 1)], &[(z1, 1)], k, None)?;
    crn.add_reaction(&[(zp1, 1), (z0, 1)], &[(z1, 1)], k, None)?;

    Ok(())
}

/// Writes the rest-state output into `conc`: Z at logic 0 (Z0 = 100 nM,
/// Z1 = 0). Internals are left untouched (zero in a fresh state vector).
/// This is also the re-initialization applied between authentications.
pub fn initial_output_state(crn: &Crn, z_signal: &str, conc: &mut [f64]) -> Result<(), MuxError> {
    let (z0, z1) = rail_pair(crn, z_signal)?;
    conc[z0.index()] = LOGIC_LEVEL_NM;
    conc[z1.index()] = 0.0;
    Ok(())
}

/// Sets a dual-rail signal to a logic value in `conc`.
pub fn set_signal(crn: &Crn, signal: &str, value: bool, conc: &mut [f64]) -> Result<(), MuxError> {
    let (lo, hi) = rail_pair(crn, signal)?;
    conc[lo.index()] = if value { 0.0 } else { LOGIC_LEVEL_NM };
    conc[hi.index()] = if value { LOGIC_LEVEL_NM } else { 0.0 };
    Ok(())
}

fn rail_pair(crn: &Crn, signal: &str) -> Result<(SpeciesId, SpeciesId), MuxError> {
    let lo = crn.species_id(&rail_name(signal, 0));
    let hi = crn.species_id(&rail_name(signal, 1));
    match (lo, hi) {
        (Some(lo), Some(hi)) => Ok((lo, hi)),
        _ => Err(MuxError::UnknownSignal(signal.to_owned())),
    }
}

/// The multiplexer truth table: `Z = A·S̄ + B·S`.
pub fn mux_truth(a: bool, b: bool, s: bool) -> bool {
    if s {
        b
    } else {
        a
    }
}

/// Simulates one standalone gate with constant inputs and reports the
/// settled output bit. The output must clear a 90 nM margin on the
/// winning rail (conservation puts the decision midpoint at 50 nM;
/// 90 leaves a robust band), otherwise the run is reported as unsettled.
pub fn truth_table_eval(a: bool, b: bool, s: bool, rate: f64) -> Result<bool, MuxError> {
    let mut crn = Crn::new();
    let spec = MuxSpec::new(MuxId::new(1, Path::Top), rate);
    let ports = MuxPorts {
        a: "A".into(),
        b: "B".into(),
        s: "S".into(),
        z: "Z".into(),
    };
    synthesize_mux(&mut crn, &spec, &ports)?;

    let mut conc = vec![0.0; crn.species_count()];
    set_signal(&crn, "A", a, &mut conc)?;
    set_signal(&crn, "B", b, &mut conc)?;
    set_signal(&crn, "S", s, &mut conc)?;
    initial_output_state(&crn, "Z", &mut conc)?;

    let config = IntegratorConfig {
        horizon: 10.0,
        retention: SampleRetention::Sparse,
        ..Default::default()
    };
    let traj = integrate(&crn, &State::new(0.0, conc), &config, &[], StopPolicy::Horizon)?;

    let (z0, z1) = rail_pair(&crn, "Z")?;
    let z0_final = traj.final_state.conc[z0.index()];
    let z1_final = traj.final_state.conc[z1.index()];
    if z0_final.max(z1_final) < 0.9 * LOGIC_LEVEL_NM {
        return Err(MuxError::NotSettled {
            z0: z0_final,
            z1: z1_final,
        });
    }
    Ok(z1_final > z0_final)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{integrate, IntegratorConfig, State, StopPolicy};

    fn one_mux(rate: f64) -> (Crn, MuxPorts) {
        let mut crn = Crn::new();
        let ports = MuxPorts {
            a: "A".into(),
            b: "B".into(),
            s: "S".into(),
            z: "Z".into(),
        };
        synthesize_mux(&mut crn, &MuxSpec::new(MuxId::new(1, Path::Top), rate), &ports).unwrap();
        (crn, ports)
    }

    #[test]
    fn one_instance_contributes_sixteen_reactions() {
        let (crn, _) = one_mux(16.2);
        assert_eq!(crn.reaction_count(), 16);
        // 4 boundary rail pairs + R1..R4 + Z' pair.
        assert_eq!(crn.species_count(), 14);
    }

    #[test]
    fn all_forward_rates_share_the_instance_rate() {
        let (crn, _) = one_mux(16.2);
        for r in crn.reactions() {
            assert_eq!(r.kf, 16.2);
        }
        let reversible: Vec<_> = crn.reactions().iter().filter(|r| r.kr.is_some()).collect();
        assert_eq!(reversible.len(), 4);
        for r in reversible {
            assert_eq!(r.kr, Some(1e5));
        }
    }

    #[test]
    fn select_and_data_rails_are_catalytic() {
        let (crn, _) = one_mux(16.0);
        // In every reaction, each select/data rail must have equal
        // reactant and product coefficients (never consumed net).
        for rail in ["S0", "S1"] {
            let id = crn.species_id(rail).unwrap();
            for r in crn.reactions() {
                let consumed: u32 = r
                    .reactants
                    .iter()
                    .filter(|t| t.species == id)
                    .map(|t| t.coeff)
                    .sum();
                let produced: u32 = r
                    .products
                    .iter()
                    .filter(|t| t.species == id)
                    .map(|t| t.coeff)
                    .sum();
                assert_eq!(consumed, produced, "select rail {rail} not catalytic");
            }
        }
    }

    #[test]
    fn transfers_conserve_output_total_structurally() {
        let (crn, _) = one_mux(16.0);
        let z0 = crn.species_id("Z0").unwrap();
        let z1 = crn.species_id("Z1").unwrap();
        for r in crn.reactions() {
            let net = |s| {
                let cons: i64 = r
                    .reactants
                    .iter()
                    .filter(|t| t.species == s)
                    .map(|t| t.coeff as i64)
                    .sum();
                let prod: i64 = r
                    .products
                    .iter()
                    .filter(|t| t.species == s)
                    .map(|t| t.coeff as i64)
                    .sum();
                prod - cons
            };
            assert_eq!(net(z0) + net(z1), 0, "Z total not conserved by a reaction");
        }
    }

    #[test]
    fn truth_table_matches_oracle_on_all_eight_combinations() {
        for bits in 0u8..8 {
            let a = bits & 1 != 0;
            let b = bits & 2 != 0;
            let s = bits & 4 != 0;
            let measured = truth_table_eval(a, b, s, 16.0).unwrap();
            assert_eq!(
                measured,
                mux_truth(a, b, s),
                "mismatch at a={a} b={b} s={s}"
            );
        }
    }

    #[test]
    fn output_total_stays_pinned_during_switching() {
        let (crn, _) = one_mux(16.0);
        let mut conc = vec![0.0; crn.species_count()];
        set_signal(&crn, "A", false, &mut conc).unwrap();
        set_signal(&crn, "B", true, &mut conc).unwrap();
        set_signal(&crn, "S", true, &mut conc).unwrap();
        initial_output_state(&crn, "Z", &mut conc).unwrap();
        let config = IntegratorConfig {
            horizon: 5.0,
            ..Default::default()
        };
        let traj = integrate(&crn, &State::new(0.0, conc), &config, &[], StopPolicy::Horizon)
            .unwrap();
        let z0 = crn.species_id("Z0").unwrap().index();
        let z1 = crn.species_id("Z1").unwrap().index();
        for s in &traj.samples {
            let total = s.conc[z0] + s.conc[z1];
            assert!(
                (total - 100.0).abs() < 1e-6,
                "Z total drifted to {total} at t = {}",
                s.time
            );
        }
        // And the output actually switched to logic 1.
        assert!(traj.final_state.conc[z1] > 90.0);
    }

    #[test]
    fn duplicate_instance_suffix_is_rejected() {
        let mut crn = Crn::new();
        let ports = MuxPorts {
            a: "A".into(),
            b: "B".into(),
            s: "S".into(),
            z: "Z".into(),
        };
        let spec = MuxSpec::new(MuxId::new(3, Path::Bottom), 16.0);
        synthesize_mux(&mut crn, &spec, &ports).unwrap();
        let err = synthesize_mux(&mut crn, &spec, &ports).unwrap_err();
        assert!(matches!(err, MuxError::InternalCollision { .. }));
    }

    #[test]
    fn aliased_boundaries_share_species_but_not_internals() {
        let mut crn = Crn::new();
        let first = MuxPorts {
            a: "A".into(),
            b: "B".into(),
            s: "S1sig".into(),
            z: "M".into(),
        };
        // Second gate consumes the first gate's output as its A input.
        let second = MuxPorts {
            a: "M".into(),
            b: "B".into(),
            s: "S2sig".into(),
            z: "Z".into(),
        };
        synthesize_mux(&mut crn, &MuxSpec::new(MuxId::new(1, Path::Top), 16.0), &first).unwrap();
        synthesize_mux(&mut crn, &MuxSpec::new(MuxId::new(2, Path::Top), 16.0), &second).unwrap();
        assert_eq!(crn.reaction_count(), 32);
        // Shared boundary: exactly one M rail pair.
        assert!(crn.species_id("M0").is_some());
        // Internals disjoint per instance.
        assert!(crn.species_id("R1@s1t").is_some());
        assert!(crn.species_id("R1@s2t").is_some());
    }

    #[test]
    fn nonpositive_rate_is_rejected() {
        let mut crn = Crn::new();
        let ports = MuxPorts {
            a: "A".into(),
            b: "B".into(),
            s: "S".into(),
            z: "Z".into(),
        };
        let err = synthesize_mux(
            &mut crn,
            &MuxSpec {
                id: MuxId::new(1, Path::Top),
                rate: 0.0,
                reverse_rate: 1e5,
            },
            &ports,
        )
        .unwrap_err();
        assert!(matches!(err, MuxError::NonpositiveRate(_)));
    }
}
