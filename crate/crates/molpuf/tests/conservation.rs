//! Linear conservation laws checked along actual simulations: every
//! boundary-signal pool of a synthesized device, and the input/output
//! pools of a single gate, must stay within 1e-3 nM of the logic level
//! at every retained sample.

use molpuf::bundled::REFERENCE_8A;
use molpuf::crn::Crn;
use molpuf::kinetics::{
    integrate, IntegratorConfig, SampleRetention, StopPolicy, Trajectory, Watch,
};
use molpuf::mux::{
    initial_output_state, set_signal, synthesize_mux, MuxId, MuxPorts, MuxSpec, Path,
    LOGIC_LEVEL_NM,
};
use molpuf::puf::{ConservationPool, PufInstance};

const DRIFT_BUDGET_NM: f64 = 1e-3;

fn assert_pools_hold(pools: &[ConservationPool], traj: &Trajectory, context: &str) {
    assert!(
        traj.samples.len() > 10,
        "{context}: expected a dense trajectory, got {} samples",
        traj.samples.len()
    );
    let mut worst = 0.0_f64;
    for sample in &traj.samples {
        for pool in pools {
            let dev = pool.deviation(&sample.conc);
            assert!(
                dev < DRIFT_BUDGET_NM,
                "{context}: pool {} drifted {dev:.3e} nM at t={}",
                pool.label,
                sample.time
            );
            worst = worst.max(dev);
        }
        for (i, c) in sample.conc.iter().enumerate() {
            assert!(*c >= 0.0, "{context}: species {i} negative at t={}", sample.time);
        }
    }
    // The budget should not be skated along its edge silently.
    assert!(
        worst < DRIFT_BUDGET_NM,
        "{context}: worst drift {worst:.3e}"
    );
}

/// Pools of a full 8-stage device hold through the racing transient at
/// reference tolerances and through the settled tail at the relaxed
/// experiment tolerances.
#[test]
fn device_pools_hold_during_and_after_the_race() {
    let device = &REFERENCE_8A;
    let puf: PufInstance = device.instance().unwrap();
    let pools = puf.conservation_pools();
    let init = puf.apply_challenge(&device.challenge()).unwrap();
    let (_, top1) = puf.final_top_rails();
    let (_, bot1) = puf.final_bottom_rails();
    let watches = [
        Watch {
            species: top1,
            threshold: 0.5 * LOGIC_LEVEL_NM,
        },
        Watch {
            species: bot1,
            threshold: 0.5 * LOGIC_LEVEL_NM,
        },
    ];

    let race_window = IntegratorConfig {
        horizon: 25.0,
        ..Default::default()
    };
    let traj = integrate(puf.crn(), &init, &race_window, &watches, StopPolicy::AllCrossed).unwrap();
    assert_eq!(traj.events.len(), 2, "both outputs must cross in the window");
    assert_pools_hold(&pools, &traj, "race window, reference tolerances");

    let settled = IntegratorConfig {
        rtol: 1e-4,
        atol: 1e-7,
        horizon: 2.0,
        retention: SampleRetention::Full,
        ..Default::default()
    };
    let traj = integrate(puf.crn(), &init, &settled, &[], StopPolicy::Horizon).unwrap();
    assert_pools_hold(&pools, &traj, "settled tail, experiment tolerances");
}

/// Input, select, and output pools of one gate in isolation, across an
/// input flip that drives the full binding/catalysis/transfer cycle.
#[test]
fn single_gate_pools_hold_across_an_input_flip() {
    let mut crn = Crn::new();
    let spec = MuxSpec::new(
        MuxId {
            stage: 1,
            path: Path::Top,
        },
        16.0,
    );
    let ports = MuxPorts {
        a: "A".into(),
        b: "B".into(),
        s: "S".into(),
        z: "Z".into(),
    };
    synthesize_mux(&mut crn, &spec, &ports).unwrap();

    let mut conc = vec![0.0; crn.species_count()];
    set_signal(&crn, "A", true, &mut conc).unwrap();
    set_signal(&crn, "B", false, &mut conc).unwrap();
    set_signal(&crn, "S", false, &mut conc).unwrap();
    initial_output_state(&crn, "Z", &mut conc).unwrap();

    let id = |name: &str| crn.species_id(name).unwrap();
    let pool = |label: &str, names: &[&str]| ConservationPool {
        label: label.into(),
        terms: names.iter().map(|n| (id(n), 1.0)).collect(),
        total: LOGIC_LEVEL_NM,
    };
    let complexes: [&'static str; 4] = ["R1@s1t", "R2@s1t", "R3@s1t", "R4@s1t"];
    let with_complexes = |rails: [&'static str; 2]| -> Vec<&'static str> {
        rails.iter().chain(complexes.iter()).copied().collect()
    };
    let pools = [
        pool("A", &with_complexes(["A0", "A1"])),
        pool("B", &with_complexes(["B0", "B1"])),
        pool("S", &["S0", "S1"]),
        pool("Z", &["Z0", "Z1"]),
    ];

    let config = IntegratorConfig {
        horizon: 10.0,
        ..Default::default()
    };
    let traj = integrate(
        &crn,
        &molpuf::kinetics::State::new(0.0, conc),
        &config,
        &[],
        StopPolicy::Horizon,
    )
    .unwrap();
    assert_pools_hold(&pools, &traj, "gate, select 0");
    // The gate routed A (logic 1) to the output.
    assert!(traj.final_state.conc[id("Z1").index()] > 90.0);

    // Flip the select to 1 mid-flight: the gate must re-route to B
    // (logic 0) while the pools stay pinned.
    let mut conc = traj.final_state.conc.clone();
    set_signal(&crn, "S", true, &mut conc).unwrap();
    let traj = integrate(
        &crn,
        &molpuf::kinetics::State::new(0.0, conc),
        &config,
        &[],
        StopPolicy::Horizon,
    )
    .unwrap();
    assert_pools_hold(&pools, &traj, "gate, select flipped to 1");
    assert!(traj.final_state.conc[id("Z0").index()] > 90.0);
}
