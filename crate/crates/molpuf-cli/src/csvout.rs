//! CSV renderers for experiment artifacts. Every file starts with a
//! comment line carrying the config hash and the master seed, so any
//! artifact can be traced back to the exact settings that produced it.
//! All numbers use Rust's shortest round-trippable float formatting,
//! which keeps output bytes independent of locale and worker count.

use molpuf::arbiter::ResponseSignature;
use molpuf::delay::MonteCarloMetrics;

use crate::config::ExperimentConfig;
use crate::experiments::{ReliabilityOutcome, SweepRow, TraceOutcome, UniquenessOutcome};

/// The provenance comment every artifact starts with.
pub fn provenance_line(config: &ExperimentConfig) -> String {
    format!("# config_hash={} seed={}\n", config.hash(), config.seed)
}

fn push_signature_rows(
    out: &mut String,
    puf_id: &str,
    condition_id: u64,
    signature: &ResponseSignature,
) {
    for (i, (bit, diag)) in signature
        .bits
        .iter()
        .zip(&signature.diagnostics)
        .enumerate()
    {
        out.push_str(&format!(
            "{puf_id},{condition_id},{i},{},{},{}\n",
            u8::from(*bit),
            diag.t_top,
            diag.t_bottom
        ));
    }
}

const RESPONSE_HEADER: &str = "puf_id,condition_id,challenge_index,response,t_top,t_bottom\n";

/// Single-row summary of a reliability study.
pub fn reliability_metrics_csv(config: &ExperimentConfig, r: &ReliabilityOutcome) -> String {
    let mut out = provenance_line(config);
    out.push_str(
        "n_stages,conditions,challenges,p_intra,reliability,\
         intra_min_percent,intra_max_percent,intra_mean_percent\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{}\n",
        r.n_stages,
        r.evaluated_conditions,
        r.challenges,
        r.p_intra,
        r.reliability,
        r.intra.min_percent,
        r.intra.max_percent,
        r.intra.mean_percent
    ));
    out
}

/// Per-condition distances to the reference signature.
pub fn reliability_distances_csv(config: &ExperimentConfig, r: &ReliabilityOutcome) -> String {
    let mut out = provenance_line(config);
    out.push_str("condition_id,hd_fraction\n");
    for ((id, _), fraction) in r.signatures.iter().skip(1).zip(&r.fractions) {
        out.push_str(&format!("{id},{fraction}\n"));
    }
    out
}

/// Every response bit of every condition, with crossing times.
pub fn reliability_responses_csv(config: &ExperimentConfig, r: &ReliabilityOutcome) -> String {
    let mut out = provenance_line(config);
    out.push_str(RESPONSE_HEADER);
    for (id, signature) in &r.signatures {
        push_signature_rows(&mut out, "dev0", *id, signature);
    }
    out
}

/// Single-row summary of a uniqueness study.
pub fn uniqueness_metrics_csv(config: &ExperimentConfig, u: &UniquenessOutcome) -> String {
    let mut out = provenance_line(config);
    out.push_str(
        "n_stages,devices,challenges,p_inter,uniqueness,\
         inter_min_percent,inter_max_percent,inter_mean_percent,fit_mean,fit_std\n",
    );
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{}\n",
        u.n_stages,
        u.evaluated_devices,
        u.challenges,
        u.p_inter,
        u.uniqueness,
        u.inter.min_percent,
        u.inter.max_percent,
        u.inter.mean_percent,
        u.inter_fit.mean,
        u.inter_fit.std
    ));
    out
}

/// Pairwise distances between device signatures.
pub fn uniqueness_pairs_csv(config: &ExperimentConfig, u: &UniquenessOutcome) -> String {
    let mut out = provenance_line(config);
    out.push_str("device_a,device_b,hd_fraction\n");
    let ids: Vec<u64> = u.signatures.iter().map(|(id, _)| *id).collect();
    let mut k = 0;
    for a in 0..ids.len() {
        for b in (a + 1)..ids.len() {
            out.push_str(&format!("{},{},{}\n", ids[a], ids[b], u.pair_fractions[k]));
            k += 1;
        }
    }
    out
}

/// Every response bit of every device, with crossing times.
pub fn uniqueness_responses_csv(config: &ExperimentConfig, u: &UniquenessOutcome) -> String {
    let mut out = provenance_line(config);
    out.push_str(RESPONSE_HEADER);
    for (id, signature) in &u.signatures {
        push_signature_rows(&mut out, &format!("dev{id}"), 0, signature);
    }
    out
}

const POPULATION_HEADER: &str = "n_stages,devices,conditions,challenges,p_intra,p_inter,\
     reliability,uniqueness,intra_min_percent,intra_max_percent,intra_mean_percent,\
     inter_min_percent,inter_max_percent,inter_mean_percent,fit_mean,fit_std,feasible\n";

fn push_population_row(out: &mut String, row: &SweepRow) {
    out.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        row.n_stages,
        row.devices,
        row.conditions,
        row.challenges,
        row.p_intra,
        row.p_inter,
        row.reliability,
        row.uniqueness,
        row.intra.min_percent,
        row.intra.max_percent,
        row.intra.mean_percent,
        row.inter.min_percent,
        row.inter.max_percent,
        row.inter.mean_percent,
        row.inter_fit.mean,
        row.inter_fit.std,
        u8::from(row.feasible)
    ));
}

/// One population-metrics row per stage count.
pub fn sweep_csv(config: &ExperimentConfig, rows: &[SweepRow]) -> String {
    let mut out = provenance_line(config);
    out.push_str(POPULATION_HEADER);
    for row in rows {
        push_population_row(&mut out, row);
    }
    out
}

/// Single population-metrics row from a delay-model study.
pub fn delay_metrics_csv(config: &ExperimentConfig, m: &MonteCarloMetrics) -> String {
    let row = SweepRow {
        n_stages: config.n_stages,
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
    };
    let mut out = provenance_line(config);
    out.push_str(POPULATION_HEADER);
    push_population_row(&mut out, &row);
    out
}

/// The two output-rail trajectories of a traced authentication.
pub fn trace_csv(config: &ExperimentConfig, t: &TraceOutcome) -> String {
    let mut out = provenance_line(config);
    out.push_str(&format!(
        "# device={} challenge={} response={}\n",
        t.device_label,
        t.challenge_bits,
        u8::from(t.response)
    ));
    out.push_str("time_s,top_z1_nm,bottom_z1_nm\n");
    for (time, top, bottom) in &t.samples {
        out.push_str(&format!("{time},{top},{bottom}\n"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;

    fn outcome() -> (ExperimentConfig, ReliabilityOutcome) {
        let mut config = ExperimentConfig::default();
        config.n_stages = 8;
        config.devices = 4;
        config.conditions = 3;
        config.challenges = 6;
        config.mode = Mode::DelayModel;
        let r = crate::experiments::run_reliability(&config).unwrap();
        (config, r)
    }

    #[test]
    fn every_artifact_opens_with_the_provenance_line() {
        let (config, r) = outcome();
        for text in [
            reliability_metrics_csv(&config, &r),
            reliability_distances_csv(&config, &r),
            reliability_responses_csv(&config, &r),
        ] {
            let first = text.lines().next().unwrap();
            assert!(first.starts_with("# config_hash="));
            assert!(first.ends_with(&format!("seed={}", config.seed)));
        }
    }

    #[test]
    fn response_rows_cover_every_condition_and_challenge() {
        let (config, r) = outcome();
        let text = reliability_responses_csv(&config, &r);
        let data_rows = text.lines().filter(|l| l.starts_with("dev0,")).count();
        assert_eq!(data_rows, 3 * 6);
        let distances = reliability_distances_csv(&config, &r);
        assert_eq!(distances.lines().count(), 2 + 2, "header rows + m-1 fractions");
    }
}
