//! Bundled reference devices for regression testing.
//!
//! Four fully specified devices (two 8-stage, two 16-stage) with a fixed
//! companion challenge each. Their nominal-condition responses are known:
//! each size pairs one device that answers 1 with one that answers 0 to
//! the same challenge, which pins down the whole stack — wiring, racing
//! kinetics, and arbitration — in integration tests. The rate constants
//! are draws from the standard N(16, 1) manufacturing distribution.

use crate::puf::{synthesize_puf, Challenge, PufError, PufInstance, StageMatrix};

/// A reference device: rate matrix, companion challenge, and the response
/// it settles to under nominal (unperturbed) conditions.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceDevice {
    /// Short stable name for test output and CSV rows.
    pub name: &'static str,
    pub n_stages: usize,
    pub top: &'static [f64],
    pub bottom: &'static [f64],
    /// Companion challenge, most significant stage first.
    pub challenge_bits: &'static str,
    /// Response under the companion challenge, nominal conditions.
    pub expected_response: bool,
}

impl ReferenceDevice {
    /// Synthesizes the device's reaction network.
    pub fn instance(&self) -> Result<PufInstance, PufError> {
        synthesize_puf(&StageMatrix::from_rows(self.top.to_vec(), self.bottom.to_vec())?)
    }

    /// Parses the companion challenge.
    pub fn challenge(&self) -> Challenge {
        Challenge::from_bit_str(self.challenge_bits).expect("bundled challenge is well-formed")
    }
}

/// 8-stage device that answers 1 to [`CHALLENGE_8`].
pub const REFERENCE_8A: ReferenceDevice = ReferenceDevice {
    name: "ref8a",
    n_stages: 8,
    top: &[16.2000, 16.3874, 17.8391, 14.2102, 15.8676, 16.1017, 15.4241, 17.0567],
    bottom: &[13.4213, 17.7129, 14.0757, 16.2111, 16.8199, 14.8264, 16.3124, 15.0728],
    challenge_bits: CHALLENGE_8,
    expected_response: true,
};

/// 8-stage device that answers 0 to [`CHALLENGE_8`].
pub const REFERENCE_8B: ReferenceDevice = ReferenceDevice {
    name: "ref8b",
    n_stages: 8,
    top: &[15.3259, 17.3474, 15.3472, 17.276, 17.4534, 15.7802, 15.3876, 16.8865],
    bottom: &[16.0853, 16.3489, 16.2476, 16.5559, 15.937, 14.9865, 16.7846, 16.8834],
    challenge_bits: CHALLENGE_8,
    expected_response: false,
};

/// 16-stage device that answers 1 to [`CHALLENGE_16`].
pub const REFERENCE_16A: ReferenceDevice = ReferenceDevice {
    name: "ref16a",
    n_stages: 16,
    top: &[
        16.2713, 16.1154, 16.0443, 15.6363, 14.8986, 14.9884, 14.2514, 15.3905, //
        15.8301, 15.8637, 17.1239, 17.0826, 17.0086, 16.9753, 15.9769, 15.2015,
    ],
    bottom: &[
        15.7969, 16.1660, 16.1474, 15.6422, 17.0791, 15.3631, 15.5394, 17.7289, //
        14.0328, 16.9466, 14.6572, 16.1119, 15.6691, 16.5813, 16.5878, 16.2887,
    ],
    challenge_bits: CHALLENGE_16,
    expected_response: true,
};

/// 16-stage device that answers 0 to [`CHALLENGE_16`].
pub const REFERENCE_16B: ReferenceDevice = ReferenceDevice {
    name: "ref16b",
    n_stages: 16,
    top: &[
        16.0475, 17.2968, 15.6063, 16.7512, 16.7523, 16.4987, 16.9658, 16.9509, //
        17.6698, 17.044, 15.8186, 15.9833, 17.7202, 17.3745, 15.2481, 16.2475,
    ],
    bottom: &[
        16.5777, 16.2362, 16.1138, 14.3944, 17.3143, 16.2662, 16.9262, 14.7676, //
        16.1303, 16.5323, 16.0368, 15.2344, 16.5067, 18.0267, 16.7487, 15.8938,
    ],
    challenge_bits: CHALLENGE_16,
    expected_response: false,
};

/// Challenge shared by the 8-stage reference devices.
pub const CHALLENGE_8: &str = "11101010";

/// Challenge shared by the 16-stage reference devices.
pub const CHALLENGE_16: &str = "0100000000110001";

/// All bundled devices, 8-stage pair first.
pub fn reference_devices() -> [&'static ReferenceDevice; 4] {
    [&REFERENCE_8A, &REFERENCE_8B, &REFERENCE_16A, &REFERENCE_16B]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_internally_consistent() {
        for dev in reference_devices() {
            assert_eq!(dev.top.len(), dev.n_stages, "{}", dev.name);
            assert_eq!(dev.bottom.len(), dev.n_stages, "{}", dev.name);
            assert_eq!(dev.challenge().len(), dev.n_stages, "{}", dev.name);
            assert!(dev.top.iter().chain(dev.bottom).all(|&r| r > 0.0));
        }
    }

    #[test]
    fn fixtures_synthesize_to_full_size_networks() {
        for dev in reference_devices() {
            let puf = dev.instance().unwrap();
            assert_eq!(puf.crn().reaction_count(), 32 * dev.n_stages);
            assert_eq!(puf.crn().species_count(), 18 * dev.n_stages + 2);
        }
    }

    #[test]
    fn first_stage_rates_match_the_recorded_values() {
        assert_eq!(REFERENCE_8A.top[0], 16.2000);
        assert_eq!(REFERENCE_8A.bottom[0], 13.4213);
        assert_eq!(REFERENCE_16A.top[0], 16.2713);
        assert_eq!(REFERENCE_16B.bottom[15], 15.8938);
    }

    #[test]
    fn paired_fixtures_share_their_challenge() {
        assert_eq!(REFERENCE_8A.challenge_bits, REFERENCE_8B.challenge_bits);
        assert_eq!(REFERENCE_16A.challenge_bits, REFERENCE_16B.challenge_bits);
        assert_ne!(REFERENCE_8A.expected_response, REFERENCE_8B.expected_response);
        assert_ne!(REFERENCE_16A.expected_response, REFERENCE_16B.expected_response);
    }
}
