// Licensed under the Apache-2.0 license

//! Host-side access sequence for the authentication core.
//!
//! The key is loaded into the input port one 32-bit word at a time, START is
//! raised, the clock is stepped one cycle at a time until DONE, and the result
//! bit is read back.

use std::collections::BTreeMap;

use crate::enclave::{
    Enclave, EnclaveError, CTRL_DONE, CTRL_OFFSET, CTRL_START, KEY_OFFSET, RESULT_OFFSET,
    RESULT_VALID,
};
use crate::keystore::{CandidateKey, KeyLabel};

/// Upper bound on polling: far beyond any latency model, so hitting it means
/// the core is wedged.
const POLL_LIMIT_CYCLES: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuthVerdict {
    pub authorized: bool,
    pub cycles: u64,
    pub elapsed_ns: u64,
    pub words_written: u8,
}

#[derive(Debug, thiserror::Error)]
pub enum DriverError {
    #[error("enclave busy")]
    DeviceBusy,
    #[error("driver fault: {0}")]
    Fault(#[source] EnclaveError),
    #[error("enclave did not assert DONE within {0} cycles")]
    Timeout(u64),
}

impl From<EnclaveError> for DriverError {
    fn from(e: EnclaveError) -> Self {
        match e {
            EnclaveError::DeviceBusy => DriverError::DeviceBusy,
            other => DriverError::Fault(other),
        }
    }
}

/// Packs candidate bytes into little-endian words; a trailing partial word is
/// zero-padded.
fn candidate_words(bytes: &[u8]) -> impl Iterator<Item = u32> + '_ {
    bytes.chunks(4).map(|chunk| {
        let mut w = [0u8; 4];
        w[..chunk.len()].copy_from_slice(chunk);
        u32::from_le_bytes(w)
    })
}

pub fn authenticate(
    enclave: &mut Enclave,
    candidate: &CandidateKey,
) -> Result<AuthVerdict, DriverError> {
    if !enclave.is_idle() {
        return Err(DriverError::DeviceBusy);
    }

    let mut words_written = 0u8;
    for (i, word) in candidate_words(candidate.bytes()).enumerate() {
        enclave.write_word(KEY_OFFSET + 4 * i as u32, word)?;
        words_written += 1;
    }

    enclave.write_word(CTRL_OFFSET, CTRL_START)?;
    let started = enclave.cycle_counter();
    while enclave.read_word(CTRL_OFFSET)? & CTRL_DONE == 0 {
        if enclave.cycle_counter() - started >= POLL_LIMIT_CYCLES {
            return Err(DriverError::Timeout(POLL_LIMIT_CYCLES));
        }
        enclave.step(1);
    }
    let cycles = enclave.cycle_counter() - started;
    let authorized = enclave.read_word(RESULT_OFFSET)? & RESULT_VALID != 0;

    Ok(AuthVerdict {
        authorized,
        cycles,
        elapsed_ns: enclave.latency_model().cycles_to_ns(cycles),
        words_written,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub attempts: u32,
    pub successes: u32,
}

impl LabelCounts {
    pub fn failures(&self) -> u32 {
        self.attempts - self.successes
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttemptSummary {
    pub successes: u32,
    pub failures: u32,
    pub per_label: BTreeMap<KeyLabel, LabelCounts>,
    /// Fastest and slowest transaction, in cycles. `None` for an empty suite.
    pub cycle_range: Option<(u64, u64)>,
}

impl AttemptSummary {
    pub fn attempts(&self) -> u32 {
        self.successes + self.failures
    }

    pub fn label(&self, label: KeyLabel) -> LabelCounts {
        self.per_label.get(&label).copied().unwrap_or_default()
    }
}

pub fn run_attempt_suite(
    enclave: &mut Enclave,
    suite: &[CandidateKey],
) -> Result<AttemptSummary, DriverError> {
    let mut summary = AttemptSummary::default();
    for candidate in suite {
        let verdict = authenticate(enclave, candidate)?;
        let counts = summary.per_label.entry(candidate.label()).or_default();
        counts.attempts += 1;
        if verdict.authorized {
            counts.successes += 1;
            summary.successes += 1;
        } else {
            summary.failures += 1;
        }
        summary.cycle_range = Some(match summary.cycle_range {
            None => (verdict.cycles, verdict.cycles),
            Some((lo, hi)) => (lo.min(verdict.cycles), hi.max(verdict.cycles)),
        });
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::enclave::LatencyModel;

    const SECRET: [u8; 32] = [
        0x3c, 0x91, 0x0e, 0x7a, 0x55, 0xd2, 0x18, 0xbf, 0x60, 0x0a, 0xe4, 0x2d, 0x9b, 0x71, 0xc8,
        0x03, 0xfa, 0x46, 0x8e, 0x27, 0xb5, 0x19, 0x6c, 0xd0, 0x4f, 0xe2, 0x83, 0x3a, 0x07, 0x9d,
        0x5e, 0xa1,
    ];

    fn enclave() -> Enclave {
        Enclave::provision_bytes(&SECRET, LatencyModel::pipelined()).unwrap()
    }

    fn key(bytes: &[u8], label: KeyLabel) -> CandidateKey {
        CandidateKey::new(bytes.to_vec(), label).unwrap()
    }

    #[test]
    fn correct_key() {
        let v = authenticate(&mut enclave(), &key(&SECRET, KeyLabel::Correct)).unwrap();
        assert_eq!(
            v,
            AuthVerdict {
                authorized: true,
                cycles: 34,
                elapsed_ns: 340,
                words_written: 8
            }
        );
    }

    #[test]
    fn final_byte_differs() {
        let mut cand = SECRET;
        cand[31] ^= 0x80;
        let v = authenticate(&mut enclave(), &key(&cand, KeyLabel::Invalid)).unwrap();
        assert!(!v.authorized);
        assert_eq!(v.cycles, 34);
    }

    #[test]
    fn empty_candidate() {
        let v = authenticate(&mut enclave(), &CandidateKey::empty()).unwrap();
        assert!(!v.authorized);
        assert_eq!(v.words_written, 0);
        assert_eq!(v.cycles, 34);
    }

    #[test]
    fn words_written_rounds_partial_word_up() {
        let mut e = enclave();
        for (len, words) in [(1, 1), (4, 1), (5, 2), (16, 4), (31, 8), (32, 8)] {
            let v = authenticate(&mut e, &key(&SECRET[..len], KeyLabel::Incomplete)).unwrap();
            assert_eq!(v.words_written, words, "len {len}");
            assert_eq!(v.authorized, len == 32, "len {len}");
        }
    }

    #[test]
    fn prefix_authenticates_against_zero_tail_secret() {
        let mut secret = [0u8; 32];
        secret[..6].copy_from_slice(&[1, 2, 3, 4, 5, 6]);
        let mut e = Enclave::provision_bytes(&secret, LatencyModel::unpipelined()).unwrap();
        let v = authenticate(&mut e, &key(&secret[..6], KeyLabel::Incomplete)).unwrap();
        assert!(v.authorized);
        assert_eq!(v.cycles, 64);
        assert_eq!(v.elapsed_ns, 640);
    }

    #[test]
    fn busy_enclave_is_refused() {
        let mut e = enclave();
        e.write_word(CTRL_OFFSET, CTRL_START).unwrap();
        assert!(matches!(
            authenticate(&mut e, &CandidateKey::empty()),
            Err(DriverError::DeviceBusy)
        ));
    }

    #[test]
    fn suites() {
        let mut e = enclave();
        let empty = run_attempt_suite(&mut e, &[]).unwrap();
        assert_eq!((empty.successes, empty.failures), (0, 0));
        assert_eq!(empty.cycle_range, None);

        let three: Vec<_> = (0..3).map(|_| key(&SECRET, KeyLabel::Correct)).collect();
        let s = run_attempt_suite(&mut e, &three).unwrap();
        assert_eq!((s.successes, s.failures), (3, 0));
        assert_eq!(s.label(KeyLabel::Correct).attempts, 3);
        assert_eq!(s.cycle_range, Some((34, 34)));
    }

    #[test]
    fn successive_calls_are_independent() {
        let mut e = enclave();
        assert!(authenticate(&mut e, &key(&SECRET, KeyLabel::Correct)).unwrap().authorized);
        // Result read cleared the key words, so a shorter key sees zeros behind it.
        assert!(!authenticate(&mut e, &key(&SECRET[..28], KeyLabel::Incomplete)).unwrap().authorized);
        assert!(authenticate(&mut e, &key(&SECRET, KeyLabel::Correct)).unwrap().authorized);
    }
}
