// Licensed under the Apache-2.0 license

//! Cycle-stepped emulation of the authentication IP core.
//!
//! The core sits behind a word-addressed register window:
//!
//! | offset        | access     | contents                                   |
//! |---------------|------------|--------------------------------------------|
//! | `0x000`       | read/write | control: bit0 START, bit1 DONE, bit2 IDLE  |
//! | `0x080-0x09C` | write-only | candidate key, eight little-endian words   |
//! | `0x100`       | read-only  | result: bit0 set when the candidate matched |
//!
//! Writing START while IDLE launches a comparison that completes exactly
//! [`LatencyModel::latency_cycles`] clock cycles later, whatever the candidate.
//! Reading the result register once DONE is set retires the transaction: DONE
//! clears, the key words are zeroed and the core returns to IDLE.
//!
//! The provisioned secret never leaves the core. Key-word registers cannot be
//! read back and the only secret-dependent output is the single result bit.

mod key;
mod latency;

use std::fmt;
use std::sync::{Arc, Mutex, MutexGuard, TryLockError};

pub use key::{bytes_to_words, SecretKeyImage, SECRET_KEY_BYTES};
pub use latency::{
    LatencyModel, PipelineMode, CLOCK_UNCERTAINTY_NS, ESTIMATED_CLOCK_NS,
    PIPELINED_LATENCY_CYCLES, TARGET_CLOCK_PERIOD_NS, UNPIPELINED_LATENCY_CYCLES,
};

use key::SealedKey;

pub const CTRL_OFFSET: u32 = 0x000;
pub const KEY_OFFSET: u32 = 0x080;
pub const RESULT_OFFSET: u32 = 0x100;
pub const KEY_WORDS: usize = 8;
pub const KEY_END_OFFSET: u32 = KEY_OFFSET + 4 * (KEY_WORDS as u32 - 1);

pub const CTRL_START: u32 = 1 << 0;
pub const CTRL_DONE: u32 = 1 << 1;
pub const CTRL_IDLE: u32 = 1 << 2;

pub const RESULT_VALID: u32 = 1 << 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Access {
    Read,
    Write,
}

impl fmt::Display for Access {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Access::Read => f.write_str("read"),
            Access::Write => f.write_str("write"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnclaveError {
    #[error("provisioning image must be {SECRET_KEY_BYTES} bytes, got {len}")]
    Provisioning { len: usize },
    #[error("cannot read provisioning image {path}: {source}")]
    ImageIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bus error: {access} at offset {addr:#05x}")]
    Bus { addr: u32, access: Access },
    #[error("device busy")]
    DeviceBusy,
}

/// Comparison width. Anything narrower than [`CompareWidth::Full`] is only
/// reachable with the `test-hooks` feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareWidth {
    Full,
    /// Only the low 16 bits of key word 0 take part in the comparison.
    Low16,
}

impl CompareWidth {
    fn mask(self) -> [u32; KEY_WORDS] {
        match self {
            CompareWidth::Full => [u32::MAX; KEY_WORDS],
            CompareWidth::Low16 => {
                let mut m = [0u32; KEY_WORDS];
                m[0] = 0xFFFF;
                m
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Busy { until: u64 },
    Done { valid: bool },
}

/// Register-visible state of the core, safe to log. Contains no key material.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnclaveSnapshot {
    pub ctrl: u32,
    pub result: u32,
    pub cycle_counter: u64,
    pub busy_until: Option<u64>,
    pub latency_cycles: u64,
    pub mode: PipelineMode,
}

impl fmt::Display for EnclaveSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ctrl={:#x} result={:#x} cycle={} busy_until={} latency={} mode={}",
            self.ctrl,
            self.result,
            self.cycle_counter,
            self.busy_until
                .map_or_else(|| "-".to_string(), |c| c.to_string()),
            self.latency_cycles,
            self.mode
        )
    }
}

pub struct Enclave {
    secret: SealedKey,
    model: LatencyModel,
    key_words: [u32; KEY_WORDS],
    mask: [u32; KEY_WORDS],
    phase: Phase,
    cycle_counter: u64,
}

impl Enclave {
    /// Seals `image` into a fresh core. The image is consumed.
    pub fn provision(image: SecretKeyImage, model: LatencyModel) -> Self {
        Self {
            secret: image.into_sealed(),
            model,
            key_words: [0; KEY_WORDS],
            mask: CompareWidth::Full.mask(),
            phase: Phase::Idle,
            cycle_counter: 0,
        }
    }

    /// Provisions from raw bytes, rejecting anything but exactly 32 bytes.
    pub fn provision_bytes(bytes: &[u8], model: LatencyModel) -> Result<Self, EnclaveError> {
        Ok(Self::provision(SecretKeyImage::from_bytes(bytes)?, model))
    }

    /// Narrows the comparison so exhaustive searches become tractable.
    #[cfg(feature = "test-hooks")]
    pub fn set_compare_width(&mut self, width: CompareWidth) {
        self.mask = width.mask();
    }

    pub fn latency_model(&self) -> LatencyModel {
        self.model
    }

    pub fn cycle_counter(&self) -> u64 {
        self.cycle_counter
    }

    pub fn elapsed_ns(&self) -> u64 {
        self.model.cycles_to_ns(self.cycle_counter)
    }

    pub fn is_idle(&self) -> bool {
        self.phase == Phase::Idle
    }

    fn ctrl_bits(&self) -> u32 {
        match self.phase {
            Phase::Idle => CTRL_IDLE,
            Phase::Busy { .. } => CTRL_START,
            Phase::Done { .. } => CTRL_DONE,
        }
    }

    fn key_index(addr: u32) -> Option<usize> {
        if (KEY_OFFSET..=KEY_END_OFFSET).contains(&addr) && addr.is_multiple_of(4) {
            Some(((addr - KEY_OFFSET) / 4) as usize)
        } else {
            None
        }
    }

    pub fn write_word(&mut self, addr: u32, value: u32) -> Result<(), EnclaveError> {
        let bus_error = EnclaveError::Bus {
            addr,
            access: Access::Write,
        };
        let writable = addr == CTRL_OFFSET || Self::key_index(addr).is_some();
        if !writable {
            return Err(bus_error);
        }
        if self.phase != Phase::Idle {
            return Err(EnclaveError::DeviceBusy);
        }
        if let Some(i) = Self::key_index(addr) {
            self.key_words[i] = value;
            return Ok(());
        }
        if value & CTRL_START != 0 {
            self.phase = Phase::Busy {
                until: self.cycle_counter.saturating_add(self.model.latency_cycles()),
            };
        }
        Ok(())
    }

    pub fn read_word(&mut self, addr: u32) -> Result<u32, EnclaveError> {
        match addr {
            CTRL_OFFSET => Ok(self.ctrl_bits()),
            RESULT_OFFSET => match self.phase {
                Phase::Done { valid } => {
                    self.retire();
                    Ok(if valid { RESULT_VALID } else { 0 })
                }
                _ => Ok(0),
            },
            _ => Err(EnclaveError::Bus {
                addr,
                access: Access::Read,
            }),
        }
    }

    /// Advances the clock. A comparison in flight completes once the counter
    /// reaches its deadline.
    pub fn step(&mut self, cycles: u64) {
        self.cycle_counter = self.cycle_counter.saturating_add(cycles);
        if let Phase::Busy { until } = self.phase {
            if self.cycle_counter >= until {
                let valid = self.secret.matches(&self.key_words, &self.mask);
                self.phase = Phase::Done { valid };
            }
        }
    }

    fn retire(&mut self) {
        self.key_words = [0; KEY_WORDS];
        self.phase = Phase::Idle;
    }

    /// Register-visible state. Key words and the secret are not included.
    pub fn snapshot(&self) -> EnclaveSnapshot {
        EnclaveSnapshot {
            ctrl: self.ctrl_bits(),
            result: match self.phase {
                Phase::Done { valid: true } => RESULT_VALID,
                _ => 0,
            },
            cycle_counter: self.cycle_counter,
            busy_until: match self.phase {
                Phase::Busy { until } => Some(until),
                _ => None,
            },
            latency_cycles: self.model.latency_cycles(),
            mode: self.model.mode,
        }
    }
}

impl fmt::Debug for Enclave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Enclave")
            .field("secret", &self.secret)
            .field("state", &self.snapshot())
            .finish_non_exhaustive()
    }
}

/// Exclusive-access handle to a single enclave shared between threads.
///
/// There is one logical device: a second caller trying to acquire it while it
/// is held gets [`EnclaveError::DeviceBusy`] instead of blocking.
#[derive(Clone)]
pub struct SharedEnclave(Arc<Mutex<Enclave>>);

impl SharedEnclave {
    pub fn new(enclave: Enclave) -> Self {
        Self(Arc::new(Mutex::new(enclave)))
    }

    pub fn try_acquire(&self) -> Result<MutexGuard<'_, Enclave>, EnclaveError> {
        match self.0.try_lock() {
            Ok(guard) => Ok(guard),
            Err(TryLockError::WouldBlock) => Err(EnclaveError::DeviceBusy),
            // A panicking holder cannot leave more than register state behind.
            Err(TryLockError::Poisoned(p)) => Ok(p.into_inner()),
        }
    }
}

impl fmt::Debug for SharedEnclave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SharedEnclave")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn secret_bytes() -> [u8; 32] {
        let mut b = [0u8; 32];
        for (i, x) in b.iter_mut().enumerate() {
            *x = (i as u8).wrapping_mul(37).wrapping_add(11);
        }
        b
    }

    fn enclave(model: LatencyModel) -> Enclave {
        Enclave::provision_bytes(&secret_bytes(), model).unwrap()
    }

    fn load(e: &mut Enclave, bytes: &[u8; 32]) {
        for (i, w) in bytes_to_words(bytes).iter().enumerate() {
            e.write_word(KEY_OFFSET + 4 * i as u32, *w).unwrap();
        }
    }

    #[test]
    fn provision_modes() {
        assert_eq!(
            enclave(LatencyModel::pipelined()).latency_model().latency_cycles(),
            34
        );
        assert_eq!(
            enclave(LatencyModel::unpipelined()).latency_model().latency_cycles(),
            64
        );
        assert!(matches!(
            Enclave::provision_bytes(&[0u8; 31], LatencyModel::pipelined()),
            Err(EnclaveError::Provisioning { len: 31 })
        ));
    }

    #[test]
    fn reset_state_is_idle() {
        let mut e = enclave(LatencyModel::pipelined());
        let ctrl = e.read_word(CTRL_OFFSET).unwrap();
        assert_eq!(ctrl & CTRL_IDLE, CTRL_IDLE);
        assert_eq!(ctrl & CTRL_DONE, 0);
        assert_eq!(e.cycle_counter(), 0);
    }

    #[test]
    fn start_clears_done_and_leaves_idle() {
        let mut e = enclave(LatencyModel::pipelined());
        e.write_word(CTRL_OFFSET, CTRL_START).unwrap();
        let ctrl = e.read_word(CTRL_OFFSET).unwrap();
        assert_eq!(ctrl & (CTRL_DONE | CTRL_IDLE), 0);
        assert_eq!(e.snapshot().busy_until, Some(34));
    }

    #[test]
    fn done_after_exactly_latency_cycles() {
        for model in [LatencyModel::pipelined(), LatencyModel::unpipelined()] {
            let mut e = enclave(model);
            e.write_word(CTRL_OFFSET, CTRL_START).unwrap();
            e.step(model.latency_cycles() - 1);
            assert_eq!(e.read_word(CTRL_OFFSET).unwrap() & CTRL_DONE, 0);
            e.step(1);
            assert_eq!(e.read_word(CTRL_OFFSET).unwrap() & CTRL_DONE, CTRL_DONE);
        }
    }

    #[test]
    fn step_zero_changes_nothing() {
        let mut e = enclave(LatencyModel::pipelined());
        let before = e.snapshot();
        e.step(0);
        assert_eq!(e.snapshot(), before);
        e.write_word(CTRL_OFFSET, CTRL_START).unwrap();
        let busy = e.snapshot();
        e.step(0);
        assert_eq!(e.snapshot(), busy);
    }

    #[test]
    fn matching_key_authenticates() {
        let mut e = enclave(LatencyModel::pipelined());
        load(&mut e, &secret_bytes());
        e.write_word(CTRL_OFFSET, CTRL_START).unwrap();
        e.step(34);
        assert_eq!(e.read_word(RESULT_OFFSET).unwrap() & RESULT_VALID, 1);
    }

    #[test]
    fn final_byte_mismatch_rejected() {
        let mut e = enclave(LatencyModel::pipelined());
        let mut cand = secret_bytes();
        cand[31] ^= 0x01;
        load(&mut e, &cand);
        e.write_word(CTRL_OFFSET, CTRL_START).unwrap();
        e.step(34);
        assert_eq!(e.read_word(RESULT_OFFSET).unwrap(), 0);
    }

    #[test]
    fn result_read_retires_transaction() {
        let mut e = enclave(LatencyModel::pipelined());
        load(&mut e, &secret_bytes());
        e.write_word(CTRL_OFFSET, CTRL_START).unwrap();
        e.step(34);
        assert_eq!(e.read_word(RESULT_OFFSET).unwrap(), RESULT_VALID);
        assert_eq!(e.read_word(CTRL_OFFSET).unwrap(), CTRL_IDLE);
        // Key words were cleared, so an immediate restart compares zeros.
        e.write_word(CTRL_OFFSET, CTRL_START).unwrap();
        e.step(34);
        assert_eq!(e.read_word(RESULT_OFFSET).unwrap(), 0);
    }

    #[test]
    fn result_before_done_reads_zero_without_side_effects() {
        let mut e = enclave(LatencyModel::pipelined());
        load(&mut e, &secret_bytes());
        e.write_word(CTRL_OFFSET, CTRL_START).unwrap();
        e.step(10);
        assert_eq!(e.read_word(RESULT_OFFSET).unwrap(), 0);
        e.step(24);
        assert_eq!(e.read_word(RESULT_OFFSET).unwrap(), RESULT_VALID);
    }

    #[test]
    fn bus_errors() {
        let mut e = enclave(LatencyModel::pipelined());
        assert!(matches!(
            e.write_word(RESULT_OFFSET, 1),
            Err(EnclaveError::Bus {
                addr: 0x100,
                access: Access::Write
            })
        ));
        assert!(matches!(
            e.read_word(0x084),
            Err(EnclaveError::Bus {
                access: Access::Read,
                ..
            })
        ));
        for addr in [0x004, 0x07C, 0x0A0, 0x104, 0x082, 0xFFFF_FFFC] {
            assert!(e.read_word(addr).is_err(), "{addr:#x}");
            assert!(e.write_word(addr, 0).is_err(), "{addr:#x}");
        }
        for i in 0..KEY_WORDS as u32 {
            assert!(e.read_word(KEY_OFFSET + 4 * i).is_err());
        }
    }

    #[test]
    fn writes_while_busy_or_done_are_rejected() {
        let mut e = enclave(LatencyModel::pipelined());
        e.write_word(CTRL_OFFSET, CTRL_START).unwrap();
        assert!(matches!(
            e.write_word(KEY_OFFSET, 1),
            Err(EnclaveError::DeviceBusy)
        ));
        assert!(matches!(
            e.write_word(CTRL_OFFSET, CTRL_START),
            Err(EnclaveError::DeviceBusy)
        ));
        e.step(34);
        assert!(matches!(
            e.write_word(KEY_OFFSET, 1),
            Err(EnclaveError::DeviceBusy)
        ));
        // Unmapped addresses are a bus error even while busy.
        assert!(matches!(
            e.write_word(0x200, 1),
            Err(EnclaveError::Bus { .. })
        ));
    }

    #[test]
    fn ctrl_write_without_start_is_noop() {
        let mut e = enclave(LatencyModel::pipelined());
        e.write_word(CTRL_OFFSET, CTRL_DONE | CTRL_IDLE).unwrap();
        assert!(e.is_idle());
    }

    #[test]
    fn elapsed_ns_tracks_counter() {
        let mut e = enclave(LatencyModel::pipelined());
        assert_eq!(e.elapsed_ns(), 0);
        e.step(34);
        assert_eq!(e.elapsed_ns(), 340);
        let mut u = enclave(LatencyModel::unpipelined());
        u.step(64);
        assert_eq!(u.elapsed_ns(), 640);
    }

    #[test]
    fn debug_output_is_sealed() {
        let e = enclave(LatencyModel::pipelined());
        let printed = format!("{e:?}");
        assert!(printed.contains("<sealed>"));
        for w in bytes_to_words(&secret_bytes()) {
            assert!(!printed.contains(&w.to_string()));
            assert!(!printed.contains(&format!("{w:x}")));
        }
    }

    #[test]
    fn shared_handle_is_exclusive() {
        let shared = SharedEnclave::new(enclave(LatencyModel::pipelined()));
        let guard = shared.try_acquire().unwrap();
        assert!(matches!(
            shared.try_acquire(),
            Err(EnclaveError::DeviceBusy)
        ));
        drop(guard);
        assert!(shared.try_acquire().is_ok());
    }
}
