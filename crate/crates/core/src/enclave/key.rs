// Licensed under the Apache-2.0 license

use std::fmt;
use std::path::Path;

use rand::{CryptoRng, RngCore};
use zeroize::{Zeroize, ZeroizeOnDrop};

use super::{EnclaveError, KEY_WORDS};

pub const SECRET_KEY_BYTES: usize = 32;

/// The 256-bit key baked into the bitstream, before it is provisioned.
///
/// The image is consumed by [`super::Enclave::provision`]; nothing inside the
/// enclave hands the bytes back out.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct SecretKeyImage([u8; SECRET_KEY_BYTES]);

impl SecretKeyImage {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EnclaveError> {
        let arr: [u8; SECRET_KEY_BYTES] = bytes
            .try_into()
            .map_err(|_| EnclaveError::Provisioning { len: bytes.len() })?;
        Ok(Self(arr))
    }

    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        let mut arr = [0u8; SECRET_KEY_BYTES];
        rng.fill_bytes(&mut arr);
        Self(arr)
    }

    /// Reads a provisioning file: exactly 32 raw bytes.
    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, EnclaveError> {
        let mut raw = std::fs::read(path.as_ref()).map_err(|source| EnclaveError::ImageIo {
            path: path.as_ref().display().to_string(),
            source,
        })?;
        let image = Self::from_bytes(&raw);
        raw.zeroize();
        image
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.0)
    }

    /// Raw bytes of the provisioning artifact. Only the tooling that creates
    /// images (key generation, test harnesses) has a reason to call this.
    pub fn expose_bytes(&self) -> &[u8; SECRET_KEY_BYTES] {
        &self.0
    }

    pub(crate) fn into_sealed(self) -> SealedKey {
        SealedKey(bytes_to_words(&self.0))
    }
}

impl fmt::Debug for SecretKeyImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKeyImage(<redacted>)")
    }
}

/// Little-endian packing of key bytes into register words: word `i` holds
/// bytes `4i..4i+4`, byte `4i` in the least significant position.
pub fn bytes_to_words(bytes: &[u8; SECRET_KEY_BYTES]) -> [u32; KEY_WORDS] {
    let mut words = [0u32; KEY_WORDS];
    for (word, chunk) in words.iter_mut().zip(bytes.chunks_exact(4)) {
        *word = u32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
    }
    words
}

/// Secret words held inside the enclave boundary. Not `Clone`, not `Debug`-transparent.
#[derive(Zeroize, ZeroizeOnDrop)]
pub(crate) struct SealedKey([u32; KEY_WORDS]);

impl SealedKey {
    /// Returns true iff every masked candidate word equals the secret word.
    ///
    /// All words are folded regardless of where the first difference is.
    pub(crate) fn matches(&self, candidate: &[u32; KEY_WORDS], mask: &[u32; KEY_WORDS]) -> bool {
        let mut diff = 0u32;
        for i in 0..KEY_WORDS {
            diff |= (candidate[i] ^ self.0[i]) & mask[i];
        }
        std::hint::black_box(diff) == 0
    }
}

impl fmt::Debug for SealedKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<sealed>")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrong_length_is_a_provisioning_error() {
        let err = SecretKeyImage::from_bytes(&[0u8; 31]).unwrap_err();
        assert!(matches!(err, EnclaveError::Provisioning { len: 31 }));
        assert!(SecretKeyImage::from_bytes(&[0u8; 33]).is_err());
    }

    #[test]
    fn words_are_little_endian() {
        let mut bytes = [0u8; 32];
        bytes[..4].copy_from_slice(&[0x01, 0x02, 0x03, 0x04]);
        bytes[28..].copy_from_slice(&[0xAA, 0xBB, 0xCC, 0xDD]);
        let words = bytes_to_words(&bytes);
        assert_eq!(words[0], 0x0403_0201);
        assert_eq!(words[7], 0xDDCC_BBAA);
    }

    #[test]
    fn debug_never_prints_bytes() {
        let image = SecretKeyImage::from_bytes(&[0xAB; 32]).unwrap();
        let printed = format!("{image:?}");
        assert!(!printed.to_lowercase().contains("ab"), "{printed}");
        let sealed = image.into_sealed();
        assert_eq!(format!("{sealed:?}"), "<sealed>");
    }

    #[test]
    fn masked_match() {
        let sealed = SealedKey([1, 2, 3, 4, 5, 6, 7, 8]);
        let full = [u32::MAX; KEY_WORDS];
        assert!(sealed.matches(&[1, 2, 3, 4, 5, 6, 7, 8], &full));
        assert!(!sealed.matches(&[1, 2, 3, 4, 5, 6, 7, 9], &full));
        let low = [0xFFFF, 0, 0, 0, 0, 0, 0, 0];
        assert!(sealed.matches(&[0x1_0001, 0, 0, 0, 0, 0, 0, 0], &low));
    }
}
