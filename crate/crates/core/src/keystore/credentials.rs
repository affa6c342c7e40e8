// Licensed under the Apache-2.0 license

use std::fmt;
use std::path::Path;

use zeroize::Zeroizing;

use crate::enclave::SECRET_KEY_BYTES;

/// Where a candidate came from, as far as the attempt suite is concerned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeyLabel {
    Correct,
    Invalid,
    Incomplete,
    Empty,
    Wrong,
    Unlabeled,
}

impl KeyLabel {
    pub const ALL: [KeyLabel; 6] = [
        KeyLabel::Correct,
        KeyLabel::Invalid,
        KeyLabel::Incomplete,
        KeyLabel::Empty,
        KeyLabel::Wrong,
        KeyLabel::Unlabeled,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            KeyLabel::Correct => "correct",
            KeyLabel::Invalid => "invalid",
            KeyLabel::Incomplete => "incomplete",
            KeyLabel::Empty => "empty",
            KeyLabel::Wrong => "wrong",
            KeyLabel::Unlabeled => "unlabeled",
        }
    }
}

impl fmt::Display for KeyLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

/// A key presented for authentication: 0 to 32 bytes. Zeroized on drop.
#[derive(Clone, PartialEq, Eq)]
pub struct CandidateKey {
    bytes: Zeroizing<Vec<u8>>,
    label: KeyLabel,
}

impl CandidateKey {
    pub fn new(bytes: impl Into<Vec<u8>>, label: KeyLabel) -> Result<Self, CredentialsError> {
        let bytes = Zeroizing::new(bytes.into());
        if bytes.len() > SECRET_KEY_BYTES {
            return Err(CredentialsError::TooLong {
                line: 0,
                len: bytes.len(),
            });
        }
        Ok(Self { bytes, label })
    }

    pub fn empty() -> Self {
        Self {
            bytes: Zeroizing::new(Vec::new()),
            label: KeyLabel::Empty,
        }
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn label(&self) -> KeyLabel {
        self.label
    }

    pub fn with_label(mut self, label: KeyLabel) -> Self {
        self.label = label;
        self
    }
}

impl fmt::Debug for CandidateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CandidateKey")
            .field("len", &self.bytes.len())
            .field("label", &self.label)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CredentialsError {
    #[error("line {line}: odd number of hex digits")]
    OddLength { line: usize },
    #[error("line {line}: invalid hex character {ch:?} at column {column}")]
    NonHex {
        line: usize,
        column: usize,
        ch: char,
    },
    #[error("line {line}: key is {len} bytes, at most {SECRET_KEY_BYTES} allowed")]
    TooLong { line: usize, len: usize },
}

/// Parses a credentials file.
///
/// The first line that is neither blank nor a `#` comment holds the key as
/// hex digits (either case). 64 digits give a full 32-byte key, fewer give an
/// incomplete key, and a file with no key line gives the empty key.
pub fn parse_credentials(text: &str) -> Result<CandidateKey, CredentialsError> {
    let Some((idx, line)) = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .find(|(_, l)| !l.is_empty() && !l.starts_with('#'))
    else {
        return Ok(CandidateKey::empty());
    };

    if let Some((pos, ch)) = line.char_indices().find(|(_, c)| !c.is_ascii_hexdigit()) {
        return Err(CredentialsError::NonHex {
            line: idx,
            column: line[..pos].chars().count() + 1,
            ch,
        });
    }
    if line.len() % 2 != 0 {
        return Err(CredentialsError::OddLength { line: idx });
    }
    if line.len() / 2 > SECRET_KEY_BYTES {
        return Err(CredentialsError::TooLong {
            line: idx,
            len: line.len() / 2,
        });
    }
    let bytes = Zeroizing::new(hex::decode(line).expect("hex digits and even length checked"));
    let label = match bytes.len() {
        0 => KeyLabel::Empty,
        SECRET_KEY_BYTES => KeyLabel::Unlabeled,
        _ => KeyLabel::Incomplete,
    };
    Ok(CandidateKey { bytes, label })
}

/// Renders a key back into the credentials format.
pub fn format_credentials(key: &[u8]) -> String {
    format!("{}\n", hex::encode(key))
}

pub fn read_credentials_file(path: &Path) -> Result<CandidateKey, super::KeystoreError> {
    let text = Zeroizing::new(std::fs::read_to_string(path).map_err(|source| {
        super::KeystoreError::Io {
            path: path.display().to_string(),
            source,
        }
    })?);
    parse_credentials(&text).map_err(|source| super::KeystoreError::Credentials {
        path: path.display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent decoder used as the oracle for the hex path.
    fn oracle_decode(s: &str) -> Vec<u8> {
        fn nibble(c: u8) -> u8 {
            match c {
                b'0'..=b'9' => c - b'0',
                b'a'..=b'f' => c - b'a' + 10,
                b'A'..=b'F' => c - b'A' + 10,
                _ => panic!("not hex"),
            }
        }
        s.as_bytes()
            .chunks(2)
            .map(|p| (nibble(p[0]) << 4) | nibble(p[1]))
            .collect()
    }

    #[test]
    fn full_length_key() {
        let text = "00112233445566778899aabbccddeeff00112233445566778899AABBCCDDEEFF\n";
        let key = parse_credentials(text).unwrap();
        assert_eq!(key.len(), 32);
        assert_eq!(key.bytes(), oracle_decode(text.trim()).as_slice());
        assert_eq!(key.label(), KeyLabel::Unlabeled);
    }

    #[test]
    fn half_length_key_is_incomplete() {
        let text = "deadbeef0badf00dcafebabe12345678";
        let key = parse_credentials(text).unwrap();
        assert_eq!(key.len(), 16);
        assert_eq!(key.label(), KeyLabel::Incomplete);
        assert_eq!(key.bytes(), oracle_decode(text).as_slice());
    }

    #[test]
    fn empty_and_comment_only_files() {
        assert_eq!(parse_credentials("").unwrap().label(), KeyLabel::Empty);
        let key = parse_credentials("# nothing here\n\n   \n").unwrap();
        assert!(key.is_empty());
        assert_eq!(key.label(), KeyLabel::Empty);
    }

    #[test]
    fn comments_precede_key() {
        let key = parse_credentials("# device 7\n  abcd  \nffff\n").unwrap();
        assert_eq!(key.bytes(), &[0xAB, 0xCD]);
    }

    #[test]
    fn rejects_non_hex() {
        assert!(matches!(
            parse_credentials("0xZZ"),
            Err(CredentialsError::NonHex {
                line: 1,
                column: 2,
                ch: 'x'
            })
        ));
        assert!(matches!(
            parse_credentials("# c\nab cd"),
            Err(CredentialsError::NonHex { line: 2, .. })
        ));
    }

    #[test]
    fn rejects_odd_length() {
        assert_eq!(
            parse_credentials("abc"),
            Err(CredentialsError::OddLength { line: 1 })
        );
    }

    #[test]
    fn rejects_more_than_32_bytes() {
        let text = "ab".repeat(33);
        assert_eq!(
            parse_credentials(&text),
            Err(CredentialsError::TooLong { line: 1, len: 33 })
        );
    }

    #[test]
    fn debug_hides_bytes() {
        let key = CandidateKey::new(vec![0x5A; 32], KeyLabel::Correct).unwrap();
        let printed = format!("{key:?}");
        assert!(!printed.contains("90"), "{printed}");
        assert!(printed.contains("len: 32"));
    }

    #[test]
    fn format_round_trips() {
        let bytes: Vec<u8> = (0..32).collect();
        let key = parse_credentials(&format_credentials(&bytes)).unwrap();
        assert_eq!(key.bytes(), bytes.as_slice());
    }
}
