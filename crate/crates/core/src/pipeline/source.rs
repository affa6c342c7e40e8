// Licensed under the Apache-2.0 license

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::keystore::{CameraConfig, FrameSourceSpec};

/// Bytes in the little-endian frame index at the start of every synthetic frame.
pub const INDEX_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub index: u64,
    pub width: u32,
    pub height: u32,
    pub bytes: Vec<u8>,
    pub captured_at: Instant,
}

impl Frame {
    /// The index embedded in the first eight bytes, if the frame is long enough.
    pub fn embedded_index(bytes: &[u8]) -> Option<u64> {
        bytes
            .get(..INDEX_BYTES)
            .map(|b| u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SourceError {
    #[error("frame directory {0} has no files")]
    EmptyDirectory(PathBuf),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("synthetic frames need at least {INDEX_BYTES} pixels, got {0}")]
    FrameTooSmall(u64),
}

/// Synthetic 8-bit luminance frames, `width * height` bytes each.
///
/// Content is a pseudo-random pattern seeded by `(index, width, height)`,
/// with the index overwritten into the first eight bytes.
#[derive(Debug, Clone)]
pub struct SyntheticSource {
    width: u32,
    height: u32,
    next_index: u64,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl SyntheticSource {
    pub fn new(width: u32, height: u32) -> Result<Self, SourceError> {
        let pixels = width as u64 * height as u64;
        if pixels < INDEX_BYTES as u64 {
            return Err(SourceError::FrameTooSmall(pixels));
        }
        Ok(Self {
            width,
            height,
            next_index: 0,
        })
    }

    pub fn frame_bytes(index: u64, width: u32, height: u32) -> Vec<u8> {
        let len = width as usize * height as usize;
        let mut state = index
            ^ ((width as u64) << 32)
            ^ (height as u64).rotate_left(16)
            ^ 0x6A09_E667_F3BC_C908;
        let mut bytes = vec![0u8; len];
        let mut chunks = bytes.chunks_exact_mut(8);
        for chunk in &mut chunks {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let tail = chunks.into_remainder();
        if !tail.is_empty() {
            let last = splitmix64(&mut state).to_le_bytes();
            let n = tail.len();
            tail.copy_from_slice(&last[..n]);
        }
        let prefix = INDEX_BYTES.min(len);
        bytes[..prefix].copy_from_slice(&index.to_le_bytes()[..prefix]);
        bytes
    }

    pub fn next_frame(&mut self) -> Frame {
        let index = self.next_index;
        self.next_index += 1;
        Frame {
            index,
            width: self.width,
            height: self.height,
            bytes: Self::frame_bytes(index, self.width, self.height),
            captured_at: Instant::now(),
        }
    }
}

/// Cycles through the files of a directory in lexicographic order. Each file's
/// bytes are one frame.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    files: Vec<PathBuf>,
    width: u32,
    height: u32,
    next_index: u64,
}

impl DirectorySource {
    pub fn open(dir: &Path, width: u32, height: u32) -> Result<Self, SourceError> {
        let io_err = |source| SourceError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut files = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(io_err)? {
            let entry = entry.map_err(io_err)?;
            if entry.file_type().map_err(io_err)?.is_file() {
                files.push(entry.path());
            }
        }
        if files.is_empty() {
            return Err(SourceError::EmptyDirectory(dir.to_path_buf()));
        }
        files.sort();
        Ok(Self {
            files,
            width,
            height,
            next_index: 0,
        })
    }

    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn next_frame(&mut self) -> Result<Frame, SourceError> {
        let index = self.next_index;
        let path = &self.files[(index % self.files.len() as u64) as usize];
        let bytes = std::fs::read(path).map_err(|source| SourceError::Io {
            path: path.clone(),
            source,
        })?;
        self.next_index += 1;
        Ok(Frame {
            index,
            width: self.width,
            height: self.height,
            bytes,
            captured_at: Instant::now(),
        })
    }
}

#[derive(Debug, Clone)]
pub enum FrameSource {
    Synthetic(SyntheticSource),
    Directory(DirectorySource),
}

impl FrameSource {
    pub fn from_config(camera: &CameraConfig) -> Result<Self, SourceError> {
        match &camera.source {
            FrameSourceSpec::Synthetic => Ok(Self::Synthetic(SyntheticSource::new(
                camera.width,
                camera.height,
            )?)),
            FrameSourceSpec::Directory(dir) => Ok(Self::Directory(DirectorySource::open(
                dir,
                camera.width,
                camera.height,
            )?)),
        }
    }

    pub fn next_frame(&mut self) -> Result<Frame, SourceError> {
        match self {
            FrameSource::Synthetic(s) => Ok(s.next_frame()),
            FrameSource::Directory(d) => d.next_frame(),
        }
    }
}
