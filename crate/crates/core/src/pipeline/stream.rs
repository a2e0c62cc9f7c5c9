//! Frame sources and frame-rate downsampling.

use std::io::{self, Read};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("frame {sequence}: payload has {got} bytes, expected {expected}")]
    Truncated {
        sequence: u64,
        got: usize,
        expected: usize,
    },
    #[error("frame {sequence} follows frame {previous}; sequence numbers must increase")]
    NonMonotone { previous: u64, sequence: u64 },
    #[error("frame {sequence}: {source}")]
    Io {
        sequence: u64,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("invalid frame rates: source {source_fps}, target {target_fps}")]
    InvalidRate { source_fps: u32, target_fps: u32 },
}

/// One 8-bit grayscale frame, row-major, one byte per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub pixels: Vec<u8>,
    pub width: u32,
    pub height: u32,
    pub timestamp_ms: u64,
    pub sequence: u64,
}

fn timestamp_ms(sequence: u64, fps: u32) -> u64 {
    sequence * 1000 / fps.max(1) as u64
}

/// Reads back-to-back raw Y planes of `width * height` bytes.
pub struct RawFrameReader<R> {
    reader: R,
    width: u32,
    height: u32,
    fps: u32,
    next_sequence: u64,
    done: bool,
}

impl<R: Read> RawFrameReader<R> {
    pub fn new(reader: R, width: u32, height: u32, fps: u32) -> Self {
        Self {
            reader,
            width,
            height,
            fps,
            next_sequence: 0,
            done: false,
        }
    }

    /// Numbers the first frame read as `sequence` instead of 0.
    pub fn starting_at(mut self, sequence: u64) -> Self {
        self.next_sequence = sequence;
        self
    }
}

impl<R: Read> Iterator for RawFrameReader<R> {
    type Item = Result<Frame, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let sequence = self.next_sequence;
        let expected = self.width as usize * self.height as usize;
        let mut pixels = vec![0u8; expected];
        let mut got = 0;
        while got < expected {
            match self.reader.read(&mut pixels[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(source) => {
                    self.done = true;
                    return Some(Err(StreamError::Io { sequence, source }));
                }
            }
        }
        if got == 0 {
            self.done = true;
            return None;
        }
        if got < expected {
            self.done = true;
            return Some(Err(StreamError::Truncated {
                sequence,
                got,
                expected,
            }));
        }
        self.next_sequence += 1;
        Some(Ok(Frame {
            pixels,
            width: self.width,
            height: self.height,
            timestamp_ms: timestamp_ms(sequence, self.fps),
            sequence,
        }))
    }
}

/// Reads every `.pgm` file in a directory in lexical order. Color inputs are
/// reduced to luma.
pub struct PgmDirReader {
    paths: std::vec::IntoIter<PathBuf>,
    width: u32,
    height: u32,
    fps: u32,
    next_sequence: u64,
}

impl PgmDirReader {
    pub fn open(dir: &Path, width: u32, height: u32, fps: u32) -> Result<Self, StreamError> {
        let entries = std::fs::read_dir(dir).map_err(|source| StreamError::Io {
            sequence: 0,
            source,
        })?;
        let mut paths = Vec::new();
        for entry in entries {
            let path = entry
                .map_err(|source| StreamError::Io {
                    sequence: 0,
                    source,
                })?
                .path();
            let is_pgm = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
            if is_pgm && path.is_file() {
                paths.push(path);
            }
        }
        paths.sort();
        Ok(Self {
            paths: paths.into_iter(),
            width,
            height,
            fps,
            next_sequence: 0,
        })
    }

    pub fn starting_at(mut self, sequence: u64) -> Self {
        self.next_sequence = sequence;
        self
    }
}

impl Iterator for PgmDirReader {
    type Item = Result<Frame, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        let path = self.paths.next()?;
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        let decoded = image::open(&path).map_err(|e| StreamError::Decode {
            path: path.clone(),
            message: e.to_string(),
        });
        let luma = match decoded {
            Ok(img) => img.to_luma8(),
            Err(e) => return Some(Err(e)),
        };
        if luma.dimensions() != (self.width, self.height) {
            let (w, h) = luma.dimensions();
            return Some(Err(StreamError::Decode {
                path,
                message: format!("frame is {w}x{h}, expected {}x{}", self.width, self.height),
            }));
        }
        Some(Ok(Frame {
            pixels: luma.into_raw(),
            width: self.width,
            height: self.height,
            timestamp_ms: timestamp_ms(sequence, self.fps),
            sequence,
        }))
    }
}

/// Keeps frames whose sequence number is a multiple of
/// `source_fps / target_fps` and rejects non-increasing sequence numbers.
pub struct Downsample<I> {
    inner: I,
    ratio: u64,
    previous: Option<u64>,
    failed: bool,
}

impl<I> Iterator for Downsample<I>
where
    I: Iterator<Item = Result<Frame, StreamError>>,
{
    type Item = Result<Frame, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        loop {
            let frame = match self.inner.next()? {
                Ok(f) => f,
                Err(e) => {
                    self.failed = true;
                    return Some(Err(e));
                }
            };
            if let Some(previous) = self.previous {
                if frame.sequence <= previous {
                    self.failed = true;
                    return Some(Err(StreamError::NonMonotone {
                        previous,
                        sequence: frame.sequence,
                    }));
                }
            }
            self.previous = Some(frame.sequence);
            if frame.sequence % self.ratio == 0 {
                return Some(Ok(frame));
            }
        }
    }
}

pub fn ingest<I>(frames: I, source_fps: u32, target_fps: u32) -> Result<Downsample<I::IntoIter>, StreamError>
where
    I: IntoIterator<Item = Result<Frame, StreamError>>,
{
    if target_fps == 0 || source_fps < target_fps {
        return Err(StreamError::InvalidRate {
            source_fps,
            target_fps,
        });
    }
    Ok(Downsample {
        inner: frames.into_iter(),
        ratio: (source_fps / target_fps) as u64,
        previous: None,
        failed: false,
    })
}
