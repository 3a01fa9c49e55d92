//! IDX container format used by the MNIST distribution.
//!
//! Layout: a big-endian `u32` magic (`0x00000803` for rank-3 image arrays,
//! `0x00000801` for rank-1 label arrays), one big-endian `u32` per dimension,
//! then the payload as unsigned bytes.

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{field}: bad magic 0x{found:08x} at byte {offset}, expected 0x{expected:08x}")]
    BadMagic {
        field: &'static str,
        offset: usize,
        found: u32,
        expected: u32,
    },

    #[error("{field}: truncated at byte {offset}, need {needed} bytes but only {available} remain")]
    Truncated {
        field: &'static str,
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("labels: value {value} at byte {offset} is not a digit 0-9")]
    BadLabel { offset: usize, value: u8 },

    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Raw greyscale images as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    rows: usize,
    cols: usize,
    bytes: Vec<u8>,
}

impl IdxImages {
    pub fn new(rows: usize, cols: usize, bytes: Vec<u8>) -> Self {
        assert!(rows * cols > 0 && bytes.len().is_multiple_of(rows * cols));
        IdxImages { rows, cols, bytes }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn count(&self) -> usize {
        self.bytes.len() / self.pixels_per_image()
    }

    pub fn pixels_per_image(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image_bytes(&self, i: usize) -> &[u8] {
        let p = self.pixels_per_image();
        &self.bytes[i * p..(i + 1) * p]
    }

    /// Pixels of image `i` scaled to `[0, 1]`.
    pub fn image(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.image_bytes(i).iter().map(|&b| f64::from(b) / 255.0)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, field: &'static str, len: usize) -> Result<&'a [u8], IdxError> {
        let available = self.bytes.len() - self.offset;
        if available < len {
            return Err(IdxError::Truncated {
                field,
                offset: self.offset,
                needed: len,
                available,
            });
        }
        let out = &self.bytes[self.offset..self.offset + len];
        self.offset += len;
        Ok(out)
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, IdxError> {
        let b = self.take(field, 4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn magic(&mut self, field: &'static str, expected: u32) -> Result<(), IdxError> {
        let offset = self.offset;
        let found = self.u32(field)?;
        if found != expected {
            return Err(IdxError::BadMagic {
                field,
                offset,
                found,
                expected,
            });
        }
        Ok(())
    }
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, IdxError> {
    let mut cur = Cursor { bytes, offset: 0 };
    cur.magic("images magic", IMAGES_MAGIC)?;
    let count = cur.u32("images count")? as usize;
    let rows = cur.u32("images rows")? as usize;
    let cols = cur.u32("images cols")? as usize;
    let payload = cur.take("images payload", count * rows * cols)?;
    Ok(IdxImages {
        rows,
        cols,
        bytes: payload.to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let mut cur = Cursor { bytes, offset: 0 };
    cur.magic("labels magic", LABELS_MAGIC)?;
    let count = cur.u32("labels count")? as usize;
    let start = cur.offset;
    let payload = cur.take("labels payload", count)?;
    if let Some(i) = payload.iter().position(|&v| v > 9) {
        return Err(IdxError::BadLabel {
            offset: start + i,
            value: payload[i],
        });
    }
    Ok(payload.to_vec())
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.bytes.len());
    for v in [
        IMAGES_MAGIC,
        images.count() as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.bytes);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read(path: &Path) -> Result<Vec<u8>, IdxError> {
    fs::read(path).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), IdxError> {
    fs::write(path, bytes).map_err(|source| IdxError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads a matching pair of image and label files.
pub fn load_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<(IdxImages, Vec<u8>), IdxError> {
    let images = parse_images(&read(images_path.as_ref())?)?;
    let labels = parse_labels(&read(labels_path.as_ref())?)?;
    if images.count() != labels.len() {
        return Err(IdxError::CountMismatch {
            images: images.count(),
            labels: labels.len(),
        });
    }
    Ok((images, labels))
}

pub fn write_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    images: &IdxImages,
    labels: &[u8],
) -> Result<(), IdxError> {
    write(images_path.as_ref(), &encode_images(images))?;
    write(labels_path.as_ref(), &encode_labels(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_by_two() -> Vec<u8> {
        let mut b = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        b.extend_from_slice(&[0, 51, 102, 255, 255, 204, 153, 0]);
        b
    }

    #[test]
    fn crafted_images_parse_exactly() {
        let images = parse_images(&two_by_two()).unwrap();
        assert_eq!((images.count(), images.rows(), images.cols()), (2, 2, 2));
        let first: Vec<f64> = images.image(0).collect();
        assert_eq!(first, vec![0.0, 0.2, 0.4, 1.0]);
        let second: Vec<f64> = images.image(1).collect();
        assert_eq!(second, vec![1.0, 0.8, 0.6, 0.0]);
    }

    #[test]
    fn wrong_magic() {
        let mut b = two_by_two();
        b[3] = 2;
        match parse_images(&b) {
            Err(IdxError::BadMagic {
                offset: 0,
                found: 0x802,
                ..
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_labels(&b),
            Err(IdxError::BadMagic {
                expected: LABELS_MAGIC,
                ..
            })
        ));
    }

    #[test]
    fn truncated_payload_names_offset() {
        let b = two_by_two();
        match parse_images(&b[..b.len() - 1]) {
            Err(IdxError::Truncated {
                field: "images payload",
                offset: 16,
                needed: 8,
                available: 7,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_images(&b[..6]),
            Err(IdxError::Truncated {
                field: "images count",
                ..
            })
        ));
    }

    #[test]
    fn labels_out_of_range() {
        let b = encode_labels(&[1, 2, 10]);
        assert!(matches!(
            parse_labels(&b),
            Err(IdxError::BadLabel { offset: 10, value: 10 })
        ));
    }

    #[test]
    fn encode_is_inverse_of_parse() {
        let b = two_by_two();
        assert_eq!(encode_images(&parse_images(&b).unwrap()), b);
        let l = encode_labels(&[3, 1, 4, 1, 5]);
        assert_eq!(encode_labels(&parse_labels(&l).unwrap()), l);
    }
}
