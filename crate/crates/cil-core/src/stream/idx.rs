//! IDX binary format: the big-endian container MNIST ships in.
//!
//! Images use magic `0x00000803` (u8 pixels, 3 dimensions), labels use
//! `0x00000801`. Files may be gzip-compressed; loading sniffs the gzip magic
//! instead of trusting file extensions.

use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Parsed content of one IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IdxContent {
    Images {
        count: usize,
        rows: usize,
        cols: usize,
        pixels: Vec<u8>,
    },
    /// Digit labels, each in [0, 9].
    Labels(Vec<u8>),
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::parse(
            bytes.len(),
            format!("file truncated: need {end} header bytes"),
        ));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses a raw (uncompressed) IDX byte stream.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxContent> {
    let magic = be_u32(bytes, 0)?;
    match magic {
        IMAGE_MAGIC => {
            let count = be_u32(bytes, 4)? as usize;
            let rows = be_u32(bytes, 8)? as usize;
            let cols = be_u32(bytes, 12)? as usize;
            let want = count
                .checked_mul(rows)
                .and_then(|v| v.checked_mul(cols))
                .ok_or_else(|| Error::parse(4, "image dimensions overflow"))?;
            let payload = &bytes[16..];
            if payload.len() != want {
                return Err(Error::parse(
                    16,
                    format!(
                        "image payload is {} bytes, header says {count}x{rows}x{cols} = {want}",
                        payload.len()
                    ),
                ));
            }
            Ok(IdxContent::Images {
                count,
                rows,
                cols,
                pixels: payload.to_vec(),
            })
        }
        LABEL_MAGIC => {
            let count = be_u32(bytes, 4)? as usize;
            let payload = &bytes[8..];
            if payload.len() != count {
                return Err(Error::parse(
                    8,
                    format!(
                        "label payload is {} bytes, header says {count}",
                        payload.len()
                    ),
                ));
            }
            if let Some(pos) = payload.iter().position(|&b| b > 9) {
                return Err(Error::parse(
                    8 + pos,
                    format!("label {} out of range [0, 9]", payload[pos]),
                ));
            }
            Ok(IdxContent::Labels(payload.to_vec()))
        }
        other => Err(Error::parse(0, format!("unknown magic 0x{other:08x}"))),
    }
}

/// Serializes images back to IDX bytes; inverse of [`parse_idx`].
pub fn serialize_images(count: usize, rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(count as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    out.extend_from_slice(pixels);
    out
}

/// Serializes labels back to IDX bytes; inverse of [`parse_idx`].
pub fn serialize_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Reads a file, transparently gunzipping when the content starts with the
/// gzip magic `1f 8b`.
pub fn read_maybe_gzipped(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::input(format!("cannot gunzip {}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Paired images and labels from one split of an IDX dataset.
#[derive(Clone, Debug)]
pub struct ImageSet {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

fn find_existing(dir: &Path, base: &str) -> Result<PathBuf> {
    for candidate in [dir.join(base), dir.join(format!("{base}.gz"))] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::input(format!(
        "neither {base} nor {base}.gz found in {}",
        dir.display()
    )))
}

/// Loads one split: an image file plus its label file, by base name, with or
/// without a `.gz` suffix.
pub fn load_image_set(dir: &Path, images_base: &str, labels_base: &str) -> Result<ImageSet> {
    let images_path = find_existing(dir, images_base)?;
    let labels_path = find_existing(dir, labels_base)?;
    let images = parse_idx(&read_maybe_gzipped(&images_path)?)?;
    let labels = parse_idx(&read_maybe_gzipped(&labels_path)?)?;
    match (images, labels) {
        (
            IdxContent::Images {
                count,
                rows,
                cols,
                pixels,
            },
            IdxContent::Labels(labels),
        ) => {
            if labels.len() != count {
                return Err(Error::input(format!(
                    "{count} images but {} labels",
                    labels.len()
                )));
            }
            Ok(ImageSet {
                rows,
                cols,
                pixels,
                labels,
            })
        }
        (IdxContent::Labels(_), _) => Err(Error::input(format!(
            "{} is a label file, expected images",
            images_path.display()
        ))),
        (_, IdxContent::Images { .. }) => Err(Error::input(format!(
            "{} is an image file, expected labels",
            labels_path.display()
        ))),
    }
}
