use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn format_err<T>(offset: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Format { offset, msg: msg.into() })
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => format_err(offset, "truncated header"),
    }
}

/// Parses an IDX image file into rows of `[0, 1]` pixel intensities.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Tensor2> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return format_err(0, format!("bad magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"));
    }
    let n = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    let expected = n * dim;
    if body.len() != expected {
        return format_err(
            16 + body.len().min(expected),
            format!("expected {expected} pixel bytes, found {}", body.len()),
        );
    }
    let data = body.iter().map(|&b| f64::from(b) / 255.0).collect();
    Tensor2::from_vec(n, dim, data)
}

/// Parses an IDX label file.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return format_err(0, format!("bad magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"));
    }
    let n = read_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return format_err(8 + body.len().min(n), format!("expected {n} label bytes, found {}", body.len()));
    }
    Ok(body.iter().map(|&b| usize::from(b)).collect())
}

/// Loads an IDX image/label pair. All rows start in the training split.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let x = parse_idx_images(&std::fs::read(images)?)?;
    let y = parse_idx_labels(&std::fs::read(labels)?)?;
    if y.len() != x.rows() {
        return Err(Error::Dimension(format!("{} labels for {} images", y.len(), x.rows())));
    }
    let name = images.file_stem().and_then(|s| s.to_str()).unwrap_or("idx").to_string();
    Dataset::new(name, x, Some(y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_bytes(n: u32, r: u32, c: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        for v in [IDX_IMAGES_MAGIC, n, r, c] {
            out.extend_from_slice(&v.to_be_bytes());
        }
        out.extend_from_slice(pixels);
        out
    }

    #[test]
    fn parses_small_image_file() {
        let x = parse_idx_images(&image_bytes(2, 1, 2, &[0, 255, 51, 102])).unwrap();
        assert_eq!(x.shape(), (2, 2));
        assert_eq!(x.data(), &[0.0, 1.0, 0.2, 0.4]);
    }

    #[test]
    fn bad_magic_reports_offset_zero() {
        let mut b = image_bytes(1, 1, 1, &[0]);
        b[3] = 0x01;
        match parse_idx_images(&b) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_body_reports_offset() {
        let b = image_bytes(2, 2, 2, &[1, 2, 3]);
        match parse_idx_images(&b) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 19),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_header() {
        assert!(matches!(parse_idx_labels(&[0, 0, 8]), Err(Error::Format { offset: 0, .. })));
    }

    #[test]
    fn parses_labels() {
        let mut b = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        b.extend_from_slice(&3u32.to_be_bytes());
        b.extend_from_slice(&[7, 0, 9]);
        assert_eq!(parse_idx_labels(&b).unwrap(), vec![7, 0, 9]);
    }
}
