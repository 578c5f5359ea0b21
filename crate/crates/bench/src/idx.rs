//! Reader and writer for the IDX container used by MNIST-style datasets.
//!
//! Layout: two zero bytes, a type code, the number of dimensions, then one
//! big-endian `u32` per dimension followed by the payload. Unsigned-byte
//! images are scaled to `[0, 1]`; `f64` payloads are read verbatim.

use std::fs;
use std::path::Path;

use esgd_core::linalg::DenseMatrix;

use crate::data::{DataSource, Dataset};
use crate::error::{BenchError, Result};

pub const IMAGES_U8_MAGIC: u32 = 0x0000_0803;
pub const LABELS_U8_MAGIC: u32 = 0x0000_0801;
pub const IMAGES_F64_MAGIC: u32 = 0x0000_0E03;

const TYPE_U8: u8 = 0x08;
const TYPE_F64: u8 = 0x0E;

fn format_err(offset: usize, message: impl Into<String>) -> BenchError {
    BenchError::Format {
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let b = bytes.get(offset..offset + 4).ok_or_else(|| {
        format_err(
            bytes.len(),
            format!("header truncated: expected at least {} bytes, file has {}", offset + 4, bytes.len()),
        )
    })?;
    Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

struct Header {
    type_code: u8,
    dims: Vec<usize>,
    payload: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let magic = read_u32(bytes, 0)?;
    if magic >> 16 != 0 {
        return Err(format_err(0, format!("bad magic 0x{magic:08x}")));
    }
    let type_code = ((magic >> 8) & 0xff) as u8;
    let ndim = (magic & 0xff) as usize;
    if ndim == 0 {
        return Err(format_err(3, "zero dimensions"));
    }
    let dims = (0..ndim)
        .map(|i| read_u32(bytes, 4 + 4 * i).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    Ok(Header {
        type_code,
        dims,
        payload: 4 + 4 * ndim,
    })
}

fn payload_len(header: &Header, width: usize, bytes: &[u8]) -> Result<usize> {
    let count = header
        .dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| format_err(4, "dimension product overflows"))?;
    let expected = header.payload + count * width;
    if bytes.len() < expected {
        return Err(format_err(
            bytes.len(),
            format!("truncated: expected {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(format_err(
            expected,
            format!("trailing data: expected {expected} bytes, file has {}", bytes.len()),
        ));
    }
    Ok(count)
}

/// Parses an image file held in memory into an autoencoding dataset.
pub fn parse_idx_images(bytes: &[u8], name: &str) -> Result<Dataset> {
    let header = parse_header(bytes)?;
    if header.dims.len() != 3 || !matches!(header.type_code, TYPE_U8 | TYPE_F64) {
        return Err(format_err(
            0,
            format!(
                "bad magic 0x{:08x}: expected images 0x{IMAGES_U8_MAGIC:08x} or 0x{IMAGES_F64_MAGIC:08x}",
                read_u32(bytes, 0)?
            ),
        ));
    }
    let (n, rows, cols) = (header.dims[0], header.dims[1], header.dims[2]);
    let body = &bytes[header.payload..];
    let values: Vec<f64> = match header.type_code {
        TYPE_U8 => {
            payload_len(&header, 1, bytes)?;
            body.iter().map(|&b| f64::from(b) / 255.0).collect()
        }
        _ => {
            payload_len(&header, 8, bytes)?;
            let mut out = Vec::with_capacity(body.len() / 8);
            for (i, c) in body.chunks_exact(8).enumerate() {
                let x = f64::from_be_bytes(c.try_into().expect("chunk of eight"));
                if !x.is_finite() {
                    return Err(format_err(header.payload + 8 * i, "non-finite value"));
                }
                out.push(x);
            }
            out
        }
    };
    let inputs = DenseMatrix::new(n, rows * cols, values)?;
    Ok(Dataset::autoencoder(name, inputs, DataSource::IdxFile, (rows, cols)))
}

pub fn load_idx(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("idx").to_string();
    parse_idx_images(&bytes, &name)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let header = parse_header(bytes)?;
    if header.dims.len() != 1 || header.type_code != TYPE_U8 {
        return Err(format_err(
            0,
            format!("bad magic 0x{:08x}: expected labels 0x{LABELS_U8_MAGIC:08x}", read_u32(bytes, 0)?),
        ));
    }
    payload_len(&header, 1, bytes)?;
    Ok(bytes[header.payload..].to_vec())
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).map_err(|e| BenchError::io(path, e))?;
    parse_idx_labels(&bytes)
}

/// Pixel storage for [`encode_idx_images`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelFormat {
    /// `round(255 x)`, clamped; lossy unless values are multiples of 1/255.
    U8,
    /// Exact.
    F64,
}

pub fn encode_idx_images(dataset: &Dataset, format: PixelFormat) -> Result<Vec<u8>> {
    let (rows, cols) = dataset.image_shape;
    if rows * cols != dataset.dim() {
        return Err(BenchError::Invalid(format!(
            "image shape {rows}x{cols} does not match dimension {}",
            dataset.dim()
        )));
    }
    let to_u32 = |x: usize| {
        u32::try_from(x).map_err(|_| BenchError::Invalid(format!("dimension {x} does not fit in IDX header")))
    };
    let magic = match format {
        PixelFormat::U8 => IMAGES_U8_MAGIC,
        PixelFormat::F64 => IMAGES_F64_MAGIC,
    };
    let mut out = Vec::with_capacity(16 + dataset.len() * dataset.dim() * 8);
    out.extend_from_slice(&magic.to_be_bytes());
    for d in [dataset.len(), rows, cols] {
        out.extend_from_slice(&to_u32(d)?.to_be_bytes());
    }
    for &x in dataset.inputs.as_slice() {
        match format {
            PixelFormat::U8 => out.push((x.clamp(0.0, 1.0) * 255.0).round() as u8),
            PixelFormat::F64 => out.extend_from_slice(&x.to_be_bytes()),
        }
    }
    Ok(out)
}

pub fn write_idx_images(path: &Path, dataset: &Dataset, format: PixelFormat) -> Result<()> {
    let bytes = encode_idx_images(dataset, format)?;
    fs::write(path, bytes).map_err(|e| BenchError::io(path, e))
}

pub fn encode_idx_labels(labels: &[u8]) -> Result<Vec<u8>> {
    let n = u32::try_from(labels.len()).map_err(|_| BenchError::Invalid("too many labels".into()))?;
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_U8_MAGIC.to_be_bytes());
    out.extend_from_slice(&n.to_be_bytes());
    out.extend_from_slice(labels);
    Ok(out)
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let bytes = encode_idx_labels(labels)?;
    fs::write(path, bytes).map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticKind};

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut b = magic.to_be_bytes().to_vec();
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b
    }

    #[test]
    fn mnist_header_accepted() {
        let mut bytes = header(IMAGES_U8_MAGIC, &[60000, 28, 28]);
        let h = parse_header(&bytes).unwrap();
        assert_eq!(h.type_code, TYPE_U8);
        assert_eq!(h.dims, vec![60000, 28, 28]);
        assert_eq!(h.payload, 16);

        bytes = header(IMAGES_U8_MAGIC, &[2, 2, 2]);
        bytes.extend_from_slice(&[0, 255, 51, 102, 0, 0, 0, 255]);
        let d = parse_idx_images(&bytes, "tiny").unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.image_shape, (2, 2));
        assert_eq!(d.inputs.row(0), &[0.0, 1.0, 0.2, 0.4]);
        assert_eq!(d.inputs, d.targets);
        assert_eq!(d.source, DataSource::IdxFile);
    }

    #[test]
    fn truncated_file_names_lengths() {
        let mut bytes = header(IMAGES_U8_MAGIC, &[3, 2, 2]);
        bytes.extend_from_slice(&[1; 7]);
        let err = parse_idx_images(&bytes, "t").unwrap_err();
        match &err {
            BenchError::Format { offset, message } => {
                assert_eq!(*offset, 23);
                assert!(message.contains("expected 28 bytes"), "{message}");
                assert!(message.contains("has 23"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_idx_images(&bytes[..10], "t").unwrap_err();
        assert!(matches!(err, BenchError::Format { offset: 10, .. }));
    }

    #[test]
    fn bad_magic_rejected() {
        let mut bytes = header(0x0801_0803, &[1, 1, 1]);
        bytes.push(0);
        assert!(matches!(parse_idx_images(&bytes, "t"), Err(BenchError::Format { offset: 0, .. })));
        let labels = encode_idx_labels(&[1, 2]).unwrap();
        assert!(matches!(parse_idx_images(&labels, "t"), Err(BenchError::Format { offset: 0, .. })));
        let mut images = header(IMAGES_U8_MAGIC, &[1, 1, 1]);
        images.push(0);
        assert!(parse_idx_labels(&images).is_err());
    }

    #[test]
    fn labels_round_trip() {
        let labels = vec![0, 9, 3, 3, 7];
        assert_eq!(parse_idx_labels(&encode_idx_labels(&labels).unwrap()).unwrap(), labels);
    }

    #[test]
    fn synthetic_round_trip_is_exact() {
        let d = gen_synthetic(SyntheticKind::PixelBlobs, 20, 49, 5).unwrap();
        let back = parse_idx_images(&encode_idx_images(&d, PixelFormat::F64).unwrap(), &d.name).unwrap();
        assert_eq!(back.inputs, d.inputs);
        assert_eq!(back.image_shape, d.image_shape);

        let once = parse_idx_images(&encode_idx_images(&d, PixelFormat::U8).unwrap(), "q").unwrap();
        assert!(once
            .inputs
            .as_slice()
            .iter()
            .zip(d.inputs.as_slice())
            .all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-15));
        let twice = parse_idx_images(&encode_idx_images(&once, PixelFormat::U8).unwrap(), "q").unwrap();
        assert_eq!(twice.inputs, once.inputs);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curves.idx");
        let d = gen_synthetic(SyntheticKind::CurvesLike, 10, 16, 1).unwrap();
        write_idx_images(&path, &d, PixelFormat::F64).unwrap();
        assert_eq!(load_idx(&path).unwrap().inputs, d.inputs);
        assert!(matches!(load_idx(&dir.path().join("missing")), Err(BenchError::Io { .. })));
    }
}
