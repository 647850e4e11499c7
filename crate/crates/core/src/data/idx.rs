//! IDX file format (the MNIST distribution format): big-endian header with a
//! magic number, item count and per-item dimensions, followed by raw bytes.

use std::fs;
use std::path::Path;

use super::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::DimensionMismatch(format!("{what}: header truncated at byte {offset}")))
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = read_u32(bytes, 0, "images")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::BadMagic {
            expected: IMAGES_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4, "images")? as usize;
    let rows = read_u32(bytes, 8, "images")? as usize;
    let cols = read_u32(bytes, 12, "images")? as usize;
    let expected = count * rows * cols;
    let body = &bytes[16..];
    if body.len() != expected {
        return Err(Error::DimensionMismatch(format!(
            "images: header declares {count}x{rows}x{cols} = {expected} bytes, file holds {}",
            body.len()
        )));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.to_vec(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(Error::BadMagic {
            expected: LABELS_MAGIC,
            found: magic,
        });
    }
    let count = read_u32(bytes, 4, "labels")? as usize;
    let body = &bytes[8..];
    if body.len() != count {
        return Err(Error::DimensionMismatch(format!(
            "labels: header declares {count} labels, file holds {}",
            body.len()
        )));
    }
    if let Some(bad) = body.iter().find(|&&l| l as usize >= NUM_CLASSES) {
        return Err(Error::MalformedFile(format!("label {bad} outside 0..{NUM_CLASSES}")));
    }
    Ok(body.to_vec())
}

pub fn encode_images(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let count = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGES_MAGIC, count as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Builds a classification dataset from decoded IDX content: pixels scaled
/// to `[0, 1]`, labels one-hot over ten classes, at most `cap` rows.
pub fn dataset_from_idx(images: &IdxImages, labels: &[u8], cap: Option<usize>) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} images vs {} labels",
            images.count,
            labels.len()
        )));
    }
    let n = cap.map_or(images.count, |c| c.min(images.count));
    let width = images.rows * images.cols;
    let inputs: Vec<f64> = images.pixels[..n * width].iter().map(|&p| p as f64 / 255.0).collect();
    let mut targets = vec![0.0; n * NUM_CLASSES];
    for (i, &l) in labels[..n].iter().enumerate() {
        targets[i * NUM_CLASSES + l as usize] = 1.0;
    }
    Dataset::new(
        Matrix::from_raw(n, width, inputs),
        Matrix::from_raw(n, NUM_CLASSES, targets),
        DatasetKind::Classification,
    )
}

/// Reads an MNIST image/label file pair.
fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    cap: Option<usize>,
) -> Result<Dataset> {
    let images = parse_images(&read(images_path.as_ref())?)?;
    let labels = parse_labels(&read(labels_path.as_ref())?)?;
    dataset_from_idx(&images, &labels, cap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(count: usize) -> (Vec<u8>, Vec<u8>) {
        let pixels: Vec<u8> = (0..count * 784).map(|i| (i % 256) as u8).collect();
        let labels: Vec<u8> = (0..count).map(|i| (i % 10) as u8).collect();
        (encode_images(28, 28, &pixels), encode_labels(&labels))
    }

    #[test]
    fn header_layout() {
        let (img, lab) = fixture(3);
        assert_eq!(&img[..4], &[0, 0, 8, 3]);
        assert_eq!(&lab[..4], &[0, 0, 8, 1]);
        assert_eq!(&img[8..16], &[0, 0, 0, 28, 0, 0, 0, 28]);
    }

    #[test]
    fn decode_scales_and_one_hots() {
        let (img, lab) = fixture(12);
        let images = parse_images(&img).unwrap();
        let labels = parse_labels(&lab).unwrap();
        let data = dataset_from_idx(&images, &labels, None).unwrap();
        assert_eq!((data.len(), data.input_dim(), data.output_dim()), (12, 784, 10));
        assert_eq!(data.inputs()[(0, 255)], 1.0);
        assert_eq!(data.inputs()[(0, 1)], 1.0 / 255.0);
        assert_eq!(data.labels()[11], 1);
    }

    #[test]
    fn cap_applies() {
        let (img, lab) = fixture(30);
        let data = dataset_from_idx(&parse_images(&img).unwrap(), &parse_labels(&lab).unwrap(), Some(20)).unwrap();
        assert_eq!(data.len(), 20);
    }

    #[test]
    fn bad_magic() {
        let (img, lab) = fixture(1);
        assert!(matches!(parse_images(&lab), Err(Error::BadMagic { found: LABELS_MAGIC, .. })));
        assert!(matches!(parse_labels(&img), Err(Error::BadMagic { .. })));
    }

    #[test]
    fn truncated_file() {
        let (img, lab) = fixture(4);
        assert!(matches!(parse_images(&img[..img.len() - 10]), Err(Error::DimensionMismatch(_))));
        assert!(matches!(parse_labels(&lab[..6]), Err(Error::DimensionMismatch(_))));
        assert!(matches!(parse_labels(&lab[..lab.len() - 1]), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn count_mismatch() {
        let (img, _) = fixture(4);
        let (_, lab) = fixture(5);
        let r = dataset_from_idx(&parse_images(&img).unwrap(), &parse_labels(&lab).unwrap(), None);
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn load_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(7);
        std::fs::write(dir.path().join("img"), img).unwrap();
        std::fs::write(dir.path().join("lab"), lab).unwrap();
        let data = load_mnist_idx(dir.path().join("img"), dir.path().join("lab"), None).unwrap();
        assert_eq!(data.len(), 7);
    }
}
