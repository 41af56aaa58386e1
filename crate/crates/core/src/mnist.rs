//! MNIST IDX loader. Pixels become duty cycles `byte / 255` with no centering,
//! since a PWM input cannot carry a negative value.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::MnistError;
use crate::scalar::Scalar;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    /// Standard file stems `(images, labels)`.
    pub fn file_stems(self) -> (&'static str, &'static str) {
        match self {
            Split::Train => ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
            Split::Test => ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
        }
    }
}

/// Images as rows of duty cycles plus their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub images: Array2<F>,
    pub labels: Vec<u8>,
    pub split: Split,
}

pub fn encode_pixel<F: Scalar>(b: u8) -> F {
    F::from_u8(b).unwrap() / F::lit(255.0)
}

pub fn decode_pixel<F: Scalar>(d: F) -> u8 {
    (d * F::lit(255.0)).round().to_u8().unwrap_or(255)
}

impl<F: Scalar> Dataset<F> {
    pub fn new(images: Array2<F>, labels: Vec<u8>, split: Split) -> Result<Self, MnistError> {
        if images.nrows() != labels.len() {
            return Err(MnistError::CountMismatch {
                images: images.nrows(),
                labels: labels.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l as usize >= CLASSES) {
            return Err(MnistError::Label(l));
        }
        Ok(Self {
            images,
            labels,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_len(&self) -> usize {
        self.images.ncols()
    }

    pub fn label_counts(&self) -> [usize; CLASSES] {
        let mut c = [0; CLASSES];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
        }
    }

    /// Seeded uniform sample of `n` rows without replacement, kept in
    /// original order.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Self, MnistError> {
        if n == 0 || n > self.len() {
            return Err(MnistError::Subsample {
                requested: n,
                available: self.len(),
            });
        }
        if n == self.len() {
            return Ok(self.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut idx = sample(&mut rng, self.len(), n).into_vec();
        idx.sort_unstable();
        Ok(self.select(&idx))
    }

    /// Decodes images and labels from raw (optionally gzipped) IDX bytes.
    pub fn from_idx_bytes(
        image_bytes: &[u8],
        label_bytes: &[u8],
        split: Split,
    ) -> Result<Self, MnistError> {
        Self::parse(image_bytes, "<images>", label_bytes, "<labels>", split)
    }

    fn parse(
        image_bytes: &[u8],
        image_name: &str,
        label_bytes: &[u8],
        label_name: &str,
        split: Split,
    ) -> Result<Self, MnistError> {
        let img = maybe_gunzip(image_bytes, image_name)?;
        let lab = maybe_gunzip(label_bytes, label_name)?;

        let header = |buf: &[u8], name: &str, words: usize| -> Result<Vec<u32>, MnistError> {
            if buf.len() < 4 * words {
                return Err(MnistError::Truncated {
                    path: name.to_string(),
                    needed: 4 * words,
                    have: buf.len(),
                });
            }
            Ok((0..words)
                .map(|i| u32::from_be_bytes(buf[4 * i..4 * i + 4].try_into().unwrap()))
                .collect())
        };

        let ih = header(&img, image_name, 1)?;
        if ih[0] != IMAGE_MAGIC {
            return Err(MnistError::BadMagic {
                path: image_name.to_string(),
                found: ih[0],
                expected: IMAGE_MAGIC,
            });
        }
        let ih = header(&img, image_name, 4)?;
        let (count, rows, cols) = (ih[1] as usize, ih[2] as usize, ih[3] as usize);
        let pixels = rows * cols;
        let needed = 16 + count * pixels;
        if img.len() < needed {
            return Err(MnistError::Truncated {
                path: image_name.to_string(),
                needed,
                have: img.len(),
            });
        }

        let lh = header(&lab, label_name, 1)?;
        if lh[0] != LABEL_MAGIC {
            return Err(MnistError::BadMagic {
                path: label_name.to_string(),
                found: lh[0],
                expected: LABEL_MAGIC,
            });
        }
        let lh = header(&lab, label_name, 2)?;
        let lcount = lh[1] as usize;
        if lab.len() < 8 + lcount {
            return Err(MnistError::Truncated {
                path: label_name.to_string(),
                needed: 8 + lcount,
                have: lab.len(),
            });
        }
        if lcount != count {
            return Err(MnistError::CountMismatch {
                images: count,
                labels: lcount,
            });
        }

        let data: Vec<F> = img[16..needed].iter().map(|&b| encode_pixel(b)).collect();
        let images = Array2::from_shape_vec((count, pixels), data).expect("shape checked");
        Self::new(images, lab[8..8 + lcount].to_vec(), split)
    }
}

fn maybe_gunzip(bytes: &[u8], name: &str) -> Result<Vec<u8>, MnistError> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|source| MnistError::Io {
                path: name.to_string(),
                source,
            })?;
        Ok(out)
    } else {
        Ok(bytes.to_vec())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, MnistError> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|source| MnistError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(buf)
}

/// Loads an image/label file pair.
pub fn load_idx<F: Scalar>(
    images_path: &Path,
    labels_path: &Path,
    split: Split,
) -> Result<Dataset<F>, MnistError> {
    let img = read_file(images_path)?;
    let lab = read_file(labels_path)?;
    Dataset::parse(
        &img,
        &images_path.display().to_string(),
        &lab,
        &labels_path.display().to_string(),
        split,
    )
}

/// Finds the standard file pair for `split` in `dir`, with or without `.gz`.
pub fn locate(dir: &Path, split: Split) -> Result<(PathBuf, PathBuf), MnistError> {
    let (img, lab) = split.file_stems();
    let find = |stem: &str| -> Result<PathBuf, MnistError> {
        for name in [stem.to_string(), format!("{stem}.gz")] {
            let p = dir.join(&name);
            if p.is_file() {
                return Ok(p);
            }
        }
        Err(MnistError::Io {
            path: dir.join(stem).display().to_string(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found"),
        })
    };
    Ok((find(img)?, find(lab)?))
}

pub fn load_split<F: Scalar>(dir: &Path, split: Split) -> Result<Dataset<F>, MnistError> {
    let (img, lab) = locate(dir, split)?;
    load_idx(&img, &lab, split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use proptest::prelude::*;
    use std::io::Write;

    fn idx_images(count: u32, rows: u32, cols: u32, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut v = Vec::new();
        for w in [IMAGE_MAGIC, count, rows, cols] {
            v.extend_from_slice(&w.to_be_bytes());
        }
        v.extend((0..(count * rows * cols) as usize).map(fill));
        v
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn parses_pixels_as_duties() {
        let img = idx_images(2, 2, 2, |i| [0u8, 255, 51, 102, 0, 0, 0, 255][i]);
        let ds = Dataset::<f64>::from_idx_bytes(&img, &idx_labels(&[3, 7]), Split::Train).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.input_len(), 4);
        assert_eq!(ds.images[[0, 0]], 0.0);
        assert_eq!(ds.images[[0, 1]], 1.0);
        assert!((ds.images[[0, 2]] - 0.2).abs() < 1e-15);
        assert_eq!(ds.labels, vec![3, 7]);
    }

    #[test]
    fn gzip_is_transparent() {
        let img = idx_images(3, 1, 4, |i| i as u8);
        let lab = idx_labels(&[0, 1, 2]);
        let mut enc = GzEncoder::new(Vec::new(), Compression::fast());
        enc.write_all(&img).unwrap();
        let gz = enc.finish().unwrap();
        let a = Dataset::<f32>::from_idx_bytes(&gz, &lab, Split::Test).unwrap();
        let b = Dataset::<f32>::from_idx_bytes(&img, &lab, Split::Test).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_passed_as_images_is_bad_magic() {
        let lab = idx_labels(&[1, 2]);
        match Dataset::<f64>::from_idx_bytes(&lab, &lab, Split::Train) {
            Err(MnistError::BadMagic { found, .. }) => assert_eq!(found, LABEL_MAGIC),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn truncated_and_mismatched_files() {
        let mut img = idx_images(2, 2, 2, |_| 1);
        img.truncate(img.len() - 1);
        assert!(matches!(
            Dataset::<f64>::from_idx_bytes(&img, &idx_labels(&[0, 1]), Split::Train),
            Err(MnistError::Truncated { .. })
        ));
        let img = idx_images(2, 2, 2, |_| 1);
        assert!(matches!(
            Dataset::<f64>::from_idx_bytes(&img, &idx_labels(&[0, 1, 2]), Split::Train),
            Err(MnistError::CountMismatch { .. })
        ));
        assert!(matches!(
            Dataset::<f64>::from_idx_bytes(&img[..6], &idx_labels(&[0, 1]), Split::Train),
            Err(MnistError::Truncated { .. })
        ));
    }

    fn toy(n: usize) -> Dataset<f64> {
        let img = idx_images(n as u32, 1, 2, |i| (i % 256) as u8);
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        Dataset::from_idx_bytes(&img, &idx_labels(&labels), Split::Train).unwrap()
    }

    #[test]
    fn subsample_rules() {
        let ds = toy(50);
        assert_eq!(ds.subsample(50, 1).unwrap(), ds);
        let a = ds.subsample(20, 9).unwrap();
        let b = ds.subsample(20, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        assert_eq!(a.label_counts().iter().sum::<usize>(), 20);
        assert!(ds.subsample(0, 1).is_err());
        assert!(ds.subsample(51, 1).is_err());
        assert_ne!(ds.subsample(20, 10).unwrap(), a);
    }

    #[test]
    fn files_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let (si, sl) = Split::Test.file_stems();
        std::fs::write(dir.path().join(si), idx_images(4, 2, 2, |i| i as u8)).unwrap();
        std::fs::write(dir.path().join(sl), idx_labels(&[9, 8, 7, 6])).unwrap();
        let ds = load_split::<f32>(dir.path(), Split::Test).unwrap();
        assert_eq!(ds.labels, vec![9, 8, 7, 6]);
        assert!(load_split::<f32>(dir.path(), Split::Train).is_err());
    }

    proptest! {
        #[test]
        fn pixel_round_trip(b in any::<u8>()) {
            prop_assert_eq!(decode_pixel(encode_pixel::<f32>(b)), b);
            prop_assert_eq!(decode_pixel(encode_pixel::<f64>(b)), b);
        }
    }
}
