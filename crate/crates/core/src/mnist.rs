//! IDX parsing, dataset loading and the train/held-out split.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;
pub const TRAIN_COUNT: usize = 60_000;
pub const TEST_COUNT: usize = 10_000;
pub const HELD_OUT: usize = 10_000;

/// A 28x28 row-major greyscale digit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawSample {
    pub pixels: Box<[u8; PIXELS]>,
    pub digit: u8,
}

impl RawSample {
    pub fn new(pixels: [u8; PIXELS], digit: u8) -> Result<Self> {
        if digit > 9 {
            return Err(Error::DigitOutOfRange(digit));
        }
        Ok(Self {
            pixels: Box::new(pixels),
            digit,
        })
    }

    pub fn label(&self) -> f64 {
        // digit validated at construction
        parity_label(self.digit).unwrap()
    }
}

/// +1 for odd digits, -1 for even ones.
pub fn parity_label(digit: u8) -> Result<f64> {
    match digit {
        0..=9 if digit % 2 == 1 => Ok(1.0),
        0..=9 => Ok(-1.0),
        _ => Err(Error::DigitOutOfRange(digit)),
    }
}

/// Decompresses gzip payloads, passes raw IDX through untouched.
pub fn maybe_gunzip(bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(bytes.to_vec())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.offset < n {
            return Err(Error::Truncated {
                offset: self.bytes.len(),
                needed: self.offset + n,
            });
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn read_header(cur: &mut Cursor<'_>, magic: u32) -> Result<usize> {
    let found = cur.u32()?;
    if found != magic {
        return Err(Error::BadMagic {
            expected: magic,
            found,
        });
    }
    Ok(cur.u32()? as usize)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<[u8; PIXELS]>> {
    let bytes = maybe_gunzip(bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        offset: 0,
    };
    let count = read_header(&mut cur, IMAGE_MAGIC)?;
    let (rows, cols) = (cur.u32()?, cur.u32()?);
    if rows as usize != SIDE || cols as usize != SIDE {
        return Err(Error::BadImageDims { rows, cols });
    }
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let mut px = [0u8; PIXELS];
        px.copy_from_slice(cur.take(PIXELS)?);
        images.push(px);
    }
    Ok(images)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let bytes = maybe_gunzip(bytes)?;
    let mut cur = Cursor {
        bytes: &bytes,
        offset: 0,
    };
    let count = read_header(&mut cur, LABEL_MAGIC)?;
    let labels = cur.take(count)?.to_vec();
    if let Some(&bad) = labels.iter().find(|&&d| d > 9) {
        return Err(Error::DigitOutOfRange(bad));
    }
    Ok(labels)
}

pub fn write_idx_images(images: &[[u8; PIXELS]]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * PIXELS);
    for word in [IMAGE_MAGIC, images.len() as u32, SIDE as u32, SIDE as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

pub fn pair_samples(images: Vec<[u8; PIXELS]>, labels: Vec<u8>) -> Result<Vec<RawSample>> {
    if images.len() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.len(),
            labels: labels.len(),
        });
    }
    images
        .into_iter()
        .zip(labels)
        .map(|(px, d)| RawSample::new(px, d))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistFile {
    TrainImages,
    TrainLabels,
    TestImages,
    TestLabels,
}

impl MnistFile {
    pub const ALL: [MnistFile; 4] = [
        MnistFile::TrainImages,
        MnistFile::TrainLabels,
        MnistFile::TestImages,
        MnistFile::TestLabels,
    ];

    pub fn stem(self) -> &'static str {
        match self {
            MnistFile::TrainImages => "train-images",
            MnistFile::TrainLabels => "train-labels",
            MnistFile::TestImages => "t10k-images",
            MnistFile::TestLabels => "t10k-labels",
        }
    }

    fn idx_suffix(self) -> &'static str {
        match self {
            MnistFile::TrainImages | MnistFile::TestImages => "idx3-ubyte",
            _ => "idx1-ubyte",
        }
    }

    /// SHA-256 of the uncompressed canonical file.
    pub fn sha256(self) -> &'static str {
        match self {
            MnistFile::TrainImages => {
                "ba891046e6505d7aadcbbe25680a0738ad16aec93bde7f9b65e87a2fc25776db"
            }
            MnistFile::TrainLabels => {
                "65a50cbbf4e906d70832878ad85ccda5333a97f0f4c3dd2ef09a8a9eef7101c5"
            }
            MnistFile::TestImages => {
                "0fa7898d509279e482958e8ce81c8e77db3f2f8254e26661ceb7762c4d494ce7"
            }
            MnistFile::TestLabels => {
                "ff7bcfd416de33731a308c3f266cc351222c34898ecbeaf847f06e48f7ec33f2"
            }
        }
    }

    pub fn expected_count(self) -> usize {
        match self {
            MnistFile::TrainImages | MnistFile::TrainLabels => TRAIN_COUNT,
            _ => TEST_COUNT,
        }
    }

    /// Accepts `train-images-idx3-ubyte` and `train-images.idx3-ubyte`,
    /// each optionally gzipped.
    pub fn locate(self, dir: &Path) -> Result<PathBuf> {
        for sep in ['-', '.'] {
            for ext in ["", ".gz"] {
                let p = dir.join(format!("{}{}{}{}", self.stem(), sep, self.idx_suffix(), ext));
                if p.is_file() {
                    return Ok(p);
                }
            }
        }
        Err(Error::MissingFile(format!(
            "{}/{}-{}[.gz]",
            dir.display(),
            self.stem(),
            self.idx_suffix()
        )))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Clone, Debug)]
pub struct FileCheck {
    pub file: MnistFile,
    pub path: PathBuf,
    pub result: std::result::Result<usize, String>,
}

/// Checks presence, digest, magic and count of all four files.
pub fn verify_dir(dir: &Path) -> Vec<FileCheck> {
    MnistFile::ALL
        .iter()
        .map(|&file| match file.locate(dir) {
            Ok(path) => {
                let result = verify_file(file, &path).map_err(|e| e.to_string());
                FileCheck { file, path, result }
            }
            Err(e) => FileCheck {
                file,
                path: dir.join(file.stem()),
                result: Err(e.to_string()),
            },
        })
        .collect()
}

fn verify_file(file: MnistFile, path: &Path) -> Result<usize> {
    let bytes = maybe_gunzip(&fs::read(path)?)?;
    let count = match file {
        MnistFile::TrainImages | MnistFile::TestImages => parse_idx_images(&bytes)?.len(),
        _ => parse_idx_labels(&bytes)?.len(),
    };
    if count != file.expected_count() {
        return Err(Error::LengthMismatch {
            what: "sample count",
            expected: file.expected_count(),
            actual: count,
        });
    }
    let actual = sha256_hex(&bytes);
    if actual != file.sha256() {
        return Err(Error::DigestMismatch {
            path: path.display().to_string(),
            expected: file.sha256().to_string(),
            actual,
        });
    }
    Ok(count)
}

#[derive(Clone, Debug)]
pub struct MnistDataset {
    pub train: Vec<RawSample>,
    pub test: Vec<RawSample>,
}

impl MnistDataset {
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let read = |f: MnistFile| -> Result<Vec<u8>> { Ok(fs::read(f.locate(dir)?)?) };
        let train = pair_samples(
            parse_idx_images(&read(MnistFile::TrainImages)?)?,
            parse_idx_labels(&read(MnistFile::TrainLabels)?)?,
        )?;
        let test = pair_samples(
            parse_idx_images(&read(MnistFile::TestImages)?)?,
            parse_idx_labels(&read(MnistFile::TestLabels)?)?,
        )?;
        Ok(Self { train, test })
    }
}

/// Indices into the training and test pools for one run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub held_out: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl DatasetSplit {
    /// The first `n` indices of the (already shuffled) train selection.
    pub fn train_subset(&self, n: usize) -> &[usize] {
        &self.train[..n.min(self.train.len())]
    }
}

/// Shuffles `0..train_len` and keeps all but the last `HELD_OUT` for
/// training; the test pool is used whole and in order.
pub fn make_split(train_len: usize, test_len: usize, seed: u64) -> Result<DatasetSplit> {
    if train_len <= HELD_OUT {
        return Err(Error::InvalidConfig(format!(
            "training pool of {train_len} cannot hold out {HELD_OUT} images"
        )));
    }
    let mut order: Vec<usize> = (0..train_len).collect();
    order.shuffle(&mut rng::stream(seed, rng::STREAM_SPLIT));
    let held_out = order.split_off(train_len - HELD_OUT);
    Ok(DatasetSplit {
        train: order,
        held_out,
        test: (0..test_len).collect(),
        seed,
    })
}
