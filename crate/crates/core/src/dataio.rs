//! Feature matrices, synthetic data, dataset splits and file formats.
//!
//! Every binary format is little-endian and starts with an 8-byte magic
//! whose last byte is the format version:
//!
//! | file     | magic      | header                   | payload                                   |
//! |----------|------------|--------------------------|-------------------------------------------|
//! | features | `ADSHFTR1` | `u64 n`, `u64 d`         | `n*d` `f64`, row-major                    |
//! | labels   | `ADSHLBL1` | `u64 n`                  | per row: `u32 count`, `count` `u32` ids   |
//! | codes    | `ADSHCOD1` | `u64 n`, `u32 c`         | per row: `ceil(c/64)` `u64` words         |
//! | model    | `ADSHMDL1` | `u64 L`, `(L+1)` `u64` dims | per layer: weights (`out x in`, row-major `f64`), then bias |
//!
//! Code words use bit `k` of word `w` for code position `64w + k` (set for
//! +1); pad bits must be zero.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::encoder::{Dense, Encoder};
use crate::error::{Error, FormatError, Result};
use crate::hashcore::{words_for, CodeMatrix};
use crate::scalar::Scalar;
use crate::simgraph::LabelMatrix;

pub const FEATURES_MAGIC: &[u8; 8] = b"ADSHFTR1";
pub const LABELS_MAGIC: &[u8; 8] = b"ADSHLBL1";
pub const CODES_MAGIC: &[u8; 8] = b"ADSHCOD1";
pub const MODEL_MAGIC: &[u8; 8] = b"ADSHMDL1";

/// `n x d` feature rows with finite entries and `d >= 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Features<T> {
    data: Array2<T>,
}

impl<T: Scalar> Features<T> {
    pub fn new(data: Array2<T>) -> Result<Self> {
        if data.ncols() == 0 {
            return Err(Error::invalid("feature dimension must be at least 1"));
        }
        if let Some(((i, j), _)) = data.indexed_iter().find(|(_, x)| !x.is_finite()) {
            return Err(Error::NonFinite(format!("feature ({i}, {j})")));
        }
        Ok(Self { data })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.data.view()
    }

    pub fn as_array(&self) -> &Array2<T> {
        &self.data
    }

    pub fn into_array(self) -> Array2<T> {
        self.data
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            data: self.data.select(ndarray::Axis(0), indices),
        }
    }
}

/// Gaussian blobs around centers drawn uniformly from `[-1, 1]^d`; the label
/// of a point is its cluster id. Points are stored cluster by cluster.
pub fn gen_synthetic_clusters<T: Scalar>(
    num_clusters: usize,
    per_cluster: usize,
    dim: usize,
    noise: f64,
    seed: u64,
) -> Result<(Features<T>, LabelMatrix)> {
    if num_clusters == 0 || per_cluster == 0 || dim == 0 {
        return Err(Error::invalid("cluster count, cluster size and dimension must be at least 1"));
    }
    if !noise.is_finite() || noise < 0.0 {
        return Err(Error::invalid(format!("noise {noise} must be finite and non-negative")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let centers = Array2::from_shape_simple_fn((num_clusters, dim), || unit.sample(&mut rng));
    let gauss = Normal::new(0.0, noise).expect("finite noise");
    let n = num_clusters * per_cluster;
    let mut data = Array2::zeros((n, dim));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in data.rows_mut().into_iter().enumerate() {
        let cluster = i / per_cluster;
        for (x, &c) in row.iter_mut().zip(centers.row(cluster)) {
            *x = T::of(c + gauss.sample(&mut rng));
        }
        labels.push(cluster as u32);
    }
    Ok((Features::new(data)?, LabelMatrix::from_single(&labels)))
}

/// Disjoint index sets drawn from `0..total`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetSplit {
    pub database: Vec<usize>,
    pub query: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Uniform query and validation samples; everything else is database.
/// Each list is sorted.
pub fn split(total: usize, query_count: usize, val_count: usize, seed: u64) -> Result<DatasetSplit> {
    if query_count + val_count >= total {
        return Err(Error::invalid(format!(
            "query ({query_count}) + validation ({val_count}) must be smaller than {total}"
        )));
    }
    let mut perm: Vec<usize> = (0..total).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut query = perm[..query_count].to_vec();
    let mut validation = perm[query_count..query_count + val_count].to_vec();
    let mut database = perm[query_count + val_count..].to_vec();
    query.sort_unstable();
    validation.sort_unstable();
    database.sort_unstable();
    Ok(DatasetSplit {
        database,
        query,
        validation,
    })
}

/// Random ±1 rows; handy for fixtures.
pub fn random_codes<R: Rng + ?Sized>(rng: &mut R, rows: usize, code_len: usize) -> Result<CodeMatrix> {
    let signs: Vec<Vec<i8>> = (0..rows)
        .map(|_| (0..code_len).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect())
        .collect();
    CodeMatrix::from_sign_rows(&signs, code_len)
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, len: usize, what: &'static str) -> Result<&'a [u8], FormatError> {
        if self.remaining() < len {
            return Err(FormatError::Truncated {
                what,
                offset: self.pos,
                expected: len,
                actual: self.remaining(),
            });
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    /// Fails early, before allocating, when fewer than `count * width`
    /// bytes are left.
    fn expect_payload(&self, count: u64, width: usize, what: &'static str) -> Result<usize, FormatError> {
        let bytes = (count as u128) * width as u128;
        if bytes > self.remaining() as u128 {
            return Err(FormatError::Truncated {
                what,
                offset: self.pos,
                expected: usize::try_from(bytes).unwrap_or(usize::MAX),
                actual: self.remaining(),
            });
        }
        Ok(count as usize)
    }

    fn magic(&mut self, expected: &[u8; 8], format: &'static str) -> Result<(), FormatError> {
        let found = self.take(8, "magic")?;
        if found == expected {
            return Ok(());
        }
        if found[..7] == expected[..7] {
            return Err(FormatError::UnsupportedVersion {
                format,
                version: found[7] as char,
            });
        }
        Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(expected).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        })
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn finite_f64(&mut self, what: &'static str) -> Result<f64, FormatError> {
        let offset = self.pos;
        let x = self.f64(what)?;
        if !x.is_finite() {
            return Err(FormatError::Invalid {
                offset,
                reason: format!("non-finite {what} value {x}"),
            });
        }
        Ok(x)
    }

    fn finish(self) -> Result<(), FormatError> {
        if self.remaining() != 0 {
            return Err(FormatError::Invalid {
                offset: self.pos,
                reason: format!("{} trailing bytes", self.remaining()),
            });
        }
        Ok(())
    }
}

fn read_all<R: Read>(mut r: R) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    Ok(buf)
}

pub fn write_features<T: Scalar, W: Write>(mut w: W, features: &Features<T>) -> std::io::Result<()> {
    w.write_all(FEATURES_MAGIC)?;
    w.write_all(&(features.rows() as u64).to_le_bytes())?;
    w.write_all(&(features.dim() as u64).to_le_bytes())?;
    for x in features.data.iter() {
        w.write_all(&x.as_f64().to_le_bytes())?;
    }
    w.flush()
}

pub fn parse_features<T: Scalar>(bytes: &[u8]) -> Result<Features<T>, FormatError> {
    let mut r = ByteReader::new(bytes);
    r.magic(FEATURES_MAGIC, "features")?;
    let n = r.u64("row count")?;
    let d_offset = r.pos;
    let d = r.u64("dimension")?;
    if d == 0 {
        return Err(FormatError::Invalid {
            offset: d_offset,
            reason: "feature dimension is zero".into(),
        });
    }
    let count = r.expect_payload(n.saturating_mul(d), 8, "feature data")?;
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(T::of(r.finite_f64("feature")?));
    }
    r.finish()?;
    let data = Array2::from_shape_vec((n as usize, d as usize), values).expect("shape checked");
    Ok(Features { data })
}

pub fn read_features<T: Scalar, R: Read>(r: R) -> Result<Features<T>> {
    Ok(parse_features(&read_all(r)?)?)
}

pub fn write_labels<W: Write>(mut w: W, labels: &LabelMatrix) -> std::io::Result<()> {
    w.write_all(LABELS_MAGIC)?;
    w.write_all(&(labels.len() as u64).to_le_bytes())?;
    for row in labels.rows() {
        w.write_all(&(row.len() as u32).to_le_bytes())?;
        for id in row {
            w.write_all(&id.to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn parse_labels(bytes: &[u8]) -> Result<LabelMatrix, FormatError> {
    let mut r = ByteReader::new(bytes);
    r.magic(LABELS_MAGIC, "labels")?;
    let n = r.u64("row count")?;
    let n = r.expect_payload(n, 4, "label rows")?;
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let offset = r.pos;
        let count = r.u32("label count")?;
        if count == 0 {
            return Err(FormatError::Invalid {
                offset,
                reason: "label row has no labels".into(),
            });
        }
        let count = r.expect_payload(count as u64, 4, "label ids")?;
        let row = (0..count).map(|_| r.u32("label id")).collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    r.finish()?;
    LabelMatrix::new(rows).map_err(|e| FormatError::Invalid {
        offset: 0,
        reason: e.to_string(),
    })
}

pub fn read_labels<R: Read>(r: R) -> Result<LabelMatrix> {
    Ok(parse_labels(&read_all(r)?)?)
}

pub fn write_codes<W: Write>(mut w: W, codes: &CodeMatrix) -> std::io::Result<()> {
    w.write_all(CODES_MAGIC)?;
    w.write_all(&(codes.rows() as u64).to_le_bytes())?;
    w.write_all(&(codes.code_len() as u32).to_le_bytes())?;
    for word in codes.as_words() {
        w.write_all(&word.to_le_bytes())?;
    }
    w.flush()
}

pub fn parse_codes(bytes: &[u8]) -> Result<CodeMatrix, FormatError> {
    let mut r = ByteReader::new(bytes);
    r.magic(CODES_MAGIC, "codes")?;
    let n = r.u64("row count")?;
    let c_offset = r.pos;
    let c = r.u32("code length")? as usize;
    if c == 0 {
        return Err(FormatError::Invalid {
            offset: c_offset,
            reason: "code length is zero".into(),
        });
    }
    let per_row = words_for(c);
    let count = r.expect_payload(n.saturating_mul(per_row as u64), 8, "code words")?;
    let tail = c % 64;
    let mut words = Vec::with_capacity(count);
    for i in 0..count {
        let offset = r.pos;
        let word = r.u64("code word")?;
        if tail != 0 && i % per_row == per_row - 1 && word >> tail != 0 {
            return Err(FormatError::Invalid {
                offset,
                reason: format!("pad bits set in row {}", i / per_row),
            });
        }
        words.push(word);
    }
    r.finish()?;
    Ok(CodeMatrix::from_words(n as usize, c, words).expect("layout checked"))
}

pub fn read_codes<R: Read>(r: R) -> Result<CodeMatrix> {
    Ok(parse_codes(&read_all(r)?)?)
}

pub fn write_model<T: Scalar, W: Write>(mut w: W, model: &Encoder<T>) -> std::io::Result<()> {
    w.write_all(MODEL_MAGIC)?;
    let dims = model.dims();
    w.write_all(&(model.layers().len() as u64).to_le_bytes())?;
    for d in dims {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for layer in model.layers() {
        for x in layer.weights.iter().chain(layer.bias.iter()) {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
    }
    w.flush()
}

pub fn parse_model<T: Scalar>(bytes: &[u8]) -> Result<Encoder<T>, FormatError> {
    let mut r = ByteReader::new(bytes);
    r.magic(MODEL_MAGIC, "model")?;
    let l_offset = r.pos;
    let layer_count = r.u64("layer count")?;
    if layer_count == 0 {
        return Err(FormatError::Invalid {
            offset: l_offset,
            reason: "model has no layers".into(),
        });
    }
    let dim_count = r.expect_payload(layer_count + 1, 8, "layer dimensions")?;
    let mut dims = Vec::with_capacity(dim_count);
    for _ in 0..dim_count {
        let offset = r.pos;
        let d = r.u64("layer dimension")?;
        if d == 0 {
            return Err(FormatError::Invalid {
                offset,
                reason: "layer dimension is zero".into(),
            });
        }
        dims.push(d);
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (input, output) = (w[0], w[1]);
        let count = r.expect_payload(input.saturating_add(1).saturating_mul(output), 8, "layer parameters")?;
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(T::of(r.finite_f64("parameter")?));
        }
        let bias = Array1::from(values.split_off((input * output) as usize));
        let weights = Array2::from_shape_vec((output as usize, input as usize), values).expect("shape checked");
        layers.push(Dense { weights, bias });
    }
    r.finish()?;
    Encoder::from_layers(layers).map_err(|e| FormatError::Invalid {
        offset: 0,
        reason: e.to_string(),
    })
}

pub fn read_model<T: Scalar, R: Read>(r: R) -> Result<Encoder<T>> {
    Ok(parse_model(&read_all(r)?)?)
}

fn csv_err(e: impl std::fmt::Display) -> Error {
    FormatError::Csv(e.to_string()).into()
}

/// One feature row per CSV record, no header.
pub fn read_features_csv<R: Read>(r: R) -> Result<Features<f64>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(r);
    let mut values = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        if *dim.get_or_insert(rec.len()) != rec.len() {
            return Err(csv_err(format!("row {i} has {} fields, expected {}", rec.len(), dim.unwrap())));
        }
        for field in rec.iter() {
            values.push(field.parse::<f64>().map_err(|e| csv_err(format!("row {i}: {e}")))?);
        }
        rows += 1;
    }
    let data = Array2::from_shape_vec((rows, dim.unwrap_or(0)), values).map_err(csv_err)?;
    Features::new(data)
}

pub fn write_features_csv<T: Scalar, W: Write>(w: W, features: &Features<T>) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for row in features.data.rows() {
        writer
            .write_record(row.iter().map(|x| format!("{:?}", x.as_f64())))
            .map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}

/// One record of label ids per point, no header.
pub fn read_labels_csv<R: Read>(r: R) -> Result<LabelMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row = rec
            .iter()
            .filter(|f| !f.is_empty())
            .map(|f| f.parse::<u32>().map_err(|e| csv_err(format!("row {i}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    LabelMatrix::new(rows)
}

pub fn write_labels_csv<W: Write>(w: W, labels: &LabelMatrix) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).flexible(true).from_writer(w);
    for row in labels.rows() {
        writer.write_record(row.iter().map(|l| l.to_string())).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}
