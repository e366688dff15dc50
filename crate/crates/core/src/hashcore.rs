//! Bit-packed binary codes.
//!
//! A code of length `c` is a vector over {-1, +1}. Rows are packed into
//! little-endian `u64` words: bit `k` of word `w` holds code position
//! `64 * w + k`, set for +1 and clear for -1. Bits past `c` in the last word
//! are always zero.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const WORD_BITS: usize = 64;

/// Number of `u64` words needed for a code of `code_len` bits.
pub fn words_for(code_len: usize) -> usize {
    code_len.div_ceil(WORD_BITS)
}

fn tail_mask(code_len: usize) -> u64 {
    match code_len % WORD_BITS {
        0 => u64::MAX,
        r => (1u64 << r) - 1,
    }
}

/// Borrowed view of one packed code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodeRow<'a> {
    words: &'a [u64],
    code_len: usize,
}

impl<'a> CodeRow<'a> {
    pub fn new(words: &'a [u64], code_len: usize) -> Result<Self> {
        if words.len() != words_for(code_len) {
            return Err(Error::dim("packed words", words_for(code_len), words.len()));
        }
        if let Some(last) = words.last() {
            if last & !tail_mask(code_len) != 0 {
                return Err(Error::invalid("pad bits beyond code length are set"));
            }
        }
        Ok(Self { words, code_len })
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn words(&self) -> &'a [u64] {
        self.words
    }

    pub fn get(&self, bit: usize) -> i8 {
        assert!(bit < self.code_len, "bit {bit} out of range {}", self.code_len);
        if self.words[bit / WORD_BITS] >> (bit % WORD_BITS) & 1 == 1 {
            1
        } else {
            -1
        }
    }

    pub fn to_signs(&self) -> Vec<i8> {
        unpack_row(self.words, self.code_len)
    }
}

/// Packs a ±1 vector into words.
pub fn pack_row(signs: &[i8]) -> Result<Vec<u64>> {
    let mut words = vec![0u64; words_for(signs.len())];
    for (b, &s) in signs.iter().enumerate() {
        match s {
            1 => words[b / WORD_BITS] |= 1 << (b % WORD_BITS),
            -1 => {}
            other => {
                return Err(Error::invalid(format!(
                    "code entry {b} is {other}, expected -1 or +1"
                )))
            }
        }
    }
    Ok(words)
}

pub fn unpack_row(words: &[u64], code_len: usize) -> Vec<i8> {
    (0..code_len)
        .map(|b| {
            if words[b / WORD_BITS] >> (b % WORD_BITS) & 1 == 1 {
                1
            } else {
                -1
            }
        })
        .collect()
}

fn check_same_len(u: &CodeRow<'_>, v: &CodeRow<'_>) -> Result<()> {
    if u.code_len != v.code_len {
        return Err(Error::dim("code length", u.code_len, v.code_len));
    }
    Ok(())
}

/// Popcount of the XOR of two equal-length word slices.
#[inline]
pub(crate) fn xor_popcount(a: &[u64], b: &[u64]) -> u32 {
    a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum()
}

pub fn hamming_distance(u: CodeRow<'_>, v: CodeRow<'_>) -> Result<u32> {
    check_same_len(&u, &v)?;
    Ok(xor_popcount(u.words, v.words))
}

/// Inner product of the ±1 vectors, `c - 2 * hamming`.
pub fn code_inner_product(u: CodeRow<'_>, v: CodeRow<'_>) -> Result<i64> {
    let dist = hamming_distance(u, v)? as i64;
    Ok(u.code_len as i64 - 2 * dist)
}

/// Componentwise sign with `sign(0) = +1`.
pub fn binarize<T: Scalar>(z: &[T]) -> Result<Vec<i8>> {
    z.iter()
        .enumerate()
        .map(|(b, &x)| {
            if x.is_nan() {
                Err(Error::NonFinite(format!("NaN at position {b}")))
            } else if x >= T::zero() {
                Ok(1)
            } else {
                Ok(-1)
            }
        })
        .collect()
}

/// Row-major matrix of packed codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeMatrix {
    rows: usize,
    code_len: usize,
    words_per_row: usize,
    data: Vec<u64>,
}

impl CodeMatrix {
    /// All entries -1.
    pub fn new(rows: usize, code_len: usize) -> Result<Self> {
        if code_len == 0 {
            return Err(Error::invalid("code length must be at least 1"));
        }
        let words_per_row = words_for(code_len);
        Ok(Self {
            rows,
            code_len,
            words_per_row,
            data: vec![0; rows * words_per_row],
        })
    }

    pub fn from_words(rows: usize, code_len: usize, data: Vec<u64>) -> Result<Self> {
        let mut m = Self::new(rows, code_len)?;
        if data.len() != rows * m.words_per_row {
            return Err(Error::dim("packed code words", rows * m.words_per_row, data.len()));
        }
        let mask = tail_mask(code_len);
        for (i, row) in data.chunks(m.words_per_row).enumerate() {
            if row[m.words_per_row - 1] & !mask != 0 {
                return Err(Error::invalid(format!("row {i} has pad bits set")));
            }
        }
        m.data = data;
        Ok(m)
    }

    pub fn from_sign_rows(rows: &[Vec<i8>], code_len: usize) -> Result<Self> {
        let mut m = Self::new(rows.len(), code_len)?;
        for (i, r) in rows.iter().enumerate() {
            if r.len() != code_len {
                return Err(Error::dim("code row length", code_len, r.len()));
            }
            let packed = pack_row(r)?;
            m.data[i * m.words_per_row..(i + 1) * m.words_per_row].copy_from_slice(&packed);
        }
        Ok(m)
    }

    /// Packs a dense matrix whose entries are exactly ±1.
    pub fn from_dense<T: Scalar>(dense: ArrayView2<'_, T>) -> Result<Self> {
        let (rows, code_len) = dense.dim();
        let mut m = Self::new(rows, code_len)?;
        for ((i, b), &x) in dense.indexed_iter() {
            if x == T::one() {
                m.data[i * m.words_per_row + b / WORD_BITS] |= 1 << (b % WORD_BITS);
            } else if x != -T::one() {
                return Err(Error::invalid(format!("entry ({i}, {b}) = {x} is not ±1")));
            }
        }
        Ok(m)
    }

    /// Binarizes real rows with `sign(0) = +1`.
    pub fn from_real_signs<T: Scalar>(values: ArrayView2<'_, T>) -> Result<Self> {
        let (rows, code_len) = values.dim();
        let mut m = Self::new(rows, code_len)?;
        for (i, row) in values.rows().into_iter().enumerate() {
            let row: Vec<T> = row.to_vec();
            let packed = pack_row(&binarize(&row)?)?;
            m.data[i * m.words_per_row..(i + 1) * m.words_per_row].copy_from_slice(&packed);
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn as_words(&self) -> &[u64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> CodeRow<'_> {
        CodeRow {
            words: &self.data[i * self.words_per_row..(i + 1) * self.words_per_row],
            code_len: self.code_len,
        }
    }

    pub fn get(&self, i: usize, bit: usize) -> i8 {
        self.row(i).get(bit)
    }

    pub fn set(&mut self, i: usize, bit: usize, sign: i8) {
        assert!(bit < self.code_len);
        let w = &mut self.data[i * self.words_per_row + bit / WORD_BITS];
        if sign > 0 {
            *w |= 1 << (bit % WORD_BITS);
        } else {
            *w &= !(1 << (bit % WORD_BITS));
        }
    }

    pub fn to_dense<T: Scalar>(&self) -> Array2<T> {
        Array2::from_shape_fn((self.rows, self.code_len), |(i, b)| {
            if self.get(i, b) > 0 {
                T::one()
            } else {
                -T::one()
            }
        })
    }

    pub fn to_sign_rows(&self) -> Vec<Vec<i8>> {
        (0..self.rows).map(|i| self.row(i).to_signs()).collect()
    }
}
