//! Pairwise supervision built from labels.
//!
//! Two points are similar (+1) when their label sets intersect and
//! dissimilar (-1) otherwise. Only the query-by-database block is ever
//! materialized; the full database-by-database relation is implied by the
//! labels.

use ndarray::{Array2, ArrayView1};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Label sets per point, each sorted and deduplicated.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMatrix {
    rows: Vec<Vec<u32>>,
}

impl LabelMatrix {
    pub fn new(rows: Vec<Vec<u32>>) -> Result<Self> {
        let mut rows = rows;
        for (i, r) in rows.iter_mut().enumerate() {
            if r.is_empty() {
                return Err(Error::invalid(format!("label row {i} is empty")));
            }
            r.sort_unstable();
            r.dedup();
        }
        Ok(Self { rows })
    }

    /// One label per point.
    pub fn from_single(labels: &[u32]) -> Self {
        Self {
            rows: labels.iter().map(|&l| vec![l]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    /// True when every point carries exactly one label.
    pub fn is_single_label(&self) -> bool {
        self.rows.iter().all(|r| r.len() == 1)
    }
}

/// Whether two sorted label sets share an element.
pub fn labels_intersect(a: &[u32], b: &[u32]) -> bool {
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => return true,
        }
    }
    false
}

/// Signed `m x n` supervision with the dissimilar-pair weight.
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityBlock {
    signs: Array2<i8>,
    neg_weight: f64,
    query_indices: Vec<usize>,
    positives: usize,
    negatives: usize,
}

impl SimilarityBlock {
    /// Wraps an explicit sign matrix. `query_indices` is empty when the
    /// queries are a separate set, otherwise row `p` is database point
    /// `query_indices[p]`.
    pub fn from_signs(signs: Array2<i8>, query_indices: Vec<usize>) -> Result<Self> {
        let (m, n) = signs.dim();
        if m == 0 || n == 0 {
            return Err(Error::invalid("similarity block must be non-empty"));
        }
        if !query_indices.is_empty() {
            if query_indices.len() != m {
                return Err(Error::dim("query index count", m, query_indices.len()));
            }
            let mut seen = vec![false; n];
            for &i in &query_indices {
                if i >= n || seen[i] {
                    return Err(Error::invalid(format!(
                        "query index {i} is out of range or repeated"
                    )));
                }
                seen[i] = true;
            }
        }
        let mut positives = 0;
        let mut negatives = 0;
        for &s in signs.iter() {
            match s {
                1 => positives += 1,
                -1 => negatives += 1,
                other => return Err(Error::invalid(format!("similarity entry {other}"))),
            }
        }
        Ok(Self {
            signs,
            neg_weight: imbalance_ratio(positives, negatives),
            query_indices,
            positives,
            negatives,
        })
    }

    pub fn query_count(&self) -> usize {
        self.signs.nrows()
    }

    pub fn db_count(&self) -> usize {
        self.signs.ncols()
    }

    pub fn signs(&self) -> &Array2<i8> {
        &self.signs
    }

    pub fn sign(&self, i: usize, j: usize) -> i8 {
        self.signs[[i, j]]
    }

    pub fn sign_row(&self, i: usize) -> ArrayView1<'_, i8> {
        self.signs.row(i)
    }

    /// `#positive / #negative`, or 1 when either class is absent.
    pub fn neg_weight(&self) -> f64 {
        self.neg_weight
    }

    pub fn query_indices(&self) -> &[usize] {
        &self.query_indices
    }

    /// True when the query rows are sampled database points.
    pub fn is_sampled(&self) -> bool {
        !self.query_indices.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    pub fn negatives(&self) -> usize {
        self.negatives
    }
}

fn imbalance_ratio(positives: usize, negatives: usize) -> f64 {
    if positives == 0 || negatives == 0 {
        1.0
    } else {
        positives as f64 / negatives as f64
    }
}

/// Supervision between a separate query set and the database.
pub fn build_similarity(query_labels: &LabelMatrix, db_labels: &LabelMatrix) -> Result<SimilarityBlock> {
    let signs = sign_block(query_labels.rows(), db_labels)?;
    SimilarityBlock::from_signs(signs, Vec::new())
}

/// Supervision for the database rows indexed by `omega` against the whole
/// database.
pub fn build_sampled_similarity(db_labels: &LabelMatrix, omega: &[usize]) -> Result<SimilarityBlock> {
    if let Some(&bad) = omega.iter().find(|&&i| i >= db_labels.len()) {
        return Err(Error::invalid(format!("query index {bad} out of range")));
    }
    let rows: Vec<Vec<u32>> = omega.iter().map(|&i| db_labels.row(i).to_vec()).collect();
    let signs = sign_block(&rows, db_labels)?;
    SimilarityBlock::from_signs(signs, omega.to_vec())
}

/// Sign rows of `query_rows` against `db_labels`, without bookkeeping.
pub(crate) fn sign_block(query_rows: &[Vec<u32>], db_labels: &LabelMatrix) -> Result<Array2<i8>> {
    if query_rows.is_empty() || db_labels.is_empty() {
        return Err(Error::invalid("label sets must be non-empty"));
    }
    if let Some(i) = query_rows.iter().position(|r| r.is_empty()) {
        return Err(Error::invalid(format!("query label row {i} is empty")));
    }
    let n = db_labels.len();
    let mut signs = Array2::from_elem((query_rows.len(), n), -1i8);
    for (i, q) in query_rows.iter().enumerate() {
        for j in 0..n {
            if labels_intersect(q, db_labels.row(j)) {
                signs[[i, j]] = 1;
            }
        }
    }
    Ok(signs)
}

/// Weight of pair `(i, j)`: 1 for similar pairs, the imbalance ratio for
/// dissimilar ones.
pub fn pair_weight(block: &SimilarityBlock, i: usize, j: usize) -> Result<f64> {
    if i >= block.query_count() || j >= block.db_count() {
        return Err(Error::invalid(format!(
            "pair ({i}, {j}) outside {}x{} block",
            block.query_count(),
            block.db_count()
        )));
    }
    Ok(if block.sign(i, j) > 0 { 1.0 } else { block.neg_weight })
}

/// `m` distinct indices drawn uniformly without replacement from `0..n`.
pub fn sample_query_indices(n: usize, m: usize, seed: u64) -> Result<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_query_indices_with(&mut rng, n, m)
}

pub fn sample_query_indices_with<R: Rng + ?Sized>(rng: &mut R, n: usize, m: usize) -> Result<Vec<usize>> {
    if m == 0 || m > n {
        return Err(Error::invalid(format!("cannot sample {m} query indices from {n} points")));
    }
    Ok(index::sample(rng, n, m).into_vec())
}
