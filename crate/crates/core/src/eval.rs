//! Hamming ranking and retrieval metrics.

use std::io::Write;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hashcore::{xor_popcount, CodeMatrix};
use crate::simgraph::{labels_intersect, LabelMatrix};

/// Database indices per query, by ascending Hamming distance; ties keep
/// ascending index order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ranking {
    db_count: usize,
    orders: Vec<Vec<u32>>,
}

impl Ranking {
    pub fn query_count(&self) -> usize {
        self.orders.len()
    }

    pub fn db_count(&self) -> usize {
        self.db_count
    }

    pub fn order(&self, query: usize) -> &[u32] {
        &self.orders[query]
    }
}

fn check_code_lens(query_codes: &CodeMatrix, db_codes: &CodeMatrix) -> Result<()> {
    if query_codes.code_len() != db_codes.code_len() {
        return Err(Error::dim("code length", db_codes.code_len(), query_codes.code_len()));
    }
    Ok(())
}

fn distances_into(query_codes: &CodeMatrix, q: usize, db_codes: &CodeMatrix, out: &mut Vec<u32>) {
    let qw = query_codes.row(q).words();
    out.clear();
    out.extend((0..db_codes.rows()).map(|j| xor_popcount(qw, db_codes.row(j).words())));
}

/// Counting sort over the `c + 1` possible distances.
pub fn rank_by_hamming(query_codes: &CodeMatrix, db_codes: &CodeMatrix) -> Result<Ranking> {
    check_code_lens(query_codes, db_codes)?;
    let c = db_codes.code_len();
    let n = db_codes.rows();
    let mut dist = Vec::with_capacity(n);
    let mut starts = vec![0usize; c + 2];
    let mut orders = Vec::with_capacity(query_codes.rows());
    for q in 0..query_codes.rows() {
        distances_into(query_codes, q, db_codes, &mut dist);
        starts.iter_mut().for_each(|s| *s = 0);
        for &d in &dist {
            starts[d as usize + 1] += 1;
        }
        for r in 1..starts.len() {
            starts[r] += starts[r - 1];
        }
        let mut order = vec![0u32; n];
        for (j, &d) in dist.iter().enumerate() {
            order[starts[d as usize]] = j as u32;
            starts[d as usize] += 1;
        }
        orders.push(order);
    }
    Ok(Ranking { db_count: n, orders })
}

/// Query-by-database ground-truth relevance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relevance {
    matrix: Array2<bool>,
}

impl Relevance {
    pub fn new(matrix: Array2<bool>) -> Self {
        Self { matrix }
    }

    /// Relevant when the label sets intersect.
    pub fn from_labels(query_labels: &LabelMatrix, db_labels: &LabelMatrix) -> Self {
        let (q, n) = (query_labels.len(), db_labels.len());
        let matrix = Array2::from_shape_fn((q, n), |(i, j)| labels_intersect(query_labels.row(i), db_labels.row(j)));
        Self { matrix }
    }

    pub fn query_count(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn db_count(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_relevant(&self, query: usize, db: usize) -> bool {
        self.matrix[[query, db]]
    }

    pub fn relevant_count(&self, query: usize) -> usize {
        self.matrix.row(query).iter().filter(|&&r| r).count()
    }
}

fn check_shapes(ranking_queries: usize, ranking_db: usize, rel: &Relevance) -> Result<()> {
    if rel.query_count() != ranking_queries {
        return Err(Error::dim("relevance rows", ranking_queries, rel.query_count()));
    }
    if rel.db_count() != ranking_db {
        return Err(Error::dim("relevance columns", ranking_db, rel.db_count()));
    }
    Ok(())
}

/// Average precision of one query over the top `cutoff` items, normalised
/// by `min(#relevant, cutoff)`. Zero when nothing is relevant.
pub fn average_precision(order: &[u32], rel: &Relevance, query: usize, cutoff: Option<usize>) -> f64 {
    let total = rel.relevant_count(query);
    let depth = cutoff.unwrap_or(order.len()).min(order.len());
    let denom = total.min(cutoff.unwrap_or(usize::MAX));
    if denom == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &j) in order[..depth].iter().enumerate() {
        if rel.is_relevant(query, j as usize) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    sum / denom as f64
}

pub fn mean_average_precision(ranking: &Ranking, rel: &Relevance, cutoff: Option<usize>) -> Result<f64> {
    if cutoff == Some(0) {
        return Err(Error::invalid("MAP cutoff must be at least 1"));
    }
    check_shapes(ranking.query_count(), ranking.db_count(), rel)?;
    if ranking.query_count() == 0 {
        return Err(Error::invalid("no queries to evaluate"));
    }
    let sum: f64 = (0..ranking.query_count())
        .map(|q| average_precision(ranking.order(q), rel, q, cutoff))
        .sum();
    Ok(sum / ranking.query_count() as f64)
}

/// Mean precision@k for `k = 1..=k_max`.
pub fn topk_precision_curve(ranking: &Ranking, rel: &Relevance, k_max: usize) -> Result<Vec<f64>> {
    check_shapes(ranking.query_count(), ranking.db_count(), rel)?;
    if k_max > ranking.db_count() {
        return Err(Error::invalid(format!(
            "k_max {k_max} exceeds database size {}",
            ranking.db_count()
        )));
    }
    if ranking.query_count() == 0 {
        return Err(Error::invalid("no queries to evaluate"));
    }
    let mut curve = vec![0.0; k_max];
    for q in 0..ranking.query_count() {
        let mut hits = 0usize;
        for (k, &j) in ranking.order(q)[..k_max].iter().enumerate() {
            hits += rel.is_relevant(q, j as usize) as usize;
            curve[k] += hits as f64 / (k + 1) as f64;
        }
    }
    let nq = ranking.query_count() as f64;
    curve.iter_mut().for_each(|p| *p /= nq);
    Ok(curve)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadiusPoint {
    pub radius: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Mean precision and recall of the Hamming ball of each radius `0..=c`.
/// An empty ball has precision 1; a query with no relevant items has
/// recall 1.
pub fn precision_recall_by_radius(
    query_codes: &CodeMatrix,
    db_codes: &CodeMatrix,
    rel: &Relevance,
) -> Result<Vec<RadiusPoint>> {
    check_code_lens(query_codes, db_codes)?;
    check_shapes(query_codes.rows(), db_codes.rows(), rel)?;
    let nq = query_codes.rows();
    if nq == 0 {
        return Err(Error::invalid("no queries to evaluate"));
    }
    let c = db_codes.code_len();
    let mut precision = vec![0.0; c + 1];
    let mut recall = vec![0.0; c + 1];
    let mut dist = Vec::with_capacity(db_codes.rows());
    for q in 0..nq {
        distances_into(query_codes, q, db_codes, &mut dist);
        let mut retrieved = vec![0usize; c + 1];
        let mut relevant = vec![0usize; c + 1];
        for (j, &d) in dist.iter().enumerate() {
            retrieved[d as usize] += 1;
            relevant[d as usize] += rel.is_relevant(q, j) as usize;
        }
        let total = rel.relevant_count(q);
        let (mut got, mut hit) = (0usize, 0usize);
        for r in 0..=c {
            got += retrieved[r];
            hit += relevant[r];
            precision[r] += if got == 0 { 1.0 } else { hit as f64 / got as f64 };
            recall[r] += if total == 0 { 1.0 } else { hit as f64 / total as f64 };
        }
    }
    Ok((0..=c)
        .map(|r| RadiusPoint {
            radius: r,
            precision: precision[r] / nq as f64,
            recall: recall[r] / nq as f64,
        })
        .collect())
}

/// Rows of `metric,param,value`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<(String, String, String)>,
}

impl MetricsTable {
    pub fn push(&mut self, metric: &str, param: impl ToString, value: impl ToString) {
        self.rows.push((metric.to_string(), param.to_string(), value.to_string()));
    }

    /// Conventions that affect how the numbers should be read.
    pub fn push_metadata(&mut self, cutoff: Option<usize>) {
        self.push("meta", "map_cutoff", cutoff.map_or("none".to_string(), |r| r.to_string()));
        self.push("meta", "ap_normalization", "min_relevant_cutoff");
        self.push("meta", "zero_relevant_ap", 0);
        self.push("meta", "empty_ball_precision", 1);
        self.push("meta", "zero_relevant_recall", 1);
        self.push("meta", "tie_order", "ascending_db_index");
    }

    pub fn get(&self, metric: &str, param: &str) -> Option<&str> {
        self.rows
            .iter()
            .find(|(m, p, _)| m == metric && p == param)
            .map(|(_, _, v)| v.as_str())
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut writer = csv::Writer::from_writer(w);
        writer
            .write_record(["metric", "param", "value"])
            .map_err(csv_err)?;
        for (m, p, v) in &self.rows {
            writer.write_record([m, p, v]).map_err(csv_err)?;
        }
        writer.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    crate::error::FormatError::Csv(e.to_string()).into()
}

/// Two-column CSV for plotting.
pub fn write_curve_csv<W: Write>(w: W, header: [&str; 2], points: &[(f64, f64)]) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(header).map_err(csv_err)?;
    for (x, y) in points {
        writer.write_record([x.to_string(), y.to_string()]).map_err(csv_err)?;
    }
    writer.flush()?;
    Ok(())
}
