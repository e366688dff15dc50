//! Brute-force reference computations for tests.
//!
//! Nothing here shares arithmetic with the solver: weights, the objective
//! and the column minimum are recomputed with plain loops.

use ndarray::{Array2, ArrayView2};
use rand::Rng;

use crate::encoder::Encoder;
use crate::error::{Error, Result};
use crate::simgraph::SimilarityBlock;

pub const MAX_DB: usize = 12;
pub const MAX_QUERIES: usize = 6;
pub const MAX_BITS: usize = 6;

/// A code subproblem small enough to enumerate.
#[derive(Clone, Debug, PartialEq)]
pub struct TinyInstance {
    /// Relaxed query codes, `m x c`.
    pub u_tilde: Array2<f64>,
    /// Similarity signs, `m x n`.
    pub signs: Array2<i8>,
    /// Database rows of the queries; empty for a separate query set.
    pub query_indices: Vec<usize>,
    pub weighting: bool,
    pub gamma: f64,
    /// Current database codes, `n x c`, entries ±1.
    pub v: Array2<f64>,
}

impl TinyInstance {
    pub fn check(&self) -> Result<()> {
        let (m, c) = self.u_tilde.dim();
        let n = self.v.nrows();
        if n > MAX_DB || m > MAX_QUERIES || c > MAX_BITS {
            return Err(Error::invalid(format!(
                "instance {n}x{m}x{c} exceeds the enumeration caps {MAX_DB}x{MAX_QUERIES}x{MAX_BITS}"
            )));
        }
        if self.signs.dim() != (m, n) {
            return Err(Error::dim("sign rows", m, self.signs.nrows()));
        }
        if self.v.ncols() != c {
            return Err(Error::dim("code length", c, self.v.ncols()));
        }
        if !self.query_indices.is_empty() && self.query_indices.len() != m {
            return Err(Error::dim("query indices", m, self.query_indices.len()));
        }
        Ok(())
    }

    /// Random instance; `sampled` makes the queries distinct database rows
    /// whose own pairs are similar.
    pub fn random<R: Rng + ?Sized>(
        rng: &mut R,
        n: usize,
        m: usize,
        c: usize,
        gamma: f64,
        weighting: bool,
        sampled: bool,
    ) -> Self {
        let u_tilde = Array2::from_shape_simple_fn((m, c), || rng.random_range(-1.0..1.0));
        let mut signs = Array2::from_shape_simple_fn((m, n), || if rng.random_bool(0.4) { 1 } else { -1 });
        let v = Array2::from_shape_simple_fn((n, c), || if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        let query_indices = if sampled {
            let idx = rand::seq::index::sample(rng, n, m).into_vec();
            for (i, &j) in idx.iter().enumerate() {
                signs[[i, j]] = 1;
            }
            idx
        } else {
            Vec::new()
        };
        Self {
            u_tilde,
            signs,
            query_indices,
            weighting,
            gamma,
            v,
        }
    }

    /// The same instance as a solver similarity block.
    pub fn block(&self) -> Result<SimilarityBlock> {
        SimilarityBlock::from_signs(self.signs.clone(), self.query_indices.clone())
    }

    /// `#similar / #dissimilar`, counted entry by entry; 1 when weighting is
    /// off or either class is empty.
    pub fn neg_weight(&self) -> f64 {
        if !self.weighting {
            return 1.0;
        }
        let mut pos = 0usize;
        let mut neg = 0usize;
        for &s in self.signs.iter() {
            if s == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        if pos == 0 || neg == 0 {
            1.0
        } else {
            pos as f64 / neg as f64
        }
    }
}

/// The objective by explicit loops over queries, database points and bits.
pub fn naive_objective(inst: &TinyInstance) -> f64 {
    naive_objective_with(inst, inst.v.view())
}

fn naive_objective_with(inst: &TinyInstance, v: ArrayView2<'_, f64>) -> f64 {
    let (m, c) = inst.u_tilde.dim();
    let n = v.nrows();
    let rho = inst.neg_weight();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..n {
            let mut dot = 0.0;
            for k in 0..c {
                dot += inst.u_tilde[[i, k]] * v[[j, k]];
            }
            let s = inst.signs[[i, j]] as f64;
            let w = if s > 0.0 { 1.0 } else { rho };
            let r = dot - c as f64 * s;
            total += w * r * r;
        }
    }
    for (i, &j) in inst.query_indices.iter().enumerate() {
        for k in 0..c {
            let d = v[[j, k]] - inst.u_tilde[[i, k]];
            total += inst.gamma * d * d;
        }
    }
    total
}

/// Best replacement for column `k` of the current codes over all `2^n`
/// candidates. Candidates are visited in lexicographic order with +1 before
/// -1 and only a strictly lower value replaces the incumbent.
pub fn exhaustive_column_min(inst: &TinyInstance, k: usize) -> Result<(Vec<i8>, f64)> {
    inst.check()?;
    let (n, c) = inst.v.dim();
    if k >= c {
        return Err(Error::invalid(format!("bit {k} out of range {c}")));
    }
    let mut v = inst.v.clone();
    let mut best: Option<(Vec<i8>, f64)> = None;
    for mask in 0u32..(1 << n) {
        let column: Vec<i8> = (0..n)
            .map(|j| if mask >> (n - 1 - j) & 1 == 0 { 1 } else { -1 })
            .collect();
        for (j, &s) in column.iter().enumerate() {
            v[[j, k]] = s as f64;
        }
        let value = naive_objective_with(inst, v.view());
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((column, value));
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Central differences `(L(p + h e_t) - L(p - h e_t)) / 2h` for every
/// parameter `t`.
pub fn finite_difference_grad(params: &[f64], mut loss: impl FnMut(&[f64]) -> f64, h: f64) -> Result<Vec<f64>> {
    if !h.is_finite() || h <= 0.0 {
        return Err(Error::invalid(format!("step {h} must be positive")));
    }
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(p.len());
    for t in 0..p.len() {
        let orig = p[t];
        p[t] = orig + h;
        let up = loss(&p);
        p[t] = orig - h;
        let down = loss(&p);
        p[t] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss at perturbed parameter {t}")));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

/// Encoder loss of a batch against fixed database codes, evaluated point by
/// point through [`Encoder::forward`]:
/// `sum_i sum_j w_ij (u_i.v_j - c S_ij)^2 + gamma |own_i - u_i|^2`.
pub fn naive_batch_loss(
    model: &Encoder<f64>,
    x: ArrayView2<'_, f64>,
    db: ArrayView2<'_, f64>,
    signs: ArrayView2<'_, i8>,
    neg_weight: f64,
    own: Option<ArrayView2<'_, f64>>,
    gamma: f64,
) -> Result<f64> {
    let c = model.code_len();
    let mut total = 0.0;
    for i in 0..x.nrows() {
        let (_, u) = model.forward(x.row(i))?;
        for j in 0..db.nrows() {
            let mut dot = 0.0;
            for k in 0..c {
                dot += u[k] * db[[j, k]];
            }
            let s = signs[[i, j]] as f64;
            let w = if s > 0.0 { 1.0 } else { neg_weight };
            total += w * (dot - c as f64 * s).powi(2);
        }
        if let Some(own) = own {
            for k in 0..c {
                total += gamma * (own[[i, k]] - u[k]).powi(2);
            }
        }
    }
    Ok(total)
}
