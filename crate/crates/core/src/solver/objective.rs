use ndarray::{ArrayView2, Zip};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::simgraph::SimilarityBlock;

/// The database-code subproblem: relaxed query codes `u_tilde` (`m x c`)
/// held fixed against the supervision block.
#[derive(Clone, Copy, Debug)]
pub struct CodeProblem<'a, T> {
    pub u_tilde: ArrayView2<'a, T>,
    pub block: &'a SimilarityBlock,
    pub gamma: f64,
    /// Effective weight of dissimilar pairs (1 when weighting is off).
    pub neg_weight: f64,
}

impl<'a, T: Scalar> CodeProblem<'a, T> {
    pub fn new(u_tilde: ArrayView2<'a, T>, block: &'a SimilarityBlock, gamma: f64, weighting: bool) -> Result<Self> {
        if u_tilde.nrows() != block.query_count() {
            return Err(Error::dim("relaxed code rows", block.query_count(), u_tilde.nrows()));
        }
        if u_tilde.ncols() == 0 {
            return Err(Error::invalid("code length must be at least 1"));
        }
        if gamma.is_nan() || gamma < 0.0 {
            return Err(Error::invalid(format!("gamma {gamma} must be non-negative")));
        }
        let neg_weight = if weighting { block.neg_weight() } else { 1.0 };
        Ok(Self {
            u_tilde,
            block,
            gamma,
            neg_weight,
        })
    }

    pub fn code_len(&self) -> usize {
        self.u_tilde.ncols()
    }

    pub fn db_count(&self) -> usize {
        self.block.db_count()
    }

    pub fn has_unit_weights(&self) -> bool {
        self.neg_weight == 1.0
    }

    /// The regularizer only exists when queries are database rows.
    pub fn regularized(&self) -> bool {
        self.block.is_sampled()
    }

    pub(crate) fn check_codes(&self, v: ArrayView2<'_, T>) -> Result<()> {
        if v.dim() != (self.db_count(), self.code_len()) {
            return Err(Error::dim("database code rows", self.db_count(), v.nrows()));
        }
        Ok(())
    }
}

/// `sum_{i,j} w_ij (u_i.v_j - c S_ij)^2 + gamma sum_{i in Omega} |v_i - u_i|^2`,
/// accumulated in double precision. The regularizer is omitted for a
/// separate query set.
pub fn objective<T: Scalar>(problem: &CodeProblem<'_, T>, v: ArrayView2<'_, T>) -> Result<f64> {
    problem.check_codes(v)?;
    let u = problem.u_tilde.mapv(|x| x.as_f64());
    let v64 = v.mapv(|x| x.as_f64());
    let c = problem.code_len() as f64;
    let inner = u.dot(&v64.t());
    let mut total = 0.0;
    Zip::from(&inner).and(problem.block.signs()).for_each(|&p, &s| {
        let (w, target) = if s > 0 { (1.0, c) } else { (problem.neg_weight, -c) };
        total += w * (p - target) * (p - target);
    });
    if problem.regularized() {
        let mut reg = 0.0;
        for (row, &j) in problem.block.query_indices().iter().enumerate() {
            for (a, b) in v64.row(j).iter().zip(u.row(row)) {
                reg += (a - b) * (a - b);
            }
        }
        total += problem.gamma * reg;
    }
    Ok(total)
}
