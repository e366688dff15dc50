//! Exact bit-column updates of the database codes.
//!
//! For column `k`, every entry `V_jk` enters the objective linearly (all
//! other columns fixed, `V_jk^2 = 1`), so the minimizer is
//! `V_jk = -sign(a_jk)` with
//!
//! `a_jk = sum_i w_ij u_ik (u_i.v_j - u_ik V_jk) - c sum_i w_ij S_ij u_ik - gamma ubar_jk`
//!
//! where `ubar_j` is the relaxed code of `j` when it is a sampled query and
//! zero otherwise. With unit weights this is, up to a factor 2, the matrix
//! rule `-sign(2 Vhat_k Uhat_k^T U_k + Q_k)` with
//! `Q = -2c S^T U - 2 gamma Ubar`, which only needs the `c x c` Gram matrix.

use ndarray::{Array1, Array2, ArrayView2};

use super::objective::CodeProblem;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which arithmetic evaluates the column rule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum VStepRoute {
    /// Gram-matrix form when weights are unit, per-entry otherwise.
    #[default]
    Auto,
    /// Gram-matrix form; unit weights only.
    Matrix,
    /// Per-entry weighted form, maintaining all query/database inner products.
    PerEntry,
}

/// `-sign(a)` with `sign(0) = +1`.
#[inline]
fn neg_sign<T: Scalar>(a: T) -> T {
    if a >= T::zero() {
        -T::one()
    } else {
        T::one()
    }
}

enum Precomputed<T> {
    Matrix {
        gram: Array2<T>,
        q: Array2<T>,
    },
    PerEntry {
        /// `inner[j][i] = u_i . v_j`, kept current as columns change.
        inner: Array2<T>,
        /// Transposed signs, `n x m`.
        signs_t: Array2<i8>,
    },
}

/// Column solver with the per-sweep precomputation done once.
pub(crate) struct ColumnSolver<'p, 'a, T> {
    problem: &'p CodeProblem<'a, T>,
    /// Row of `u_tilde` owned by database point `j`, if any.
    owner: Vec<Option<usize>>,
    pre: Precomputed<T>,
}

impl<'p, 'a, T: Scalar> ColumnSolver<'p, 'a, T> {
    pub(crate) fn new(problem: &'p CodeProblem<'a, T>, v: ArrayView2<'_, T>, route: VStepRoute) -> Result<Self> {
        problem.check_codes(v)?;
        let n = problem.db_count();
        let mut owner = vec![None; n];
        if problem.regularized() {
            for (row, &j) in problem.block.query_indices().iter().enumerate() {
                owner[j] = Some(row);
            }
        }
        let use_matrix = match route {
            VStepRoute::Auto => problem.has_unit_weights(),
            VStepRoute::Matrix => {
                if !problem.has_unit_weights() {
                    return Err(Error::invalid("matrix-form column update needs unit pair weights"));
                }
                true
            }
            VStepRoute::PerEntry => false,
        };
        let u = problem.u_tilde;
        let pre = if use_matrix {
            let c = T::of(problem.code_len() as f64);
            let two = T::of(2.0);
            let gamma = T::of(problem.gamma);
            let s = problem.block.signs().mapv(|x| T::of(x as f64));
            let mut q = s.t().dot(&u);
            q.mapv_inplace(|x| -two * c * x);
            for (j, o) in owner.iter().enumerate() {
                if let Some(row) = *o {
                    for k in 0..problem.code_len() {
                        q[[j, k]] -= two * gamma * u[[row, k]];
                    }
                }
            }
            Precomputed::Matrix {
                gram: u.t().dot(&u),
                q,
            }
        } else {
            Precomputed::PerEntry {
                inner: v.dot(&u.t()),
                signs_t: problem.block.signs().t().as_standard_layout().to_owned(),
            }
        };
        Ok(Self { problem, owner, pre })
    }

    /// Replaces column `k` of `v` by its exact minimizer. Returns the number
    /// of entries that changed.
    pub(crate) fn solve(&mut self, v: &mut Array2<T>, k: usize) -> usize {
        let c = self.problem.code_len();
        assert!(k < c, "bit {k} out of range {c}");
        let u = self.problem.u_tilde;
        let n = self.problem.db_count();
        let mut flips = 0;
        match &mut self.pre {
            Precomputed::Matrix { gram, q } => {
                let two = T::of(2.0);
                for j in 0..n {
                    let mut acc = T::zero();
                    for l in 0..c {
                        if l != k {
                            acc += v[[j, l]] * gram[[l, k]];
                        }
                    }
                    let new = neg_sign(two * acc + q[[j, k]]);
                    if new != v[[j, k]] {
                        v[[j, k]] = new;
                        flips += 1;
                    }
                }
            }
            Precomputed::PerEntry { inner, signs_t } => {
                let m = u.nrows();
                let code_len = T::of(c as f64);
                let neg_w = T::of(self.problem.neg_weight);
                let gamma = T::of(self.problem.gamma);
                let col: Array1<T> = u.column(k).to_owned();
                for j in 0..n {
                    let old = v[[j, k]];
                    let mut a = T::zero();
                    let inner_j = inner.row(j);
                    let signs_j = signs_t.row(j);
                    for i in 0..m {
                        let (w, target) = if signs_j[i] > 0 {
                            (T::one(), code_len)
                        } else {
                            (neg_w, -code_len)
                        };
                        let uik = col[i];
                        a += w * uik * (inner_j[i] - uik * old - target);
                    }
                    if let Some(row) = self.owner[j] {
                        a -= gamma * u[[row, k]];
                    }
                    let new = neg_sign(a);
                    if new != old {
                        v[[j, k]] = new;
                        let delta = new - old;
                        let mut inner_j = inner.row_mut(j);
                        for i in 0..m {
                            inner_j[i] += col[i] * delta;
                        }
                        flips += 1;
                    }
                }
            }
        }
        flips
    }
}

/// Exact minimization over column `k` of `v` with every other column fixed.
pub fn v_step_column<T: Scalar>(
    problem: &CodeProblem<'_, T>,
    v: &mut Array2<T>,
    k: usize,
    route: VStepRoute,
) -> Result<()> {
    if k >= problem.code_len() {
        return Err(Error::invalid(format!("bit {k} out of range {}", problem.code_len())));
    }
    let mut solver = ColumnSolver::new(problem, v.view(), route)?;
    solver.solve(v, k);
    Ok(())
}

/// One sweep over all columns in order, each using the latest codes.
pub fn v_step<T: Scalar>(problem: &CodeProblem<'_, T>, v: &mut Array2<T>, route: VStepRoute) -> Result<()> {
    v_step_observed(problem, v, route, |_, _| {})
}

/// Like [`v_step`], calling `after_column(k, v)` after each column.
pub fn v_step_observed<T: Scalar>(
    problem: &CodeProblem<'_, T>,
    v: &mut Array2<T>,
    route: VStepRoute,
    mut after_column: impl FnMut(usize, &Array2<T>),
) -> Result<()> {
    let mut solver = ColumnSolver::new(problem, v.view(), route)?;
    for k in 0..problem.code_len() {
        solver.solve(v, k);
        after_column(k, v);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgraph::SimilarityBlock;
    use crate::solver::objective;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, c: usize, sampled: bool) -> (Array2<f64>, SimilarityBlock, Array2<f64>) {
        let u = Array2::from_shape_simple_fn((m, c), || rng.random_range(-0.99..0.99));
        let mut signs = Array2::from_shape_simple_fn((m, n), || if rng.random_bool(0.3) { 1i8 } else { -1 });
        signs[[0, 0]] = 1;
        signs[[0, 1 % n]] = -1;
        let omega = if sampled {
            rand::seq::index::sample(rng, n, m).into_vec()
        } else {
            Vec::new()
        };
        let block = SimilarityBlock::from_signs(signs, omega).unwrap();
        let v = Array2::from_shape_simple_fn((n, c), || if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        (u, block, v)
    }

    #[test]
    fn aligns_with_a_similar_query() {
        let u = array![[1.0, 1.0]];
        let signs = Array2::from_elem((1, 4), 1i8);
        let block = SimilarityBlock::from_signs(signs, Vec::new()).unwrap();
        let problem = CodeProblem::new(u.view(), &block, 0.0, true).unwrap();
        let mut v = Array2::from_elem((4, 2), -1.0);
        v_step_column(&problem, &mut v, 0, VStepRoute::Auto).unwrap();
        assert!(v.column(0).iter().all(|&x| x == 1.0));
    }

    #[test]
    fn zero_argument_maps_to_minus_one() {
        let u = array![[0.0, 0.0]];
        let signs = array![[1i8, -1]];
        let block = SimilarityBlock::from_signs(signs, Vec::new()).unwrap();
        let problem = CodeProblem::new(u.view(), &block, 0.0, false).unwrap();
        for route in [VStepRoute::Matrix, VStepRoute::PerEntry] {
            let mut v = Array2::from_elem((2, 2), 1.0);
            v_step_column(&problem, &mut v, 1, route).unwrap();
            assert_eq!(v.column(1).to_vec(), vec![-1.0, -1.0]);
        }
    }

    #[test]
    fn matrix_route_rejects_weights() {
        let u = array![[0.5]];
        let block = SimilarityBlock::from_signs(array![[1i8, -1, -1]], Vec::new()).unwrap();
        let problem = CodeProblem::new(u.view(), &block, 0.0, true).unwrap();
        let mut v = Array2::from_elem((3, 1), 1.0);
        assert!(v_step_column(&problem, &mut v, 0, VStepRoute::Matrix).is_err());
        assert!(v_step_column(&problem, &mut v, 1, VStepRoute::PerEntry).is_err());
    }

    #[test]
    fn columns_never_increase_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..40 {
            let (n, m, c) = (rng.random_range(2..30), rng.random_range(1..6), rng.random_range(1..9));
            let m = m.min(n);
            let (u, block, mut v) = random_instance(&mut rng, n, m, c, trial % 2 == 0);
            let gamma = [0.0, 1.0, 200.0][trial % 3];
            let problem = CodeProblem::new(u.view(), &block, gamma, trial % 4 < 2).unwrap();
            let mut last = objective(&problem, v.view()).unwrap();
            v_step_observed(&problem, &mut v, VStepRoute::Auto, |_, v| {
                let now = objective(&problem, v.view()).unwrap();
                assert!(now <= last + 1e-9, "{now} > {last}");
                last = now;
            })
            .unwrap();
        }
    }

    #[test]
    fn per_entry_matches_matrix_form_with_unit_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..30 {
            let (n, m, c) = (rng.random_range(5..60), rng.random_range(1..8), rng.random_range(1..20));
            let (u, block, v0) = random_instance(&mut rng, n, m.min(n), c, trial % 2 == 1);
            let problem = CodeProblem::new(u.view(), &block, 3.0, false).unwrap();
            let (mut a, mut b) = (v0.clone(), v0);
            v_step(&problem, &mut a, VStepRoute::Matrix).unwrap();
            v_step(&problem, &mut b, VStepRoute::PerEntry).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn sweeps_reach_a_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let (n, c) = (rng.random_range(2..9), rng.random_range(1..5));
            let (u, block, mut v) = random_instance(&mut rng, n, 2.min(n), c, true);
            let problem = CodeProblem::new(u.view(), &block, 1.0, true).unwrap();
            let mut j_prev = objective(&problem, v.view()).unwrap();
            let mut prev_change = f64::INFINITY;
            let mut fixed = false;
            for sweep in 0..(c * n) {
                let before = v.clone();
                v_step(&problem, &mut v, VStepRoute::Auto).unwrap();
                let j = objective(&problem, v.view()).unwrap();
                let change = j_prev - j;
                assert!(change >= -1e-9);
                if sweep == 1 {
                    assert!(change <= prev_change + 1e-9);
                }
                prev_change = change;
                j_prev = j;
                if before == v {
                    fixed = true;
                    break;
                }
            }
            assert!(fixed);
        }
    }

    #[test]
    fn single_bit_sweep_equals_column_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let (u, block, v0) = random_instance(&mut rng, 12, 3, 1, true);
        let problem = CodeProblem::new(u.view(), &block, 2.0, true).unwrap();
        let (mut a, mut b) = (v0.clone(), v0);
        v_step(&problem, &mut a, VStepRoute::Auto).unwrap();
        v_step_column(&problem, &mut b, 0, VStepRoute::Auto).unwrap();
        assert_eq!(a, b);
    }
}
