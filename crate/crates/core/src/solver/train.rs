use std::fmt::Debug;
use std::io::Write;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{objective, CodeProblem};
use super::vstep::{ColumnSolver, VStepRoute};
use super::Stopwatch;
use crate::encoder::{minibatch_step, relaxed_outputs, BatchTarget, Encoder, Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::hashcore::CodeMatrix;
use crate::scalar::Scalar;
use crate::simgraph::{build_sampled_similarity, build_similarity, sample_query_indices_with, LabelMatrix, SimilarityBlock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Queries are resampled database rows each outer iteration, with the
    /// regularizer tying their codes to the encoder outputs.
    AsymmetricSampled,
    /// A fixed, separate query set; no regularizer.
    AsymmetricSeparateQueries,
    /// One encoder for both sides; see [`super::train_symmetric_baseline`].
    SymmetricBaseline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub code_len: usize,
    pub gamma: f64,
    /// `|Omega|`, the number of sampled query rows.
    pub query_count: usize,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub mode: TrainMode,
    pub imbalance_weighting: bool,
    /// Hidden layer widths of the encoder.
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            code_len: 12,
            gamma: 200.0,
            query_count: 1000,
            outer_iters: 50,
            inner_iters: 3,
            batch_size: 128,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Sgd,
            seed: 0,
            mode: TrainMode::AsymmetricSampled,
            imbalance_weighting: true,
            hidden: vec![512],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.code_len == 0 {
            return Err(Error::invalid("code length must be at least 1"));
        }
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::invalid(format!("gamma {} must be finite and non-negative", self.gamma)));
        }
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(Error::invalid("iteration counts must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.mode == TrainMode::AsymmetricSampled && self.batch_size > self.query_count {
            return Err(Error::invalid(format!(
                "batch size {} exceeds query count {}",
                self.batch_size, self.query_count
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::invalid(format!("learning rate {} is invalid", self.learning_rate)));
        }
        if self.hidden.contains(&0) {
            return Err(Error::invalid("hidden layer widths must be positive"));
        }
        Ok(())
    }

    pub(crate) fn encoder_dims(&self, input: usize) -> Vec<usize> {
        std::iter::once(input)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.code_len))
            .collect()
    }
}

/// RNG streams derived from the seed, one per purpose, so that changing
/// how one is consumed never shifts another.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub(crate) const INIT_STREAM: u64 = 0;
pub(crate) const OMEGA_STREAM: u64 = 1;
pub(crate) const BATCH_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug)]
pub struct QuerySet<'a, T> {
    pub features: ArrayView2<'a, T>,
    pub labels: &'a LabelMatrix,
}

#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a, T> {
    pub db_features: ArrayView2<'a, T>,
    pub db_labels: &'a LabelMatrix,
    /// Separate training queries; required by
    /// [`TrainMode::AsymmetricSeparateQueries`].
    pub queries: Option<QuerySet<'a, T>>,
}

impl<'a, T: Scalar> TrainData<'a, T> {
    pub fn new(db_features: ArrayView2<'a, T>, db_labels: &'a LabelMatrix) -> Self {
        Self {
            db_features,
            db_labels,
            queries: None,
        }
    }

    pub fn with_queries(mut self, features: ArrayView2<'a, T>, labels: &'a LabelMatrix) -> Self {
        self.queries = Some(QuerySet { features, labels });
        self
    }

    fn validate(&self, config: &TrainConfig) -> Result<()> {
        let n = self.db_features.nrows();
        if n == 0 || self.db_features.ncols() == 0 {
            return Err(Error::invalid("database features are empty"));
        }
        if self.db_labels.len() != n {
            return Err(Error::dim("database labels", n, self.db_labels.len()));
        }
        match config.mode {
            TrainMode::AsymmetricSampled => {
                if config.query_count == 0 || config.query_count > n {
                    return Err(Error::invalid(format!(
                        "query count {} must be in 1..={n}",
                        config.query_count
                    )));
                }
            }
            TrainMode::AsymmetricSeparateQueries => {
                let q = self
                    .queries
                    .ok_or_else(|| Error::invalid("separate-query mode needs a query set"))?;
                if q.features.ncols() != self.db_features.ncols() {
                    return Err(Error::dim("query feature dimension", self.db_features.ncols(), q.features.ncols()));
                }
                if q.labels.len() != q.features.nrows() || q.labels.is_empty() {
                    return Err(Error::dim("query labels", q.features.nrows(), q.labels.len()));
                }
            }
            TrainMode::SymmetricBaseline => {
                return Err(Error::invalid("use train_symmetric_baseline for the symmetric mode"));
            }
        }
        if !self.db_features.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("database features".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    /// After the encoder steps of an inner iteration.
    Theta,
    /// After the bit-column sweep.
    VStep,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Theta => "theta",
            Phase::VStep => "v",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRecord {
    pub outer: usize,
    pub inner: usize,
    pub phase: Phase,
    pub objective: f64,
    /// Cumulative training time, excluding objective evaluation and
    /// observer callbacks.
    pub seconds: f64,
}

/// Writes `outer,inner,phase,J,seconds` lines with a header.
pub fn write_history_csv<W: Write>(mut w: W, history: &[HistoryRecord]) -> std::io::Result<()> {
    writeln!(w, "outer,inner,phase,J,seconds")?;
    for r in history {
        writeln!(w, "{},{},{},{:e},{:.6}", r.outer, r.inner, r.phase.as_str(), r.objective, r.seconds)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub model: Encoder<T>,
    /// Database codes as a dense ±1 matrix, `n x c`.
    pub v: Array2<T>,
    /// Database rows used as queries in the latest outer iteration; empty
    /// with a separate query set.
    pub omega: Vec<usize>,
    /// `tanh` outputs for the query rows, refreshed after every encoder phase.
    pub u_tilde: Array2<T>,
    pub history: Vec<HistoryRecord>,
}

impl<T: Scalar> TrainState<T> {
    /// Encoder and codes as initialized from the seed.
    pub fn init(input_dim: usize, db_count: usize, config: &TrainConfig) -> Result<Self> {
        let mut rng = stream_rng(config.seed, INIT_STREAM);
        let model = Encoder::new(&config.encoder_dims(input_dim), &mut rng)?;
        let v = Array2::from_shape_simple_fn((db_count, config.code_len), || {
            if rng.random_bool(0.5) {
                T::one()
            } else {
                -T::one()
            }
        });
        Ok(Self {
            model,
            v,
            omega: Vec::new(),
            u_tilde: Array2::zeros((0, config.code_len)),
            history: Vec::new(),
        })
    }

    /// Packed database codes.
    pub fn codes(&self) -> CodeMatrix {
        CodeMatrix::from_dense(self.v.view()).expect("database codes are ±1")
    }
}

/// Hooks into a training run. Time spent here is not counted as training
/// time.
pub trait TrainObserver<T> {
    /// Request the objective before and after every column update.
    fn track_columns(&self) -> bool {
        false
    }

    fn on_column(&mut self, _outer: usize, _inner: usize, _bit: usize, _before: f64, _after: f64) {}

    fn on_record(&mut self, _record: &HistoryRecord) {}

    fn on_outer_end(&mut self, _outer: usize, _state: &TrainState<T>) {}
}

impl<T> TrainObserver<T> for () {}

#[derive(Debug, thiserror::Error)]
pub enum TrainError<T: Debug> {
    #[error(transparent)]
    Invalid(#[from] Error),
    #[error("numeric failure at outer iteration {outer}, inner iteration {inner}: {source}")]
    Numeric {
        outer: usize,
        inner: usize,
        source: Error,
        /// State at the end of the last completed inner iteration.
        last_good: Box<TrainState<T>>,
    },
}

pub fn train<T: Scalar>(data: &TrainData<'_, T>, config: &TrainConfig) -> Result<TrainState<T>, TrainError<T>> {
    train_observed(data, config, &mut ())
}

pub fn train_observed<T: Scalar, O: TrainObserver<T>>(
    data: &TrainData<'_, T>,
    config: &TrainConfig,
    observer: &mut O,
) -> Result<TrainState<T>, TrainError<T>> {
    config.validate()?;
    data.validate(config)?;
    let n = data.db_features.nrows();
    let mut state = TrainState::init(data.db_features.ncols(), n, config)?;
    let mut optimizer = Optimizer::new(config.learning_rate, config.optimizer)?;
    let mut omega_rng = stream_rng(config.seed, OMEGA_STREAM);
    let mut batch_rng = stream_rng(config.seed, BATCH_STREAM);
    let mut clock = Stopwatch::default();
    let mut last_good = state.clone();

    let separate = match (config.mode, data.queries) {
        (TrainMode::AsymmetricSeparateQueries, Some(q)) => Some((build_similarity(q.labels, data.db_labels)?, q.features)),
        _ => None,
    };

    for outer in 0..config.outer_iters {
        clock.start();
        let sampled_block;
        let sampled_x;
        let (block, x_query): (&SimilarityBlock, ArrayView2<'_, T>) = match &separate {
            Some((block, x)) => (block, *x),
            None => {
                state.omega = sample_query_indices_with(&mut omega_rng, n, config.query_count)?;
                sampled_block = build_sampled_similarity(data.db_labels, &state.omega)?;
                sampled_x = data.db_features.select(Axis(0), &state.omega);
                (&sampled_block, sampled_x.view())
            }
        };
        let neg_weight = if config.imbalance_weighting { block.neg_weight() } else { 1.0 };
        let m = block.query_count();
        // Per-pair mean keeps the step size independent of n and the batch size.
        let pair_scale = 1.0 / (m.min(config.batch_size) * n) as f64;

        for inner in 0..config.inner_iters {
            let fail = |source: Error, good: &TrainState<T>| TrainError::Numeric {
                outer,
                inner,
                source,
                last_good: Box::new(good.clone()),
            };
            clock.start();
            let mut order: Vec<usize> = (0..m).collect();
            order.shuffle(&mut batch_rng);
            for chunk in order.chunks(config.batch_size) {
                let x = x_query.select(Axis(0), chunk);
                let signs = block.signs().select(Axis(0), chunk);
                let own = if block.is_sampled() {
                    let rows: Vec<usize> = chunk.iter().map(|&p| state.omega[p]).collect();
                    Some(state.v.select(Axis(0), &rows))
                } else {
                    None
                };
                let target = BatchTarget {
                    db: state.v.view(),
                    signs: signs.view(),
                    neg_weight: T::of(neg_weight),
                    own: own.as_ref().map(|o| o.view()),
                    gamma: T::of(config.gamma),
                    scale: T::of(pair_scale),
                };
                minibatch_step(&mut state.model, &mut optimizer, x.view(), &target)
                    .map_err(|e| fail(e, &last_good))?;
            }
            state.u_tilde = relaxed_outputs(&state.model, x_query).map_err(|e| fail(e, &last_good))?;
            clock.stop();

            let problem = CodeProblem::new(state.u_tilde.view(), block, config.gamma, config.imbalance_weighting)?;
            let j_theta = objective(&problem, state.v.view())?;
            if !j_theta.is_finite() {
                return Err(fail(Error::NonFinite(format!("objective {j_theta}")), &last_good));
            }
            record(&mut state.history, observer, outer, inner, Phase::Theta, j_theta, clock.seconds());

            clock.start();
            let mut solver = ColumnSolver::new(&problem, state.v.view(), VStepRoute::Auto)?;
            let track = observer.track_columns();
            let mut before = j_theta;
            for k in 0..config.code_len {
                solver.solve(&mut state.v, k);
                if track {
                    clock.stop();
                    let after = objective(&problem, state.v.view())?;
                    observer.on_column(outer, inner, k, before, after);
                    before = after;
                    clock.start();
                }
            }
            clock.stop();
            let j_v = objective(&problem, state.v.view())?;
            if !j_v.is_finite() {
                return Err(fail(Error::NonFinite(format!("objective {j_v}")), &last_good));
            }
            record(&mut state.history, observer, outer, inner, Phase::VStep, j_v, clock.seconds());
            last_good = state.clone();
        }
        observer.on_outer_end(outer, &state);
    }
    Ok(state)
}

fn record<T, O: TrainObserver<T>>(
    history: &mut Vec<HistoryRecord>,
    observer: &mut O,
    outer: usize,
    inner: usize,
    phase: Phase,
    objective: f64,
    seconds: f64,
) {
    let r = HistoryRecord {
        outer,
        inner,
        phase,
        objective,
        seconds,
    };
    observer.on_record(&r);
    history.push(r);
}
