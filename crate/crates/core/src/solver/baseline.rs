//! Symmetric pairwise trainer used as the scaling and accuracy contrast.
//!
//! One encoder produces relaxed codes for both sides of every pair. Each
//! epoch scans all training points; every minibatch point is paired with
//! every training point through a buffer of relaxed codes that is refreshed
//! as batches pass, so an epoch costs `O(t^2 c)` for `t` training points.
//! Database codes are produced afterwards by encoding every database point.

use std::time::Duration;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;

use super::train::{stream_rng, HistoryRecord, Phase, TrainConfig, BATCH_STREAM, INIT_STREAM, OMEGA_STREAM};
use super::Stopwatch;
use crate::encoder::{batch_loss_grad_z, encode_queries, relaxed_outputs, BatchTarget, Encoder, Optimizer};
use crate::error::{Error, Result};
use crate::hashcore::CodeMatrix;
use crate::scalar::Scalar;
use crate::simgraph::{labels_intersect, sample_query_indices_with, sign_block, LabelMatrix};

#[derive(Clone, Debug, PartialEq)]
pub struct BaselineConfig {
    /// Shared hyperparameters; `outer_iters` is the number of epochs and
    /// `gamma`, `query_count`, `inner_iters` are unused.
    pub train: TrainConfig,
    /// Size of the random training subset; `None` trains on every database
    /// point (all-pairs supervision).
    pub train_points: Option<usize>,
    /// Stop after the first epoch that ends past this much training time.
    pub time_budget: Option<Duration>,
}

#[derive(Clone, Debug)]
pub struct BaselineOutput<T> {
    pub model: Encoder<T>,
    pub db_codes: CodeMatrix,
    pub train_indices: Vec<usize>,
    /// One record per epoch: summed batch loss and cumulative time.
    pub history: Vec<HistoryRecord>,
}

/// `#similar / #dissimilar` over all ordered pairs of `labels`, 1 if either
/// class is empty.
fn pair_ratio(labels: &LabelMatrix) -> f64 {
    let t = labels.len() as u128;
    let positives: u128 = if labels.is_single_label() {
        let mut counts = std::collections::HashMap::<u32, u128>::new();
        for r in labels.rows() {
            *counts.entry(r[0]).or_default() += 1;
        }
        counts.values().map(|c| c * c).sum()
    } else {
        let rows = labels.rows();
        let mut p = 0u128;
        for a in rows {
            for b in rows {
                p += labels_intersect(a, b) as u128;
            }
        }
        p
    };
    let negatives = t * t - positives;
    if positives == 0 || negatives == 0 {
        1.0
    } else {
        positives as f64 / negatives as f64
    }
}

pub fn train_symmetric_baseline<T: Scalar>(
    db_features: ArrayView2<'_, T>,
    db_labels: &LabelMatrix,
    config: &BaselineConfig,
    mut on_epoch: impl FnMut(usize, &Encoder<T>, f64),
) -> Result<BaselineOutput<T>> {
    let cfg = &config.train;
    if cfg.code_len == 0 || cfg.outer_iters == 0 || cfg.batch_size == 0 {
        return Err(Error::invalid("code length, epochs and batch size must be at least 1"));
    }
    if cfg.learning_rate.is_nan() || cfg.learning_rate < 0.0 {
        return Err(Error::invalid("learning rate must be non-negative"));
    }
    let n = db_features.nrows();
    if n == 0 || db_labels.len() != n {
        return Err(Error::dim("database labels", n, db_labels.len()));
    }
    let train_indices = match config.train_points {
        Some(t) => {
            let mut rng = stream_rng(cfg.seed, OMEGA_STREAM);
            let mut idx = sample_query_indices_with(&mut rng, n, t)?;
            idx.sort_unstable();
            idx
        }
        None => (0..n).collect(),
    };
    let x_train = db_features.select(Axis(0), &train_indices);
    let labels = db_labels.select(&train_indices);
    let t = train_indices.len();
    let neg_weight = if cfg.imbalance_weighting { pair_ratio(&labels) } else { 1.0 };
    let pair_scale = 1.0 / (cfg.batch_size.min(t) * t) as f64;

    let mut init_rng = stream_rng(cfg.seed, INIT_STREAM);
    let mut model = Encoder::new(&cfg.encoder_dims(db_features.ncols()), &mut init_rng)?;
    let mut optimizer = Optimizer::new(cfg.learning_rate, cfg.optimizer)?;
    let mut batch_rng = stream_rng(cfg.seed, BATCH_STREAM);
    let mut buffer = relaxed_outputs(&model, x_train.view())?;
    let mut clock = Stopwatch::default();
    let mut history = Vec::new();

    for epoch in 0..cfg.outer_iters {
        clock.start();
        let mut order: Vec<usize> = (0..t).collect();
        order.shuffle(&mut batch_rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let x = x_train.select(Axis(0), chunk);
            let rows: Vec<Vec<u32>> = chunk.iter().map(|&p| labels.row(p).to_vec()).collect();
            let signs = sign_block(&rows, &labels)?;
            let pass = model.forward_batch(x.view())?;
            let target = BatchTarget {
                db: buffer.view(),
                signs: signs.view(),
                neg_weight: T::of(neg_weight),
                own: None,
                gamma: T::zero(),
                scale: T::of(pair_scale),
            };
            let (loss, grad_z) = batch_loss_grad_z(pass.u.view(), &target)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("baseline loss at epoch {epoch}")));
            }
            let grads = model.backward(&pass, grad_z.view())?;
            if !grads.is_finite() {
                return Err(Error::NonFinite(format!("baseline gradient at epoch {epoch}")));
            }
            optimizer.apply(&mut model, &grads)?;
            for (row, &p) in chunk.iter().enumerate() {
                buffer.row_mut(p).assign(&pass.u.row(row));
            }
            epoch_loss += loss;
        }
        clock.stop();
        history.push(HistoryRecord {
            outer: epoch,
            inner: 0,
            phase: Phase::Theta,
            objective: epoch_loss,
            seconds: clock.seconds(),
        });
        on_epoch(epoch, &model, clock.seconds());
        if config.time_budget.is_some_and(|b| clock.seconds() >= b.as_secs_f64()) {
            break;
        }
    }
    let db_codes = encode_queries(&model, db_features)?;
    Ok(BaselineOutput {
        model,
        db_codes,
        train_indices,
        history,
    })
}
