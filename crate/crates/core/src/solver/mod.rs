//! Alternating optimization of the encoder and the database codes.
//!
//! With the encoder fixed, the database codes are updated one bit column at
//! a time by an exact closed-form minimization. With the codes fixed, the
//! encoder takes minibatch gradient steps on the sampled query rows.

mod baseline;
mod objective;
mod probe;
mod train;
mod vstep;

pub use baseline::{train_symmetric_baseline, BaselineConfig, BaselineOutput};
pub use objective::{objective, CodeProblem};
pub use probe::{complexity_probe, fit_loglog_slope, query_scaling_probe, ProbeConfig, ProbeReport, ProbeRow};
pub use train::{
    train, train_observed, write_history_csv, HistoryRecord, Phase, QuerySet, TrainConfig, TrainData, TrainError,
    TrainMode, TrainObserver, TrainState,
};
pub use vstep::{v_step, v_step_column, v_step_observed, VStepRoute};

use std::time::{Duration, Instant};

/// Accumulates time only while running, so bookkeeping between phases can
/// be left out of the reported training time.
#[derive(Debug, Default)]
pub(crate) struct Stopwatch {
    total: Duration,
    started: Option<Instant>,
}

impl Stopwatch {
    pub(crate) fn start(&mut self) {
        if self.started.is_none() {
            self.started = Some(Instant::now());
        }
    }

    pub(crate) fn stop(&mut self) {
        if let Some(t) = self.started.take() {
            self.total += t.elapsed();
        }
    }

    pub(crate) fn seconds(&self) -> f64 {
        let running = self.started.map(|t| t.elapsed()).unwrap_or_default();
        (self.total + running).as_secs_f64()
    }
}
