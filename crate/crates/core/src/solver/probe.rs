//! Wall-clock scaling of one training iteration against database size.

use super::baseline::{train_symmetric_baseline, BaselineConfig};
use super::train::{train, HistoryRecord, Phase, TrainConfig, TrainData, TrainMode};
use crate::dataio::gen_synthetic_clusters;
use crate::encoder::OptimizerKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeConfig {
    /// Database sizes; at least three.
    pub sizes: Vec<usize>,
    pub query_count: usize,
    pub code_len: usize,
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub clusters: usize,
    /// Outer iterations (or epochs) timed per size; the fastest is kept.
    pub repeats: usize,
    pub include_baseline: bool,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            sizes: vec![2000, 4000, 8000, 16000],
            query_count: 200,
            code_len: 16,
            dim: 32,
            hidden: vec![64],
            clusters: 10,
            repeats: 3,
            include_baseline: true,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow {
    pub n: usize,
    pub adsh_outer_secs: f64,
    pub adsh_theta_secs: f64,
    pub adsh_vstep_secs: f64,
    pub baseline_epoch_secs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    pub adsh_slope: f64,
    pub vstep_slope: f64,
    pub baseline_slope: Option<f64>,
}

impl ProbeReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,adsh_outer_secs,adsh_theta_secs,adsh_vstep_secs,baseline_epoch_secs\n");
        for r in &self.rows {
            let b = r.baseline_epoch_secs.map(|s| format!("{s:.6}")).unwrap_or_default();
            out += &format!(
                "{},{:.6},{:.6},{:.6},{}\n",
                r.n, r.adsh_outer_secs, r.adsh_theta_secs, r.adsh_vstep_secs, b
            );
        }
        out
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("slope fit needs at least two paired points"));
    }
    if xs.iter().chain(ys).any(|v| v.is_nan() || *v <= 0.0) {
        return Err(Error::invalid("slope fit needs positive values"));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("slope fit needs distinct x values"));
    }
    Ok(sxy / sxx)
}

fn adsh_config(cfg: &ProbeConfig, m: usize) -> TrainConfig {
    TrainConfig {
        code_len: cfg.code_len,
        query_count: m,
        outer_iters: cfg.repeats,
        inner_iters: 1,
        batch_size: m.min(128),
        optimizer: OptimizerKind::adam(),
        seed: cfg.seed,
        mode: TrainMode::AsymmetricSampled,
        hidden: cfg.hidden.clone(),
        ..TrainConfig::default()
    }
}

/// Fastest outer iteration, split into (total, encoder phase, code phase).
fn fastest_outer(history: &[HistoryRecord]) -> (f64, f64, f64) {
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut prev_end = 0.0;
    let mut theta_end = 0.0;
    for r in history {
        match r.phase {
            Phase::Theta => theta_end = r.seconds,
            Phase::VStep => {
                let total = r.seconds - prev_end;
                if total < best.0 {
                    best = (total, theta_end - prev_end, r.seconds - theta_end);
                }
                prev_end = r.seconds;
            }
        }
    }
    best
}

fn fastest_epoch(history: &[HistoryRecord]) -> f64 {
    let mut prev = 0.0;
    let mut best = f64::INFINITY;
    for r in history {
        best = best.min(r.seconds - prev);
        prev = r.seconds;
    }
    best
}

/// Times ADSH outer iterations (and optionally all-pairs baseline epochs)
/// on synthetic clustered data of each size, and fits log-log slopes.
pub fn complexity_probe(cfg: &ProbeConfig) -> Result<ProbeReport> {
    if cfg.sizes.len() < 3 {
        return Err(Error::invalid("complexity probe needs at least three sizes"));
    }
    if cfg.repeats == 0 || cfg.clusters == 0 {
        return Err(Error::invalid("repeats and clusters must be at least 1"));
    }
    let mut rows = Vec::new();
    for &n in &cfg.sizes {
        let per_cluster = n / cfg.clusters;
        if per_cluster == 0 || per_cluster * cfg.clusters < cfg.query_count {
            return Err(Error::invalid(format!("size {n} too small for the probe")));
        }
        let (features, labels) = gen_synthetic_clusters::<f64>(cfg.clusters, per_cluster, cfg.dim, 0.1, cfg.seed)?;
        let data = TrainData::new(features.view(), &labels);
        let state = train(&data, &adsh_config(cfg, cfg.query_count)).map_err(|e| Error::invalid(e.to_string()))?;
        let (outer, theta, vstep) = fastest_outer(&state.history);

        let baseline_epoch_secs = if cfg.include_baseline {
            let mut train_cfg = adsh_config(cfg, cfg.query_count);
            train_cfg.mode = TrainMode::SymmetricBaseline;
            let bc = BaselineConfig {
                train: train_cfg,
                train_points: None,
                time_budget: None,
            };
            let out = train_symmetric_baseline(features.view(), &labels, &bc, |_, _, _| {})?;
            Some(fastest_epoch(&out.history))
        } else {
            None
        };
        rows.push(ProbeRow {
            n: per_cluster * cfg.clusters,
            adsh_outer_secs: outer,
            adsh_theta_secs: theta,
            adsh_vstep_secs: vstep,
            baseline_epoch_secs,
        });
    }
    let ns: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let adsh: Vec<f64> = rows.iter().map(|r| r.adsh_outer_secs).collect();
    let vstep: Vec<f64> = rows.iter().map(|r| r.adsh_vstep_secs).collect();
    let baseline_slope = if cfg.include_baseline {
        let b: Vec<f64> = rows.iter().map(|r| r.baseline_epoch_secs.unwrap_or(0.0)).collect();
        Some(fit_loglog_slope(&ns, &b)?)
    } else {
        None
    };
    Ok(ProbeReport {
        adsh_slope: fit_loglog_slope(&ns, &adsh)?,
        vstep_slope: fit_loglog_slope(&ns, &vstep)?,
        baseline_slope,
        rows,
    })
}

/// Encoder-phase time per outer iteration for each query count at fixed
/// database size. Returns `(m, seconds)` pairs.
pub fn query_scaling_probe(cfg: &ProbeConfig, n: usize, query_counts: &[usize]) -> Result<Vec<(usize, f64)>> {
    let per_cluster = n / cfg.clusters.max(1);
    let (features, labels) = gen_synthetic_clusters::<f64>(cfg.clusters, per_cluster, cfg.dim, 0.1, cfg.seed)?;
    let data = TrainData::new(features.view(), &labels);
    query_counts
        .iter()
        .map(|&m| {
            let state = train(&data, &adsh_config(cfg, m)).map_err(|e| Error::invalid(e.to_string()))?;
            Ok((m, fastest_outer(&state.history).1))
        })
        .collect()
}
