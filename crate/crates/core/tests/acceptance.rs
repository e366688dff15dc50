//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

use std::time::Instant;

use adsh::dataio::{self, gen_synthetic_clusters, split, Features};
use adsh::encoder::{batch_loss_grad_z, encode_queries, BatchTarget, Encoder};
use adsh::eval::{
    mean_average_precision, precision_recall_by_radius, rank_by_hamming, topk_precision_curve, Relevance,
};
use adsh::hashcore::unpack_row;
use adsh::oracle::{exhaustive_column_min, finite_difference_grad, naive_batch_loss, naive_objective, TinyInstance};
use adsh::solver::{
    complexity_probe, train_observed, train_symmetric_baseline, v_step, v_step_column, BaselineConfig, CodeProblem,
    ProbeConfig, TrainConfig, TrainData, TrainObserver, TrainState, VStepRoute,
};
use adsh::{CodeMatrix, LabelMatrix};
use ndarray::{Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

/// Held-out split of the 10 x 200 cluster set.
struct Synthetic {
    db: Features<f64>,
    db_labels: LabelMatrix,
    queries: Features<f64>,
    query_labels: LabelMatrix,
}

fn synthetic(seed: u64) -> Synthetic {
    let (x, labels) = gen_synthetic_clusters::<f64>(10, 200, 32, 0.1, seed).unwrap();
    let s = split(x.rows(), 100, 0, seed).unwrap();
    Synthetic {
        db: x.select(&s.database),
        db_labels: labels.select(&s.database),
        queries: x.select(&s.query),
        query_labels: labels.select(&s.query),
    }
}

fn query_map(model: &Encoder<f64>, db_codes: &CodeMatrix, data: &Synthetic) -> f64 {
    let q = encode_queries(model, data.queries.view()).unwrap();
    let ranking = rank_by_hamming(&q, db_codes).unwrap();
    let rel = Relevance::from_labels(&data.query_labels, &data.db_labels);
    mean_average_precision(&ranking, &rel, None).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut instances = 0;
    let mut code_mismatch = 0;
    for t in 0..144 {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=4.min(n));
        let c = rng.random_range(1..=4);
        let gamma = [0.0, 1.0, 200.0][t % 3];
        let weighting = t % 2 == 0;
        let sampled = t % 4 < 2;
        let inst = TinyInstance::random(&mut rng, n, m, c, gamma, weighting, sampled);
        let block = inst.block().unwrap();
        let problem = CodeProblem::new(inst.u_tilde.view(), &block, gamma, weighting).unwrap();
        let k = rng.random_range(0..c);
        let mut v = inst.v.clone();
        v_step_column(&problem, &mut v, k, VStepRoute::Auto).unwrap();
        let solver_j = naive_objective(&TinyInstance { v: v.clone(), ..inst.clone() });
        let (best, best_j) = exhaustive_column_min(&inst, k).unwrap();
        if !close(solver_j, best_j, 1e-9) {
            return Err(format!("instance {t}: solver J {solver_j} vs exhaustive {best_j}"));
        }
        // Differences are only allowed where flipping the oracle's entry
        // leaves J unchanged, i.e. a zero argument.
        for (j, &b) in best.iter().enumerate() {
            if v[[j, k]] != b as f64 {
                code_mismatch += 1;
                let mut alt = inst.clone();
                for (r, &s) in best.iter().enumerate() {
                    alt.v[[r, k]] = s as f64;
                }
                alt.v[[j, k]] = -(b as f64);
                if !close(naive_objective(&alt), best_j, 1e-9) {
                    return Err(format!("instance {t}: entry {j} differs without a tie"));
                }
            }
        }
        instances += 1;
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        instances >= 100 && secs < 60.0,
        format!("{instances} instances equal to exhaustive minimum, {code_mismatch} tie entries, {secs:.2}s"),
    )
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    let cases = 60;
    for t in 0..cases {
        let d = rng.random_range(2..=5);
        let h = rng.random_range(2..=6);
        let c = rng.random_range(2..=4);
        let b = rng.random_range(1..=4);
        let n = rng.random_range(2..=8);
        let model = Encoder::<f64>::new(&[d, h, c], &mut rng).unwrap();
        let x = Array2::from_shape_simple_fn((b, d), || rng.random_range(-1.0..1.0));
        let db = Array2::from_shape_simple_fn((n, c), || if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        let signs = Array2::from_shape_simple_fn((b, n), || if rng.random_bool(0.4) { 1i8 } else { -1 });
        let neg_weight = if t % 2 == 0 { 1.0 } else { rng.random_range(0.1..1.0) };
        let gamma = [0.0, 1.0, 200.0][t % 3];
        let own = (t % 4 < 2).then(|| db.select(Axis(0), &(0..b).map(|i| i % n).collect::<Vec<_>>()));

        let pass = model.forward_batch(x.view()).unwrap();
        let target = BatchTarget {
            db: db.view(),
            signs: signs.view(),
            neg_weight,
            own: own.as_ref().map(|o| o.view()),
            gamma,
            scale: 1.0,
        };
        let (_, grad_z) = batch_loss_grad_z(pass.u.view(), &target).unwrap();
        let analytic = model.backward(&pass, grad_z.view()).unwrap().flatten();

        let mut probe = model.clone();
        let numeric = finite_difference_grad(
            &model.flat_params(),
            |p| {
                probe.set_flat_params(p).unwrap();
                naive_batch_loss(&probe, x.view(), db.view(), signs.view(), neg_weight, own.as_ref().map(|o| o.view()), gamma)
                    .unwrap()
            },
            1e-5,
        )
        .unwrap();
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, f)| (a - f).powi(2)).sum::<f64>().sqrt();
        let norm = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|f| f * f).sum::<f64>().sqrt());
        let rel = if norm == 0.0 { diff } else { diff / norm };
        worst = worst.max(rel);
    }
    check(worst < 1e-5, format!("{cases} cases, worst relative error {worst:.2e}"))
}

#[derive(Default)]
struct ColumnAudit {
    updates: usize,
    worst_increase: f64,
}

impl TrainObserver<f64> for ColumnAudit {
    fn track_columns(&self) -> bool {
        true
    }

    fn on_column(&mut self, _outer: usize, _inner: usize, _bit: usize, before: f64, after: f64) {
        self.updates += 1;
        self.worst_increase = self.worst_increase.max(after - before);
    }
}

fn default_run_config(seed: u64) -> TrainConfig {
    TrainConfig {
        code_len: 16,
        gamma: 200.0,
        query_count: 200,
        outer_iters: 10,
        inner_iters: 3,
        seed,
        ..TrainConfig::default()
    }
}

fn criterion_3() -> Outcome {
    let data = synthetic(3);
    let mut audit = ColumnAudit::default();
    let cfg = default_run_config(3);
    train_observed(&TrainData::new(data.db.view(), &data.db_labels), &cfg, &mut audit).map_err(|e| e.to_string())?;
    check(
        audit.updates == cfg.outer_iters * cfg.inner_iters * cfg.code_len && audit.worst_increase <= 1e-9,
        format!(
            "{} column updates, largest increase in J {:+.3e}",
            audit.updates, audit.worst_increase
        ),
    )
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let data = synthetic(4);
    let state: TrainState<f64> =
        adsh::solver::train(&TrainData::new(data.db.view(), &data.db_labels), &default_run_config(4)).map_err(|e| e.to_string())?;
    let map = query_map(&state.model, &state.codes(), &data);
    let secs = start.elapsed().as_secs_f64();
    check(map >= 0.95 && secs < 120.0, format!("MAP {map:.4} on 100 held-out queries, {secs:.1}s"))
}

fn criterion_5() -> Outcome {
    let report = complexity_probe(&ProbeConfig::default()).map_err(|e| e.to_string())?;
    let base = report.baseline_slope.unwrap_or(f64::NAN);
    check(
        report.adsh_slope <= 1.3 && base >= 1.7,
        format!(
            "ADSH slope {:.2} (code step {:.2}), all-pairs baseline slope {:.2}",
            report.adsh_slope, report.vstep_slope, base
        ),
    )
}

struct MapTrace {
    points: Vec<(f64, f64)>,
}

impl MapTrace {
    fn best_within(&self, budget: f64) -> f64 {
        self.points.iter().filter(|p| p.0 <= budget).map(|p| p.1).fold(0.0, f64::max)
    }

    fn first_reaching(&self, target: f64) -> f64 {
        self.points.iter().find(|p| p.1 >= target).map_or(f64::INFINITY, |p| p.0)
    }
}

struct MapTracker<'a> {
    data: &'a Synthetic,
    trace: MapTrace,
    last_seconds: f64,
}

impl TrainObserver<f64> for MapTracker<'_> {
    fn on_record(&mut self, r: &adsh::solver::HistoryRecord) {
        self.last_seconds = r.seconds;
    }

    fn on_outer_end(&mut self, _outer: usize, state: &TrainState<f64>) {
        let map = query_map(&state.model, &state.codes(), self.data);
        self.trace.points.push((self.last_seconds, map));
    }
}

fn criterion_6() -> Outcome {
    let data = synthetic(6);
    let cfg = TrainConfig {
        outer_iters: 30,
        ..default_run_config(6)
    };
    let mut tracker = MapTracker {
        data: &data,
        trace: MapTrace { points: Vec::new() },
        last_seconds: 0.0,
    };
    train_observed(&TrainData::new(data.db.view(), &data.db_labels), &cfg, &mut tracker).map_err(|e| e.to_string())?;
    let adsh = tracker.trace;
    let budget = adsh.points.last().map_or(0.0, |p| p.0);

    let mut base = MapTrace { points: Vec::new() };
    let bc = BaselineConfig {
        train: TrainConfig {
            outer_iters: 10_000,
            ..cfg.clone()
        },
        train_points: None,
        time_budget: Some(std::time::Duration::from_secs_f64(budget)),
    };
    train_symmetric_baseline(data.db.view(), &data.db_labels, &bc, |_, model, secs| {
        let codes = encode_queries(model, data.db.view()).unwrap();
        base.points.push((secs, query_map(model, &codes, &data)));
    })
    .map_err(|e| e.to_string())?;

    let adsh_best = adsh.best_within(budget);
    let base_best = base.best_within(budget);
    let adsh_reach = adsh.first_reaching(base_best - 0.02);
    let base_reach = base.first_reaching(base_best);
    check(
        adsh_best >= base_best - 0.02 && adsh_reach <= base_reach,
        format!(
            "budget {budget:.2}s: ADSH MAP {adsh_best:.4} vs baseline {base_best:.4} ({} epochs); \
             ADSH within 0.02 of baseline best at {adsh_reach:.2}s, baseline best at {base_reach:.2}s",
            base.points.len()
        ),
    )
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut flips = 0usize;
    let cases = 30;
    for t in 0..cases {
        let n = rng.random_range(5..60);
        let m = rng.random_range(1..=n.min(12));
        let c = rng.random_range(1..=16);
        let sampled = t % 2 == 0;
        let u = Array2::from_shape_simple_fn((m, c), || rng.random_range(-1.0..1.0));
        let signs = Array2::from_shape_simple_fn((m, n), || if rng.random_bool(0.3) { 1i8 } else { -1 });
        let omega = if sampled { rand::seq::index::sample(&mut rng, n, m).into_vec() } else { Vec::new() };
        let block = adsh::SimilarityBlock::from_signs(signs, omega).unwrap();
        let problem = CodeProblem::new(u.view(), &block, [0.0, 1.0, 200.0][t % 3], false).unwrap();
        let v0 = Array2::from_shape_simple_fn((n, c), || if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        let (mut a, mut b) = (v0.clone(), v0.clone());
        v_step(&problem, &mut a, VStepRoute::PerEntry).unwrap();
        v_step(&problem, &mut b, VStepRoute::Matrix).unwrap();
        let ca = CodeMatrix::from_dense(a.view()).unwrap();
        let cb = CodeMatrix::from_dense(b.view()).unwrap();
        if ca.as_words() != cb.as_words() {
            return Err(format!("instance {t}: per-entry and matrix codes differ"));
        }
        flips += a.iter().zip(&v0).filter(|(x, y)| x != y).count();
    }
    check(true, format!("{cases} instances bit-identical ({flips} entries changed)"))
}

fn naive_map(orders: &[Vec<u32>], rel: &[Vec<bool>], cutoff: Option<usize>) -> f64 {
    let mut total = 0.0;
    for (q, order) in orders.iter().enumerate() {
        let relevant = rel[q].iter().filter(|&&r| r).count();
        let depth = cutoff.unwrap_or(order.len()).min(order.len());
        let denom = relevant.min(cutoff.unwrap_or(usize::MAX));
        let mut ap = 0.0;
        for r in 1..=depth {
            if rel[q][order[r - 1] as usize] {
                let hits = (1..=r).filter(|&s| rel[q][order[s - 1] as usize]).count();
                ap += hits as f64 / r as f64;
            }
        }
        total += if denom == 0 { 0.0 } else { ap / denom as f64 };
    }
    total / orders.len() as f64
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let mut worst = 0.0f64;
    let cases = 60;
    for _ in 0..cases {
        let c = rng.random_range(1..=12);
        let n = rng.random_range(1..=25);
        let nq = rng.random_range(1..=5);
        let rand_codes = |rng: &mut ChaCha8Rng, rows: usize| {
            let v: Vec<Vec<i8>> = (0..rows)
                .map(|_| (0..c).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect())
                .collect();
            CodeMatrix::from_sign_rows(&v, c).unwrap()
        };
        let q = rand_codes(&mut rng, nq);
        let db = rand_codes(&mut rng, n);
        let rel_rows: Vec<Vec<bool>> = (0..nq).map(|_| (0..n).map(|_| rng.random_bool(0.3)).collect()).collect();
        let rel = Relevance::new(Array2::from_shape_fn((nq, n), |(i, j)| rel_rows[i][j]));
        let ranking = rank_by_hamming(&q, &db).unwrap();
        let orders: Vec<Vec<u32>> = (0..nq).map(|i| ranking.order(i).to_vec()).collect();

        let cutoff = if rng.random_bool(0.5) { Some(rng.random_range(1..=n + 2)) } else { None };
        worst = worst.max((mean_average_precision(&ranking, &rel, cutoff).unwrap() - naive_map(&orders, &rel_rows, cutoff)).abs());

        let k_max = rng.random_range(1..=n);
        let curve = topk_precision_curve(&ranking, &rel, k_max).unwrap();
        for k in 1..=k_max {
            let naive = (0..nq)
                .map(|i| (0..k).filter(|&r| rel_rows[i][orders[i][r] as usize]).count() as f64 / k as f64)
                .sum::<f64>()
                / nq as f64;
            worst = worst.max((curve[k - 1] - naive).abs());
        }

        let pr = precision_recall_by_radius(&q, &db, &rel).unwrap();
        let qs = q.to_sign_rows();
        let ds: Vec<Vec<i8>> = (0..n).map(|j| unpack_row(db.row(j).words(), c)).collect();
        for (r, point) in pr.iter().enumerate() {
            let (mut p_sum, mut r_sum) = (0.0, 0.0);
            for i in 0..nq {
                let (mut got, mut hit, mut total) = (0, 0, 0);
                for j in 0..n {
                    let dist = (0..c).filter(|&b| qs[i][b] != ds[j][b]).count();
                    total += rel_rows[i][j] as usize;
                    if dist <= r {
                        got += 1;
                        hit += rel_rows[i][j] as usize;
                    }
                }
                p_sum += if got == 0 { 1.0 } else { hit as f64 / got as f64 };
                r_sum += if total == 0 { 1.0 } else { hit as f64 / total as f64 };
            }
            worst = worst.max((point.precision - p_sum / nq as f64).abs());
            worst = worst.max((point.recall - r_sum / nq as f64).abs());
        }
    }
    let hand = Relevance::new(ndarray::array![[true, false, true]]);
    let one = CodeMatrix::from_sign_rows(&[vec![1]], 1).unwrap();
    let three = CodeMatrix::from_sign_rows(&[vec![1], vec![1], vec![1]], 1).unwrap();
    let ap = mean_average_precision(&rank_by_hamming(&one, &three).unwrap(), &hand, None).unwrap();
    check(
        worst <= 1e-12 && (ap - 5.0 / 6.0).abs() <= 1e-12,
        format!("{cases} random rankings, worst deviation {worst:.1e}; [1,0,1] AP = {ap:.15}"),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut checked: Vec<String> = Vec::new();

    let features = Features::new(Array2::from_shape_simple_fn((7, 5), || rng.random_range(-1e3..1e3))).unwrap();
    let mut buf = Vec::new();
    dataio::write_features(&mut buf, &features).unwrap();
    let back: Features<f64> = dataio::parse_features(&buf).map_err(|e| e.to_string())?;
    let bitwise = back.view().iter().zip(features.view().iter()).all(|(a, b): (&f64, &f64)| a.to_bits() == b.to_bits());
    if !bitwise || back.view().dim() != features.view().dim() {
        return Err("features differ after round trip".into());
    }
    let mut again = Vec::new();
    dataio::write_features(&mut again, &back).unwrap();
    if again != buf {
        return Err("feature bytes differ after rewrite".into());
    }
    checked.push("features".into());

    let labels = LabelMatrix::new(vec![vec![0], vec![3, 1], vec![7, 2, 5], vec![u32::MAX]]).unwrap();
    let mut buf = Vec::new();
    dataio::write_labels(&mut buf, &labels).unwrap();
    if dataio::parse_labels(&buf).map_err(|e| e.to_string())? != labels {
        return Err("labels differ after round trip".into());
    }
    checked.push("labels".into());

    for c in [12usize, 24, 48, 64, 65, 128] {
        let rows: Vec<Vec<i8>> = (0..9)
            .map(|_| (0..c).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect())
            .collect();
        let codes = CodeMatrix::from_sign_rows(&rows, c).unwrap();
        let mut buf = Vec::new();
        dataio::write_codes(&mut buf, &codes).unwrap();
        let back = dataio::parse_codes(&buf).map_err(|e| e.to_string())?;
        let mut again = Vec::new();
        dataio::write_codes(&mut again, &back).unwrap();
        let pad_clean = c % 64 == 0 || back.as_words().chunks(back.words_per_row()).all(|w| w.last().unwrap() >> (c % 64) == 0);
        if back != codes || back.to_sign_rows() != rows || again != buf || !pad_clean {
            return Err(format!("codes with c={c} differ after round trip"));
        }
    }
    checked.push("codes c=12/24/48/64/65/128".into());

    let model = Encoder::<f64>::new(&[6, 9, 4, 12], &mut rng).unwrap();
    let mut buf = Vec::new();
    dataio::write_model(&mut buf, &model).unwrap();
    let back: Encoder<f64> = dataio::parse_model(&buf).map_err(|e| e.to_string())?;
    let same = back.flat_params().iter().zip(model.flat_params()).all(|(a, b)| a.to_bits() == b.to_bits());
    let mut again = Vec::new();
    dataio::write_model(&mut again, &back).unwrap();
    if !same || back.dims() != model.dims() || again != buf {
        return Err("model differs after round trip".into());
    }
    checked.push("model".into());
    Ok(format!("bit-exact: {}", checked.join(", ")))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("bit-update oracle equivalence", criterion_1),
        ("gradient matches finite differences", criterion_2),
        ("coordinate-descent monotonicity", criterion_3),
        ("end-to-end synthetic retrieval", criterion_4),
        ("scaling law", criterion_5),
        ("asymmetric advantage direction", criterion_6),
        ("per-entry and matrix updates agree", criterion_7),
        ("metrics match counting oracles", criterion_8),
        ("format round trips", criterion_9),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {id} {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {id} {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
