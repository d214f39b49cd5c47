//! One PASS/FAIL line per acceptance criterion. Exits non-zero if any fails.

#[path = "../../core/tests/common/mod.rs"]
mod mock_llm;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use bwsq_core::annotate::{
    annotate_design, oracle, render_bws_prompt, AnnotatorId, CampaignOptions, JsonlStore, Judgment,
    LlmClient,
};
use bwsq_core::design::{generate_design, generate_design_for_ids, verify_design, Design, DesignParams};
use bwsq_core::models::{
    train_krr, training_curve, Kernel, KrrConfig, LogisticObjective, LrConfig, SparseVec, Task,
};
use bwsq_core::scoring::{normalize, raw_grid, score, ScoreRecord};
use bwsq_core::stats::{bws_agreement, cohen_kappa, f1_scores, regression_metrics, spearman};
use bwsq_core::synthetic::{generate, SyntheticConfig};
use bwsq_core::{RecordId, TupleId};
use bwsq_service::{router, AppState, Campaign};
use http_body_util::BodyExt;
use mock_llm::{MockLlm, Script};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::{json, Value};
use tower::ServiceExt;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn ids(n: usize) -> Vec<RecordId> {
    (0..n).map(|i| RecordId::from(format!("r{i:05}"))).collect()
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    if took < limit {
        Ok(took)
    } else {
        Err(format!("took {took:?}, limit {limit:?}"))
    }
}

fn design_correctness() -> Outcome {
    let start = Instant::now();
    let d = generate_design_for_ids(&ids(1000), DesignParams { set_size: 4, repetitions: 2, seed: 1, truncate: false })
        .map_err(|e| e.to_string())?;
    let took = within(start, Duration::from_secs(1))?;
    ensure!(d.tuples.len() == 2000, "{} tuples", d.tuples.len());
    let mut counts: HashMap<&RecordId, usize> = HashMap::new();
    for t in &d.tuples {
        ensure!(t.member_ids.len() == 4, "tuple {} has {} members", t.tuple_id, t.member_ids.len());
        for m in &t.member_ids {
            *counts.entry(m).or_default() += 1;
        }
    }
    ensure!(counts.len() == 1000, "{} distinct records", counts.len());
    ensure!(counts.values().all(|&c| c == 8), "appearance counts {:?}", counts.values().collect::<HashSet<_>>());
    ensure!(verify_design(&d).passes(), "verify_design reports a defect");
    Ok(format!("2000 tuples, every record in 8, {took:?}"))
}

fn score_table_fidelity() -> Outcome {
    let start = Instant::now();
    let fixtures = [((8, 0), "1.00"), ((6, 0), "0.88"), ((2, 3), "0.44"), ((0, 6), "0.12"), ((0, 7), "0.06")];
    for ((b, w), want) in fixtures {
        let r = ScoreRecord::from_counts("x".into(), b, w, 8).map_err(|e| e.to_string())?;
        let got = format!("{:.2}", r.norm_score);
        ensure!(got == want, "({b},{w},8) -> {got}, expected {want}");
    }
    // every attainable (best, worst) split of 8 appearances
    let mut attainable: Vec<i64> = Vec::new();
    for b in 0..=8u32 {
        for w in 0..=(8 - b) {
            let r = ScoreRecord::from_counts("x".into(), b, w, 8).map_err(|e| e.to_string())?;
            let eighths = r.raw_score * 8.0;
            ensure!(eighths == eighths.round(), "raw {} is off the 1/8 grid", r.raw_score);
            attainable.push(eighths as i64);
        }
    }
    attainable.sort_unstable();
    attainable.dedup();
    ensure!(attainable.len() == 17, "{} distinct values", attainable.len());
    let grid = raw_grid(8);
    ensure!(grid.len() == 17, "raw_grid has {} values", grid.len());
    for (g, a) in grid.iter().zip(&attainable) {
        ensure!(*g == *a as f64 / 8.0, "grid {g} vs {a}/8");
    }
    let norm: HashSet<u64> = grid.iter().map(|g| normalize(*g).to_bits()).collect();
    ensure!(norm.len() == 17, "normalized grid collapsed");
    let took = within(start, Duration::from_secs(1))?;
    Ok(format!("5 rows reproduced, 17 grid values, {took:?}"))
}

fn conservation() -> Outcome {
    let d = generate_design_for_ids(&ids(5000), DesignParams { set_size: 4, repetitions: 2, seed: 9, truncate: false })
        .map_err(|e| e.to_string())?;
    ensure!(d.tuples.len() == 10_000, "{} tuples", d.tuples.len());
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let who = AnnotatorId::llm("random");
    let js: Vec<Judgment> = d
        .tuples
        .iter()
        .map(|t| {
            let b = rng.random_range(1..=4);
            let w = (b + rng.random_range(0..3)) % 4 + 1;
            Judgment::new_valid(t.tuple_id.clone(), who.clone(), b, w)
        })
        .collect();
    let s = score(&js, &d).map_err(|e| e.to_string())?;
    let net: i64 = s.records.iter().map(|r| r.n_best as i64 - r.n_worst as i64).sum();
    ensure!(net == 0, "sum of n_best - n_worst = {net}");
    let best: u32 = s.records.iter().map(|r| r.n_best).sum();
    ensure!(best == 10_000, "sum of n_best = {best}");
    Ok("net 0 over 10000 judgments".into())
}

fn oracle_end_to_end() -> Outcome {
    let start = Instant::now();
    let c = generate(&SyntheticConfig { n_records: 200, seed: 5, ..SyntheticConfig::default() });
    let d = generate_design(&c, DesignParams::default()).map_err(|e| e.to_string())?;
    let js = oracle::judge_design(&d, &c).map_err(|e| e.to_string())?;
    let s = score(&js, &d).map_err(|e| e.to_string())?;
    let max = s.records.iter().map(|r| r.raw_score).fold(f64::MIN, f64::max);
    let min = s.records.iter().map(|r| r.raw_score).fold(f64::MAX, f64::min);
    ensure!(max == 1.0 && min == -1.0, "raw range [{min}, {max}]");
    let intensity: HashMap<&RecordId, f64> = c.iter().map(|r| (&r.record_id, r.intensity.unwrap())).collect();
    let top = c.iter().max_by(|a, b| a.intensity.partial_cmp(&b.intensity).unwrap()).unwrap();
    let bottom = c.iter().min_by(|a, b| a.intensity.partial_cmp(&b.intensity).unwrap()).unwrap();
    ensure!(s.get(&top.record_id).unwrap().raw_score == 1.0, "top-intensity record not at 1");
    ensure!(s.get(&bottom.record_id).unwrap().raw_score == -1.0, "bottom-intensity record not at -1");
    let norm: Vec<f64> = s.records.iter().map(|r| r.norm_score).collect();
    let truth: Vec<f64> = s.records.iter().map(|r| intensity[&r.record_id]).collect();
    let rho = spearman(&norm, &truth).map_err(|e| e.to_string())?.unwrap_or(f64::NAN);
    ensure!(rho >= 0.9, "spearman {rho:.4}");
    let took = within(start, Duration::from_secs(10))?;
    Ok(format!("max 1, min -1, spearman {rho:.4}, {took:?}"))
}

/// Annotator that sees every item's intensity through its own fixed noise.
fn simulated_picks(
    tuples: &[Vec<usize>],
    values: &[f64],
    sigma: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let noise = Normal::new(0.0, sigma).expect("positive sigma");
    let seen: Vec<f64> = values.iter().map(|v| v + noise.sample(rng)).collect();
    tuples
        .iter()
        .map(|t| {
            let pos = |better: bool| {
                (0..t.len())
                    .max_by(|&a, &b| {
                        let (x, y) = (seen[t[a]], seen[t[b]]);
                        if better { x.total_cmp(&y) } else { y.total_cmp(&x) }
                    })
                    .unwrap()
                    + 1
            };
            (pos(true), pos(false))
        })
        .collect()
}

fn kappa_fidelity() -> Outcome {
    let same = cohen_kappa(&[1, 2, 3, 1, 2], &[1, 2, 3, 1, 2]).map_err(|e| e.to_string())?;
    ensure!((same - 1.0).abs() <= 1e-12, "identical labels give {same}");
    let zero = cohen_kappa(&[1, 1, 2, 2], &[1, 2, 1, 2]).map_err(|e| e.to_string())?;
    ensure!(zero.abs() <= 1e-12, "A=[1,1,2,2] B=[1,2,1,2] gives {zero}");
    // p_o = 3/4, p_e = (2*1 + 2*3)/16 = 1/2
    let half = cohen_kappa(&["a", "a", "b", "b"], &["a", "b", "b", "b"]).map_err(|e| e.to_string())?;
    ensure!((half - 0.5).abs() <= 1e-12, "three-of-four fixture gives {half}");

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = Vec::new();
    for pair in 0..1000 {
        let n_items = 200;
        let values: Vec<f64> = (0..n_items).map(|_| rng.random()).collect();
        let pool: Vec<usize> = (0..n_items).collect();
        let tuples: Vec<Vec<usize>> = (0..rng.random_range(50..=300))
            .map(|_| pool.choose_multiple(&mut rng, 4).copied().collect())
            .collect();
        let (sa, sb) = (rng.random_range(0.02..1.0), rng.random_range(0.02..1.0));
        let pa = simulated_picks(&tuples, &values, sa, &mut rng);
        let pb = simulated_picks(&tuples, &values, sb, &mut rng);
        let rows = |picks: &[(usize, usize)], who: &AnnotatorId| -> Vec<Judgment> {
            picks
                .iter()
                .enumerate()
                .map(|(i, &(b, w))| Judgment::new_valid(TupleId::from(format!("t{i}")), who.clone(), b, w))
                .collect()
        };
        let rep = bws_agreement(&rows(&pa, &AnnotatorId::llm("a")), &rows(&pb, &AnnotatorId::llm("b")))
            .map_err(|e| e.to_string())?;
        let bound = rep.kappa_best.min(rep.kappa_worst);
        if rep.kappa_both > bound + 1e-9 {
            violations.push((pair, sa, sb, rep.kappa_best, rep.kappa_worst, rep.kappa_both));
        }
    }
    ensure!(
        violations.is_empty(),
        "joint kappa exceeds min(B, W) in {}/1000 simulated pairs; first: pair {} sigma ({:.3}, {:.3}) B {:.4} W {:.4} B+W {:.4}",
        violations.len(),
        violations[0].0,
        violations[0].1,
        violations[0].2,
        violations[0].3,
        violations[0].4,
        violations[0].5
    );
    Ok("fixtures exact, joint <= min(B, W) on 1000 pairs".into())
}

fn metrics_fidelity() -> Outcome {
    let t = [0, 0, 1, 1, 2, 2];
    let p = [0, 1, 1, 1, 2, 0];
    let m = f1_scores(&t, &p, &[0, 1, 2]).map_err(|e| e.to_string())?;
    // per class: 2*1/(2+1+1), 2*2/(4+1+0), 2*1/(2+0+1)
    let macro_ = (0.5 + 0.8 + 2.0 / 3.0) / 3.0;
    ensure!((m.f1_macro - macro_).abs() <= 1e-12, "macro {} vs {macro_}", m.f1_macro);
    ensure!((m.f1_micro - 4.0 / 6.0).abs() <= 1e-12, "micro {}", m.f1_micro);
    let per: Vec<f64> = m.per_class_f1.iter().map(|(_, v)| *v).collect();
    for (got, want) in per.iter().zip([0.5, 0.8, 2.0 / 3.0]) {
        ensure!((got - want).abs() <= 1e-12, "per-class {got} vs {want}");
    }
    // a listed class that never occurs scores 0 and drags the macro mean
    let m4 = f1_scores(&t, &p, &[0, 1, 2, 3]).map_err(|e| e.to_string())?;
    ensure!((m4.f1_macro - (0.5 + 0.8 + 2.0 / 3.0) / 4.0).abs() <= 1e-12, "macro with empty class {}", m4.f1_macro);

    let r = regression_metrics(&[1.0, 2.0, 3.0, 4.0], &[1.5, 2.0, 2.5, 5.0]).map_err(|e| e.to_string())?;
    ensure!((r.mae - 0.5).abs() <= 1e-12, "mae {}", r.mae);
    // ss_res = 1.5, ss_tot = 5
    ensure!((r.r2 - 0.7).abs() <= 1e-12, "r2 {}", r.r2);

    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let classes: Vec<i64> = (-1..=5).collect();
    for _ in 0..100 {
        let n = rng.random_range(1..300);
        let yt: Vec<i64> = (0..n).map(|_| *classes.choose(&mut rng).unwrap()).collect();
        let yp: Vec<i64> = (0..n).map(|_| *classes.choose(&mut rng).unwrap()).collect();
        let m = f1_scores(&yt, &yp, &classes).map_err(|e| e.to_string())?;
        let acc = yt.iter().zip(&yp).filter(|(a, b)| a == b).count() as f64 / n as f64;
        ensure!((m.f1_micro - acc).abs() <= 1e-12, "micro {} vs accuracy {acc}", m.f1_micro);
    }
    Ok("fixtures within 1e-12, micro-F1 = accuracy on 100 vectors".into())
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| a[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    x
}

fn krr_and_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst_krr: f64 = 0.0;
    for _ in 0..10 {
        let (n, dim) = (20, rng.random_range(2..8));
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let alpha = rng.random_range(0.05..2.0);
        let sparse: Vec<SparseVec> = xs.iter().map(|x| SparseVec::from_dense(x)).collect();
        let cfg = KrrConfig { kernel: Kernel::Linear, alpha, center: false, ..KrrConfig::default() };
        let model = train_krr(&sparse, &y, &cfg).map_err(|e| e.to_string())?;
        ensure!(model.dual.len() == n, "{} dual coefficients", model.dual.len());
        // primal ridge: (X'X + alpha I) w = X'y
        let xtx: Vec<Vec<f64>> = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| xs.iter().map(|x| x[i] * x[j]).sum::<f64>() + if i == j { alpha } else { 0.0 })
                    .collect()
            })
            .collect();
        let xty: Vec<f64> = (0..dim).map(|i| xs.iter().zip(&y).map(|(x, t)| x[i] * t).sum()).collect();
        let w = solve(xtx, xty);
        let probes: Vec<Vec<f64>> = xs
            .iter()
            .cloned()
            .chain((0..5).map(|_| (0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()))
            .collect();
        for p in &probes {
            let primal: f64 = p.iter().zip(&w).map(|(a, b)| a * b).sum();
            let dual = model.predict_one(&SparseVec::from_dense(p));
            worst_krr = worst_krr.max((primal - dual).abs());
        }
        for j in 0..dim {
            let wd: f64 = xs.iter().zip(&model.dual).map(|(x, c)| x[j] * c).sum();
            worst_krr = worst_krr.max((wd - w[j]).abs());
        }
    }
    ensure!(worst_krr <= 1e-8, "dual vs primal differ by {worst_krr:e}");

    let mut worst_grad: f64 = 0.0;
    for _ in 0..20 {
        let (n, dim) = (rng.random_range(5..30), rng.random_range(2..10));
        let x: Vec<SparseVec> = (0..n)
            .map(|_| SparseVec::from_dense(&(0..dim).map(|_| rng.random_range(-2.0..2.0)).collect::<Vec<f64>>()))
            .collect();
        let y: Vec<bool> = (0..n).map(|_| rng.random()).collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let lambda = rng.random_range(0.01..10.0);
        let use_weights = rng.random_bool(0.5);
        let obj = LogisticObjective::new(&x, &y, use_weights.then_some(weights.as_slice()), dim, lambda)
            .map_err(|e| e.to_string())?;
        let theta: Vec<f64> = (0..obj.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut grad = vec![0.0; theta.len()];
        obj.value_grad(&theta, &mut grad);
        let h = 1e-5;
        let fd: Vec<f64> = (0..theta.len())
            .map(|i| {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[i] += h;
                down[i] -= h;
                (obj.value(&up) - obj.value(&down)) / (2.0 * h)
            })
            .collect();
        let diff = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm = fd.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_grad = worst_grad.max(diff / norm.max(1e-12));
    }
    ensure!(worst_grad <= 1e-5, "gradient relative error {worst_grad:e}");
    Ok(format!("krr max diff {worst_krr:.1e}, gradient rel err {worst_grad:.1e}"))
}

fn training_curve_analogue() -> Outcome {
    let start = Instant::now();
    let c = generate(&SyntheticConfig { n_records: 1000, seed: 7, ..SyntheticConfig::default() });
    let curve = training_curve(&c, Task::Multiclass, 100, &LrConfig::default()).map_err(|e| e.to_string())?;
    let took = within(start, Duration::from_secs(30))?;
    let at = |n: usize| curve.iter().find(|p| p.n_train == n).map(|p| p.f1_macro);
    let f300 = at(300).ok_or("no point at n_train = 300")?;
    ensure!(f300 >= 0.95, "f1_macro at 300 = {f300:.4}; curve {curve:?}");
    Ok(format!(
        "f1_macro {:.3}/{:.3}/{:.3} at 100/200/300, {took:?}",
        at(100).unwrap_or(f64::NAN),
        at(200).unwrap_or(f64::NAN),
        f300
    ))
}

async fn llm_contract() -> Outcome {
    let corpus = generate(&SyntheticConfig { n_records: 100, seed: 11, ..SyntheticConfig::default() });
    let design = generate_design(&corpus, DesignParams { set_size: 4, repetitions: 1, seed: 3, truncate: false })
        .map_err(|e| e.to_string())?;
    ensure!(design.tuples.len() == 100, "{} tuples", design.tuples.len());
    let mut answers = HashMap::new();
    let mut prompts = Vec::new();
    for (i, t) in design.tuples.iter().enumerate() {
        let user = render_bws_prompt(t, &corpus).map_err(|e| e.to_string())?.user;
        let answer = match i % 10 {
            3 => r#"{"Best": 3, "Worst": 3}"#.to_owned(),
            7 => "no idea".to_owned(),
            _ => format!(r#"{{"Best": {}, "Worst": {}}}"#, i % 4 + 1, (i + 2) % 4 + 1),
        };
        answers.insert(user.clone(), answer);
        prompts.push(user);
    }
    let mock = MockLlm::start(Script { answers, hang_after: Some(50), ..Script::default() }).await;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("judgments.jsonl");
    let who = AnnotatorId::llm("mock-model");
    let once = CampaignOptions { max_retries: 0, parallelism: 1 };

    let task = {
        let (corpus, design, who, path) = (corpus.clone(), design.clone(), who.clone(), path.clone());
        let client = LlmClient::new(mock.config()).map_err(|e| e.to_string())?;
        tokio::spawn(async move {
            let store = JsonlStore::<Judgment>::open(&path).unwrap();
            annotate_design(&design, &corpus, &client, &who, &store, &once).await
        })
    };
    let waited = tokio::time::timeout(Duration::from_secs(20), async {
        while mock.count() <= 50 {
            tokio::time::sleep(Duration::from_millis(5)).await;
        }
    })
    .await;
    ensure!(waited.is_ok(), "campaign never reached the hanging request");
    task.abort();
    let _ = task.await;

    let store = JsonlStore::<Judgment>::open(&path).map_err(|e| e.to_string())?;
    ensure!(store.len() == 50, "{} rows persisted before the kill", store.len());
    let done: HashSet<&String> = design
        .tuples
        .iter()
        .zip(&prompts)
        .filter(|(t, _)| store.has_valid(&(t.tuple_id.clone(), who.clone())))
        .map(|(_, p)| p)
        .collect();

    mock.script.lock().unwrap().hang_after = None;
    let before = mock.count();
    let client = LlmClient::new(mock.config()).map_err(|e| e.to_string())?;
    let summary = annotate_design(&design, &corpus, &client, &who, &store, &CampaignOptions { max_retries: 0, parallelism: 4 })
        .await
        .map_err(|e| e.to_string())?;
    let resumed = mock.prompts()[before..].to_vec();
    ensure!(resumed.len() == 100 - done.len(), "{} requests on resume, expected {}", resumed.len(), 100 - done.len());
    ensure!(resumed.iter().all(|p| !done.contains(p)), "a judged tuple was requested again");
    ensure!(summary.skipped == done.len(), "skipped {}", summary.skipped);

    let final_store = JsonlStore::<Judgment>::open(&path).map_err(|e| e.to_string())?;
    ensure!(final_store.len() == 100, "{} judgments persisted", final_store.len());
    for (i, t) in design.tuples.iter().enumerate() {
        let row = final_store.get(&(t.tuple_id.clone(), who.clone())).ok_or("missing row")?;
        let expect_valid = !matches!(i % 10, 3 | 7);
        ensure!(row.valid == expect_valid, "tuple {i}: valid = {}", row.valid);
        ensure!(row.is_consistent(4), "tuple {i} row violates the judgment invariant");
    }
    Ok(format!("100 rows, {} resumed without repeats, 20 tie/garbage invalid", resumed.len()))
}

async fn call(app: &Router, req: Request<Body>) -> Result<(StatusCode, Value), String> {
    let resp = app.clone().oneshot(req).await.map_err(|e| e.to_string())?;
    let status = resp.status();
    let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
    Ok((status, serde_json::from_slice(&bytes).unwrap_or(Value::Null)))
}

async fn submit(app: &Router, annotator: &str, tuple: &TupleId, best: usize, worst: usize) -> Result<(StatusCode, Value), String> {
    let body = json!({"annotator_id": annotator, "tuple_id": tuple, "best_index": best, "worst_index": worst});
    call(
        app,
        Request::post("/api/v1/judgments")
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap(),
    )
    .await
}

async fn export_count(app: &Router) -> Result<usize, String> {
    let resp = app
        .clone()
        .oneshot(Request::get("/api/v1/export").body(Body::empty()).unwrap())
        .await
        .map_err(|e| e.to_string())?;
    let bytes = resp.into_body().collect().await.map_err(|e| e.to_string())?.to_bytes();
    Ok(bytes.split(|b| *b == b'\n').filter(|l| !l.is_empty()).count())
}

async fn service_contract() -> Outcome {
    let corpus = generate(&SyntheticConfig { n_records: 40, seed: 4, ..SyntheticConfig::default() });
    let design: Design = generate_design(&corpus, DesignParams::default()).map_err(|e| e.to_string())?;
    let tuples: Vec<TupleId> = design.tuples.iter().take(20).map(|t| t.tuple_id.clone()).collect();
    let assignments: BTreeMap<String, Vec<TupleId>> = [("AB".to_owned(), tuples.clone()), ("CD".to_owned(), tuples.clone())].into();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let journal = dir.path().join("journal.jsonl");
    let app_for = |journal: &std::path::Path| -> Result<Router, String> {
        let campaign = Campaign::new(Some("acceptance".into()), design.clone(), &corpus, assignments.clone())
            .map_err(|e| e.to_string())?;
        let store = JsonlStore::open(journal).map_err(|e| e.to_string())?;
        Ok(router(Arc::new(AppState::new(campaign, store)), None))
    };

    let app = app_for(&journal)?;
    let (s, body) = submit(&app, "AB", &tuples[0], 2, 2).await?;
    ensure!(s == StatusCode::UNPROCESSABLE_ENTITY, "tie returned {s}");
    ensure!(body["reason"].is_string(), "tie rejection without reason");

    let mut accepted = 0;
    for (i, t) in tuples.iter().enumerate().take(13) {
        for who in ["AB", "CD"] {
            let (s, _) = submit(&app, who, t, i % 4 + 1, (i + 1) % 4 + 1).await?;
            ensure!(s == StatusCode::CREATED, "submission returned {s}");
            accepted += 1;
        }
    }
    let (s, body) = submit(&app, "AB", &tuples[0], 1, 2).await?;
    ensure!(s == StatusCode::CREATED && body["duplicate"] == true, "duplicate POST returned {s} {body}");
    ensure!(export_count(&app).await? == accepted, "duplicate POST added a row");
    drop(app);

    let restarted = app_for(&journal)?;
    let n = export_count(&restarted).await?;
    ensure!(n == accepted, "{n} judgments after restart, {accepted} accepted");
    let (s, body) = call(&restarted, Request::get("/api/v1/assignments/next?annotator=AB").body(Body::empty()).unwrap()).await?;
    ensure!(s == StatusCode::OK && body["tuple_id"] == json!(tuples[13]), "next assignment after restart: {s} {body}");
    Ok(format!("{accepted} judgments survive restart, tie 422, duplicate idempotent"))
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
    let checks: Vec<(&str, Box<dyn FnOnce() -> Outcome>)> = vec![
        ("design correctness", Box::new(design_correctness)),
        ("score table fidelity", Box::new(score_table_fidelity)),
        ("conservation invariant", Box::new(conservation)),
        ("oracle end-to-end", Box::new(oracle_end_to_end)),
        ("kappa fidelity", Box::new(kappa_fidelity)),
        ("metrics fidelity", Box::new(metrics_fidelity)),
        ("KRR oracle and LR gradient", Box::new(krr_and_gradient)),
        ("training curve analogue", Box::new(training_curve_analogue)),
        ("LLM client contract", Box::new(|| rt.block_on(llm_contract()))),
        ("service contract", Box::new(|| rt.block_on(service_contract()))),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| (*s).to_owned()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
