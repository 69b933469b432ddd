//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line; the process exits non-zero if any
//! criterion fails.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use fidi_lab::checks::{run_grad_checks, GRAD_TOLERANCE};
use fidi_lab::config::ExperimentConfig;
use fidi_lab::eval::{average_precision, cmc_and_map, error_stats, rank_gallery, EvalProtocol};
use fidi_lab::experiment::{Experiment, RunOutcome};
use fidi_lab::geometry::DistanceKind;
use fidi_lab::losses::{fidi_bound, fidi_pair_loss, loss_curve, triplet_loss, LossKind, TripletConfig, TripletVariant};
use fidi_lab::numerics::Rng;
use fidi_lab::Matrix;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const FRACTIONS: [f64; 3] = [0.25, 0.5, 0.75];

struct Outcome {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
}

fn report(o: &Outcome) {
    println!(
        "criterion {} {:<28} {}  {} [{:.1?}]",
        o.id,
        o.title,
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        o.elapsed
    );
}

fn timed(id: u32, title: &'static str, f: impl FnOnce() -> (bool, String)) -> Outcome {
    let t = Instant::now();
    let (pass, detail) = f();
    Outcome {
        id,
        title,
        pass,
        detail,
        elapsed: t.elapsed(),
    }
}

fn bounds() -> (bool, String) {
    let mut ok = true;
    let mut worst_k0: f64 = 0.0;
    let mut worst_k1: f64 = 0.0;
    for alpha in [1.05f64, 1.2, 2.0] {
        let bound = (alpha / (alpha - 1.0)).ln();
        let k0 = fidi_pair_loss(1e-9, 0.0, alpha).unwrap();
        let k1 = fidi_pair_loss(1e-9, 1.0, alpha).unwrap();
        worst_k0 = worst_k0.max(k0.abs());
        worst_k1 = worst_k1.max((k1 - bound).abs() / bound);
        ok &= k0.abs() <= 1e-8 && (k1 - bound).abs() <= 1e-6 * bound;
        ok &= (fidi_bound(alpha).unwrap() - bound).abs() <= 1e-15 * bound;
    }
    let b105 = fidi_bound(1.05).unwrap();
    ok &= (b105 - 3.044522).abs() < 1e-6;
    (ok, format!("max |k0|={worst_k0:.2e}, max k1 rel err={worst_k1:.2e}, bound(1.05)={b105:.6}"))
}

fn symmetry() -> (bool, String) {
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
    let mut asym = 0;
    let mut worst_diag: f64 = 0.0;
    for &a in &grid {
        for &b in &grid {
            let ab = fidi_pair_loss(a, b, 1.05).unwrap();
            let ba = fidi_pair_loss(b, a, 1.05).unwrap();
            if ab.to_bits() != ba.to_bits() {
                asym += 1;
            }
        }
        worst_diag = worst_diag.max(fidi_pair_loss(a, a, 1.05).unwrap().abs());
    }
    (asym == 0 && worst_diag <= 1e-12, format!("asymmetric pairs={asym}, max |l(a,a)|={worst_diag:.1e}"))
}

fn gradients() -> (bool, String) {
    let rows = run_grad_checks(20, 2024, None).unwrap();
    let detail = rows
        .iter()
        .map(|r| format!("{}={:.1e}", r.target.name(), r.max_rel_error))
        .collect::<Vec<_>>()
        .join(" ");
    (rows.iter().all(|r| r.max_rel_error <= GRAD_TOLERANCE), detail)
}

fn shapes() -> (bool, String) {
    let alpha = 1.05;
    let bound = fidi_bound(alpha).unwrap();
    let c = loss_curve(alpha, 0.5, 20.0, 1000).unwrap();
    let mono_k1 = c.windows(2).all(|w| w[1].fidi_k1 >= w[0].fidi_k1);
    let mono_k0 = c.windows(2).all(|w| w[1].fidi_k0 <= w[0].fidi_k0);
    let capped = c.iter().all(|p| p.fidi_k1 <= bound);
    // One anchor at 0, its positive at d_ap, a negative at 1: the only
    // triplet with an active hinge contributes d_ap − 1 + m.
    let triplet_at = |d_ap: f64| {
        let e = Matrix::from_vec(3, 1, vec![0.0, d_ap, -1.0]).unwrap();
        let cfg = TripletConfig {
            variant: TripletVariant::BatchAll,
            ..Default::default()
        };
        triplet_loss(&e, &[0, 0, 1], &cfg).unwrap().value * 2.0
    };
    let t = triplet_at(20.0);
    let exceeds = t > bound;
    (
        mono_k0 && mono_k1 && capped && exceeds,
        format!("k1 nondecreasing={mono_k1} k0 nonincreasing={mono_k0} k1<=bound={capped} triplet(d_ap=20)={t:.2} > {bound:.4}"),
    )
}

/// Distances, ranking and AP computed from scratch for the oracle.
fn oracle_scores(
    q: &Matrix,
    g: &Matrix,
    ql: &[usize],
    gl: &[usize],
    qc: &[usize],
    gc: &[usize],
    ranks: &[usize],
) -> (Vec<f64>, f64, usize) {
    let mut cmc_hits = vec![0usize; ranks.len()];
    let mut ap_total = 0.0;
    let mut valid = 0;
    for i in 0..q.rows() {
        let mut cand: Vec<(f64, usize)> = (0..g.rows())
            .filter(|&j| !(gl[j] == ql[i] && gc[j] == qc[i]))
            .map(|j| {
                let d2: f64 = q.row(i).iter().zip(g.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, j)
            })
            .collect();
        cand.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let rel: Vec<bool> = cand.iter().map(|&(_, j)| gl[j] == ql[i]).collect();
        let total = rel.iter().filter(|&&r| r).count();
        if total == 0 {
            continue;
        }
        valid += 1;
        // Area under the step precision/recall curve.
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        let mut hits = 0;
        for (k, &r) in rel.iter().enumerate() {
            if r {
                hits += 1;
            }
            let precision = hits as f64 / (k + 1) as f64;
            let recall = hits as f64 / total as f64;
            ap += precision * (recall - prev_recall);
            prev_recall = recall;
        }
        ap_total += ap;
        let first = rel.iter().position(|&r| r).unwrap() + 1;
        for (s, &r) in ranks.iter().enumerate() {
            if first <= r {
                cmc_hits[s] += 1;
            }
        }
    }
    let denom = valid.max(1) as f64;
    (cmc_hits.iter().map(|&h| h as f64 / denom).collect(), ap_total / denom, valid)
}

fn oracle_errors(x: &Matrix, labels: &[usize]) -> (f64, f64) {
    let n = labels.len();
    let dist = |a: usize, b: usize| -> f64 {
        x.row(a).iter().zip(x.row(b)).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt()
    };
    let (mut e1, mut e2, mut anchors) = (0usize, 0usize, 0usize);
    for a in 0..n {
        let pos: Vec<usize> = (0..n).filter(|&j| j != a && labels[j] == labels[a]).collect();
        let neg: Vec<usize> = (0..n).filter(|&j| labels[j] != labels[a]).collect();
        if pos.is_empty() {
            continue;
        }
        anchors += 1;
        let max_pos = pos.iter().map(|&p| dist(a, p)).fold(f64::MIN, f64::max);
        let min_neg = neg.iter().map(|&m| dist(a, m)).fold(f64::MAX, f64::min);
        e1 += neg.iter().filter(|&&m| dist(a, m) < max_pos).count();
        e2 += pos.iter().filter(|&&p| dist(a, p) > min_neg).count();
    }
    let k = anchors.max(1) as f64;
    (e1 as f64 / k, e2 as f64 / k)
}

fn evaluator() -> (bool, String) {
    let hand = average_precision(&[true, false, true]).unwrap();
    let mut ok = (hand - 5.0 / 6.0).abs() <= 1e-12;
    let mut worst: f64 = 0.0;
    let ranks = vec![1, 3, 5];
    let protocol = EvalProtocol {
        exclude_same_camera: true,
        cmc_ranks: ranks.clone(),
    };
    let kind = DistanceKind::default();
    for inst in 0..200u64 {
        let mut rng = Rng::new(9000 + inst);
        let dim = 1 + rng.below(4);
        let ids = 2 + rng.below(4);
        let cams = 1 + rng.below(3);
        let nq = 1 + rng.below(6);
        let ng = 1 + rng.below(20);
        let draw = |n: usize, rng: &mut Rng| {
            let m = Matrix::from_vec(n, dim, (0..n * dim).map(|_| rng.normal()).collect()).unwrap();
            let l: Vec<usize> = (0..n).map(|_| rng.below(ids)).collect();
            let c: Vec<usize> = (0..n).map(|_| rng.below(cams)).collect();
            (m, l, c)
        };
        let (q, ql, qc) = draw(nq, &mut rng);
        let (g, gl, gc) = draw(ng, &mut rng);
        let rankings = rank_gallery(&q, &g, kind).unwrap();
        let s = cmc_and_map(&rankings, &ql, &gl, &qc, &gc, &protocol).unwrap();
        let (cmc, map, valid) = oracle_scores(&q, &g, &ql, &gl, &qc, &gc, &ranks);
        ok &= valid == s.valid_queries;
        worst = worst.max((map - s.map).abs());
        for (o, (_, v)) in cmc.iter().zip(&s.cmc) {
            worst = worst.max((o - v).abs());
        }

        let n = 2 + rng.below(49);
        let (x, mut xl, _) = draw(n, &mut rng);
        // At least one identity needs a positive.
        xl[1] = xl[0];
        let st = error_stats(&x, &xl, kind).unwrap();
        let (e1, e2) = oracle_errors(&x, &xl);
        worst = worst.max((st.error_i - e1).abs()).max((st.error_ii - e2).abs());
    }
    ok &= worst <= 1e-12;
    (ok, format!("200 instances, max deviation={worst:.1e}, AP([1,0,1])={hand:.6}"))
}

fn hard_experiment() -> Experiment {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/hard.toml");
    ExperimentConfig::load(&path).unwrap().experiment().unwrap()
}

struct Runs {
    fidi: Vec<RunOutcome>,
    btl: Vec<RunOutcome>,
}

fn run_pair(base: &Experiment, keep: f64) -> Runs {
    let run = |kind| -> Vec<RunOutcome> {
        let mut e = base.clone();
        e.train.loss_kind = kind;
        e.keep_fraction = keep;
        SEEDS.iter().map(|&s| e.run(s).unwrap()).collect()
    };
    Runs {
        fidi: run(LossKind::Fidi),
        btl: run(LossKind::Btl),
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn maps(r: &[RunOutcome]) -> Vec<f64> {
    r.iter().map(|o| o.report.map).collect()
}

/// Every metric value of a set of runs, as bits, for the rerun comparison.
fn fingerprint(r: &Runs) -> Vec<u64> {
    r.fidi
        .iter()
        .chain(&r.btl)
        .flat_map(|o| {
            let mut v = vec![o.report.map, o.report.error_i, o.report.error_ii, o.init_report.error_i];
            v.extend(o.report.cmc.iter().map(|c| c.1));
            v.extend(o.history.records.iter().map(|h| h.total));
            v
        })
        .map(f64::to_bits)
        .collect()
}

fn main() {
    let mut outcomes = Vec::new();
    for (id, title, f) in [
        (1, "fidi bounds", bounds as fn() -> (bool, String)),
        (2, "symmetry", symmetry),
        (3, "gradient oracle", gradients),
        (4, "loss curve shape", shapes),
        (5, "evaluator oracles", evaluator),
    ] {
        let o = timed(id, title, f);
        report(&o);
        outcomes.push(o);
    }

    let base = hard_experiment();
    let t6 = Instant::now();
    let full = run_pair(&base, 1.0);
    let e6 = t6.elapsed();
    let fm = maps(&full.fidi);
    let bm = maps(&full.btl);
    let diff = mean(fm.iter().copied()) - mean(bm.iter().copied());
    let wins = fm.iter().zip(&bm).filter(|(f, b)| f > b).count();
    let o6 = Outcome {
        id: 6,
        title: "fine-grained advantage",
        pass: diff >= 0.02 && wins >= 4 && e6 < Duration::from_secs(600),
        detail: format!(
            "mAP fidi={:.4} btl={:.4} diff={:+.4} (need >= +0.02), fidi wins {wins}/5",
            mean(fm.iter().copied()),
            mean(bm.iter().copied()),
            diff
        ),
        elapsed: e6,
    };
    report(&o6);

    let t7 = Instant::now();
    let partial: Vec<Runs> = FRACTIONS.iter().map(|&k| run_pair(&base, k)).collect();
    let e7 = t7.elapsed() + e6;
    let mut pass7 = e7 < Duration::from_secs(2400);
    let mut parts = Vec::new();
    for (k, r) in FRACTIONS.iter().chain([1.0].iter()).zip(partial.iter().chain([&full])) {
        let f = mean(maps(&r.fidi).into_iter());
        let b = mean(maps(&r.btl).into_iter());
        pass7 &= f >= b;
        parts.push(format!("{k}: {f:.4} vs {b:.4}"));
    }
    let o7 = Outcome {
        id: 7,
        title: "data efficiency",
        pass: pass7,
        detail: format!("fidi vs btl mean mAP by kept fraction  {}", parts.join(", ")),
        elapsed: e7,
    };
    report(&o7);

    let init_ei = mean(full.fidi.iter().map(|o| o.init_report.error_i));
    let trained_ei = mean(full.fidi.iter().map(|o| o.report.error_i));
    let ratio = init_ei / trained_ei;
    let o8 = Outcome {
        id: 8,
        title: "fidelity direction",
        pass: ratio >= 10.0,
        detail: format!("Error-I init={init_ei:.2} trained={trained_ei:.2} ratio={ratio:.2} (need >= 10)"),
        elapsed: Duration::ZERO,
    };
    report(&o8);

    let t9 = Instant::now();
    let again_full = run_pair(&base, 1.0);
    let mut same = fingerprint(&again_full) == fingerprint(&full);
    for (&k, r) in FRACTIONS.iter().zip(&partial) {
        same &= fingerprint(&run_pair(&base, k)) == fingerprint(r);
    }
    let o9 = Outcome {
        id: 9,
        title: "determinism",
        pass: same,
        detail: format!("rerun of criteria 6-8 bit-identical={same}"),
        elapsed: t9.elapsed(),
    };
    report(&o9);

    outcomes.extend([o6, o7, o8, o9]);
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.pass).map(|o| o.id).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", outcomes.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
