//! Acceptance suite: one PASS/FAIL line per criterion. Run with
//! `cargo test -p tcdm-core --test acceptance`; the process fails if any
//! criterion fails.

mod common;

use std::collections::HashSet;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use tcdm_core::evaluation::{f_test, fit_logistic5, plcc, rmse, srocc, DEFAULT_SIGNIFICANCE};
use tcdm_core::features::{complexity_similarity, prediction_similarity, DifferenceField, DEFAULT_T};
use tcdm_core::rng::SeededStream;
use tcdm_core::savar::{assemble_design, fit_savar, raw_weights, weights_from_distances, Channel, SavarParams};
use tcdm_core::segmentation::{assign_partition, select_seeds};
use tcdm_core::synthetic::{generate, Shape};
use tcdm_core::{
    degrade, score, DegradationKind, DegradationSpec, EtaMode, MetricConfig, Point, PointCloud, PreparedReference,
    SamplingStrategy, WeightScheme,
};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pool(threads: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap()
}

fn criterion_1() -> Outcome {
    let mut elapsed = Duration::ZERO;
    let mut s = SeededStream::new(101);
    for pair in 0..20 {
        let n = 1_000 + s.below(99_001) as usize;
        let m = 1_000 + s.below(99_001) as usize;
        let reference = common::random_cloud(n, 1000 + pair);
        let distorted = common::random_cloud(m, 2000 + pair);
        let start = Instant::now();
        let seeds = select_seeds(&reference, 400, SamplingStrategy::Fps).map_err(|e| e.to_string())?;
        let part = assign_partition(&reference, &distorted, &seeds).map_err(|e| e.to_string())?;
        elapsed += start.elapsed();
        let mut counts_ref = vec![0usize; seeds.len()];
        let mut counts_dist = vec![0usize; seeds.len()];
        for &l in &part.labels_ref {
            counts_ref[l] += 1;
        }
        for &l in &part.labels_dist {
            counts_dist[l] += 1;
        }
        // One label per point means no point belongs to two cells.
        let ok = part.labels_ref.len() == n
            && part.labels_dist.len() == m
            && counts_ref.iter().sum::<usize>() == n
            && counts_dist.iter().sum::<usize>() == m
            && part
                .labels_ref
                .iter()
                .chain(&part.labels_dist)
                .all(|&l| l < seeds.len());
        if !ok {
            return Err(format!("pair {pair} (N={n}, M={m}) does not partition"));
        }
    }
    check(
        elapsed < Duration::from_secs(5),
        format!("20 pairs partitioned exactly in {elapsed:.2?} (limit 5 s)"),
    )
}

fn criterion_2() -> Outcome {
    let params = SavarParams::default();
    let mut s = SeededStream::new(202);
    let mut worst_rel = 0.0f64;
    let mut worst_planted = 0.0f64;
    for i in 0..200 {
        let n = 70 + s.below(431) as usize;
        let patch = common::random_patch(n, 5000 + i);
        let channel = if i % 2 == 0 { Channel::Geometry } else { Channel::Color };
        let (y, x) = assemble_design(&patch, &patch, &params, channel, true).map_err(|e| e.to_string())?;
        let fit = fit_savar(&y, &x, params.ridge).map_err(|e| e.to_string())?;
        let oracle = common::qr_projection(&x, &y);
        worst_rel = worst_rel.max((&fit.predictions - &oracle).norm() / oracle.norm());

        let truth = DMatrix::from_fn(x.ncols(), 3, |_, _| s.standard_normal() * 0.1);
        let planted = &x * &truth;
        let pf = fit_savar(&planted, &x, params.ridge).map_err(|e| e.to_string())?;
        worst_planted = worst_planted.max(pf.residuals.norm());
    }
    check(
        worst_rel <= 1e-8 && worst_planted <= 1e-9,
        format!("max relative deviation from QR oracle {worst_rel:.2e} (limit 1e-8); max planted residual {worst_planted:.2e} (limit 1e-9)"),
    )
}

fn criterion_3() -> Outcome {
    let params = SavarParams::default();
    let mut worst = 0.0f64;
    for i in 0..50 {
        let patch = common::random_patch(90 + 7 * i as usize, 7000 + i);
        let channel = if i % 2 == 0 { Channel::Geometry } else { Channel::Color };
        let (y, x) = assemble_design(&patch, &patch, &params, channel, true).map_err(|e| e.to_string())?;
        let fit = fit_savar(&y, &x, params.ridge).map_err(|e| e.to_string())?;
        // vec(Y) = (I_3 (x) X) vec(Theta^T)
        let big = common::kronecker_identity3(&x);
        let stacked = common::qr_coefficients(&big, &common::vec_columns(&y));
        let per_channel = common::vec_columns(&fit.theta.transpose());
        worst = worst.max((&stacked - &per_channel).norm() / per_channel.norm());
    }
    check(
        worst <= 1e-10,
        format!("max relative coefficient gap {worst:.2e} over 50 instances (limit 1e-10)"),
    )
}

fn criterion_4() -> Outcome {
    let mut s = SeededStream::new(404);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut worst_sum = 0.0f64;
    for i in 0..2000 {
        let k = 1 + s.below(40) as usize;
        let scale = 10f64.powi(s.below(13) as i32 - 6);
        let mut d: Vec<f64> = (0..k).map(|_| s.uniform() * scale).collect();
        if i % 10 == 0 {
            // Widely spread distances saturate the sigmoid.
            d.push(1e6 * scale);
        }
        d.sort_by(f64::total_cmp);
        let raw = raw_weights(&d, WeightScheme::SigmoidProposed, EtaMode::Std);
        lo = raw.iter().copied().fold(lo, f64::min);
        hi = raw.iter().copied().fold(hi, f64::max);
        let w = weights_from_distances(&d, WeightScheme::SigmoidProposed, EtaMode::Std);
        worst_sum = worst_sum.max((w.iter().sum::<f64>() - 1.0).abs());
    }
    let uniform = weights_from_distances(&[3.7; 8], WeightScheme::SigmoidProposed, EtaMode::Std);
    let uniform_ok = uniform.iter().all(|&x| (x - 0.125).abs() < 1e-15);
    check(
        lo >= 0.5 && hi < 1.0 && worst_sum <= 1e-12 && uniform_ok,
        format!("raw weights in [{lo}, {hi}], max |sum - 1| {worst_sum:.1e}, eta=0 uniform: {uniform_ok}"),
    )
}

fn criterion_5() -> Outcome {
    let ident = [0.0, 1e-9, 1.0, 1e9]
        .iter()
        .all(|&c| complexity_similarity(c, c, DEFAULT_T) == 1.0);
    let mut s = SeededStream::new(505);
    let values: Vec<f64> = (0..400).map(|_| s.uniform() * 50.0).collect();
    let field = |v: Vec<f64>| DifferenceField {
        rows: v.len() / 20,
        k: 20,
        values: v,
    };
    let fx = field(values.clone());
    let same = prediction_similarity(&fx, &fx, DEFAULT_T);
    let anti = prediction_similarity(&fx, &field(values.iter().map(|v| 50.0 - v).collect()), DEFAULT_T);
    check(
        ident && (same - 1.0).abs() < 1e-12 && anti <= -0.999,
        format!("F1 identities hold: {ident}; identical fields {same}; anti-correlated {anti}"),
    )
}

fn criterion_6() -> Outcome {
    let config = MetricConfig::default();
    // Dense enough that every patch has more points than the 3K regressors;
    // underdetermined patches have round-off complexities dominated by T.
    let reference = generate(Shape::NoisyTorus, 100_000, 61);
    let distorted = degrade(
        &reference,
        &DegradationSpec::new(DegradationKind::GeometryGaussian, 8.0, 62),
    )
    .map_err(|e| e.to_string())?;
    let q = |r: &PointCloud, d: &PointCloud| score(r, d, &config).map(|x| x.q).map_err(|e| e.to_string());
    let base = q(&reference, &distorted)?;

    let shift = |c: &PointCloud| {
        c.map_points(|p| {
            Point::new(
                [p.position[0] + 123.25, p.position[1] - 48.5, p.position[2] + 7.75],
                p.color,
            )
        })
    };
    let translation = (q(&shift(&reference), &shift(&distorted))? - base).abs();

    let mut scale_drift = 0.0f64;
    for s in [0.5, 2.0, 10.0] {
        let scale = |c: &PointCloud| c.map_points(|p| Point::new(p.position.map(|v| v * s), p.color));
        scale_drift = scale_drift.max((q(&scale(&reference), &scale(&distorted))? - base).abs());
    }

    let permute = |c: &PointCloud, seed: u64| {
        let mut rng = SeededStream::new(seed);
        let order = rng.distinct_indices(c.len(), c.len());
        order.iter().map(|&i| c.points()[i]).collect::<PointCloud>()
    };
    let distinct = reference
        .positions()
        .iter()
        .map(|p| p.map(f64::to_bits))
        .collect::<HashSet<_>>()
        .len()
        == reference.len();
    let permutation = (q(&permute(&reference, 63), &permute(&distorted, 64))? - base).abs();

    let one = pool(1).install(|| q(&reference, &distorted))?;
    let four = pool(4).install(|| q(&reference, &distorted))?;
    let bit_exact = one.to_bits() == four.to_bits() && one.to_bits() == base.to_bits();

    check(
        translation <= 1e-9 && scale_drift <= 1e-3 && distinct && permutation <= 1e-12 && bit_exact,
        format!(
            "translation {translation:.1e} (1e-9), scale {scale_drift:.1e} (1e-3), permutation {permutation:.1e} (1e-12), 1 vs 4 threads bit-exact: {bit_exact}"
        ),
    )
}

struct Sweep {
    lines: Vec<String>,
    monotone: bool,
    self_best: bool,
    elapsed: Duration,
}

/// Criteria 7 and 8 share the sweep over shapes, distortions and seeds.
fn monotonicity_sweep() -> Result<Sweep, String> {
    let start = Instant::now();
    let config = MetricConfig::default();
    let mut lines = Vec::new();
    let (mut monotone, mut self_best) = (true, true);
    for shape in Shape::ALL {
        let reference = generate(shape, 100_000, 7);
        let diagonal = reference.bounding_box_diagonal();
        let prepared = PreparedReference::new(&reference, &config).map_err(|e| e.to_string())?;
        let q_self = prepared.score(&reference).map_err(|e| e.to_string())?.q;
        let families = [
            (
                DegradationKind::GeometryGaussian,
                [0.005 * diagonal, 0.01 * diagonal, 0.02 * diagonal],
            ),
            (DegradationKind::ColorNoise, [5.0, 15.0, 30.0]),
            (DegradationKind::Downsample, [0.9, 0.6, 0.3]),
        ];
        for (kind, levels) in families {
            let mut means = Vec::new();
            let mut highest = f64::NEG_INFINITY;
            for level in levels {
                let mut total = 0.0;
                for seed in 1..=5 {
                    let distorted =
                        degrade(&reference, &DegradationSpec::new(kind, level, seed)).map_err(|e| e.to_string())?;
                    let q = prepared.score(&distorted).map_err(|e| e.to_string())?.q;
                    highest = highest.max(q);
                    total += q;
                }
                means.push(total / 5.0);
            }
            let decreasing = means.windows(2).all(|w| w[0] > w[1]);
            let below_self = highest < q_self;
            monotone &= decreasing;
            self_best &= below_self;
            lines.push(format!(
                "    {shape:?} {kind:?}: self {q_self:.5} -> {:.5} {:.5} {:.5}{}",
                means[0],
                means[1],
                means[2],
                if decreasing { "" } else { "  NOT DECREASING" }
            ));
        }
    }
    Ok(Sweep {
        lines,
        monotone,
        self_best,
        elapsed: start.elapsed(),
    })
}

fn criterion_9() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let cases: [(&[f64], &[f64]); 3] = [
        (&[1.0, 2.0, 3.0, 4.0, 5.0], &[1.0, 3.0, 2.0, 5.0, 4.0]),
        (&[0.2, 0.9, 0.4, 0.7, 0.1, 0.5], &[2.0, 4.5, 1.0, 4.0, 0.5, 3.0]),
        (
            &[3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.3],
            &[2.7, 1.8, 2.8, 1.0, 8.0, 2.1, 6.0],
        ),
    ];
    for (a, b) in cases {
        let s = srocc(a, b).map_err(|e| e.to_string())?;
        let p = plcc(a, b).map_err(|e| e.to_string())?;
        let r = rmse(a, b).map_err(|e| e.to_string())?;
        let s_ref = common::spearman_rank_formula(a, b);
        let p_ref = common::pearson_two_pass(a, b);
        let r_ref = (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt();
        ok &= (s - s_ref).abs() <= 1e-12 && (p - p_ref).abs() <= 1e-12 && (r - r_ref).abs() <= 1e-12;
    }
    // Rank-formula value of the 5-point case: sum d^2 = 4.
    let five = srocc(cases[0].0, cases[0].1).map_err(|e| e.to_string())?;
    ok &= (five - 0.8).abs() <= 1e-12;
    notes.push(format!("5-point srocc {five} (rank formula: 0.8)"));

    let beta = [4.0, 9.0, 0.55, 0.8, 2.5];
    let mut s = SeededStream::new(909);
    let q: Vec<f64> = (0..60).map(|_| 0.2 + 0.7 * s.uniform()).collect();
    let mos: Vec<f64> = q.iter().map(|&x| common::logistic5(&beta, x)).collect();
    let fit = fit_logistic5(&q, &mos).map_err(|e| e.to_string())?;
    let fit_rmse = rmse(&fit.mapped, &mos).map_err(|e| e.to_string())?;
    ok &= fit_rmse <= 1e-4;
    notes.push(format!("planted logistic rmse {fit_rmse:.1e}"));

    let small: Vec<f64> = (0..200).map(|_| 0.01 * s.standard_normal()).collect();
    let large: Vec<f64> = (0..200).map(|_| s.standard_normal()).collect();
    let h_ab = f_test(&small, &large, DEFAULT_SIGNIFICANCE).map_err(|e| e.to_string())?;
    let h_ba = f_test(&large, &small, DEFAULT_SIGNIFICANCE).map_err(|e| e.to_string())?;
    let h_aa = f_test(&large, &large, DEFAULT_SIGNIFICANCE).map_err(|e| e.to_string())?;
    ok &= h_ab && !h_ba && !h_aa;
    notes.push(format!(
        "F-test H: better {} / swapped {} / equal {}",
        u8::from(h_ab),
        u8::from(h_ba),
        u8::from(h_aa)
    ));
    check(ok, notes.join("; "))
}

fn criterion_10() -> Outcome {
    let config = MetricConfig::default();
    let reference = generate(Shape::NoisyTorus, 200_000, 10);
    let distorted = degrade(
        &reference,
        &DegradationSpec::new(DegradationKind::GeometryGaussian, 4.0, 11),
    )
    .map_err(|e| e.to_string())?;
    let timed = |threads: usize| -> Result<Duration, String> {
        let start = Instant::now();
        pool(threads)
            .install(|| score(&reference, &distorted, &config))
            .map_err(|e| e.to_string())?;
        Ok(start.elapsed())
    };
    let single = timed(1)?;
    let eight = timed(8)?;
    check(
        single < Duration::from_secs(60) && eight < Duration::from_secs(15),
        format!("2e5-point pair: {single:.2?} on 1 thread (limit 60 s), {eight:.2?} on 8 workers (limit 15 s)"),
    )
}

fn main() {
    let mut failed = 0;
    let mut report = |id: &str, outcome: Outcome, extra: &[String]| {
        match &outcome {
            Ok(detail) => println!("criterion {id}: PASS - {detail}"),
            Err(detail) => {
                failed += 1;
                println!("criterion {id}: FAIL - {detail}");
            }
        }
        for line in extra {
            println!("{line}");
        }
    };
    report("1 (partition soundness)", criterion_1(), &[]);
    report("2 (least-squares oracle)", criterion_2(), &[]);
    report("3 (Kronecker equivalence)", criterion_3(), &[]);
    report("4 (weight contract)", criterion_4(), &[]);
    report("5 (similarity identities)", criterion_5(), &[]);
    report("6 (invariance suite)", criterion_6(), &[]);
    match monotonicity_sweep() {
        Ok(sweep) => {
            let within = sweep.elapsed < Duration::from_secs(180);
            report(
                "7 (monotonicity)",
                check(
                    sweep.monotone && within,
                    format!(
                        "27 sequences strictly decreasing: {}; sweep took {:.1?} (limit 180 s)",
                        sweep.monotone, sweep.elapsed
                    ),
                ),
                &sweep.lines,
            );
            report(
                "8 (self-comparison ordering)",
                check(
                    sweep.self_best,
                    format!("Q(X, X) above all 135 degraded scores: {}", sweep.self_best),
                ),
                &[],
            );
        }
        Err(e) => {
            report("7 (monotonicity)", Err(e.clone()), &[]);
            report("8 (self-comparison ordering)", Err(e), &[]);
        }
    }
    report("9 (statistics)", criterion_9(), &[]);
    report("10 (performance)", criterion_10(), &[]);
    println!("criterion 11 (full-database reproduction): SKIPPED - optional, needs the external database");
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
