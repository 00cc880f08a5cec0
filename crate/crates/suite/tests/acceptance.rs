//! Acceptance suite. Each criterion prints one line:
//!
//! ```text
//! [PASS] 1 gradient correctness: ...
//! ```
//!
//! The process exits with status 1 if any criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use mlnt::data::make_synthetic_benchmark;
use mlnt::harness::{
    desk_benchmark, run_experiment, run_sweep, DataSource, ExperimentConfig, ExperimentSummary, SweepAxis, SweepConfig,
};
use mlnt::noise::{
    build_feature_index, cifar10_class_map, generate_synthetic_labels, inject_asymmetric, inject_symmetric,
    topk_neighbors, FeatureIndex, NoiseKind, NoiseSpec,
};
use mlnt::rng::{RngStreams, Stream};
use mlnt::tensor::{backward_ce, backward_kl, forward, Activation, Matrix, MlpSpec, ParamSet, SoftmaxOutput};
use mlnt::train::{
    ema_update, epoch_batches, meta_loss_and_grad, pretrain_features, train_baseline, train_iteration, Batch,
    CeLearner, EtaSchedule, GammaSchedule, IterationPlan, IterationSetup, Learner, MetaGradMode, MlntHyper,
    MlntLearner, StepSchedule, TeacherState,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const SEEDS: u32 = 5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// 1 ------------------------------------------------------------------------

fn gradient_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_ce, mut worst_kl) = (0.0f64, 0.0f64);
    let nets = 24;
    for i in 0..nets {
        let act = if i % 2 == 0 { Activation::Tanh } else { Activation::Relu };
        let net = random_net(&mut rng, 1 + i % 3, act, 6);
        let (cache, _) = forward(&net.spec, &net.params, &net.x).unwrap();
        let ce = backward_ce(&net.params, &cache, &net.y).unwrap().to_flat();
        let ce_fd = ref_fd(&net.spec, &net.params, 1e-5, |p| ref_ce(act, p, &net.x, &net.labels));
        let target = SoftmaxOutput::new(Matrix::from_rows(&net.target).unwrap()).unwrap();
        let kl = backward_kl(&net.params, &cache, &target).unwrap().to_flat();
        let kl_fd = ref_fd(&net.spec, &net.params, 1e-5, |p| ref_kl(act, p, &net.x, &net.target));
        worst_ce = worst_ce.max(rel_err(&ce, &ce_fd));
        worst_kl = worst_kl.max(rel_err(&kl, &kl_fd));
    }
    outcome(
        worst_ce < 1e-4 && worst_kl < 1e-4,
        format!("{nets} nets with 1-3 layers, max rel err CE {worst_ce:.2e}, KL {worst_kl:.2e} (limit 1e-4)"),
    )
}

// 2 ------------------------------------------------------------------------

fn reduction_equivalence() -> Outcome {
    let bench = mlnt::data::SyntheticBenchmarkSpec {
        n_train: 2000,
        ..desk_benchmark(0)
    };
    let (train, val, _) = make_synthetic_benchmark(&bench).unwrap();
    let streams = RngStreams::new(0);
    let noisy = inject_symmetric(train.labels(), 4, 0.5, &mut streams.stream(Stream::NoiseInjection, 0)).unwrap();
    let train = train.with_noisy_labels(noisy).unwrap();
    let spec = MlpSpec::new(vec![16, 64, 4], Activation::Relu).unwrap();
    let index = build_feature_index(
        &train,
        &spec,
        &ParamSet::init(&spec, &mut streams.stream(Stream::Pretrain, 0)),
    )
    .unwrap();

    // Full loops: M = 0 through the noise-tolerant driver vs the plain baseline.
    let hyper = MlntHyper {
        m: 0,
        epochs: 8,
        lr_decay_epoch: 5,
        ..MlntHyper::default()
    };
    let steps = hyper.epochs as usize * (train.len() / hyper.batch_size);
    let a = train_iteration(IterationSetup {
        spec: &spec,
        hyper: &hyper,
        cls_data: &train,
        val: &val,
        index: &index,
        mentor: None,
        streams,
        iteration: 1,
    })
    .unwrap();
    let b = train_baseline(&spec, &hyper, &train, &val, streams).unwrap();
    let loops_equal = a.student.params.bit_eq(&b.student.params);

    // Step by step: M = 10 with eta = 0.
    let frozen = MlntHyper {
        eta: EtaSchedule {
            max: 0.0,
            warmup_epochs: 0.0,
        },
        epochs: 8,
        lr_decay_epoch: 5,
        ..MlntHyper::default()
    };
    let init = ParamSet::init(&spec, &mut streams.stream(Stream::WeightInit, 1));
    let mut m = MlntLearner::new(
        &spec,
        &frozen,
        &index,
        None,
        init.clone(),
        streams.stream(Stream::SyntheticLabels, 1),
    )
    .unwrap();
    let mut c = CeLearner::new(&spec, &frozen, init).unwrap();
    let mut shuffle = streams.stream(Stream::BatchShuffle, 1);
    let mut eta_steps = 0;
    let mut first_diff = None;
    for epoch in 0..frozen.epochs {
        let batches = epoch_batches(train.len(), frozen.batch_size, &mut shuffle);
        for (s, idx) in batches.iter().enumerate() {
            let sched = StepSchedule::new(&frozen, epoch, s, batches.len());
            let batch = Batch::from_indices(&train, idx);
            m.step(&batch, &sched).unwrap();
            c.step(&batch, &sched).unwrap();
            eta_steps += 1;
            if first_diff.is_none() && !m.student().bit_eq(c.student()) {
                first_diff = Some(eta_steps);
            }
        }
    }
    outcome(
        loops_equal && first_diff.is_none() && steps >= 200 && eta_steps >= 200,
        format!(
            "M = 0: {steps} steps, final parameters bit-identical = {loops_equal}; \
             eta = 0 with M = 10: {eta_steps} steps, first divergence {first_diff:?}"
        ),
    )
}

// 3 ------------------------------------------------------------------------

/// Composite meta loss from the scalar reference implementation.
fn ref_meta_loss(
    act: Activation,
    theta: &ParamSet,
    x: &Matrix,
    variants: &[Vec<usize>],
    target: &[Vec<f64>],
    alpha: f64,
) -> f64 {
    let total: f64 = variants
        .iter()
        .map(|labels| {
            let g = ref_ce_grad(act, theta, x, labels);
            let inner = theta.add_scaled(&g, -alpha).unwrap();
            ref_kl(act, &inner, x, target)
        })
        .sum();
    total / variants.len() as f64
}

fn full_fd_oracle() -> (f64, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let act = Activation::Tanh;
    let spec = MlpSpec::new(vec![2, 8, 4], act).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    let trials = 5;
    for _ in 0..trials {
        let theta = ParamSet::init(&spec, &mut rng);
        let teacher = ParamSet::init(&spec, &mut rng);
        let xv: Vec<f64> = (0..16).map(|_| normal.sample(&mut rng)).collect();
        let x = Matrix::from_vec(8, 2, xv).unwrap();
        let labels: Vec<usize> = (0..8).map(|_| rng.random_range(0..4)).collect();
        let y = Matrix::one_hot(&labels, 4).unwrap();
        let ids: Vec<u64> = (0..8).collect();
        let index = FeatureIndex::new(x.clone(), ids.clone()).unwrap();
        let nb = topk_neighbors(&index, &ids, 10).unwrap();
        let set = generate_synthetic_labels(&y, &nb, 4, 3, &mut rng).unwrap();
        let (_, target) = forward(&spec, &teacher, &x).unwrap();
        let alpha = 0.2;
        let (_, grad) =
            meta_loss_and_grad(&spec, &theta, &x, &set, &target, alpha, MetaGradMode::FullFd, 1e-5).unwrap();

        let variant_labels: Vec<Vec<usize>> = set.variants.iter().map(Matrix::argmax_rows).collect();
        let target_rows: Vec<Vec<f64>> = target.probs().iter_rows().map(<[f64]>::to_vec).collect();
        let oracle = ref_fd(&spec, &theta, 1e-4, |p| {
            ref_meta_loss(act, p, &x, &variant_labels, &target_rows, alpha)
        });
        worst = worst.max(rel_err(&grad.to_flat(), &oracle));
    }
    (worst, trials)
}

fn meta_mode_run(mode: MetaGradMode, seed: u64) -> (f64, usize) {
    let bench = mlnt::data::SyntheticBenchmarkSpec {
        dim: 2,
        ..desk_benchmark(0)
    };
    let (train, val, test) = make_synthetic_benchmark(&bench).unwrap();
    let streams = RngStreams::new(seed);
    let noisy = inject_symmetric(train.labels(), 4, 0.5, &mut streams.stream(Stream::NoiseInjection, 0)).unwrap();
    let train = train.with_noisy_labels(noisy).unwrap();
    let spec = MlpSpec::new(vec![2, 8, 4], Activation::Tanh).unwrap();
    // outer step sizes scaled linearly from the batch-64 protocol to k = 8
    let d = MlntHyper::default();
    let scale = 8.0 / d.batch_size as f64;
    let hyper = MlntHyper {
        batch_size: 8,
        m: 3,
        epochs: 3,
        lr_decay_epoch: 2,
        beta: d.beta * scale,
        eta: EtaSchedule {
            max: d.eta.max * scale,
            warmup_epochs: 0.5,
        },
        gamma: GammaSchedule {
            warmup: 0.99,
            after: 0.999,
            warmup_epochs: 1,
        },
        meta_mode: mode,
        ..d
    };
    let pre = pretrain_features(&spec, &hyper, &train, 1, streams).unwrap();
    let index = build_feature_index(&train, &spec, &pre).unwrap();
    let r = train_iteration(IterationSetup {
        spec: &spec,
        hyper: &hyper,
        cls_data: &train,
        val: &val,
        index: &index,
        mentor: None,
        streams,
        iteration: 1,
    })
    .unwrap();
    let acc = mlnt::eval::evaluate(r.teacher.as_ref().unwrap(), &test)
        .unwrap()
        .accuracy;
    (acc, hyper.epochs as usize * (train.len() / hyper.batch_size))
}

fn first_order_vs_full() -> Outcome {
    let (worst, trials) = full_fd_oracle();
    let mut first = Vec::new();
    let mut full = Vec::new();
    let mut steps = 0;
    for seed in 0..SEEDS as u64 {
        let (a, s) = meta_mode_run(MetaGradMode::FirstOrder, seed);
        let (b, _) = meta_mode_run(MetaGradMode::FullFd, seed);
        first.push(a);
        full.push(b);
        steps = s;
    }
    let gap = (mean(&first) - mean(&full)).abs();
    outcome(
        worst < 1e-3 && gap <= 0.01 && steps >= 500,
        format!(
            "2-8-4 net, k = 8, M = 3: FullFD vs reference rel err {worst:.2e} over {trials} draws (limit 1e-3); \
             {steps}-step runs, teacher test acc first-order {:.4} vs full {:.4}, gap {:.2} points (limit 1.0)",
            mean(&first),
            mean(&full),
            gap * 100.0
        ),
    )
}

// 4 ------------------------------------------------------------------------

fn noise_rate_statistics() -> Outcome {
    let n = 100_000;
    let mut notes = Vec::new();
    let mut pass = true;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let c = 10;
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();
    for r in [0.1, 0.5, 0.9] {
        let noisy = inject_symmetric(&labels, c, r, &mut rng).unwrap();
        let changed = labels.iter().zip(&noisy).filter(|(a, b)| a != b).count() as f64 / n as f64;
        let p = r * (1.0 - 1.0 / c as f64);
        let z = (changed - p) / (p * (1.0 - p) / n as f64).sqrt();
        pass &= z.abs() <= 3.0;
        notes.push(format!("sym r={r}: z={z:+.2}"));
    }
    let map = cifar10_class_map();
    for r in [0.1, 0.5, 0.9] {
        let noisy = inject_asymmetric(&labels, &map, r, &mut rng).unwrap();
        let mut worst: f64 = 0.0;
        for (&src, &dst) in &map {
            let idx: Vec<usize> = (0..n).filter(|&i| labels[i] == src).collect();
            let flipped = idx.iter().filter(|&&i| noisy[i] == dst).count() as f64;
            let untouched = idx.iter().filter(|&&i| noisy[i] == src).count() as f64;
            pass &= flipped + untouched == idx.len() as f64;
            let m = idx.len() as f64;
            let z = (flipped / m - r) / (r * (1.0 - r) / m).sqrt();
            worst = if z.abs() > worst.abs() { z } else { worst };
        }
        let unmapped_changed = (0..n).any(|i| !map.contains_key(&labels[i]) && noisy[i] != labels[i]);
        pass &= worst.abs() <= 3.0 && !unmapped_changed;
        notes.push(format!("asym r={r}: worst class z={worst:+.2}"));
    }
    outcome(pass, format!("n = {n}, c = {c}; {} (limit |z| <= 3)", notes.join(", ")))
}

// 5 ------------------------------------------------------------------------

fn synthetic_label_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (k, c, m, rho) = (64usize, 10usize, 10usize, 32usize);
    let (mut variants, mut checked, mut bad) = (0usize, 0usize, 0usize);
    let mut batch = 0u64;
    while variants < 10_000 {
        let feats: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..8).map(|_| normal.sample(&mut rng)).collect())
            .collect();
        let ids: Vec<u64> = (0..k as u64).map(|i| batch * 1000 + i).collect();
        let index = FeatureIndex::new(Matrix::from_rows(&feats).unwrap(), ids.clone()).unwrap();
        let nb = topk_neighbors(&index, &ids, 10).unwrap();
        let labels: Vec<usize> = (0..k).map(|_| rng.random_range(0..c)).collect();
        let y = Matrix::one_hot(&labels, c).unwrap();
        let set = generate_synthetic_labels(&y, &nb, rho, m, &mut rng).unwrap();
        let brute: Vec<Vec<usize>> = (0..k).map(|i| brute_topk(&feats, i, 10)).collect();
        for (v, variant) in set.variants.iter().enumerate() {
            let got = variant.argmax_rows();
            let replaced = &set.replaced_indices[v];
            let mut distinct = replaced.clone();
            distinct.dedup();
            if replaced.len() != rho || distinct.len() != rho {
                bad += 1;
            }
            for i in 0..k {
                if replaced.contains(&i) {
                    checked += 1;
                    if !brute[i].iter().any(|&j| labels[j] == got[i]) {
                        bad += 1;
                    }
                } else if got[i] != labels[i] {
                    bad += 1;
                }
            }
            variants += 1;
        }
        batch += 1;
    }
    outcome(
        bad == 0,
        format!("{variants} variants (k = {k}, rho = {rho}), {checked} replacements checked against brute-force top-10, {bad} violations"),
    )
}

// 6 ------------------------------------------------------------------------

fn ema_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let spec = MlpSpec::new(vec![5, 7, 3], Activation::Relu).unwrap();
    let mut worst = 0.0f64;
    for gamma in [0.9, 0.99, 0.999] {
        let student = ParamSet::init(&spec, &mut rng);
        let start = ParamSet::init(&spec, &mut rng);
        let mut teacher = TeacherState::new(&start);
        for _ in 0..100 {
            ema_update(&mut teacher, &student, gamma).unwrap();
        }
        let g = gamma.powi(100);
        for ((&t, &s), &t0) in teacher.params.iter().zip(student.iter()).zip(start.iter()) {
            worst = worst.max(((t - s) - g * (t0 - s)).abs());
        }
    }
    outcome(
        worst <= 1e-12,
        format!("T = 100, gamma in {{0.9, 0.99, 0.999}}: max deviation {worst:.2e} (limit 1e-12)"),
    )
}

// 7, 8, 10 -----------------------------------------------------------------

fn desk_config(dir: &std::path::Path, ratio: f64, iterations: u32) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(DataSource::Benchmark(desk_benchmark(0)), 0, dir.to_path_buf());
    cfg.noise = NoiseSpec {
        kind: NoiseKind::Symmetric,
        ratio,
    };
    cfg.plan = IterationPlan {
        num_iterations: iterations,
        overrides: vec![],
    };
    cfg.replicates = SEEDS;
    cfg
}

fn headline_trend(noisy: &ExperimentSummary, clean: &ExperimentSummary) -> Outcome {
    let gain = noisy.mean.test_teacher[0] - noisy.mean.baseline_test_final;
    let clean_gap = clean.mean.test_teacher[0] - clean.mean.baseline_test_final;
    outcome(
        gain >= 0.03 && clean_gap >= -0.005,
        format!(
            "r = 0.5: teacher {:.4} vs CE {:.4} ({:+.2} points, need >= +3.0); \
             r = 0: teacher {:.4} vs CE {:.4} ({:+.2} points, need >= -0.5)",
            noisy.mean.test_teacher[0],
            noisy.mean.baseline_test_final,
            gain * 100.0,
            clean.mean.test_teacher[0],
            clean.mean.baseline_test_final,
            clean_gap * 100.0
        ),
    )
}

fn iterative_trend(noisy: &ExperimentSummary) -> Outcome {
    let mut lines = Vec::new();
    let mut good = 0;
    for s in &noisy.seeds {
        let v: Vec<f64> = s.iterations.iter().map(|i| i.best_val).collect();
        let ok = v.windows(2).all(|w| w[0] <= w[1]);
        good += usize::from(ok);
        let shown: Vec<String> = v.iter().map(|x| format!("{x:.4}")).collect();
        lines.push(format!(
            "seed {}: {}{}",
            s.seed,
            shown.join(" -> "),
            if ok { "" } else { " (dips)" }
        ));
    }
    outcome(
        good >= 4,
        format!(
            "{good}/{} seeds non-decreasing over iterations 1-3 (need >= 4); {}",
            noisy.seeds.len(),
            lines.join("; ")
        ),
    )
}

fn stability(noisy: &ExperimentSummary) -> Outcome {
    let t = noisy.mean.teacher_val_std_last_half[0];
    let s = noisy.mean.student_val_std_last_half[0];
    let c = noisy.mean.baseline_val_std_last_half;
    outcome(
        t < s && s < c,
        format!("last-half val-acc std, 5-seed mean: teacher {t:.4} < student {s:.4} < CE {c:.4}"),
    )
}

// 9 ------------------------------------------------------------------------

fn ablation_direction(dir: &std::path::Path) -> Outcome {
    let mut m_cfg = desk_config(&dir.join("m"), 0.5, 1);
    m_cfg.sweep = Some(SweepConfig {
        axis: SweepAxis::M,
        values: vec![0.0, 5.0],
    });
    let m_points = run_sweep(&m_cfg).unwrap();
    let acc_m: BTreeMap<u64, f64> = m_points
        .iter()
        .map(|p| (p.value as u64, p.summary.mean.test_teacher[0]))
        .collect();
    let m_ok = acc_m[&5] > acc_m[&0];

    let taus = vec![0.0, 0.1, 0.3, 0.5, 0.7, 0.9];
    let mut t_cfg = desk_config(&dir.join("tau"), 0.5, 2);
    t_cfg.sweep = Some(SweepConfig {
        axis: SweepAxis::Tau,
        values: taus.clone(),
    });
    let mut t_points = run_sweep(&t_cfg).unwrap();
    t_points.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut monotone = true;
    for seed_pos in 0..SEEDS as usize {
        let counts: Vec<usize> = t_points
            .iter()
            .map(|p| p.summary.seeds[seed_pos].iterations[1].filtered_count)
            .collect();
        monotone &= counts.windows(2).all(|w| w[0] >= w[1]);
    }
    let accs: Vec<f64> = t_points.iter().map(|p| p.summary.mean.test_teacher[1]).collect();
    let best = accs
        .iter()
        .enumerate()
        .fold(0, |b, (i, &a)| if a > accs[b] { i } else { b });
    let interior = best != 0 && best != accs.len() - 1;
    let curve: Vec<String> = taus.iter().zip(&accs).map(|(t, a)| format!("{t}:{a:.4}")).collect();
    outcome(
        m_ok && monotone && interior,
        format!(
            "M = 5 {:.4} vs M = 0 {:.4}; filtered_count non-increasing in tau for every seed = {monotone}; \
             tau curve [{}], best at tau = {}",
            acc_m[&5],
            acc_m[&0],
            curve.join(", "),
            taus[best]
        ),
    )
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut results: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    let mut run = |id: u32, name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let secs = t.elapsed().as_secs_f64();
        println!(
            "[{}] {id} {name}: {} ({secs:.1}s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((id, name, o, secs));
    };

    run(1, "gradient correctness", &mut gradient_correctness);
    run(2, "reduction equivalence", &mut reduction_equivalence);
    run(3, "first-order vs full meta-gradient", &mut first_order_vs_full);
    run(4, "noise-rate statistics", &mut noise_rate_statistics);
    run(5, "synthetic-label oracle", &mut synthetic_label_oracle);
    run(6, "EMA closed form", &mut ema_closed_form);

    let t = Instant::now();
    let noisy = run_experiment(&desk_config(&tmp.path().join("r50"), 0.5, 3)).expect("desk run at r = 0.5");
    let clean = run_experiment(&desk_config(&tmp.path().join("r00"), 0.0, 1)).expect("desk run at r = 0");
    println!(
        "      (desk runs for 7, 8 and 10 took {:.1}s)",
        t.elapsed().as_secs_f64()
    );
    run(7, "headline trend", &mut || headline_trend(&noisy, &clean));
    run(8, "iterative-training trend", &mut || iterative_trend(&noisy));
    run(9, "ablation direction", &mut || ablation_direction(tmp.path()));
    run(10, "stability", &mut || stability(&noisy));

    let passed = results.iter().filter(|r| r.2.pass).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
