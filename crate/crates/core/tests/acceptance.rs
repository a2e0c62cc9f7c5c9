//! Acceptance suite. Runs every criterion in sequence, prints one PASS/FAIL
//! line each with its runtime against the budget, and exits non-zero if any
//! criterion failed.
//!
//! `cargo test --test acceptance` runs everything; pass criterion numbers as
//! arguments (`cargo test --test acceptance -- 3 7`) to run a subset.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use lanewatch::classifier::{assign_class_tags, classify, discriminant, posterior, Label};
use lanewatch::clustering::{kmeans, KmeansParams};
use lanewatch::features::{
    edge_fraction, entropy, extract_features, fisher_score, max_local_entropy, quantize_histogram,
    second_moment_normalized, EdgeKernel, FeatureParams, FeatureVector, Histogram, Patch, FEATURE_DIM,
};
use lanewatch::gmm::{fit_em, online_update, ClassTag, EmOptions, GaussianComponent, GmmModel};
use lanewatch::pipeline::{queue_length, Detector, DetectorConfig, Phase, TrafficStatusReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "feature oracle equivalence", budget: Duration::from_secs(5), run: oracle_equivalence },
    Criterion { id: 2, name: "feature range suite", budget: Duration::from_secs(5), run: feature_ranges },
    Criterion { id: 3, name: "fisher closed form", budget: Duration::from_secs(2), run: fisher_closed_form },
    Criterion { id: 4, name: "EM monotonicity", budget: Duration::from_secs(30), run: em_monotonicity },
    Criterion { id: 5, name: "GMM recovery", budget: Duration::from_secs(60), run: gmm_recovery },
    Criterion { id: 6, name: "online step oracle and mass cap", budget: Duration::from_secs(5), run: online_step },
    Criterion { id: 7, name: "drift tracking", budget: Duration::from_secs(60), run: drift_tracking },
    Criterion { id: 8, name: "classifier consistency", budget: Duration::from_secs(5), run: classifier_consistency },
    Criterion { id: 9, name: "end-to-end synthetic scene", budget: Duration::from_secs(120), run: end_to_end },
    Criterion { id: 10, name: "determinism", budget: Duration::from_secs(240), run: determinism },
    Criterion { id: 11, name: "snapshot persistence", budget: Duration::from_secs(120), run: persistence },
];

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    let mut ran = 0;
    for c in CRITERIA.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.id)) {
        ran += 1;
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("over budget; {detail}")),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!(
            "[{tag}] {:>2} {:<32} {:>7.2}s / {:>3}s  {detail}",
            c.id,
            c.name,
            elapsed.as_secs_f64(),
            c.budget.as_secs()
        );
    }
    println!("acceptance: {} of {ran} criteria passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- features

fn random_patch(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Patch {
    let pixels = match rng.random_range(0..4) {
        // full range noise
        0 => (0..w * h).map(|_| rng.random::<u8>()).collect(),
        // low contrast around a random base
        1 => {
            let base: i32 = rng.random_range(10..240);
            (0..w * h)
                .map(|_| (base + rng.random_range(-12..=12)).clamp(0, 255) as u8)
                .collect()
        }
        // flat with a few bright specks
        2 => {
            let base: u8 = rng.random();
            (0..w * h)
                .map(|_| if rng.random_bool(0.05) { 255 - base } else { base })
                .collect()
        }
        // gradient plus noise
        _ => (0..w * h)
            .map(|i| {
                let (x, y) = ((i % w) as i32, (i / w) as i32);
                (x * 5 + y * 3 + rng.random_range(-20..=20)).clamp(0, 255) as u8
            })
            .collect(),
    };
    Patch::new(w, h, pixels).unwrap()
}

fn naive_max_local_entropy(p: &Patch) -> f64 {
    let mut best = 0.0f64;
    for cy in 2..p.height() - 2 {
        for cx in 2..p.width() - 2 {
            let mut counts = [0u32; 32];
            for y in cy - 2..=cy + 2 {
                for x in cx - 2..=cx + 2 {
                    counts[(p.get(x, y) / 8) as usize] += 1;
                }
            }
            let mut e = 0.0;
            for &c in &counts {
                if c > 0 {
                    let q = c as f64 / 25.0;
                    e -= q * q.log2();
                }
            }
            best = best.max(e);
        }
    }
    best
}

fn naive_edge_fraction(p: &Patch, k: &[[i32; 3]; 3]) -> f64 {
    let mut hits = 0u32;
    let mut positions = 0u32;
    for y in 1..p.height() - 1 {
        for x in 1..p.width() - 1 {
            let mut r = 0i64;
            for dy in 0..3 {
                for dx in 0..3 {
                    r += k[dy][dx] as i64 * p.get(x + dx - 1, y + dy - 1) as i64;
                }
            }
            positions += 1;
            if r.abs() > 30 {
                hits += 1;
            }
        }
    }
    hits as f64 / positions as f64
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let kernels = [
        [[-1, -2, -1], [0, 0, 0], [1, 2, 1]],
        [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]],
        [[0, -1, -1], [1, 0, -1], [1, 1, 0]],
        [[-1, -1, 0], [-1, 0, 1], [0, 1, 1]],
    ];
    let mut mismatches = Vec::new();
    for i in 0..100 {
        let p = random_patch(&mut rng, 32, 32);
        let got = max_local_entropy(&p, 2, 2, 32).unwrap();
        let want = naive_max_local_entropy(&p);
        if got.to_bits() != want.to_bits() {
            mismatches.push(format!("patch {i} entropy {got} vs {want}"));
        }
        for (kernel, coeffs) in EdgeKernel::ALL.iter().zip(&kernels) {
            let got = edge_fraction(&p, kernel, 30).unwrap();
            let want = naive_edge_fraction(&p, coeffs);
            if got.to_bits() != want.to_bits() {
                mismatches.push(format!("patch {i} {:?} {got} vs {want}", kernel.id));
            }
        }
    }
    check(
        mismatches.is_empty(),
        format!("100 patches x 5 features, mismatches: {:?}", mismatches.iter().take(3).collect::<Vec<_>>()),
    )
}

fn feature_ranges() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = FeatureParams::default();
    let mut bad = Vec::new();
    for i in 0..1000 {
        let (w, h) = (rng.random_range(8..=48), rng.random_range(8..=48));
        let p = random_patch(&mut rng, w, h);
        let fv = extract_features(&p, &params).unwrap();
        if fv.0.iter().any(|v| !(0.0..=1.0).contains(v)) {
            bad.push(format!("patch {i} out of range: {fv}"));
        }
        let hist = quantize_histogram(&p, 32).unwrap();
        let nonzero = hist.counts.iter().filter(|&&c| c > 0).count() as f64;
        if entropy(&hist) > nonzero.log2() + 1e-12 {
            bad.push(format!("patch {i} entropy {} above log2({nonzero})", entropy(&hist)));
        }
    }
    let mut counts = vec![0u32; 32];
    counts[0] = 50;
    counts[31] = 50;
    let m2 = second_moment_normalized(&Histogram { counts, total: 100 });
    if m2 != 1.0 {
        bad.push(format!("extreme-bin M2 = {m2}"));
    }
    check(bad.is_empty(), format!("1000 patches, extreme-bin M2 = {m2}, problems: {:?}", bad.iter().take(3).collect::<Vec<_>>()))
}

fn fisher_closed_form() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = Normal::new(0.0, 1.0).unwrap();
    let a: Vec<f64> = (0..100_000).map(|_| n.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..100_000).map(|_| 2.0 + n.sample(&mut rng)).collect();
    let j = fisher_score(&a, &b).unwrap();
    check((j - 2.0).abs() <= 0.05, format!("J = {j:.4} (expected 2 +/- 0.05)"))
}

// ---------------------------------------------------------------- mixtures

fn sample_mixture(
    rng: &mut ChaCha8Rng,
    n: usize,
    prior0: f64,
    means: [[f64; FEATURE_DIM]; 2],
    sds: [[f64; FEATURE_DIM]; 2],
) -> (Vec<FeatureVector>, Vec<usize>) {
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut points = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let c = if rng.random_bool(prior0) { 0 } else { 1 };
        points.push(FeatureVector(std::array::from_fn(|d| {
            means[c][d] + sds[c][d] * z.sample(rng)
        })));
        labels.push(c);
    }
    (points, labels)
}

fn em_monotonicity() -> Outcome {
    let opts = EmOptions { tol: 1e-12, max_iter: 200 };
    let mut worst = 0.0f64;
    let mut iterations = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let means: [[f64; FEATURE_DIM]; 2] =
            std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(0.2..0.8)));
        let sds: [[f64; FEATURE_DIM]; 2] =
            std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(0.03..0.2)));
        let prior = rng.random_range(0.2..0.8);
        let (points, _) = sample_mixture(&mut rng, 1000, prior, means, sds);
        let init = kmeans(&points, &KmeansParams { seed, ..KmeansParams::default() })
            .map_err(|e| format!("seed {seed}: {e}"))?;
        let fit = fit_em(&points, &init, &opts).map_err(|e| format!("seed {seed}: {e}"))?;
        iterations += fit.log_likelihood.len() - 1;
        for w in fit.log_likelihood.windows(2) {
            worst = worst.min(w[1] - w[0]);
        }
    }
    check(
        worst >= -1e-9,
        format!("100 datasets, {iterations} iterations, largest decrease {:.3e}", -worst),
    )
}

fn gmm_recovery() -> Outcome {
    let means = [[0.3; FEATURE_DIM], [0.7; FEATURE_DIM]];
    let sds = [[0.1; FEATURE_DIM]; 2];
    let mut good = 0;
    let mut worst_mean = 0.0f64;
    let mut worst_prior = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let (points, _) = sample_mixture(&mut rng, 5000, 0.6, means, sds);
        let init = kmeans(&points, &KmeansParams { seed, ..KmeansParams::default() })
            .map_err(|e| e.to_string())?;
        let Ok(fit) = fit_em(&points, &init, &EmOptions::default()) else {
            continue;
        };
        let m = &fit.model;
        let score = |a: usize, b: usize| {
            let dm = (0..FEATURE_DIM)
                .map(|d| {
                    (m.components[a].mean[d] - 0.3)
                        .abs()
                        .max((m.components[b].mean[d] - 0.7).abs())
                })
                .fold(0.0, f64::max);
            let dp = (m.priors[a] - 0.6).abs().max((m.priors[b] - 0.4).abs());
            (dm, dp)
        };
        let (s01, s10) = (score(0, 1), score(1, 0));
        let (dm, dp) = if s01.0 <= s10.0 { s01 } else { s10 };
        worst_mean = worst_mean.max(dm);
        worst_prior = worst_prior.max(dp);
        if dm <= 0.02 && dp <= 0.03 {
            good += 1;
        }
    }
    check(
        good >= 95,
        format!("{good}/100 recovered; worst mean error {worst_mean:.4}, worst prior error {worst_prior:.4}"),
    )
}

fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    (-(x - mean) * (x - mean) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

/// Plain incremental EM step, no cap.
fn incremental_oracle(model: &GmmModel, x: &FeatureVector) -> GmmModel {
    let joint: Vec<f64> = (0..2)
        .map(|c| {
            let comp = &model.components[c];
            model.priors[c]
                * (0..FEATURE_DIM)
                    .map(|d| normal_pdf(x[d], comp.mean[d], comp.var[d]))
                    .product::<f64>()
        })
        .collect();
    let total = joint[0] + joint[1];
    let m = model.sample_count as f64;
    let mut next = model.clone();
    for c in 0..2 {
        let w = joint[c] / total;
        let mass = model.masses[c];
        let new_mass = mass + w;
        let comp = &model.components[c];
        for d in 0..FEATURE_DIM {
            let mean = (mass * comp.mean[d] + w * x[d]) / new_mass;
            next.components[c].mean[d] = mean;
            next.components[c].var[d] = (mass * comp.var[d] + w * (x[d] - mean) * (x[d] - mean)) / new_mass;
        }
        next.masses[c] = new_mass;
        next.priors[c] = (m * model.priors[c] + w) / (m + 1.0);
    }
    next.sample_count += 1;
    next
}

fn max_param_gap(a: &GmmModel, b: &GmmModel) -> f64 {
    let mut gap = 0.0f64;
    for c in 0..2 {
        gap = gap.max((a.priors[c] - b.priors[c]).abs());
        gap = gap.max((a.masses[c] - b.masses[c]).abs());
        for d in 0..FEATURE_DIM {
            gap = gap.max((a.components[c].mean[d] - b.components[c].mean[d]).abs());
            gap = gap.max((a.components[c].var[d] - b.components[c].var[d]).abs());
        }
    }
    gap
}

fn three_sample_model() -> GmmModel {
    let comp = |mean: f64, var: f64, tag| GaussianComponent {
        tag,
        ..GaussianComponent::new(
            FeatureVector(std::array::from_fn(|d| mean + 0.01 * d as f64)),
            std::array::from_fn(|d| var * (1.0 + 0.1 * d as f64)),
        )
    };
    GmmModel {
        components: [comp(0.35, 0.02, ClassTag::Lane), comp(0.5, 0.03, ClassTag::Vehicle)],
        priors: [1.8 / 3.0, 1.2 / 3.0],
        masses: [1.8, 1.2],
        sample_count: 3,
    }
}

fn online_step() -> Outcome {
    let model = three_sample_model();
    let x = FeatureVector(std::array::from_fn(|d| 0.42 + 0.005 * d as f64));
    let want = incremental_oracle(&model, &x);
    let mut gap = 0.0f64;
    for lambda in [0.05, 1e-9] {
        gap = gap.max(max_param_gap(&online_update(&model, &x, lambda), &want));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut m = model;
    let mut peak = 0.0f64;
    for _ in 0..10_000 {
        let x = FeatureVector(std::array::from_fn(|_| rng.random::<f64>()));
        m.update_online(&x, 0.05);
        peak = peak.max(m.masses[0]).max(m.masses[1]);
    }
    check(
        gap <= 1e-12 && peak <= 21.0,
        format!("single-step max deviation {gap:.2e}; peak mass over 1e4 updates {peak:.6}"),
    )
}

fn drift_tracking() -> Outcome {
    const N: usize = 4000;
    const INIT: usize = 500;
    const WINDOW: usize = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut stream = Vec::with_capacity(N);
    for i in 0..N {
        let vehicle = rng.random_bool(0.5);
        let (mean, sd) = if vehicle {
            (0.45 + 0.3 * i as f64 / (N - 1) as f64, 0.02)
        } else {
            (0.3, 0.05)
        };
        let x = FeatureVector(std::array::from_fn(|_| mean + sd * z.sample(&mut rng)));
        stream.push((x, vehicle));
    }
    let init: Vec<FeatureVector> = stream[..INIT].iter().map(|s| s.0).collect();
    let km = kmeans(&init, &KmeansParams::default()).map_err(|e| e.to_string())?;
    let fit = fit_em(&init, &km, &EmOptions::default()).map_err(|e| e.to_string())?;
    let frozen = assign_class_tags(&fit.model).map_err(|e| e.to_string())?;

    let mut live = frozen.clone();
    let (mut live_hits, mut frozen_hits) = (0, 0);
    for (i, (x, vehicle)) in stream.iter().enumerate().skip(INIT) {
        let in_window = i >= N - WINDOW;
        let expect = if *vehicle { Label::Vehicle } else { Label::Lane };
        if in_window {
            live_hits += (classify(x, &live).unwrap().label == expect) as usize;
            frozen_hits += (classify(x, &frozen).unwrap().label == expect) as usize;
        }
        live.update_online(x, 0.05);
    }
    let live_acc = live_hits as f64 / WINDOW as f64;
    let frozen_acc = frozen_hits as f64 / WINDOW as f64;
    check(
        live_acc >= 0.95 && frozen_acc < 0.85,
        format!("trailing {WINDOW}: online {:.1}%, frozen {:.1}%", 100.0 * live_acc, 100.0 * frozen_acc),
    )
}

fn classifier_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut disagreements = 0;
    let mut worst_sum = 0.0f64;
    for _ in 0..10_000 {
        let comp = |rng: &mut ChaCha8Rng, tag| GaussianComponent {
            tag,
            ..GaussianComponent::new(
                FeatureVector(std::array::from_fn(|_| rng.random())),
                std::array::from_fn(|_| rng.random_range(0.002..0.2)),
            )
        };
        let (a, b) = (comp(&mut rng, ClassTag::Lane), comp(&mut rng, ClassTag::Vehicle));
        let p: f64 = rng.random_range(0.05..0.95);
        let model = GmmModel {
            components: if rng.random_bool(0.5) { [a, b] } else { [b, a] },
            priors: [p, 1.0 - p],
            masses: [p * 100.0, (1.0 - p) * 100.0],
            sample_count: 100,
        };
        let x = FeatureVector(std::array::from_fn(|_| rng.random()));
        let f = discriminant(&x, &model).unwrap();
        let (pv, pl) = posterior(&x, &model).unwrap();
        if (f > 0.0) != (pv > pl) {
            disagreements += 1;
        }
        worst_sum = worst_sum.max((pv + pl - 1.0).abs());
    }
    check(
        disagreements == 0 && worst_sum <= 1e-12,
        format!("10^4 draws: {disagreements} sign disagreements, max |sum - 1| = {worst_sum:.1e}"),
    )
}

// ---------------------------------------------------------------- pipeline

const INIT_FRAMES: u64 = 167; // 2000 samples at 12 blocks per frame
const EVAL_FRAMES: u64 = 500;

struct SceneRun {
    reports: String,
    decisions: u64,
    correct: u64,
    queue_mismatches: u64,
    reports_emitted: u64,
}

fn run_scene(seed: u64) -> Result<SceneRun, String> {
    let mut detector = Detector::new(
        DetectorConfig { frame_width: common::WIDTH, frame_height: common::HEIGHT, ..DetectorConfig::default() },
        common::lanes(),
    )
    .map_err(|e| e.to_string())?;
    let mut scene = common::Scene::new(seed);
    let mut out = SceneRun { reports: String::new(), decisions: 0, correct: 0, queue_mismatches: 0, reports_emitted: 0 };
    for seq in 0..INIT_FRAMES + EVAL_FRAMES {
        if seq % 4 == 0 {
            scene.reshuffle();
        }
        let frame = scene.render(seq);
        let was_ready = detector.phase() == Phase::Ready;
        let obs = detector.observe_frame(&frame).map_err(|e| format!("frame {seq}: {e}"))?;
        if seq + 1 == INIT_FRAMES && detector.phase() != Phase::Ready {
            return Err(format!("not initialized after {INIT_FRAMES} frames"));
        }
        if !was_ready {
            continue;
        }
        let report = detector.report(frame.timestamp_ms, &obs);
        for o in &obs {
            out.decisions += 1;
            let truth = scene.occupancy[o.lane][o.block_index];
            out.correct += ((o.decision.label == Label::Vehicle) == truth) as u64;
        }
        for (lane, status) in report.lanes.iter().enumerate() {
            if status.queue_length != queue_length(&scene.occupancy[lane]) {
                out.queue_mismatches += 1;
            }
        }
        out.reports.push_str(&report.to_string());
        out.reports.push('\n');
        out.reports_emitted += 1;
    }
    Ok(out)
}

fn end_to_end() -> Outcome {
    let r = run_scene(9)?;
    let acc = r.correct as f64 / r.decisions as f64;
    check(
        r.reports_emitted == EVAL_FRAMES && acc >= 0.95 && r.queue_mismatches == 0,
        format!(
            "{} frames, block accuracy {:.2}% ({} / {}), queue mismatches {}",
            r.reports_emitted,
            100.0 * acc,
            r.correct,
            r.decisions,
            r.queue_mismatches
        ),
    )
}

fn determinism() -> Outcome {
    let a = run_scene(9)?;
    let b = run_scene(9)?;
    check(
        a.reports.as_bytes() == b.reports.as_bytes() && !a.reports.is_empty(),
        format!("two runs, {} report bytes each, identical = {}", a.reports.len(), a.reports == b.reports),
    )
}

fn lanewatch(args: &[String]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_lanewatch"))
        .args(args)
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("lanewatch {args:?} exited with {status}"))
    }
}

fn persistence() -> Outcome {
    const SPLIT: u64 = 300;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    let frames: Vec<_> = common::scripted_stream(11, INIT_FRAMES + EVAL_FRAMES, 4)
        .into_iter()
        .map(|(f, _)| f)
        .collect();
    fs::write(path("lanes.cfg"), common::TWO_LANES).map_err(|e| e.to_string())?;
    fs::write(path("all.raw"), common::raw_bytes(&frames)).map_err(|e| e.to_string())?;
    fs::write(path("head.raw"), common::raw_bytes(&frames[..SPLIT as usize])).map_err(|e| e.to_string())?;
    fs::write(path("tail.raw"), common::raw_bytes(&frames[SPLIT as usize..])).map_err(|e| e.to_string())?;

    let base = |input: &str, output: &str| {
        vec![
            "--config".to_string(),
            path("lanes.cfg"),
            "--input".into(),
            path(input),
            "--output".into(),
            path(output),
            "--source-fps".into(),
            common::FPS.to_string(),
            "--target-fps".into(),
            common::FPS.to_string(),
        ]
    };

    lanewatch(&base("all.raw", "all.txt"))?;
    let mut head = base("head.raw", "head.txt");
    head.extend(["--snapshot-out".to_string(), path("snap.txt")]);
    lanewatch(&head)?;
    let mut tail = base("tail.raw", "tail.txt");
    tail.extend(["--snapshot-in".to_string(), path("snap.txt")]);
    lanewatch(&tail)?;

    let read = |name: &str| fs::read_to_string(path(name)).map_err(|e| e.to_string());
    let (all, tail) = (read("all.txt")?, read("tail.txt")?);
    let split_ts = SPLIT * 1000 / common::FPS as u64;
    let expected: String = all
        .lines()
        .filter(|l| l.parse::<TrafficStatusReport>().map(|r| r.timestamp_ms >= split_ts).unwrap_or(false))
        .map(|l| format!("{l}\n"))
        .collect();
    let tail_count = tail.lines().count();
    check(
        tail_count as u64 == INIT_FRAMES + EVAL_FRAMES - SPLIT && tail == expected,
        format!(
            "split at frame {SPLIT}: resumed run {tail_count} reports, identical to uninterrupted = {}",
            tail == expected
        ),
    )
}
