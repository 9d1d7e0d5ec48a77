//! The ten acceptance criteria. Each test prints one `criterion N: PASS|FAIL`
//! line with the measured numbers, then asserts. Criteria 6 to 10 share one
//! five-seed sweep over the default world, run once per process.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hardclass::anchor::{build_anchor_set, select_classes_anchor, ClassSelection};
use hardclass::augment::aug_disparity;
use hardclass::confusion::{class_confusion, frame_stats, pixel_entropy, ProbMap};
use hardclass::frame_select::{euclidean, kcenter_indices, FrameSelector};
use hardclass::learner::{ce_loss_and_grad, seg_loss_and_grad, Params, PixelSet, NUM_FEATURES};
use hardclass::metrics::{load_run, miou_at_fraction};
use hardclass::orchestrator::{iteration_dir, run_active_loop_on, IterationRecord, LoopConfig, Method};
use hardclass::synth::{generate_world, Dataset, WorldConfig};
use hardclass::tensor_store::{read_label_map, DenseTensor, LabelMap, RgbImage, IGNORE_LABEL};
use hardclass::FrameId;

const SEEDS: u64 = 5;

fn report(n: usize, pass: bool, detail: String) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} failed: {detail}");
}

fn random_probmap(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> ProbMap {
    let mut v = Vec::with_capacity(h * w * c);
    for _ in 0..h * w {
        // mixture of flat and peaked pixels so every class row gets exercised
        let sharp = rng.random_range(0.5f64..6.0);
        let raw: Vec<f64> = (0..c).map(|_| rng.random::<f64>().powf(sharp) + 1e-6).collect();
        let s: f64 = raw.iter().sum();
        v.extend(raw.iter().map(|x| (x / s) as f32));
    }
    ProbMap::new(h, w, c, v).unwrap()
}

// ---------------------------------------------------------------- 1

/// P^c straight from the definition, in f64.
fn naive_confusion(pm: &ProbMap) -> Vec<Option<Vec<f64>>> {
    let c_n = pm.num_classes();
    let mut sums = vec![vec![0.0f64; c_n]; c_n];
    let mut plain = vec![vec![0.0f64; c_n]; c_n];
    let mut weight = vec![0.0f64; c_n];
    let mut count = vec![0usize; c_n];
    for i in 0..pm.num_pixels() {
        let p: Vec<f64> = pm.pixel(i).iter().map(|&v| v as f64).collect();
        let s: f64 = p.iter().sum();
        let mut best = 0;
        for c in 1..c_n {
            if p[c] > p[best] {
                best = c;
            }
        }
        let h: f64 = p.iter().filter(|&&q| q > 0.0).map(|&q| -(q / s) * (q / s).log2()).sum();
        for c in 0..c_n {
            sums[best][c] += h * p[c];
            plain[best][c] += p[c];
        }
        weight[best] += h;
        count[best] += 1;
    }
    (0..c_n)
        .map(|c| {
            (count[c] > 0).then(|| {
                let row = if weight[c] > 0.0 { &sums[c] } else { &plain[c] };
                let t: f64 = row.iter().sum();
                row.iter().map(|v| v / t).collect()
            })
        })
        .collect()
}

#[test]
fn criterion_01_confusion_matches_naive_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let maps: Vec<ProbMap> = (0..200).map(|_| random_probmap(&mut rng, 4, 4, 3)).collect();
    let start = Instant::now();
    let fast: Vec<_> = maps.iter().map(class_confusion).collect();
    let elapsed = start.elapsed();
    let mut worst = 0.0f64;
    let mut validity_mismatch = 0;
    for (pm, cc) in maps.iter().zip(&fast) {
        for (c, expected) in naive_confusion(pm).iter().enumerate() {
            match (cc.row(c), expected) {
                (Some(row), Some(exp)) => {
                    for (a, b) in row.iter().zip(exp) {
                        worst = worst.max((*a as f64 - b).abs());
                    }
                }
                (None, None) => {}
                _ => validity_mismatch += 1,
            }
        }
    }
    let pass = worst <= 1e-6 && validity_mismatch == 0 && elapsed < Duration::from_secs(1);
    report(
        1,
        pass,
        format!("max abs error {worst:.2e} (<= 1e-6), validity mismatches {validity_mismatch}, {elapsed:?} (< 1 s)"),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_02_entropy_exactness() {
    let mut worst_uniform = 0.0f64;
    let mut onehot_nonzero = 0;
    for c_n in 2..=20usize {
        let uniform = vec![1.0 / c_n as f32; c_n];
        worst_uniform = worst_uniform.max((pixel_entropy(&uniform).unwrap() - (c_n as f64).log2()).abs());
        let pm = ProbMap::new(2, 2, c_n, uniform.repeat(4)).unwrap();
        worst_uniform = worst_uniform.max((frame_stats(&pm).mean_entropy - (c_n as f64).log2()).abs());
        for hot in 0..c_n {
            let mut p = vec![0.0f32; c_n];
            p[hot] = 1.0;
            if pixel_entropy(&p).unwrap() != 0.0 {
                onehot_nonzero += 1;
            }
            let pm = ProbMap::new(1, 3, c_n, p.repeat(3)).unwrap();
            if frame_stats(&pm).mean_entropy != 0.0 {
                onehot_nonzero += 1;
            }
        }
    }
    report(
        2,
        worst_uniform <= 1e-9 && onehot_nonzero == 0,
        format!("uniform |H - log2 C| max {worst_uniform:.2e} (<= 1e-9), one-hot nonzero entropies {onehot_nonzero} (== 0)"),
    );
}

// ---------------------------------------------------------------- 3

fn nested(selections: &[ClassSelection]) -> usize {
    selections
        .windows(2)
        .map(|w| w[1].selected.iter().filter(|c| !w[0].selected.contains(c)).count())
        .sum()
}

#[test]
fn criterion_03_threshold_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let c_n = 5;
    let labeled: Vec<ProbMap> = (0..6).map(|_| random_probmap(&mut rng, 6, 6, c_n)).collect();
    let anchors = build_anchor_set(&labeled, c_n).unwrap();
    let grid: Vec<f32> = (1..=14).map(|i| i as f32 / 10.0).collect();
    let mut violations = 0;
    let mut selected_total = 0;
    for f in 0..100u32 {
        let frame = random_probmap(&mut rng, 6, 6, c_n);
        let cc = class_confusion(&frame);
        let anchor: Vec<ClassSelection> = grid
            .iter()
            .map(|&d| select_classes_anchor(FrameId(f), &cc, &anchors, d).unwrap())
            .collect();
        let strong = class_confusion(&random_probmap(&mut rng, 6, 6, c_n));
        let disp = aug_disparity(&cc, &strong).unwrap();
        let aug: Vec<ClassSelection> = grid
            .iter()
            .map(|&d| ClassSelection::threshold(FrameId(f), disp.clone(), d))
            .collect();
        violations += nested(&anchor) + nested(&aug);
        selected_total += anchor[0].selected.len() + aug[0].selected.len();
    }
    report(
        3,
        violations == 0 && selected_total > 0,
        format!("nesting violations {violations} (== 0) over 100 frames x 14 thresholds, {selected_total} selections at delta 0.1"),
    );
}

// ---------------------------------------------------------------- 4

fn covering_radius(points: &[[f32; 2]], centers: &[usize]) -> f64 {
    points
        .iter()
        .map(|p| centers.iter().map(|&c| euclidean(p, &points[c])).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max)
}

#[test]
fn criterion_04_kcenter_two_approximation() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let n_b = 3;
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    for set in 0..50 {
        let n = 4 + set % 5;
        let points: Vec<[f32; 2]> = (0..n)
            .map(|_| [rng.random_range(-10.0f32..10.0), rng.random_range(-10.0f32..10.0)])
            .collect();
        let refs: Vec<&[f32]> = points.iter().map(|p| p.as_slice()).collect();
        let greedy = covering_radius(&points, &kcenter_indices(&refs, &[], n_b));
        let mut best = f64::INFINITY;
        for a in 0..n {
            for b in a + 1..n {
                for c in b + 1..n {
                    best = best.min(covering_radius(&points, &[a, b, c]));
                }
            }
        }
        if greedy > 2.0 * best + 1e-9 {
            violations += 1;
        }
        if best > 0.0 {
            worst_ratio = worst_ratio.max(greedy / best);
        }
    }
    report(
        4,
        violations == 0,
        format!("violations {violations} (== 0) over 50 sets, worst greedy/optimal radius {worst_ratio:.3} (<= 2)"),
    );
}

// ---------------------------------------------------------------- 5

fn random_set(rng: &mut ChaCha8Rng, n: usize, c_n: usize) -> PixelSet {
    let mut set = PixelSet::default();
    for _ in 0..n {
        let f: Vec<f32> = (0..NUM_FEATURES).map(|_| rng.random::<f32>()).collect();
        set.push(&f, rng.random_range(0..c_n) as u8);
    }
    set
}

fn flat(p: &Params) -> Vec<f64> {
    p.weights.iter().chain(&p.bias).copied().collect()
}

fn with_flat(p: &Params, i: usize, delta: f64) -> Params {
    let mut q = p.clone();
    if i < q.weights.len() {
        q.weights[i] += delta;
    } else {
        q.bias[i - q.weights.len()] += delta;
    }
    q
}

/// ‖analytic − numeric‖₂ / max(‖analytic‖₂, ‖numeric‖₂).
fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(1e-12)
}

fn numeric_grad(p: &Params, loss: impl Fn(&Params) -> f64) -> Vec<f64> {
    let h = 1e-5;
    (0..flat(p).len())
        .map(|i| (loss(&with_flat(p, i, h)) - loss(&with_flat(p, i, -h))) / (2.0 * h))
        .collect()
}

#[test]
fn criterion_05_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let c_n = 4;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let params = Params {
            num_classes: c_n,
            weights: (0..c_n * NUM_FEATURES).map(|_| rng.random_range(-2.0..2.0)).collect(),
            bias: (0..c_n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        };
        let labeled = random_set(&mut rng, 24, c_n);
        let pseudo = random_set(&mut rng, 40, c_n);
        let li: Vec<usize> = (0..16).map(|_| rng.random_range(0..labeled.len())).collect();
        let pi: Vec<usize> = (0..16).map(|_| rng.random_range(0..pseudo.len())).collect();

        let (_, g) = ce_loss_and_grad(&params, &labeled, &li);
        let num = numeric_grad(&params, |p| ce_loss_and_grad(p, &labeled, &li).0);
        worst = worst.max(relative_error(&flat(&g), &num));

        let (_, g) = seg_loss_and_grad(&params, &labeled, &li, &pseudo, &pi);
        let num = numeric_grad(&params, |p| seg_loss_and_grad(p, &labeled, &li, &pseudo, &pi).0);
        worst = worst.max(relative_error(&flat(&g), &num));
    }
    report(5, worst <= 1e-4, format!("max relative gradient error {worst:.2e} (<= 1e-4) over 20 batches, CE and seg loss"));
}

// ---------------------------------------------------------------- shared sweep

struct Run {
    dir: PathBuf,
    records: Vec<IterationRecord>,
    curve: Vec<(f64, f32)>,
}

impl Run {
    fn final_fraction(&self) -> f64 {
        self.records.last().unwrap().ledger.fraction
    }

    fn final_miou(&self) -> f32 {
        self.records.last().unwrap().eval.stage2.miou
    }

    /// This run's curve read at another run's annotated fraction.
    fn at(&self, fraction: f64) -> f32 {
        miou_at_fraction(&self.curve, fraction).unwrap()
    }
}

struct Sweep {
    _tmp: tempfile::TempDir,
    worlds: Vec<Dataset>,
    runs: BTreeMap<(u64, String), Run>,
    elapsed: Duration,
}

impl Sweep {
    fn run(&self, seed: u64, label: &str) -> &Run {
        &self.runs[&(seed, label.to_string())]
    }
}

fn anchor_label(sel: FrameSelector) -> String {
    format!("anchor_{sel}")
}

fn run_cfg(root: &Path, seed: u64, method: Method, sel: FrameSelector, label: &str) -> LoopConfig {
    LoopConfig {
        dataset: root.join(format!("world_{seed}")),
        out_dir: root.join(format!("run_{seed}_{label}")),
        method,
        frame_selector: sel,
        seed,
        ..LoopConfig::default()
    }
}

fn sweep() -> &'static Sweep {
    static SWEEP: OnceLock<Sweep> = OnceLock::new();
    SWEEP.get_or_init(|| {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let start = Instant::now();
        let mut worlds = Vec::new();
        let mut runs = BTreeMap::new();
        for seed in 0..SEEDS {
            let wroot = root.join(format!("world_{seed}"));
            generate_world(&WorldConfig { seed, ..WorldConfig::default() }, &wroot).unwrap();
            let ds = Dataset::load(&wroot).unwrap();
            let mut jobs = vec![(Method::IouSkyline, FrameSelector::Diversity, "iou_skyline".to_string())];
            for sel in FrameSelector::ALL {
                jobs.push((Method::Anchor, sel, anchor_label(sel)));
                jobs.push((Method::FrameFull(sel), sel, Method::FrameFull(sel).to_string()));
            }
            for (method, sel, label) in jobs {
                let cfg = run_cfg(&root, seed, method, sel, &label);
                let records = run_active_loop_on(&cfg, &ds).unwrap();
                let curve = load_run(&cfg.out_dir).unwrap().curve();
                runs.insert((seed, label), Run { dir: cfg.out_dir, records, curve });
            }
            worlds.push(ds);
        }
        Sweep {
            _tmp: tmp,
            worlds,
            runs,
            elapsed: start.elapsed(),
        }
    })
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_06_ledger_matches_rescan() {
    let s = sweep();
    let mut checked = 0;
    let mut mismatches = Vec::new();
    for seed in 0..SEEDS {
        let run = s.run(seed, &anchor_label(FrameSelector::Diversity));
        assert_eq!(run.records.len(), 4);
        for r in &run.records {
            let dir = iteration_dir(&run.dir, r.iteration).join("partial_labels");
            let mut rescan = 0u64;
            for e in fs::read_dir(&dir).unwrap() {
                let lm = read_label_map(e.unwrap().path()).unwrap();
                rescan += lm.labels().iter().filter(|&&l| l != IGNORE_LABEL).count() as u64;
            }
            checked += 1;
            if rescan != r.ledger.cumulative_pixels {
                mismatches.push((seed, r.iteration, rescan, r.ledger.cumulative_pixels));
            }
        }
    }
    report(
        6,
        mismatches.is_empty(),
        format!("{checked} iterations checked, mismatches {mismatches:?} (none)"),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_07_skyline_anchor_random_ordering() {
    let s = sweep();
    let mut holds = 0;
    let mut rows = Vec::new();
    for seed in 0..SEEDS {
        let anchor = s.run(seed, &anchor_label(FrameSelector::Diversity));
        let f = anchor.final_fraction();
        let a = anchor.final_miou();
        let sky = s.run(seed, "iou_skyline").at(f);
        let random = s.run(seed, "frame_full_random").at(f);
        let ok = sky >= a && a > random;
        holds += ok as u64;
        rows.push(format!("seed {seed} @{f:.4}: skyline {sky:.3} anchor {a:.3} random {random:.3}"));
    }
    for r in &rows {
        println!("    {r}");
    }
    let fast = s.elapsed < Duration::from_secs(600);
    report(
        7,
        holds >= 4 && fast,
        format!(
            "skyline >= anchor > frame_full_random at matched fraction in {holds}/5 seeds (>= 4); sweep of {} runs in {:.0?} (< 10 min)",
            s.runs.len(),
            s.elapsed
        ),
    );
}

// ---------------------------------------------------------------- 8

#[test]
fn criterion_08_stage_two_gain() {
    let s = sweep();
    let mut holds = 0;
    for seed in 0..SEEDS {
        let last = s.run(seed, &anchor_label(FrameSelector::Diversity)).records.last().unwrap();
        let s1 = last.eval.stage1.as_ref().unwrap().miou;
        let s2 = last.eval.stage2.miou;
        println!("    seed {seed}: stage 1 {s1:.3} stage 2 {s2:.3}");
        holds += (s2 >= s1) as u64;
    }
    report(8, holds >= 4, format!("stage-2 >= stage-1 mIoU for anchor at the final iteration in {holds}/5 seeds (>= 4)"));
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_09_decorator_beats_full_frames() {
    let s = sweep();
    let mut counts = Vec::new();
    for sel in FrameSelector::ALL {
        let mut holds = 0;
        for seed in 0..SEEDS {
            let anchor = s.run(seed, &anchor_label(sel));
            let f = anchor.final_fraction();
            let full = s.run(seed, &Method::FrameFull(sel).to_string()).at(f);
            println!("    {sel} seed {seed} @{f:.4}: anchor {:.3} full frames {full:.3}", anchor.final_miou());
            holds += (anchor.final_miou() >= full) as u64;
        }
        counts.push((sel, holds));
    }
    let pass = counts.iter().all(|&(_, h)| h >= 3);
    let detail: Vec<String> = counts.iter().map(|(sel, h)| format!("{sel} {h}/5")).collect();
    report(9, pass, format!("anchor >= full-frame at matched fraction: {} (each >= 3)", detail.join(", ")));
}

// ---------------------------------------------------------------- 10

fn random_tensor(rng: &mut ChaCha8Rng) -> DenseTensor {
    let shape: Vec<usize> = (0..rng.random_range(2..=3)).map(|_| rng.random_range(1..=5)).collect();
    let n: usize = shape.iter().product();
    if rng.random_bool(0.5) {
        // arbitrary bit patterns, NaNs and infinities included
        DenseTensor::from_f32(shape, (0..n).map(|_| f32::from_bits(rng.random())).collect()).unwrap()
    } else {
        DenseTensor::from_u8(shape, (0..n).map(|_| rng.random()).collect()).unwrap()
    }
}

#[test]
fn criterion_10_determinism_and_formats() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let origin = Path::new("fixture");
    let mut failures = 0;
    for _ in 0..100 {
        let t = random_tensor(&mut rng);
        let bytes = t.to_bytes();
        let back = DenseTensor::from_bytes(&bytes, origin).unwrap();
        failures += (back.to_bytes() != bytes) as usize;

        let (w, h) = (rng.random_range(1..=9), rng.random_range(1..=9));
        let img = RgbImage::new(w, h, (0..w * h * 3).map(|_| rng.random()).collect()).unwrap();
        let ppm = img.to_ppm();
        let img_back = RgbImage::from_ppm(&ppm, origin).unwrap();
        failures += (img_back != img || img_back.to_ppm() != ppm) as usize;

        let lm = LabelMap::new(w, h, (0..w * h).map(|_| rng.random()).collect()).unwrap();
        let pgm = lm.to_pgm();
        let lm_back = LabelMap::from_pgm(&pgm, origin).unwrap();
        failures += (lm_back != lm || lm_back.to_pgm() != pgm) as usize;
    }

    let s = sweep();
    let tmp = tempfile::tempdir().unwrap();
    let mut curve_diffs = 0;
    for (seed, label, method, sel) in [
        (0, anchor_label(FrameSelector::Diversity), Method::Anchor, FrameSelector::Diversity),
        (1, "frame_full_random".to_string(), Method::FrameFull(FrameSelector::Random), FrameSelector::Random),
    ] {
        let cfg = run_cfg(tmp.path(), seed, method, sel, &label);
        let again = run_active_loop_on(&cfg, &s.worlds[seed as usize]).unwrap();
        let original = s.run(seed, &label);
        let same_curve = fs::read(cfg.out_dir.join("curve.csv")).unwrap() == fs::read(original.dir.join("curve.csv")).unwrap();
        curve_diffs += (!same_curve || again != original.records) as usize;
    }
    report(
        10,
        failures == 0 && curve_diffs == 0,
        format!("round-trip failures {failures} (== 0) over 100 PTNS/PPM/PGM fixtures each, rerun curve.csv differences {curve_diffs} (== 0)"),
    );
}
