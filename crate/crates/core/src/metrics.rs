//! Dataset-level segmentation metrics and run reporting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor_store::{LabelMap, IGNORE_LABEL};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Rows are ground truth, columns prediction; ignore pixels excluded.
    pub confusion: Vec<Vec<u64>>,
    pub per_class_iou: Vec<Option<f32>>,
    pub miou: f32,
}

impl EvalResult {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let c_n = confusion.len();
        let per_class_iou: Vec<Option<f32>> = (0..c_n)
            .map(|c| {
                let tp = confusion[c][c];
                let row: u64 = confusion[c].iter().sum();
                let col: u64 = confusion.iter().map(|r| r[c]).sum();
                let union = row + col - tp;
                (union > 0).then(|| (tp as f64 / union as f64) as f32)
            })
            .collect();
        let valid: Vec<f64> = per_class_iou.iter().flatten().map(|&v| v as f64).collect();
        let miou = if valid.is_empty() {
            0.0
        } else {
            (valid.iter().sum::<f64>() / valid.len() as f64) as f32
        };
        Self {
            confusion,
            per_class_iou,
            miou,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    pub fn counted_pixels(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

/// Accumulates one confusion matrix over all frames.
pub fn evaluate(preds: &[LabelMap], gts: &[LabelMap], num_classes: usize) -> Result<EvalResult> {
    if preds.len() != gts.len() {
        return Err(Error::validation(format!(
            "{} predictions for {} ground-truth maps",
            preds.len(),
            gts.len()
        )));
    }
    let mut conf = vec![vec![0u64; num_classes]; num_classes];
    for (i, (p, g)) in preds.iter().zip(gts).enumerate() {
        if !p.same_shape(g) {
            return Err(Error::validation(format!(
                "frame {i}: prediction {}x{} vs ground truth {}x{}",
                p.width(),
                p.height(),
                g.width(),
                g.height()
            )));
        }
        for (&pl, &gl) in p.labels().iter().zip(g.labels()) {
            if gl == IGNORE_LABEL {
                continue;
            }
            let gl = gl as usize;
            if gl >= num_classes {
                return Err(Error::validation(format!("frame {i}: ground-truth class {gl} out of range")));
            }
            if pl as usize >= num_classes {
                return Err(Error::validation(format!("frame {i}: predicted class {pl} out of range")));
            }
            conf[gl][pl as usize] += 1;
        }
    }
    Ok(EvalResult::from_confusion(conf))
}

/// Evaluation of one iteration as persisted in `iter_XX/eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationEval {
    pub iteration: usize,
    pub cumulative_pixels: u64,
    pub fraction: f64,
    /// Absent for the warm-up iteration.
    pub stage1: Option<EvalResult>,
    pub stage2: EvalResult,
}

/// Identifies a run directory; written as `run.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub method: String,
    pub seed: u64,
    pub num_classes: usize,
}

pub const RUN_INFO_FILE: &str = "run.json";

/// mIoU at budget `fraction`, linearly interpolated along a curve sorted by
/// fraction. Past the last point the final value is held.
pub fn miou_at_fraction(curve: &[(f64, f32)], fraction: f64) -> Option<f32> {
    let first = curve.first()?;
    if fraction <= first.0 {
        return Some(first.1);
    }
    for w in curve.windows(2) {
        let ((f0, m0), (f1, m1)) = (w[0], w[1]);
        if fraction <= f1 {
            if f1 <= f0 {
                return Some(m1);
            }
            let t = (fraction - f0) / (f1 - f0);
            return Some((m0 as f64 + t * (m1 as f64 - m0 as f64)) as f32);
        }
    }
    curve.last().map(|p| p.1)
}

/// Reads one JSON document, I/O and parse failures kept apart.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::format(path, "json", e.to_string()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::format(path, "json", e.to_string()))?;
    bytes.push(b'\n');
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// One run directory loaded for reporting.
#[derive(Clone, Debug)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub info: RunInfo,
    pub evals: Vec<IterationEval>,
    pub ledger_cumulative: u64,
}

impl RunSummary {
    pub fn curve(&self) -> Vec<(f64, f32)> {
        self.evals.iter().map(|e| (e.fraction, e.stage2.miou)).collect()
    }

    pub fn final_eval(&self) -> &IterationEval {
        self.evals.last().expect("runs hold at least the warm-up iteration")
    }
}

fn iteration_dirs(dir: &Path) -> Result<Vec<(usize, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let Some(k) = name.to_str().and_then(|n| n.strip_prefix("iter_")).and_then(|n| n.parse().ok()) else {
            continue;
        };
        out.push((k, entry.path()));
    }
    out.sort();
    Ok(out)
}

/// Final cumulative pixel count from `ledger.csv`.
fn ledger_total(dir: &Path) -> Result<u64> {
    let path = dir.join("ledger.csv");
    if !path.exists() {
        return Err(Error::io(&path, std::io::Error::new(std::io::ErrorKind::NotFound, "missing ledger.csv")));
    }
    let mut reader = csv::Reader::from_path(&path).map_err(|e| Error::format(&path, "csv", e.to_string()))?;
    let headers = reader.headers().map_err(|e| Error::format(&path, "csv", e.to_string()))?.clone();
    let col = headers
        .iter()
        .position(|h| h == "cumulative_pixels")
        .ok_or_else(|| Error::format(&path, "csv", "no cumulative_pixels column"))?;
    let mut last = 0;
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::format(&path, "csv", e.to_string()))?;
        last = rec[col]
            .parse()
            .map_err(|_| Error::format(&path, "csv", format!("bad cumulative_pixels {:?}", &rec[col])))?;
    }
    Ok(last)
}

pub fn load_run(dir: &Path) -> Result<RunSummary> {
    let info: RunInfo = read_json(&dir.join(RUN_INFO_FILE))?;
    let mut evals = Vec::new();
    for (k, iter_dir) in iteration_dirs(dir)? {
        let path = iter_dir.join("eval.json");
        if !path.exists() {
            return Err(Error::io(&path, std::io::Error::new(std::io::ErrorKind::NotFound, "missing eval.json")));
        }
        let eval: IterationEval = read_json(&path)?;
        if eval.iteration != k {
            return Err(Error::format(&path, "iteration", format!("{} stored under iter_{k:02}", eval.iteration)));
        }
        evals.push(eval);
    }
    if evals.is_empty() {
        return Err(Error::io(
            dir.join("iter_00/eval.json"),
            std::io::Error::new(std::io::ErrorKind::NotFound, "run has no evaluated iterations"),
        ));
    }
    let ledger_cumulative = ledger_total(dir)?;
    let summary = RunSummary {
        dir: dir.to_path_buf(),
        info,
        evals,
        ledger_cumulative,
    };
    if summary.final_eval().cumulative_pixels != ledger_cumulative {
        return Err(Error::validation(format!(
            "{}: eval reports {} annotated pixels, ledger {}",
            dir.display(),
            summary.final_eval().cumulative_pixels,
            ledger_cumulative
        )));
    }
    Ok(summary)
}

/// `dir` itself when it is a run, else every immediate subdirectory that is one.
pub fn discover_runs(dir: &Path) -> Result<Vec<PathBuf>> {
    if dir.join(RUN_INFO_FILE).exists() {
        return Ok(vec![dir.to_path_buf()]);
    }
    let mut runs = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.join(RUN_INFO_FILE).exists() {
            runs.push(path);
        }
    }
    runs.sort();
    if runs.is_empty() {
        return Err(Error::io(
            dir.join(RUN_INFO_FILE),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no run directories found"),
        ));
    }
    Ok(runs)
}

fn fmt_iou(v: Option<f32>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

pub fn curve_csv(runs: &[RunSummary]) -> Result<Vec<u8>> {
    let c_n = runs.iter().map(|r| r.info.num_classes).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::validation(format!("curve csv: {e}"));
    let mut header = vec!["fraction".to_string(), "miou".to_string()];
    header.extend((0..c_n).map(|c| format!("iou_{c}")));
    header.extend(["method".to_string(), "seed".to_string()]);
    w.write_record(&header).map_err(csv_err)?;
    for run in runs {
        for e in &run.evals {
            let mut row = vec![format!("{:.8}", e.fraction), format!("{:.6}", e.stage2.miou)];
            row.extend((0..c_n).map(|c| fmt_iou(e.stage2.per_class_iou.get(c).copied().flatten())));
            row.extend([run.info.method.clone(), run.info.seed.to_string()]);
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.into_inner().map_err(|e| Error::validation(format!("curve csv: {e}")))
}

/// Budget at which the report compares methods.
pub const MATCHED_FRACTION: f64 = 0.05;

/// A class-method run's final point against another run of the same seed,
/// read off the other run's curve at the same annotated fraction.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchedPair {
    pub seed: u64,
    pub method: String,
    pub fraction: f64,
    pub miou: f32,
    pub other: String,
    pub other_miou: f32,
}

fn is_class_method(name: &str) -> bool {
    !name.starts_with("frame_full_")
}

/// Every (class-method run, other run) pair sharing a seed, in run order.
pub fn matched_pairs(runs: &[RunSummary]) -> Vec<MatchedPair> {
    let mut out = Vec::new();
    for a in runs.iter().filter(|r| is_class_method(&r.info.method)) {
        let last = a.final_eval();
        for b in runs {
            if b.info.seed != a.info.seed || b.info.method == a.info.method {
                continue;
            }
            if let Some(other_miou) = miou_at_fraction(&b.curve(), last.fraction) {
                out.push(MatchedPair {
                    seed: a.info.seed,
                    method: a.info.method.clone(),
                    fraction: last.fraction,
                    miou: last.stage2.miou,
                    other: b.info.method.clone(),
                    other_miou,
                });
            }
        }
    }
    out
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn report_markdown(runs: &[RunSummary]) -> String {
    let mut by_method: BTreeMap<&str, Vec<&RunSummary>> = BTreeMap::new();
    for r in runs {
        by_method.entry(r.info.method.as_str()).or_default().push(r);
    }
    let mut md = String::from("# Active learning report\n\n");
    let _ = writeln!(
        md,
        "mIoU is measured on the target validation split after stage 2. Methods are compared at a matched \
         annotated-pixel fraction of {:.0}% by linear interpolation along each run's curve.\n",
        MATCHED_FRACTION * 100.0
    );
    md.push_str("| method | runs | final fraction | annotated pixels | final mIoU | mIoU @ matched budget |\n");
    md.push_str("|---|---|---|---|---|---|\n");
    for (method, rs) in &by_method {
        let fr: Vec<f64> = rs.iter().map(|r| r.final_eval().fraction).collect();
        let px: u64 = rs.iter().map(|r| r.ledger_cumulative).sum();
        let fin: Vec<f64> = rs.iter().map(|r| r.final_eval().stage2.miou as f64).collect();
        let matched: Vec<f64> = rs
            .iter()
            .filter_map(|r| miou_at_fraction(&r.curve(), MATCHED_FRACTION))
            .map(f64::from)
            .collect();
        let (f, _) = mean_std(&fr);
        let (m, ms) = mean_std(&fin);
        let (a, as_) = mean_std(&matched);
        let _ = writeln!(
            md,
            "| {method} | {} | {:.4} | {px} | {m:.4} ± {ms:.4} | {a:.4} ± {as_:.4} |",
            rs.len(),
            f
        );
    }
    let pairs = matched_pairs(runs);
    if !pairs.is_empty() {
        md.push_str("\n## Paired at the class method's final fraction\n\n");
        md.push_str("| seed | method | fraction | mIoU | other | other mIoU | difference |\n|---|---|---|---|---|---|---|\n");
        for p in &pairs {
            let _ = writeln!(
                md,
                "| {} | {} | {:.4} | {:.4} | {} | {:.4} | {:+.4} |",
                p.seed,
                p.method,
                p.fraction,
                p.miou,
                p.other,
                p.other_miou,
                p.miou - p.other_miou
            );
        }
    }
    md.push_str("\n## Runs\n");
    for r in runs {
        let _ = writeln!(md, "\n### {} (seed {})\n", r.info.method, r.info.seed);
        md.push_str("| iteration | fraction | pixels | stage-1 mIoU | stage-2 mIoU |\n|---|---|---|---|---|\n");
        for e in &r.evals {
            let s1 = e.stage1.as_ref().map_or_else(|| "-".to_string(), |s| format!("{:.4}", s.miou));
            let _ = writeln!(
                md,
                "| {} | {:.4} | {} | {s1} | {:.4} |",
                e.iteration, e.fraction, e.cumulative_pixels, e.stage2.miou
            );
        }
        let _ = writeln!(md, "\nLedger total: {} annotated pixels.", r.ledger_cumulative);
    }
    md
}

/// Writes `curve.csv` and `report.md` into `dir`, covering every run found there.
pub fn emit_report(dir: &Path) -> Result<Vec<RunSummary>> {
    let runs = discover_runs(dir)?
        .iter()
        .map(|d| load_run(d))
        .collect::<Result<Vec<_>>>()?;
    let csv_path = dir.join("curve.csv");
    fs::write(&csv_path, curve_csv(&runs)?).map_err(|e| Error::io(&csv_path, e))?;
    let md_path = dir.join("report.md");
    fs::write(&md_path, report_markdown(&runs)).map_err(|e| Error::io(&md_path, e))?;
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn naive(preds: &[LabelMap], gts: &[LabelMap], c_n: usize) -> Vec<Option<f64>> {
        (0..c_n)
            .map(|c| {
                let (mut i, mut u) = (0u64, 0u64);
                for (p, g) in preds.iter().zip(gts) {
                    for (&pl, &gl) in p.labels().iter().zip(g.labels()) {
                        if gl == IGNORE_LABEL {
                            continue;
                        }
                        let (hp, hg) = (pl as usize == c, gl as usize == c);
                        i += (hp && hg) as u64;
                        u += (hp || hg) as u64;
                    }
                }
                (u > 0).then(|| i as f64 / u as f64)
            })
            .collect()
    }

    #[test]
    fn perfect_and_constant_predictions() {
        let gt = LabelMap::new(4, 1, vec![0, 0, 1, 1]).unwrap();
        let r = evaluate(&[gt.clone()], &[gt.clone()], 2).unwrap();
        assert_eq!(r.miou, 1.0);
        let constant = LabelMap::filled(4, 1, 0);
        let r = evaluate(&[constant], &[gt], 2).unwrap();
        assert_eq!(r.per_class_iou, vec![Some(0.5), Some(0.0)]);
        assert_eq!(r.miou, 0.25);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![2, 0]]);
    }

    #[test]
    fn absent_classes_are_excluded_from_the_mean() {
        let gt = LabelMap::new(2, 1, vec![0, IGNORE_LABEL]).unwrap();
        let pred = LabelMap::new(2, 1, vec![0, 1]).unwrap();
        let r = evaluate(&[pred], &[gt], 3).unwrap();
        assert_eq!(r.per_class_iou, vec![Some(1.0), None, None]);
        assert_eq!(r.miou, 1.0);
        assert_eq!(r.counted_pixels(), 1);
    }

    #[test]
    fn mismatched_inputs_fail() {
        let a = LabelMap::filled(2, 2, 0);
        let b = LabelMap::filled(4, 1, 0);
        assert!(evaluate(&[a.clone()], &[b], 1).is_err());
        assert!(evaluate(&[a.clone()], &[], 1).is_err());
        assert!(evaluate(&[LabelMap::filled(2, 2, 3)], &[a.clone()], 2).is_err());
    }

    #[test]
    fn interpolation_along_the_curve() {
        let curve = [(0.0, 0.2), (0.1, 0.6), (0.3, 0.7)];
        assert!((miou_at_fraction(&curve, 0.05).unwrap() - 0.4).abs() < 1e-6);
        assert!((miou_at_fraction(&curve, 0.2).unwrap() - 0.65).abs() < 1e-6);
        assert_eq!(miou_at_fraction(&curve, 0.9), Some(0.7));
        assert_eq!(miou_at_fraction(&curve, 0.0), Some(0.2));
        assert_eq!(miou_at_fraction(&[], 0.1), None);
    }

    fn fake_run(dir: &Path, method: &str, seed: u64, fractions: &[f64]) {
        fs::create_dir_all(dir).unwrap();
        write_json(
            &dir.join(RUN_INFO_FILE),
            &RunInfo {
                method: method.into(),
                seed,
                num_classes: 2,
            },
        )
        .unwrap();
        let mut ledger = String::from("iteration,frames,classes,pixels_added,cumulative_pixels,fraction\n");
        let mut prev = 0;
        for (k, &f) in fractions.iter().enumerate() {
            let px = (f * 1000.0).round() as u64;
            let it = dir.join(format!("iter_{k:02}"));
            fs::create_dir_all(&it).unwrap();
            let stage2 = EvalResult::from_confusion(vec![vec![5 + k as u64, 1], vec![1, 3]]);
            write_json(
                &it.join("eval.json"),
                &IterationEval {
                    iteration: k,
                    cumulative_pixels: px,
                    fraction: f,
                    stage1: None,
                    stage2,
                },
            )
            .unwrap();
            if k > 0 {
                ledger.push_str(&format!("{k},1,1,{},{px},{f:.8}\n", px - prev));
            }
            prev = px;
        }
        fs::write(dir.join("ledger.csv"), ledger).unwrap();
    }

    #[test]
    fn report_over_several_runs() {
        let tmp = tempfile::tempdir().unwrap();
        fake_run(&tmp.path().join("a"), "anchor", 1, &[0.0, 0.01, 0.03]);
        fake_run(&tmp.path().join("b"), "frame_full_random", 1, &[0.0, 0.05, 0.1]);
        let runs = emit_report(tmp.path()).unwrap();
        assert_eq!(runs.len(), 2);
        let csv = fs::read_to_string(tmp.path().join("curve.csv")).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "fraction,miou,iou_0,iou_1,method,seed");
        assert_eq!(lines.len(), 1 + 6);
        assert_eq!(lines.iter().filter(|l| l.contains(",anchor,")).count(), 3);
        let fr: Vec<f64> = lines[1..4].iter().map(|l| l.split(',').next().unwrap().parse().unwrap()).collect();
        assert!(fr.windows(2).all(|w| w[0] <= w[1]));
        let md = fs::read_to_string(tmp.path().join("report.md")).unwrap();
        assert!(md.contains("Ledger total: 30 annotated pixels."));
        assert!(md.contains("| frame_full_random | 1 |"));
    }

    #[test]
    fn pairs_share_seed_and_fraction() {
        let tmp = tempfile::tempdir().unwrap();
        fake_run(&tmp.path().join("a"), "anchor", 1, &[0.0, 0.01, 0.03]);
        fake_run(&tmp.path().join("b"), "frame_full_random", 1, &[0.0, 0.05, 0.1]);
        fake_run(&tmp.path().join("c"), "frame_full_random", 2, &[0.0, 0.05, 0.1]);
        let runs = emit_report(tmp.path()).unwrap();
        let pairs = matched_pairs(&runs);
        assert_eq!(pairs.len(), 1);
        let p = &pairs[0];
        assert_eq!((p.seed, p.method.as_str(), p.other.as_str()), (1, "anchor", "frame_full_random"));
        assert_eq!(p.fraction, 0.03);
        // fake iteration k has IoUs (5+k)/(7+k) and 3/5
        let m = |k: f64| ((5.0 + k) / (7.0 + k) + 0.6) / 2.0;
        assert!((p.miou as f64 - m(2.0)).abs() < 1e-6);
        assert!((p.other_miou as f64 - (m(0.0) + 0.6 * (m(1.0) - m(0.0)))).abs() < 1e-6);
        let md = fs::read_to_string(tmp.path().join("report.md")).unwrap();
        assert!(md.contains("| 1 | anchor | 0.0300 |"));
    }

    #[test]
    fn missing_inputs_name_the_file() {
        let tmp = tempfile::tempdir().unwrap();
        let run = tmp.path().join("r");
        fake_run(&run, "anchor", 0, &[0.0, 0.02]);
        fs::remove_file(run.join("ledger.csv")).unwrap();
        let err = emit_report(&run).unwrap_err();
        assert!(err.to_string().contains("ledger.csv"), "{err}");
        fake_run(&run, "anchor", 0, &[0.0, 0.02]);
        fs::remove_file(run.join("iter_01/eval.json")).unwrap();
        let err = emit_report(&run).unwrap_err();
        assert!(err.to_string().contains("eval.json"), "{err}");
        assert!(emit_report(&tmp.path().join("nothing")).is_err());
    }

    proptest! {
        #[test]
        fn agrees_with_naive_loop(
            frames in proptest::collection::vec((proptest::collection::vec(0u8..4, 64), proptest::collection::vec(prop_oneof![0u8..4, Just(IGNORE_LABEL)], 64)), 1..4)
        ) {
            let preds: Vec<LabelMap> = frames.iter().map(|(p, _)| LabelMap::new(8, 8, p.clone()).unwrap()).collect();
            let gts: Vec<LabelMap> = frames.iter().map(|(_, g)| LabelMap::new(8, 8, g.clone()).unwrap()).collect();
            let r = evaluate(&preds, &gts, 4).unwrap();
            let expect = naive(&preds, &gts, 4);
            for c in 0..4 {
                prop_assert_eq!(r.per_class_iou[c], expect[c].map(|v| v as f32));
            }
            let non_ignore = gts.iter().flat_map(|g| g.labels()).filter(|&&l| l != IGNORE_LABEL).count() as u64;
            prop_assert_eq!(r.counted_pixels(), non_ignore);
            let mut rev_p = preds.clone();
            let mut rev_g = gts.clone();
            rev_p.reverse();
            rev_g.reverse();
            prop_assert_eq!(&evaluate(&rev_p, &rev_g, 4).unwrap(), &r);
        }

        #[test]
        fn miou_invariant_under_relabeling(
            p in proptest::collection::vec(0u8..3, 64),
            g in proptest::collection::vec(0u8..3, 64),
            perm_idx in 0usize..6,
        ) {
            let perms = [[0u8, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let perm = perms[perm_idx];
            let pm = |v: &Vec<u8>| LabelMap::new(8, 8, v.iter().map(|&l| perm[l as usize]).collect()).unwrap();
            let a = evaluate(&[LabelMap::new(8, 8, p.clone()).unwrap()], &[LabelMap::new(8, 8, g.clone()).unwrap()], 3).unwrap();
            let b = evaluate(&[pm(&p)], &[pm(&g)], 3).unwrap();
            prop_assert!((a.miou - b.miou).abs() < 1e-6);
        }
    }
}
