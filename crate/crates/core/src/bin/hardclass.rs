use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hardclass::frame_select::FrameSelector;
use hardclass::learner::{PixelClassifier, Segmenter};
use hardclass::metrics::{emit_report, read_json, write_json, EvalResult};
use hardclass::orchestrator::{
    evaluate_model, run_active_loop, select_from_probmaps, train_warmup, LoopConfig, Method,
};
use hardclass::synth::{generate_world, Dataset, Split, WorldConfig};
use hardclass::Error;

/// Class-level active domain adaptation on a synthetic segmentation world.
#[derive(Parser)]
#[command(name = "hardclass", version)]
struct Cli {
    /// JSON config: a world config for `gen`, a loop config otherwise.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (dataset root for `gen`, run directory for `warmup`
    /// and `loop`, runs root for `report`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a source/target synthetic world.
    Gen,
    /// Pre-train on source labels and save `warmup.ptns`.
    Warmup {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Run (or resume) the active-learning loop.
    Loop {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        frame_selector: Option<FrameSelector>,
        /// Required for iou_skyline, which reads ground truth while selecting.
        #[arg(long)]
        skyline: bool,
    },
    /// Class selection on precomputed probability maps.
    Select {
        /// Directory of `<id>.ptns` (anchor) or `<id>_weak.ptns` + `<id>_strong.ptns` (aug).
        #[arg(long)]
        probmaps: PathBuf,
        #[arg(long)]
        method: SelectMethod,
        /// Maps of already labeled frames, used for the anchors.
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long, default_value_t = 0.5)]
        delta: f32,
        /// Leave frames with no class above the threshold empty.
        #[arg(long)]
        no_fallback: bool,
    },
    /// Evaluate a saved model on one split.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SplitArg::TargetVal)]
        split: SplitArg,
    },
    /// Rebuild curve.csv and report.md over every run below the output directory.
    Report,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectMethod {
    Anchor,
    Aug,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    SourceTrain,
    TargetTrain,
    TargetVal,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::SourceTrain => Split::SourceTrain,
            SplitArg::TargetTrain => Split::TargetTrain,
            SplitArg::TargetVal => Split::TargetVal,
        }
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn loop_config(cli: &Cli) -> Result<LoopConfig, Failure> {
    let mut cfg: LoopConfig = match &cli.config {
        Some(path) => read_json(path)?,
        None => LoopConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    Ok(cfg)
}

fn print_eval(label: &str, e: &EvalResult) {
    let per_class: Vec<String> = e
        .per_class_iou
        .iter()
        .map(|v| v.map_or("-".into(), |v| format!("{v:.3}")))
        .collect();
    println!("{label}: mIoU {:.4} [{}]", e.miou, per_class.join(" "));
}

fn gen(cli: &Cli) -> Outcome {
    let mut cfg: WorldConfig = match &cli.config {
        Some(path) => read_json(path)?,
        None => WorldConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let root = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("world"));
    let manifest = generate_world(&cfg, &root)?;
    let frames: usize = manifest.splits.iter().map(|s| s.frames.len()).sum();
    println!("wrote {frames} frames to {}", root.display());
    Ok(())
}

fn warmup(cli: &Cli, dataset: Option<&Path>) -> Outcome {
    let mut cfg = loop_config(cli)?;
    if let Some(d) = dataset {
        cfg.dataset = d.to_path_buf();
    }
    cfg.validate()?;
    let ds = Dataset::load(&cfg.dataset)?;
    let model = train_warmup(&ds, &cfg)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Failure::Lib(io_error(&cfg.out_dir, e)))?;
    let path = cfg.out_dir.join("warmup.ptns");
    model.save(&path)?;
    print_eval("source_train", &evaluate_model(&model, &ds.source_train, ds.num_classes)?);
    print_eval("target_val", &evaluate_model(&model, &ds.target_val, ds.num_classes)?);
    println!("saved {}", path.display());
    Ok(())
}

fn run_loop(
    cli: &Cli,
    dataset: Option<&Path>,
    method: Option<Method>,
    frame_selector: Option<FrameSelector>,
    skyline: bool,
) -> Outcome {
    let mut cfg = loop_config(cli)?;
    if let Some(d) = dataset {
        cfg.dataset = d.to_path_buf();
    }
    if let Some(m) = method {
        cfg.method = m;
    }
    if let Some(s) = frame_selector {
        cfg.frame_selector = s;
    }
    if cfg.method == Method::IouSkyline && !skyline {
        return Err(Failure::Usage(
            "iou_skyline selects with ground truth; pass --skyline to run it deliberately".into(),
        ));
    }
    let records = run_active_loop(&cfg)?;
    for r in &records {
        println!(
            "iter {}: {} frames, {} unselectable classes, fraction {:.4}, stage1 {}, stage2 {:.4}",
            r.iteration,
            r.frames.len(),
            r.unselectable.values().map(Vec::len).sum::<usize>(),
            r.ledger.fraction,
            r.eval.stage1.as_ref().map_or("-".into(), |e| format!("{:.4}", e.miou)),
            r.eval.stage2.miou
        );
    }
    println!("run written to {}", cfg.out_dir.display());
    Ok(())
}

fn select(
    cli: &Cli,
    probmaps: &Path,
    method: SelectMethod,
    labeled: Option<&Path>,
    delta: f32,
    fallback: bool,
) -> Outcome {
    let method = match method {
        SelectMethod::Anchor => Method::Anchor,
        SelectMethod::Aug => Method::Aug,
    };
    let selections = select_from_probmaps(method, probmaps, labeled, delta, fallback)?;
    let out = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| Failure::Lib(io_error(&out, e)))?;
    let path = out.join("selections.json");
    write_json(&path, &selections)?;
    for s in &selections {
        println!("frame {}: classes {:?}{}", s.frame_id, s.selected, if s.fallback { " (fallback)" } else { "" });
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn eval(cli: &Cli, model: &Path, dataset: Option<&Path>, split: SplitArg) -> Outcome {
    let cfg = loop_config(cli)?;
    let ds = Dataset::load(dataset.unwrap_or(&cfg.dataset))?;
    let model = PixelClassifier::load(model)?;
    if model.num_classes() != ds.num_classes {
        return Err(Failure::Usage(format!(
            "model has {} classes, dataset {}",
            model.num_classes(),
            ds.num_classes
        )));
    }
    let result = evaluate_model(&model, ds.split(split.into()), ds.num_classes)?;
    print_eval(Split::from(split).dir_name(), &result);
    if let Some(dir) = &cli.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Lib(io_error(dir, e)))?;
        write_json(&dir.join("eval.json"), &result)?;
    }
    Ok(())
}

fn report(cli: &Cli) -> Outcome {
    let root = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let runs = emit_report(&root)?;
    for r in &runs {
        let last = r.final_eval();
        println!(
            "{} seed {}: fraction {:.4}, mIoU {:.4}",
            r.info.method, r.info.seed, last.fraction, last.stage2.miou
        );
    }
    println!("wrote {} and {}", root.join("curve.csv").display(), root.join("report.md").display());
    Ok(())
}

fn dispatch(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Gen => gen(cli),
        Command::Warmup { dataset } => warmup(cli, dataset.as_deref()),
        Command::Loop {
            dataset,
            method,
            frame_selector,
            skyline,
        } => run_loop(cli, dataset.as_deref(), *method, *frame_selector, *skyline),
        Command::Select {
            probmaps,
            method,
            labeled,
            delta,
            no_fallback,
        } => select(cli, probmaps, *method, labeled.as_deref(), *delta, !no_fallback),
        Command::Eval { model, dataset, split } => eval(cli, model, dataset.as_deref(), *split),
        Command::Report => report(cli),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
