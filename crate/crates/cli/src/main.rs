use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sdr_core::config::load_toml;
use sdr_core::data::{generate_synthetic, parse_svmlight, split, write_svmlight};
use sdr_core::distill::{export_teacher_scores, load_teacher_scores};
use sdr_core::gradcheck::run_gradcheck;
use sdr_core::loss::ALL_LOSSES;
use sdr_core::metrics::{evaluate_dataset, DEFAULT_KS};
use sdr_core::theory::{noisy_label_simulation, run_theorem1_demo, NoisySimConfig};
use sdr_core::train::{train, StudentOverrides};
use sdr_core::{Dataset, DistillSpec, LossKind, ScoringModel, SyntheticConfig, TrainConfig, TransformSpec};

#[derive(Parser)]
#[command(name = "sdr", version, about = "Self-distilled neural rankers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic SVMLight dataset.
    GenData(GenDataArgs),
    /// Train a ranker on labels.
    Train(TrainArgs),
    /// Train a student on labels plus teacher scores.
    Distill(DistillArgs),
    /// Write per-query NDCG@{1,5,10} for a saved model.
    Eval(EvalArgs),
    /// Write a model's scores on a dataset as a teacher-score file.
    ExportScores(ExportArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Print the three-point toy example.
    Theorem1,
    /// Sweep the mixing weight under corrupted labels.
    NoisySweep(SweepArgs),
}

#[derive(Args)]
struct GenDataArgs {
    /// Synthetic data config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; the training part when --split is given.
    #[arg(long)]
    out: PathBuf,
    /// Train/valid/test fractions, e.g. 0.6,0.2,0.2.
    #[arg(long, value_parser = parse_fractions, requires_all = ["valid_out", "test_out"])]
    split: Option<(f64, f64, f64)>,
    #[arg(long)]
    valid_out: Option<PathBuf>,
    #[arg(long)]
    test_out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    valid: PathBuf,
    /// Optional test set; its NDCG is printed after training.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Training config (TOML).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Model checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch history CSV path.
    #[arg(long)]
    history: PathBuf,
}

#[derive(Args)]
struct DistillArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Teacher scores for the training set; overrides the config entry.
    #[arg(long)]
    teacher_scores: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// `a,b` for max(a·t+b, 0) or `softmax:T`.
    #[arg(long)]
    transform: Option<TransformSpec>,
    #[arg(long)]
    distill_loss: Option<LossKind>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Check a single loss instead of all four.
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long, default_value_t = 100)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config (TOML); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path.
    #[arg(long)]
    out: PathBuf,
}

fn parse_fractions(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad fraction {p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(format!("expected three comma-separated fractions, got {s:?}")),
    }
}

fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).with_context(|| format!("cannot open data file {}", path.display()))?;
    let name = path.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned());
    parse_svmlight(BufReader::new(file), &name).with_context(|| format!("in data file {}", path.display()))
}

fn load_model(path: &Path) -> Result<ScoringModel> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("cannot read model file {}", path.display()))?;
    ScoringModel::deserialize(&text).with_context(|| format!("in model file {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = create(path)?;
    write_svmlight(ds, &mut out)?;
    out.flush()?;
    Ok(())
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let mut cfg: SyntheticConfig = load_toml(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    let ds = generate_synthetic(&cfg)?;
    match args.split {
        None => write_dataset(&ds, &args.out)?,
        Some(fractions) => {
            let (tr, va, te) = split(&ds, fractions, cfg.rng_seed)?;
            write_dataset(&tr, &args.out)?;
            write_dataset(&va, args.valid_out.as_deref().expect("required by clap"))?;
            write_dataset(&te, args.test_out.as_deref().expect("required by clap"))?;
        }
    }
    println!("wrote {} queries, {} documents", ds.len(), ds.doc_count());
    Ok(())
}

/// Trains `cfg` and writes the checkpoint and history. Teacher scores, when
/// present, are already aligned with the training set.
fn fit_and_save(
    cfg: &TrainConfig,
    args: &TrainArgs,
    train_ds: &Dataset,
    teacher: Option<&sdr_core::TeacherScores>,
) -> Result<()> {
    let valid_ds = load_dataset(&args.valid)?;
    let test_ds = args.test.as_deref().map(load_dataset).transpose()?;
    let (model, history) = train(cfg, train_ds, &valid_ds, teacher)?;
    let mut out = create(&args.out)?;
    out.write_all(model.serialize().as_bytes())?;
    out.flush()?;
    let mut hist = create(&args.history)?;
    history.write_csv(&mut hist)?;
    hist.flush()?;
    let best = history.best();
    println!(
        "best epoch {} of {}: valid ndcg@5 {:.6}",
        best.epoch,
        history.epochs.len(),
        best.valid_ndcg5
    );
    if let Some(test_ds) = test_ds {
        let report = evaluate_dataset(&model, &test_ds, &DEFAULT_KS)?;
        println!(
            "test ndcg@1 {:.6} ndcg@5 {:.6} ndcg@10 {:.6}",
            report.means[0], report.means[1], report.means[2]
        );
    }
    Ok(())
}

fn train_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = load_toml(&args.config)?;
    if let Some(loss) = args.loss {
        cfg.loss = loss;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut cfg = train_config(&args)?;
    cfg.distill = None;
    let train_ds = load_dataset(&args.data)?;
    fit_and_save(&cfg, &args, &train_ds, None)
}

fn distill_cmd(args: DistillArgs) -> Result<()> {
    let base = train_config(&args.train)?;
    let mut spec = base.distill.unwrap_or_default();
    spec.base_loss = base.loss;
    if let Some(a) = args.alpha {
        spec.alpha = a;
    }
    if let Some(t) = args.transform {
        spec.transform = t;
    }
    if let Some(l) = args.distill_loss {
        spec.distill_loss = l;
    }
    let cfg = pipeline_student_config(&base, spec, args.train.seed)?;
    cfg.validate()?;
    let scores_path = args
        .teacher_scores
        .clone()
        .or_else(|| base.teacher_scores.clone())
        .context("distill needs --teacher-scores or teacher_scores in the config")?;
    let train_ds = load_dataset(&args.train.data)?;
    let file = File::open(&scores_path)
        .with_context(|| format!("cannot open teacher scores {}", scores_path.display()))?;
    // Alignment is checked here, before any training.
    let teacher = load_teacher_scores(BufReader::new(file), &train_ds)
        .with_context(|| format!("in teacher scores {}", scores_path.display()))?;
    fit_and_save(&cfg, &args.train, &train_ds, Some(&teacher))
}

/// The student keeps the teacher config; an explicit seed overrides the derived one.
fn pipeline_student_config(base: &TrainConfig, spec: DistillSpec, seed: Option<u64>) -> Result<TrainConfig> {
    let mut overrides = StudentOverrides::new(spec);
    overrides.seed = seed;
    Ok(overrides.student_config(base)?)
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let ds = load_dataset(&args.data)?;
    let report = evaluate_dataset(&model, &ds, &DEFAULT_KS)?;
    let mut out = create(&args.out)?;
    report.write_tsv(&mut out)?;
    out.flush()?;
    println!(
        "mean ndcg@1 {:.6} ndcg@5 {:.6} ndcg@10 {:.6} over {} queries",
        report.means[0],
        report.means[1],
        report.means[2],
        report.query_count()
    );
    Ok(())
}

fn export_cmd(args: ExportArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let ds = load_dataset(&args.data)?;
    let source = args.model.display().to_string();
    let scores = export_teacher_scores(&model, &ds, &source)?;
    let mut out = create(&args.out)?;
    scores.write_tsv(&ds, &mut out)?;
    out.flush()?;
    Ok(())
}

fn gradcheck_cmd(args: GradcheckArgs) -> Result<()> {
    if args.instances == 0 {
        bail!("--instances must be >= 1");
    }
    let kinds: Vec<LossKind> = args.loss.map_or_else(|| ALL_LOSSES.to_vec(), |k| vec![k]);
    println!("loss\tinstances\tmax_rel_error_loss\tmax_rel_error_model");
    for kind in kinds {
        let r = run_gradcheck(kind, args.instances, args.seed);
        println!("{}\t{}\t{:.3e}\t{:.3e}", kind, r.instances, r.max_loss_error, r.max_model_error);
    }
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> Result<()> {
    let mut cfg: NoisySimConfig = match &args.config {
        Some(p) => load_toml(p)?,
        None => NoisySimConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.rng_seed = seed;
    }
    let report = noisy_label_simulation(&cfg)?;
    let mut out = create(&args.out)?;
    report.write_csv(&mut out)?;
    out.flush()?;
    println!("{report}");
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Distill(a) => distill_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::ExportScores(a) => export_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::Theorem1 => {
            println!("{}", run_theorem1_demo());
            Ok(())
        }
        Command::NoisySweep(a) => sweep_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
