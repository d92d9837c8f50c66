//! The `fgvc` command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or ingestion error.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ablation::{self, AblationConfig};
use crate::augment::{attention_crop, attention_drop, normalize_by_max, AugmentConfig, Selection};
use crate::dataset::{generate_synthetic, SynthConfig};
use crate::dataset::{extract_profile_features, load_dataset, save_dataset, FeatureMode, LabeledDataset};
use crate::domain::{self, build_profile, emd, rank_sources, similarity, top_k_categories};
use crate::error::{Error, Result};
use crate::gradcheck;
use crate::model::{checkpoint, forward, ModelConfig, ModelParams, DEFAULT_OBJECT_THETA};
use crate::netpbm::{write_pgm, write_ppm};
use crate::ops::bilinear_resize;
use crate::rng::Rng;
use crate::trainer::{evaluate, metrics_csv, train_from, TrainConfig, TrainState};

#[derive(Debug, Parser)]
#[command(name = "fgvc", version, about = "Attention-augmented fine-grained classification and domain-similarity tools")]
pub struct Cli {
    /// Master seed for every random choice.
    #[arg(long, global = true, default_value_t = 7)]
    pub seed: u64,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic fine-grained dataset as PPM files + labels.csv.
    SynthGen(SynthGenArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Single- and two-pass accuracy of a checkpoint.
    Eval(EvalArgs),
    /// Write raw/crop/drop images and attention heatmaps.
    AugmentPreview(PreviewArgs),
    /// EMD and similarity between two domain profiles.
    Similarity(SimilarityArgs),
    /// Order source profiles by similarity to a target profile.
    RankSources(RankArgs),
    /// Source categories closest to the target domain.
    TopK(TopKArgs),
    /// Build a domain profile (class centroids and weights) from a dataset.
    Profile(ProfileArgs),
    /// Finite-difference check of every parameter gradient.
    Gradcheck(GradcheckArgs),
    /// Similarity-vs-transfer-accuracy experiment on synthetic families.
    Ablation(AblationArgs),
}

#[derive(Debug, Args)]
pub struct SynthGenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    #[arg(long, default_value_t = 25)]
    pub per_class_train: usize,
    #[arg(long, default_value_t = 12)]
    pub per_class_test: usize,
    #[arg(long, default_value_t = 64)]
    pub resolution: usize,
    /// Domain shift of the generated family, in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    pub shift: f64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 80)]
    pub epochs: usize,
    #[arg(long, default_value_t = 12)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.001)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.05)]
    pub beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_a: f64,
    /// Number of attention maps.
    #[arg(long, default_value_t = 8)]
    pub m: usize,
    /// Input side; must match the dataset.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Train on the raw stream only.
    #[arg(long)]
    pub no_augment: bool,
    #[arg(long, value_enum, default_value_t = SelectionArg::Weighted)]
    pub selection: SelectionArg,
    /// Keep the three backbone blocks fixed.
    #[arg(long)]
    pub freeze_backbone: bool,
    /// Start from this checkpoint instead of a fresh initialization.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Checkpoint directory (also receives metrics.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SelectionArg {
    Uniform,
    Weighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Object-map threshold of the two-pass prediction.
    #[arg(long, default_value_t = DEFAULT_OBJECT_THETA)]
    pub theta: f64,
}

#[derive(Debug, Args)]
pub struct PreviewArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Trained weights; a seeded untrained model otherwise.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub count: usize,
    #[arg(long, default_value_t = 0.5)]
    pub theta_crop: f64,
    #[arg(long, default_value_t = 0.5)]
    pub theta_drop: f64,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, default_value_t = domain::DEFAULT_GAMMA)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    pub sources: Vec<PathBuf>,
    #[arg(long, default_value_t = domain::DEFAULT_GAMMA)]
    pub gamma: f64,
}

#[derive(Debug, Args)]
pub struct TopKArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = domain::DEFAULT_GAMMA)]
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureArg {
    Pixel,
    Model,
}

#[derive(Debug, Args)]
pub struct ProfileArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Train)]
    pub split: SplitArg,
    #[arg(long, value_enum, default_value_t = FeatureArg::Pixel)]
    pub features: FeatureArg,
    /// Required with `--features model`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = gradcheck::DEFAULT_EPS)]
    pub eps: f64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Test hook: perturb this parameter's analytic gradient.
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

#[derive(Debug, Args)]
pub struct AblationArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Master seeds; one report per seed (default: the global seed).
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Domain shifts of the source families.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.1, 0.4, 0.7, 1.0])]
    pub shifts: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    pub pretrain_epochs: usize,
    #[arg(long, default_value_t = 8)]
    pub finetune_epochs: usize,
    /// Fine-tune the whole network instead of only the heads.
    #[arg(long)]
    pub full_finetune: bool,
    #[arg(long, default_value_t = 4)]
    pub target_per_class: usize,
    #[arg(long, default_value_t = domain::DEFAULT_GAMMA)]
    pub gamma: f64,
}

/// Parses `std::env::args`, runs, and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    let mut stdout = String::new();
    let code = run(&cli, &mut stdout);
    print!("{stdout}");
    code
}

/// Runs a parsed command, appending its standard output to `out`.
pub fn run(cli: &Cli, out: &mut String) -> ExitCode {
    if let Some(n) = cli.threads {
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match dispatch(cli, out) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

enum Outcome {
    Ok,
    VerificationFailed(String),
}

fn dispatch(cli: &Cli, out: &mut String) -> Result<Outcome> {
    match &cli.command {
        Command::SynthGen(a) => synth_gen(cli.seed, a, out),
        Command::Train(a) => train_cmd(cli.seed, a, out),
        Command::Eval(a) => eval_cmd(a, out),
        Command::AugmentPreview(a) => preview(cli.seed, a, out),
        Command::Similarity(a) => similarity_cmd(a, out),
        Command::RankSources(a) => rank_cmd(a, out),
        Command::TopK(a) => top_k_cmd(a, out),
        Command::Profile(a) => profile_cmd(a, out),
        Command::Gradcheck(a) => gradcheck_cmd(cli.seed, a, out),
        Command::Ablation(a) => ablation_cmd(cli.seed, a, out),
    }
}

fn synth_gen(seed: u64, a: &SynthGenArgs, out: &mut String) -> Result<Outcome> {
    let cfg = SynthConfig {
        n_classes: a.classes,
        per_class_train: a.per_class_train,
        per_class_test: a.per_class_test,
        resolution: a.resolution,
        seed,
        domain_shift: a.shift,
    };
    if cfg.n_classes == 0 || cfg.resolution == 0 {
        return Err(Error::InvalidConfig("classes and resolution must be positive".into()));
    }
    if !(0.0..=1.0).contains(&cfg.domain_shift) {
        return Err(Error::InvalidConfig("shift must lie in [0, 1]".into()));
    }
    let (train, test) = generate_synthetic(&cfg);
    save_dataset(&a.out, &[&train, &test])?;
    let _ = writeln!(
        out,
        "wrote {} train and {} test images to {}",
        train.len(),
        test.len(),
        a.out.display()
    );
    Ok(Outcome::Ok)
}

fn split_of(pair: (LabeledDataset, LabeledDataset), split: SplitArg) -> LabeledDataset {
    match split {
        SplitArg::Train => pair.0,
        SplitArg::Test => pair.1,
    }
}

/// The training configuration the `train` subcommand uses for `args` on a
/// dataset of `classes` classes at side `side`.
pub fn train_config(seed: u64, a: &TrainArgs, classes: usize, side: usize) -> TrainConfig {
    let defaults = TrainConfig::default();
    TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        base_lr: a.lr,
        beta: a.beta,
        lambda_a: a.lambda_a,
        seed,
        model: ModelConfig {
            resolution: a.resolution.unwrap_or(side),
            maps: a.m,
            classes,
            ..ModelConfig::default()
        },
        augment: (!a.no_augment).then(|| AugmentConfig {
            selection: match a.selection {
                SelectionArg::Uniform => Selection::Uniform,
                SelectionArg::Weighted => Selection::ActivationWeighted,
            },
            ..AugmentConfig::default()
        }),
        freeze_backbone: a.freeze_backbone,
        ..defaults
    }
}

fn train_cmd(seed: u64, a: &TrainArgs, out: &mut String) -> Result<Outcome> {
    let (train, test) = load_dataset(&a.data)?;
    let side = train
        .resolution()
        .ok_or_else(|| Error::EmptyDomain("training split has no images".into()))?;
    let cfg = train_config(seed, a, train.num_classes(), side);
    cfg.validate()?;
    let state = match &a.init {
        Some(dir) => {
            let (params, _) = checkpoint::load(dir)?;
            if params.config != cfg.model {
                return Err(Error::InvalidConfig(format!(
                    "initial checkpoint has {:?}, training needs {:?}",
                    params.config, cfg.model
                )));
            }
            TrainState::from_params(params, &cfg)
        }
        None => TrainState::new(&cfg)?,
    };
    let (state, rows) = train_from(state, &cfg, &train, &test)?;
    let csv = metrics_csv(&rows);
    if let Some(dir) = &a.out {
        checkpoint::save(dir, &state.params, seed)?;
        std::fs::write(dir.join("metrics.csv"), &csv)?;
    }
    out.push_str(&csv);
    Ok(Outcome::Ok)
}

fn eval_cmd(a: &EvalArgs, out: &mut String) -> Result<Outcome> {
    let (params, _) = checkpoint::load(&a.checkpoint)?;
    let ds = split_of(load_dataset(&a.data)?, a.split);
    if ds.is_empty() {
        return Err(Error::EmptyDomain("selected split has no images".into()));
    }
    if !(a.theta > 0.0 && a.theta < 1.0) {
        return Err(Error::InvalidConfig("theta must lie in (0, 1)".into()));
    }
    if ds.num_classes() > params.config.classes {
        return Err(Error::InvalidConfig(format!(
            "dataset has {} classes, checkpoint {}",
            ds.num_classes(),
            params.config.classes
        )));
    }
    let (one, two) = evaluate(&params, &ds, a.theta)?;
    let _ = writeln!(out, "split,images,acc_1pass,acc_2pass");
    let split = match a.split {
        SplitArg::Train => "train",
        SplitArg::Test => "test",
    };
    let _ = writeln!(out, "{split},{},{one},{two}", ds.len());
    Ok(Outcome::Ok)
}

fn heatmap(map: &crate::tensor::Tensor, side: usize) -> Result<crate::tensor::Tensor> {
    let (h, w) = map.dims2()?;
    let norm = normalize_by_max(map).reshape(vec![h, w, 1])?;
    bilinear_resize(&norm, side, side)?.reshape(vec![side, side])
}

fn preview(seed: u64, a: &PreviewArgs, out: &mut String) -> Result<Outcome> {
    let (train, test) = load_dataset(&a.data)?;
    let ds = if train.is_empty() { test } else { train };
    let side = ds
        .resolution()
        .ok_or_else(|| Error::EmptyDomain("dataset has no images".into()))?;
    let params = match &a.checkpoint {
        Some(dir) => checkpoint::load(dir)?.0,
        None => {
            let cfg = ModelConfig {
                resolution: side,
                classes: ds.num_classes().max(1),
                ..ModelConfig::default()
            };
            ModelParams::init(cfg, &mut Rng::new(seed))?
        }
    };
    let aug = AugmentConfig {
        theta_crop: a.theta_crop,
        theta_drop: a.theta_drop,
        ..AugmentConfig::default()
    };
    aug.validate()?;
    std::fs::create_dir_all(&a.out)?;
    let mut rng = Rng::new(seed).split(3);
    for (i, img) in ds.images.iter().take(a.count).enumerate() {
        let pack = forward(&params, img)?;
        let k = crate::augment::select_attention_map(&pack.attention, aug.selection, &mut rng)?;
        let map = pack.attention.channel(k)?;
        let stem = |kind: &str, ext: &str| a.out.join(format!("{i:03}_{kind}.{ext}"));
        write_ppm(&stem("raw", "ppm"), img)?;
        write_ppm(&stem("crop", "ppm"), &attention_crop(img, &map, &aug)?)?;
        write_ppm(&stem("drop", "ppm"), &attention_drop(img, &map, &aug)?)?;
        write_pgm(&stem(&format!("attn{k}"), "pgm"), &heatmap(&map, side)?)?;
        let object = crate::model::object_map(&pack.attention)?;
        write_pgm(&stem("object", "pgm"), &heatmap(&object, side)?)?;
    }
    let _ = writeln!(
        out,
        "wrote {} previews to {}",
        a.count.min(ds.len()),
        a.out.display()
    );
    Ok(Outcome::Ok)
}

fn similarity_cmd(a: &SimilarityArgs, out: &mut String) -> Result<Outcome> {
    let s = domain::io::load(&a.source)?;
    let t = domain::io::load(&a.target)?;
    let plan = emd(&s, &t)?;
    let sim = similarity(plan.cost, a.gamma)?;
    let _ = writeln!(out, "cost,sim\n{},{}", plan.cost, sim);
    Ok(Outcome::Ok)
}

fn rank_cmd(a: &RankArgs, out: &mut String) -> Result<Outcome> {
    let target = domain::io::load(&a.target)?;
    let sources = a
        .sources
        .iter()
        .map(|p| domain::io::load(p))
        .collect::<Result<Vec<_>>>()?;
    let ranked = rank_sources(&sources, &target, a.gamma)?;
    let _ = writeln!(out, "rank,source,emd,sim");
    for (i, r) in ranked.iter().enumerate() {
        let _ = writeln!(out, "{},{},{},{}", i + 1, r.name, r.cost, r.sim);
    }
    Ok(Outcome::Ok)
}

fn top_k_cmd(a: &TopKArgs, out: &mut String) -> Result<Outcome> {
    let s = domain::io::load(&a.source)?;
    let t = domain::io::load(&a.target)?;
    let picks = top_k_categories(&s, &t, a.k, a.gamma)?;
    let _ = writeln!(out, "rank,class_index,class_name");
    for (i, &class) in picks.iter().enumerate() {
        let _ = writeln!(out, "{},{},{}", i + 1, class, s.class_names[class]);
    }
    Ok(Outcome::Ok)
}

fn profile_cmd(a: &ProfileArgs, out: &mut String) -> Result<Outcome> {
    let ds = split_of(load_dataset(&a.data)?, a.split);
    let params = match (a.features, &a.checkpoint) {
        (FeatureArg::Model, Some(dir)) => Some(checkpoint::load(dir)?.0),
        (FeatureArg::Model, None) => {
            return Err(Error::InvalidConfig("--features model needs --checkpoint".into()))
        }
        (FeatureArg::Pixel, _) => None,
    };
    let mode = match &params {
        Some(p) => FeatureMode::Model(p),
        None => FeatureMode::Pixel,
    };
    let features = extract_profile_features(&ds, mode)?;
    let name = profile_name(&a.out);
    let profile = build_profile(&features, &ds.labels, &ds.class_names, &name)?;
    domain::io::save(&a.out, &profile)?;
    let _ = writeln!(
        out,
        "profile '{name}': {} classes, {} features",
        profile.num_classes(),
        profile.feature_dim()
    );
    Ok(Outcome::Ok)
}

fn profile_name(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "profile".into())
}

fn gradcheck_cmd(seed: u64, a: &GradcheckArgs, out: &mut String) -> Result<Outcome> {
    let rows = gradcheck::run(seed, a.eps, a.corrupt.as_deref())?;
    let _ = writeln!(out, "parameter,max_rel_err,status");
    let mut failed = Vec::new();
    for r in &rows {
        let ok = r.passes(a.tol);
        if !ok {
            failed.push(r.name);
        }
        let _ = writeln!(
            out,
            "{},{:.3e},{}",
            r.name,
            r.max_rel_err,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if failed.is_empty() {
        Ok(Outcome::Ok)
    } else {
        Ok(Outcome::VerificationFailed(format!(
            "gradient mismatch in {}",
            failed.join(", ")
        )))
    }
}

fn ablation_cmd(seed: u64, a: &AblationArgs, out: &mut String) -> Result<Outcome> {
    let seeds = if a.seeds.is_empty() { vec![seed] } else { a.seeds.clone() };
    let _ = writeln!(out, "seed,spearman");
    for &s in &seeds {
        let cfg = AblationConfig {
            seed: s,
            shifts: a.shifts.clone(),
            target_per_class: a.target_per_class,
            pretrain_epochs: a.pretrain_epochs,
            finetune_epochs: a.finetune_epochs,
            freeze_backbone: !a.full_finetune,
            gamma: a.gamma,
            ..AblationConfig::default()
        };
        let dir = a.out.join(format!("seed{s}"));
        let report = ablation::run(&cfg, Some(&dir))?;
        report.write(&dir)?;
        let _ = writeln!(out, "{s},{}", report.spearman);
    }
    Ok(Outcome::Ok)
}
