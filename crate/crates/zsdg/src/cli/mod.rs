//! Command-line surface: prepare data, run experiments, sweep the semantic
//! weight, project latents, and report.
//!
//! Exit codes are stable: 0 success, 1 usage/config error, 2 statistical or
//! degenerate-data error, 3 I/O error. All randomness flows from `--seed`,
//! which defaults to 0 (never wall-clock). Flags override config-file
//! values.

pub mod dataset;

use std::collections::VecDeque;
use std::fs;
use std::path::PathBuf;
use std::sync::Mutex;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::data::{
    build_rotated_domains, builtin_settings, load_cifar_binary, load_class_map, load_idx,
    make_synthetic_zsdg, DomainSet, SyntheticSpec, DEFAULT_ANGLES,
};
use crate::embeddings::{load_embedding_text, write_embedding_text, EmbeddingTable};
use crate::engine::{load_checkpoint, save_checkpoint, Method, RunConfig, RunRecord};
use crate::error::{Error, Result};
use crate::eval::{
    aggregate_rows, append_runs_csv, emit_report, emit_scatter_svg, paired_means, read_runs_csv,
    tsne_project, wilcoxon_signed_rank, Alternative, PairingGranularity, RunRow, TsneOptions,
};
use crate::models::ArchSpec;
use crate::seeds::derive_seed;

#[derive(Parser)]
#[command(
    name = "zsdg",
    version,
    about = "Zero-shot domain generalization experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a prepared dataset directory of rotated domains.
    Prepare(PrepareArgs),
    /// Train one configuration and append a row to the runs CSV.
    Train(TrainArgs),
    /// Cross-product sweep over semantic weights and seeds.
    Sweep(SweepArgs),
    /// Project checkpoint latents to 2-D with t-SNE (SVG + CSV).
    Tsne(TsneArgs),
    /// Aggregate a runs CSV and optionally test method pairs.
    Report(ReportArgs),
}

#[derive(Args)]
struct PrepareArgs {
    /// One of: fmnist, cifar10, cifar100, synthetic.
    #[arg(long)]
    dataset: String,
    /// Directory with the raw input files (not needed for synthetic).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
    /// Comma-separated rotation angles in degrees.
    #[arg(long, default_value = "0,15,30,45,60,75")]
    angles: String,
    /// Keep at most N images per class (seeded subsample).
    #[arg(long)]
    per_class_cap: Option<usize>,
    /// Zero-pad images onto a ceil(side*sqrt(2)) canvas before rotating.
    #[arg(long)]
    enlarge_canvas: bool,
    /// Class-name map file, one "index<TAB>name" line per class.
    #[arg(long)]
    class_map: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Overwrite an existing prepared directory.
    #[arg(long)]
    force: bool,
    /// Synthetic only: number of glyph classes (4..=8).
    #[arg(long, default_value_t = 6)]
    classes: usize,
    /// Synthetic only: images per class per domain.
    #[arg(long, default_value_t = 50)]
    images_per_class: usize,
    /// Synthetic only: canvas side length.
    #[arg(long, default_value_t = 16)]
    canvas: usize,
}

#[derive(Args, Clone, Default)]
struct TrainOpts {
    /// JSON config file; inline flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// One of: agg, s-agg, mtae, s-mtae, fc, s-fc.
    #[arg(long)]
    method: Option<String>,
    /// Prepared dataset directory (from `zsdg prepare`).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    setting: Option<String>,
    #[arg(long)]
    target: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// GloVe-format embedding file; defaults to the one in the manifest.
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// L2-normalize embedding vectors at load.
    #[arg(long)]
    normalize_embeddings: bool,
    /// Score zero-shot accuracy over seen plus unseen prototypes.
    #[arg(long)]
    generalized_zsl: bool,
    /// Extractor hidden widths, e.g. "256,128".
    #[arg(long)]
    extractor_hidden: Option<String>,
    #[arg(long)]
    decoder_hidden: Option<String>,
    #[arg(long)]
    critic_hidden: Option<String>,
    /// Optimizer kind: adam or sgd.
    #[arg(long)]
    optimizer: Option<String>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// SGD momentum.
    #[arg(long)]
    momentum: Option<f64>,
    /// Feature-critic virtual step size (defaults to the learning rate).
    #[arg(long)]
    inner_lr: Option<f64>,
    /// Runs CSV to append to.
    #[arg(long)]
    runs: Option<PathBuf>,
    /// Directory for checkpoints; omit to skip checkpointing.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// wall_s column mode: "zero" (deterministic, default) or "real".
    #[arg(long)]
    timing: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    opts: TrainOpts,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    opts: TrainOpts,
    /// Comma-separated semantic weights, e.g. "0.1,0.5,1,5,10".
    #[arg(long)]
    lambdas: String,
    /// Number of seeds (0..N).
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Parallel workers.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct TsneArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Prepared dataset directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "setting1")]
    setting: String,
    #[arg(long, default_value_t = 0)]
    target: usize,
    #[arg(long, default_value_t = 15.0)]
    perplexity: f64,
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seeded subsample cap on the projected points.
    #[arg(long, default_value_t = 1000)]
    max_points: usize,
    #[arg(long, default_value_t = 200.0)]
    learning_rate: f64,
    #[arg(long)]
    out_svg: PathBuf,
    #[arg(long)]
    out_csv: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    runs: PathBuf,
    /// Two methods to compare, e.g. "s-agg,agg".
    #[arg(long)]
    wilcoxon: Option<String>,
    /// Pairing granularity: setting or domain.
    #[arg(long, default_value = "setting")]
    pairing: String,
    /// Metric under test: zsdg or dg.
    #[arg(long, default_value = "zsdg")]
    metric: String,
    /// Sidedness: two-sided, greater, or less.
    #[arg(long, default_value = "two-sided")]
    alternative: String,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

/// Parse argv, dispatch, and map errors onto the stable exit codes.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Prepare(args) => cmd_prepare(args),
        Command::Train(args) => cmd_train(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Tsne(args) => cmd_tsne(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("zsdg: {e}");
            e.exit_code()
        }
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::usage(format!("bad {what} value '{p}'")))
        })
        .collect()
}

const FMNIST_CLASSES: [&str; 10] = [
    "t-shirt", "trouser", "pullover", "dress", "coat", "sandal", "shirt", "sneaker", "bag",
    "boot",
];
const CIFAR10_CLASSES: [&str; 10] = [
    "airplane", "car", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck",
];

fn cmd_prepare(args: PrepareArgs) -> Result<()> {
    let angles: Vec<f64> = if args.angles.trim() == "default" {
        DEFAULT_ANGLES.to_vec()
    } else {
        parse_list(&args.angles, "angle")?
    };
    if angles.is_empty() {
        return Err(Error::usage("need at least one rotation angle"));
    }

    if args.dataset == "synthetic" {
        let spec = SyntheticSpec {
            classes: args.classes,
            images_per_class: args.images_per_class,
            canvas: args.canvas,
            angles: angles.clone(),
            noise_sigma: 0.05,
            seed: args.seed,
        };
        let universe = make_synthetic_zsdg(&spec)?;
        fs::create_dir_all(&args.output).map_err(|e| Error::io(&args.output, e))?;
        let embedding_file = "embeddings.txt";
        dataset::save_prepared(
            &args.output,
            "synthetic",
            &angles,
            &universe.domains,
            std::slice::from_ref(&universe.default_setting),
            Some(embedding_file),
            args.force,
        )?;
        write_embedding_text(&universe.table, args.output.join(embedding_file))?;
        println!(
            "prepared synthetic: {} domains x {} images under {}",
            universe.domains.len(),
            universe.domains[0].data.len(),
            args.output.display()
        );
        return Ok(());
    }

    let input = args.input.as_ref().ok_or_else(|| {
        Error::usage(format!("--input is required for dataset '{}'", args.dataset))
    })?;
    let class_names: Vec<String> = match &args.class_map {
        Some(path) => load_class_map(path)?,
        None => match args.dataset.as_str() {
            "fmnist" => FMNIST_CLASSES.iter().map(|s| s.to_string()).collect(),
            "cifar10" => CIFAR10_CLASSES.iter().map(|s| s.to_string()).collect(),
            "cifar100" => {
                return Err(Error::usage(
                    "cifar100 needs --class-map (100 fine-label names)",
                ))
            }
            other => return Err(Error::usage(format!("unknown dataset '{other}'"))),
        },
    };

    let mut base = match args.dataset.as_str() {
        "fmnist" => load_idx(
            input.join("train-images-idx3-ubyte"),
            input.join("train-labels-idx1-ubyte"),
            &class_names,
        )?,
        "cifar10" => {
            let paths: Vec<PathBuf> = (1..=5)
                .map(|i| input.join(format!("data_batch_{i}.bin")))
                .filter(|p| p.exists())
                .collect();
            if paths.is_empty() {
                return Err(Error::usage(format!(
                    "no data_batch_*.bin files under {}",
                    input.display()
                )));
            }
            load_cifar_binary(&paths, 1, &class_names)?
        }
        "cifar100" => load_cifar_binary(&[input.join("train.bin")], 2, &class_names)?,
        other => return Err(Error::usage(format!("unknown dataset '{other}'"))),
    };
    if let Some(cap) = args.per_class_cap {
        base = dataset::per_class_cap(&base, cap, args.seed)?;
    }
    if args.enlarge_canvas {
        base = dataset::enlarge_canvas(&base)?;
    }
    let domains = build_rotated_domains(&base, &angles)?;
    let settings = builtin_settings(&args.dataset);
    dataset::save_prepared(
        &args.output,
        &args.dataset,
        &angles,
        &domains,
        &settings,
        None,
        args.force,
    )?;
    println!(
        "prepared {}: {} domains x {} images under {}",
        args.dataset,
        domains.len(),
        base.len(),
        args.output.display()
    );
    Ok(())
}

/// Config-file mirror of the train flags.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    method: Option<String>,
    data: Option<PathBuf>,
    setting: Option<String>,
    target: Option<usize>,
    lambda: Option<f64>,
    eta: Option<f64>,
    seed: Option<u64>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    embedding: Option<PathBuf>,
    normalize_embeddings: Option<bool>,
    generalized_zsl: Option<bool>,
    extractor_hidden: Option<Vec<usize>>,
    decoder_hidden: Option<Vec<usize>>,
    critic_hidden: Option<Vec<usize>>,
    optimizer: Option<String>,
    learning_rate: Option<f64>,
    momentum: Option<f64>,
    inner_lr: Option<f64>,
    runs: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    timing: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WallMode {
    Zero,
    Real,
}

#[derive(Debug, Clone)]
struct ResolvedTrain {
    run: RunConfig,
    data: PathBuf,
    embedding: Option<PathBuf>,
    normalize_embeddings: bool,
    runs: PathBuf,
    out_dir: Option<PathBuf>,
    timing: WallMode,
}

fn resolve_train(opts: &TrainOpts) -> Result<ResolvedTrain> {
    let file: ConfigFile = match &opts.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::usage(format!("{}: bad config: {e}", path.display())))?
        }
        None => ConfigFile::default(),
    };
    let method_str = opts
        .method
        .clone()
        .or(file.method)
        .ok_or_else(|| Error::usage("--method is required (flag or config file)"))?;
    let method = Method::parse(&method_str)?;
    let data = opts
        .data
        .clone()
        .or(file.data)
        .ok_or_else(|| Error::usage("--data is required (flag or config file)"))?;

    let parse_widths = |flag: &Option<String>, file_val: &Option<Vec<usize>>, default: Vec<usize>| -> Result<Vec<usize>> {
        match flag {
            Some(s) => parse_list(s, "layer width"),
            None => Ok(file_val.clone().unwrap_or(default)),
        }
    };
    let default_arch = ArchSpec::default();
    let arch = ArchSpec {
        extractor_hidden: parse_widths(
            &opts.extractor_hidden,
            &file.extractor_hidden,
            default_arch.extractor_hidden,
        )?,
        decoder_hidden: parse_widths(
            &opts.decoder_hidden,
            &file.decoder_hidden,
            default_arch.decoder_hidden,
        )?,
        critic_hidden: parse_widths(
            &opts.critic_hidden,
            &file.critic_hidden,
            default_arch.critic_hidden,
        )?,
    };

    let mut optimizer = crate::autodiff::OptimizerSpec::default();
    let kind = opts.optimizer.clone().or(file.optimizer);
    if let Some(kind) = kind {
        optimizer = match kind.as_str() {
            "adam" => crate::autodiff::OptimizerSpec::default(),
            "sgd" => crate::autodiff::OptimizerSpec::sgd(
                1e-3,
                opts.momentum.or(file.momentum).unwrap_or(0.9),
            ),
            other => return Err(Error::usage(format!("unknown optimizer '{other}'"))),
        };
    }
    if let Some(lr) = opts.learning_rate.or(file.learning_rate) {
        optimizer.learning_rate = lr;
    }

    let mut run = RunConfig::new(method, "", opts.setting.clone().or(file.setting).unwrap_or_else(|| "setting1".to_string()));
    run.target_domain = opts.target.or(file.target).unwrap_or(0);
    run.lambda = opts.lambda.or(file.lambda).unwrap_or(1.0);
    run.eta = opts.eta.or(file.eta).unwrap_or(0.0);
    run.seed = opts.seed.or(file.seed).unwrap_or(0);
    run.epochs = opts.epochs.or(file.epochs).unwrap_or(30);
    run.batch_size = opts.batch_size.or(file.batch_size).unwrap_or(64);
    run.arch = arch;
    run.optimizer = optimizer;
    run.inner_lr = opts.inner_lr.or(file.inner_lr);
    run.generalized_zsl = opts.generalized_zsl || file.generalized_zsl.unwrap_or(false);

    let timing = match opts
        .timing
        .clone()
        .or(file.timing)
        .unwrap_or_else(|| "zero".to_string())
        .as_str()
    {
        "zero" => WallMode::Zero,
        "real" => WallMode::Real,
        other => return Err(Error::usage(format!("unknown timing mode '{other}'"))),
    };

    Ok(ResolvedTrain {
        run,
        data,
        embedding: opts.embedding.clone().or(file.embedding),
        normalize_embeddings: opts.normalize_embeddings
            || file.normalize_embeddings.unwrap_or(false),
        runs: opts
            .runs
            .clone()
            .or(file.runs)
            .unwrap_or_else(|| PathBuf::from("runs.csv")),
        out_dir: opts.out_dir.clone().or(file.out_dir),
        timing,
    })
}

struct LoadedUniverse {
    domain_set: DomainSet,
    table: EmbeddingTable,
    dataset_id: String,
}

fn load_universe(resolved: &ResolvedTrain, setting_name: &str, target: usize) -> Result<LoadedUniverse> {
    let (manifest, domains) = dataset::load_prepared(&resolved.data)?;
    let setting = manifest
        .settings
        .iter()
        .find(|s| s.name == setting_name)
        .cloned()
        .or_else(|| {
            builtin_settings(&manifest.dataset)
                .into_iter()
                .find(|s| s.name == setting_name)
        })
        .ok_or_else(|| {
            Error::usage(format!(
                "setting '{setting_name}' not found for dataset '{}' (manifest lists: {})",
                manifest.dataset,
                manifest
                    .settings
                    .iter()
                    .map(|s| s.name.as_str())
                    .collect::<Vec<_>>()
                    .join(", ")
            ))
        })?;
    let embedding_path = match &resolved.embedding {
        Some(p) => p.clone(),
        None => match &manifest.embedding_file {
            Some(f) => resolved.data.join(f),
            None => {
                return Err(Error::usage(
                    "--embedding is required (the manifest names no embedding file)",
                ))
            }
        },
    };
    let table = load_embedding_text(&embedding_path, None, resolved.normalize_embeddings)?;
    let domain_set = DomainSet::new(domains, &setting, target)?;
    Ok(LoadedUniverse {
        domain_set,
        table,
        dataset_id: manifest.dataset,
    })
}

fn record_to_row(record: &RunRecord, dataset: &str, timing: WallMode) -> RunRow {
    RunRow {
        method: record.config.method.as_str().to_string(),
        dataset: dataset.to_string(),
        setting: record.config.setting.clone(),
        target_domain: record.config.target_domain,
        seed: record.config.seed,
        lambda: record.config.lambda,
        eta: record.config.eta,
        dg_acc: record.dg_accuracy,
        zsdg_acc: record.zsdg_accuracy,
        wall_s: match timing {
            WallMode::Zero => 0.0,
            WallMode::Real => record.wall_seconds,
        },
    }
}

fn run_one(resolved: &ResolvedTrain, run: &RunConfig) -> Result<(RunRow, RunRecord)> {
    let universe = load_universe(resolved, &run.setting, run.target_domain)?;
    let mut cfg = run.clone();
    cfg.dataset = universe.dataset_id.clone();
    let (mut record, bundle) = crate::engine::train(&cfg, &universe.domain_set, &universe.table)?;
    if let Some(out_dir) = &resolved.out_dir {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let name = dataset::checkpoint_name(
            cfg.method.as_str(),
            &cfg.setting,
            cfg.target_domain,
            cfg.seed,
            cfg.lambda,
        );
        let path = out_dir.join(name);
        save_checkpoint(&bundle, &path)?;
        record.checkpoint_path = Some(path.display().to_string());
    }
    let row = record_to_row(&record, &universe.dataset_id, resolved.timing);
    Ok((row, record))
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let resolved = resolve_train(&args.opts)?;
    let (row, record) = run_one(&resolved, &resolved.run)?;
    append_runs_csv(&resolved.runs, std::slice::from_ref(&row))?;
    println!(
        "{} {}/{} target=D{} seed={} lambda={}: DG {:.4} ZSDG {:.4} ({:.1}s)",
        row.method,
        row.dataset,
        row.setting,
        row.target_domain,
        row.seed,
        row.lambda,
        record.dg_accuracy,
        record.zsdg_accuracy,
        record.wall_seconds,
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let resolved = resolve_train(&args.opts)?;
    let lambdas: Vec<f64> = parse_list(&args.lambdas, "lambda")?;
    if lambdas.is_empty() {
        return Err(Error::usage("--lambdas must list at least one value"));
    }
    if args.seeds == 0 {
        return Err(Error::usage("--seeds must be >= 1"));
    }
    let mut tasks = Vec::new();
    for &lambda in &lambdas {
        for seed in 0..args.seeds {
            let mut run = resolved.run.clone();
            run.lambda = lambda;
            run.seed = seed;
            tasks.push(run);
        }
    }
    let jobs = args.jobs.max(1).min(tasks.len());
    let queue: Mutex<VecDeque<(usize, RunConfig)>> =
        Mutex::new(tasks.into_iter().enumerate().collect());
    let results: Mutex<Vec<(usize, RunRow)>> = Mutex::new(Vec::new());
    let first_error: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let task = queue.lock().expect("queue lock").pop_front();
                let Some((idx, run)) = task else { break };
                match run_one(&resolved, &run) {
                    Ok((row, _)) => results.lock().expect("results lock").push((idx, row)),
                    Err(e) => {
                        first_error.lock().expect("error lock").get_or_insert(e);
                        break;
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().expect("error lock") {
        return Err(e);
    }
    let mut rows = results.into_inner().expect("results lock");
    rows.sort_by_key(|(idx, _)| *idx);
    let rows: Vec<RunRow> = rows.into_iter().map(|(_, r)| r).collect();
    append_runs_csv(&resolved.runs, &rows)?;
    println!(
        "sweep complete: {} rows appended to {}",
        rows.len(),
        resolved.runs.display()
    );
    Ok(())
}

fn cmd_tsne(args: TsneArgs) -> Result<()> {
    let bundle = load_checkpoint(&args.checkpoint)?;
    let (manifest, domains) = dataset::load_prepared(&args.data)?;
    let setting = manifest
        .settings
        .iter()
        .find(|s| s.name == args.setting)
        .cloned()
        .ok_or_else(|| Error::usage(format!("setting '{}' not in manifest", args.setting)))?;
    let domain_set = DomainSet::new(domains, &setting, args.target)?;
    let target = &domain_set.domains()[args.target].data;
    if target.is_empty() {
        return Err(Error::stats("target domain holds no images"));
    }

    // seeded subsample down to max_points
    let mut indices: Vec<usize> = (0..target.len()).collect();
    if indices.len() > args.max_points {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(args.seed, 0x7365)); // "se"
        indices.shuffle(&mut rng);
        indices.truncate(args.max_points);
        indices.sort_unstable();
    }
    let x = target.gather(&indices);
    let features = bundle.extract_values(&x)?;
    let result = tsne_project(
        &features,
        &TsneOptions {
            perplexity: args.perplexity,
            iterations: args.iterations,
            seed: args.seed,
            learning_rate: args.learning_rate,
        },
    )?;

    // classes present, in vocabulary order
    let vocab = target.vocab();
    let present: Vec<usize> = (0..vocab.len())
        .filter(|&v| indices.iter().any(|&i| target.label_id(i) == v))
        .collect();
    let class_names: Vec<String> = present.iter().map(|&v| vocab[v].clone()).collect();
    let class_ids: Vec<usize> = indices
        .iter()
        .map(|&i| {
            present
                .iter()
                .position(|&v| v == target.label_id(i))
                .expect("present classes cover all labels")
        })
        .collect();
    emit_scatter_svg(&result.points, &class_ids, &class_names, &args.out_svg)?;

    let mut csv = String::from("x,y,class\n");
    for (p, &cid) in result.points.iter().zip(&class_ids) {
        csv.push_str(&format!("{},{},{}\n", p[0], p[1], class_names[cid]));
    }
    crate::engine::checkpoint::write_atomic(&args.out_csv, csv.as_bytes())?;
    println!(
        "tsne: {} points, KL {:.4} -> {:.4}, wrote {} and {}",
        result.points.len(),
        result.kl_initial,
        result.kl_final,
        args.out_svg.display(),
        args.out_csv.display()
    );
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let rows = read_runs_csv(&args.runs)?;
    if rows.is_empty() {
        return Err(Error::stats(format!(
            "{} holds no runs",
            args.runs.display()
        )));
    }
    let aggregates = aggregate_rows(&rows)?;
    println!(
        "{:<8} {:<10} {:<10} {:<7} {:<7} {:<5} {:<17} {:<17} n",
        "method", "dataset", "setting", "target", "lambda", "eta", "DG", "ZSDG"
    );
    for a in &aggregates {
        println!(
            "{:<8} {:<10} {:<10} D{:<6} {:<7} {:<5} {:.4} +/- {:.4}  {:.4} +/- {:.4}  {}",
            a.method,
            a.dataset,
            a.setting,
            a.target_domain,
            a.lambda,
            a.eta,
            a.dg.mean,
            a.dg.std,
            a.zsdg.mean,
            a.zsdg.std,
            a.zsdg.n_seeds,
        );
    }

    if let Some(pair) = &args.wilcoxon {
        let parts: Vec<&str> = pair.split(',').map(str::trim).collect();
        if parts.len() != 2 {
            return Err(Error::usage("--wilcoxon wants 'method-a,method-b'"));
        }
        let pairing = match args.pairing.as_str() {
            "setting" => PairingGranularity::Setting,
            "domain" => PairingGranularity::Domain,
            other => return Err(Error::usage(format!("unknown pairing '{other}'"))),
        };
        let use_zsdg = match args.metric.as_str() {
            "zsdg" => true,
            "dg" => false,
            other => return Err(Error::usage(format!("unknown metric '{other}'"))),
        };
        let alternative = match args.alternative.as_str() {
            "two-sided" => Alternative::TwoSided,
            "greater" => Alternative::Greater,
            "less" => Alternative::Less,
            other => return Err(Error::usage(format!("unknown alternative '{other}'"))),
        };
        let (a, b, labels) = paired_means(&rows, parts[0], parts[1], pairing, use_zsdg)?;
        let result = wilcoxon_signed_rank(&a, &b, alternative)?;
        println!(
            "wilcoxon {} vs {} on {} over {} cells ({}): W = {}, p = {}{}",
            parts[0],
            parts[1],
            args.metric,
            labels.len(),
            args.pairing,
            result.statistic,
            result.p_value,
            if result.exact { " (exact)" } else { " (normal approx.)" },
        );
    }

    match (&args.out_csv, &args.out_json) {
        (Some(csv), Some(json)) => emit_report(&rows, csv, json)?,
        (None, None) => {}
        _ => {
            return Err(Error::usage(
                "--out-csv and --out-json must be given together",
            ))
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_unknown_keys_rejected() {
        let parsed: std::result::Result<ConfigFile, _> =
            serde_json::from_str(r#"{"method": "s-agg", "bogus": 1}"#);
        assert!(parsed.is_err());
    }

    #[test]
    fn flags_override_config_values() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.json");
        fs::write(
            &cfg_path,
            r#"{"method": "agg", "data": "prep", "lambda": 0.5, "epochs": 7}"#,
        )
        .unwrap();
        let opts = TrainOpts {
            config: Some(cfg_path),
            method: Some("s-agg".to_string()),
            lambda: Some(2.0),
            ..Default::default()
        };
        let resolved = resolve_train(&opts).unwrap();
        assert_eq!(resolved.run.method, Method::SAgg);
        assert_eq!(resolved.run.lambda, 2.0);
        assert_eq!(resolved.run.epochs, 7); // from file
        assert_eq!(resolved.data, PathBuf::from("prep"));
        assert_eq!(resolved.timing, WallMode::Zero);
    }

    #[test]
    fn method_is_required() {
        let opts = TrainOpts::default();
        assert!(resolve_train(&opts).is_err());
    }

    #[test]
    fn width_lists_parse() {
        let opts = TrainOpts {
            method: Some("s-agg".to_string()),
            data: Some(PathBuf::from("x")),
            extractor_hidden: Some("64,32".to_string()),
            ..Default::default()
        };
        let resolved = resolve_train(&opts).unwrap();
        assert_eq!(resolved.run.arch.extractor_hidden, vec![64, 32]);
    }
}
