use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stgcnn::checkpoint::{load_checkpoint, load_checkpoint_for, Checkpoint};
use stgcnn::config::RunConfig;
use stgcnn::eval::{best_of_n, evaluate, evaluate_linear, window_seed, write_reports_csv};
use stgcnn::graph::KernelKind;
use stgcnn::harness::{self, windows_of, DATA_FRACTIONS};
use stgcnn::model::{init_params, param_count, predict_window};
use stgcnn::train::{self, TrainOptions, LAST_CHECKPOINT};
use stgcnn::trajdata::{extract_windows, leave_one_out_split, load_dataset, TrajectoryScene, TrajectoryWindow};
use stgcnn::{gaussian, plot, synthetic, Error, Result};

#[derive(Parser)]
#[command(name = "stgcnn", version, about = "Spatio-temporal graph CNN trajectory forecaster")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    dataset_root: Option<PathBuf>,
    /// Scene group used as the test split: eth, hotel, univ, zara1, zara2.
    #[arg(long, global = true)]
    heldout: Option<String>,
    /// sim, l2, exp, sim_eps or ones.
    #[arg(long, global = true)]
    kernel: Option<String>,
    #[arg(long, global = true)]
    kernel_sigma: Option<f64>,
    #[arg(long, global = true)]
    kernel_eps: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    budget_epochs: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Parse every scene and report counts.
    Validate,
    /// Train on all groups except the held-out one.
    Train {
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Best-of-n metrics on the held-out group, plus the linear baseline.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Export the predicted distribution and samples for one test window.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Index into the held-out test windows.
        #[arg(long, default_value_t = 0)]
        window: usize,
    },
    /// Render a prediction directory as SVG.
    Plot {
        /// Directory written by `predict` (defaults to the output directory).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Time single-window inference.
    Bench {
        /// Trained weights; freshly initialized weights otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, value_delimiter = ',', default_value = "2,8,32")]
        sizes: Vec<usize>,
    },
    /// Depth ablation over ST-GCNN and extrapolator layer counts.
    Ablate,
    /// One model per kernel function.
    Kernels,
    /// Accuracy against the fraction of training data used.
    DataEff {
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
        #[arg(long)]
        repeats: Option<usize>,
    },
    /// Per-group table for checkpoints named `<group>.ckpt` in a directory.
    Table {
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// Write a synthetic crowd dataset to the dataset root.
    Synth {
        #[arg(long, default_value_t = 1500)]
        frames: usize,
    },
}

fn resolve(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    let flags: [(&str, Option<String>); 11] = [
        ("dataset_root", common.dataset_root.as_ref().map(|p| p.display().to_string())),
        ("heldout", common.heldout.clone()),
        ("kernel", common.kernel.clone()),
        ("kernel_sigma", common.kernel_sigma.map(|v| v.to_string())),
        ("kernel_eps", common.kernel_eps.map(|v| v.to_string())),
        ("seed", common.seed.map(|v| v.to_string())),
        ("epochs", common.epochs.map(|v| v.to_string())),
        ("samples", common.samples.map(|v| v.to_string())),
        ("budget_epochs", common.budget_epochs.map(|v| v.to_string())),
        ("out_dir", common.out_dir.as_ref().map(|p| p.display().to_string())),
        ("threads", common.threads.map(|v| v.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &common.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--set expects key=value, got `{kv}`")))?;
        cfg.set(k.trim(), v)?;
    }
    cfg.resolve()
}

fn dataset_root(cfg: &RunConfig) -> Result<&Path> {
    cfg.dataset_root
        .as_deref()
        .ok_or_else(|| Error::Config("--dataset-root is required".into()))
}

struct Split {
    train: Vec<TrajectoryWindow>,
    test: Vec<TrajectoryWindow>,
}

fn load_split(cfg: &RunConfig) -> Result<Split> {
    let scenes = load_dataset(dataset_root(cfg)?)?;
    let (train_scenes, test_scenes) = leave_one_out_split(&scenes, &cfg.heldout)?;
    let train = windows_of(&train_scenes, &cfg.model, 1);
    let test = windows_of(&test_scenes, &cfg.model, cfg.eval.window_stride);
    if train.is_empty() || test.is_empty() {
        return Err(Error::Contract(format!(
            "split with `{}` held out has {} train and {} test windows",
            cfg.heldout,
            train.len(),
            test.len()
        )));
    }
    log::info!("{} train windows, {} test windows", train.len(), test.len());
    Ok(Split { train, test })
}

fn create(path: &Path) -> Result<File> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(File::create(path)?)
}

fn cmd_validate(cfg: &RunConfig) -> Result<()> {
    let scenes: Vec<TrajectoryScene> = load_dataset(dataset_root(cfg)?)?;
    let mut total = 0;
    for s in &scenes {
        let windows = extract_windows(s, cfg.model.t_obs, cfg.model.t_pred, 1).len();
        total += windows;
        let (first, last) = s.frame_range().unwrap_or((0, 0));
        println!(
            "{}  peds={}  frames={}..{}  windows={}",
            s.scene_id,
            s.pedestrian_count(),
            first,
            last,
            windows
        );
    }
    println!("{} scenes, {} windows (T_o={}, T_p={})", scenes.len(), total, cfg.model.t_obs, cfg.model.t_pred);
    Ok(())
}

fn cmd_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<()> {
    let split = load_split(cfg)?;
    cfg.persist(&cfg.out_dir)?;
    let resume = resume.map(|p| load_checkpoint_for(p, &cfg.model)).transpose()?;
    let opts = TrainOptions {
        checkpoint_dir: Some(cfg.out_dir.clone()),
        resume,
        ..Default::default()
    };
    let outcome = train::train_with(&cfg.model, &cfg.train, &split.train, &opts)?;
    train::write_log(&outcome.log, &cfg.out_dir.join("train_log.csv"))?;
    if let Some(last) = outcome.log.epochs.last() {
        println!("epoch {} mean loss {:.6}", last.epoch, last.mean_loss);
    }
    println!("checkpoint: {}", cfg.out_dir.join(LAST_CHECKPOINT).display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<()> {
    let ck = load_checkpoint_for(checkpoint, &cfg.model)?;
    let split = load_split(cfg)?;
    cfg.persist(&cfg.out_dir)?;
    let e = &cfg.eval;
    let model = evaluate(&ck.params, &ck.config, &split.test, e.samples, e.seed, e.mode)?;
    let linear = evaluate_linear(&split.test)?;
    let rows = vec![("stgcnn".to_string(), model), ("linear".to_string(), linear)];
    write_reports_csv(&rows, create(&cfg.out_dir.join("metrics.csv"))?)?;
    for (label, r) in &rows {
        println!("{label:<8} ADE {:.4}  FDE {:.4}  ({} windows)", r.ade, r.fde, r.n_windows);
    }
    Ok(())
}

fn cmd_predict(cfg: &RunConfig, checkpoint: &Path, index: usize) -> Result<()> {
    let ck = load_checkpoint_for(checkpoint, &cfg.model)?;
    let split = load_split(cfg)?;
    let window = split.test.get(index).ok_or_else(|| {
        Error::Config(format!("window {index} out of range ({} test windows)", split.test.len()))
    })?;
    cfg.persist(&cfg.out_dir)?;
    let seq = predict_window(window, &ck.params, &ck.config)?;
    let seed = window_seed(cfg.eval.seed, index);
    let samples = gaussian::sample(&seq, seed, cfg.eval.samples);
    plot::write_prediction_dir(&cfg.out_dir, window, &seq, &samples)?;
    let r = best_of_n(&ck.params, &ck.config, window, cfg.eval.samples, seed, cfg.eval.mode)?;
    println!(
        "window {index}: {} peds, best-of-{} ADE {:.4} FDE {:.4}",
        window.n_peds(),
        cfg.eval.samples,
        r.ade,
        r.fde
    );
    Ok(())
}

fn cmd_plot(cfg: &RunConfig, input: Option<&Path>, output: Option<&Path>) -> Result<()> {
    let input = input.unwrap_or(&cfg.out_dir);
    let peds = plot::read_prediction_dir(input)?;
    let output = output.map_or_else(|| cfg.out_dir.join("prediction.svg"), Path::to_path_buf);
    let title = input.display().to_string();
    if let Some(dir) = output.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(&output, plot::render_svg(&peds, &title))?;
    println!("{} pedestrians -> {}", peds.len(), output.display());
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, checkpoint: Option<&Path>, reps: usize, sizes: &[usize]) -> Result<()> {
    let (params, model) = match checkpoint {
        Some(p) => {
            let ck = load_checkpoint(p)?;
            (ck.params, ck.config)
        }
        None => (init_params(&cfg.model, cfg.train.seed), cfg.model),
    };
    let report = harness::inference_bench(&params, &model, sizes, reps)?;
    debug_assert_eq!(report.param_count, param_count(&model));
    report.write_csv(create(&cfg.out_dir.join("bench.csv"))?)?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig) -> Result<()> {
    let split = load_split(cfg)?;
    cfg.persist(&cfg.out_dir)?;
    let grid = harness::ablation_grid(&cfg.model, &split.train, &split.test, cfg.budget_epochs, cfg.train.seed, &cfg.eval)?;
    grid.write_csv(create(&cfg.out_dir.join("ablation.csv"))?)?;
    print!("{}", grid.to_text());
    Ok(())
}

fn cmd_kernels(cfg: &RunConfig) -> Result<()> {
    let split = load_split(cfg)?;
    cfg.persist(&cfg.out_dir)?;
    let kinds = [
        KernelKind::L2,
        KernelKind::Exp { sigma: cfg.kernel_sigma },
        KernelKind::SimEps { epsilon: cfg.kernel_eps },
        KernelKind::Ones,
        KernelKind::Sim,
    ];
    let table = harness::kernel_ablation(&cfg.model, &kinds, &split.train, &split.test, cfg.budget_epochs, cfg.train.seed, &cfg.eval)?;
    table.write_csv(create(&cfg.out_dir.join("kernels.csv"))?)?;
    print!("{}", table.to_text());
    Ok(())
}

fn cmd_data_eff(cfg: &RunConfig, fractions: Option<&[f64]>, repeats: Option<usize>) -> Result<()> {
    let split = load_split(cfg)?;
    cfg.persist(&cfg.out_dir)?;
    let curve = harness::data_efficiency(
        &cfg.model,
        &split.train,
        &split.test,
        fractions.unwrap_or(&DATA_FRACTIONS),
        repeats.unwrap_or(cfg.repeats),
        cfg.budget_epochs,
        cfg.train.seed,
        &cfg.eval,
    )?;
    curve.write_csv(create(&cfg.out_dir.join("data_efficiency.csv"))?)?;
    print!("{}", curve.to_text());
    Ok(())
}

fn cmd_table(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let scenes = load_dataset(dataset_root(cfg)?)?;
    let mut models: BTreeMap<String, Checkpoint> = BTreeMap::new();
    for group in stgcnn::trajdata::SCENE_GROUPS {
        let path = dir.join(format!("{group}.ckpt"));
        if path.exists() {
            models.insert(group.to_string(), load_checkpoint(&path)?);
        }
    }
    cfg.persist(&cfg.out_dir)?;
    let table = harness::benchmark_table(&scenes, &models, &cfg.eval)?;
    table.write_csv(create(&cfg.out_dir.join("benchmark.csv"))?)?;
    print!("{}", table.to_text());
    Ok(())
}

fn cmd_synth(cfg: &RunConfig, frames: usize) -> Result<()> {
    let root = dataset_root(cfg)?;
    let files = synthetic::generate_dataset(root, cfg.train.seed, frames)?;
    println!("wrote {} scenes under {}", files.len(), root.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common)?;
    if cfg.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Validate => cmd_validate(&cfg),
        Command::Train { resume } => cmd_train(&cfg, resume.as_deref()),
        Command::Eval { checkpoint } => cmd_eval(&cfg, checkpoint),
        Command::Predict { checkpoint, window } => cmd_predict(&cfg, checkpoint, *window),
        Command::Plot { input, output } => cmd_plot(&cfg, input.as_deref(), output.as_deref()),
        Command::Bench { checkpoint, reps, sizes } => cmd_bench(&cfg, checkpoint.as_deref(), *reps, sizes),
        Command::Ablate => cmd_ablate(&cfg),
        Command::Kernels => cmd_kernels(&cfg),
        Command::DataEff { fractions, repeats } => cmd_data_eff(&cfg, fractions.as_deref(), *repeats),
        Command::Table { checkpoints } => cmd_table(&cfg, checkpoints),
        Command::Synth { frames } => cmd_synth(&cfg, *frames),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
